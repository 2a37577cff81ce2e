//! In-process transport: one pair of unbounded queues per party pair.
//!
//! [`mesh`] builds the whole four-party topology at once and returns one
//! [`Endpoint`] per party. The endpoints are moved into the party threads;
//! after that, the only connection between threads is the queues inside
//! the endpoints, so every exchanged byte is metered. Sends never block;
//! receives block up to the configured timeout.

use std::collections::BTreeMap;
use std::time::Duration;

use crossbeam::channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::endpoint::{Endpoint, Link};
use super::PartyId;
use crate::error::{Error, Result};

struct QueueLink {
    peer: PartyId,
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl Link for QueueLink {
    fn send(&mut self, bytes: &[u8]) -> Result<()> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| Error::Transport(format!("peer {} hung up", self.peer)))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        match self.rx.recv_timeout(timeout) {
            Ok(bytes) => Ok(bytes),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(format!(
                "a frame from {} ({}ms)",
                self.peer,
                timeout.as_millis()
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport(format!(
                "peer {} closed the channel",
                self.peer
            ))),
        }
    }
}

/// Build endpoints for every party in `pairs`, connected by in-process
/// queues. Parties absent from `pairs` get no endpoint.
pub fn mesh(pairs: &[(PartyId, PartyId)], timeout: Duration) -> BTreeMap<PartyId, Endpoint> {
    let mut links: BTreeMap<PartyId, Vec<(PartyId, Box<dyn Link>)>> = BTreeMap::new();
    for &(x, y) in pairs {
        assert_ne!(x, y, "a party cannot pair with itself");
        let (tx_xy, rx_xy) = unbounded();
        let (tx_yx, rx_yx) = unbounded();
        links.entry(x).or_default().push((
            y,
            Box::new(QueueLink {
                peer: y,
                tx: tx_xy,
                rx: rx_yx,
            }),
        ));
        links.entry(y).or_default().push((
            x,
            Box::new(QueueLink {
                peer: x,
                tx: tx_yx,
                rx: rx_xy,
            }),
        ));
    }
    links
        .into_iter()
        .map(|(party, party_links)| (party, Endpoint::new(party, party_links, timeout)))
        .collect()
}

/// The standard four-party mesh over [`PartyId::PAIRS`].
pub fn full_mesh(timeout: Duration) -> BTreeMap<PartyId, Endpoint> {
    mesh(&PartyId::PAIRS, timeout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::frame::LAYER_NONE;
    use crate::transport::Phase;
    use std::thread;
    use std::time::Instant;

    const TIMEOUT: Duration = Duration::from_secs(5);

    fn pair() -> (Endpoint, Endpoint) {
        let mut m = mesh(&[(PartyId::User, PartyId::ServerA)], TIMEOUT);
        (
            m.remove(&PartyId::User).unwrap(),
            m.remove(&PartyId::ServerA).unwrap(),
        )
    }

    #[test]
    fn metered_ping_pong() {
        let (mut user, mut a) = pair();
        let server = thread::spawn(move || {
            a.set_phase(Phase::Online);
            for _ in 0..3 {
                let f = a.recv(PartyId::User).unwrap();
                assert_eq!(f.kind, 10);
                a.send(PartyId::User, Phase::Online, f.layer, 11, vec![0; 100])
                    .unwrap();
            }
            a.finish()
        });
        user.set_phase(Phase::Online);
        for layer in 1..=3u16 {
            user.send(PartyId::ServerA, Phase::Online, layer, 10, vec![1, 2, 3])
                .unwrap();
            let f = user.recv(PartyId::ServerA).unwrap();
            assert_eq!((f.kind, f.layer, f.payload.len()), (11, layer, 100));
        }
        let ut = user.finish();
        let at = server.join().unwrap();

        let uo = ut.phases.phase(Phase::Online);
        let ao = at.phases.phase(Phase::Online);
        // User: 3 × (11 + 3) out, 3 × (11 + 100) in, 6 msgs, alternating
        // out/in = 6 bursts. Server mirrors it.
        assert_eq!(uo.bytes_out, 3 * 14);
        assert_eq!(uo.bytes_in, 3 * 111);
        assert_eq!(uo.msgs, 6);
        assert_eq!(uo.rounds, 6);
        assert_eq!(ao.bytes_in, 3 * 14);
        assert_eq!(ao.bytes_out, 3 * 111);
        assert_eq!(ao.msgs, 6);
        assert_eq!(ao.rounds, 6);
        // Nothing leaked into other phases.
        assert_eq!(ut.phases.phase(Phase::Setup).msgs, 0);
        assert_eq!(ut.phases.total().msgs, 6);
        // Transcript keeps order and direction.
        assert_eq!(ut.transcript.len(), 6);
        assert_eq!(ut.transcript[0].kind, 10);
        assert_eq!(ut.transcript[1].kind, 11);
    }

    #[test]
    fn bursts_count_once_per_direction_change() {
        let (mut user, mut a) = pair();
        let server = thread::spawn(move || {
            for _ in 0..2 {
                a.recv(PartyId::User).unwrap();
            }
            a.send(PartyId::User, Phase::Preprocess, 1, 2, vec![])
                .unwrap();
            a.recv(PartyId::User).unwrap();
            a.finish()
        });
        // user: out, out, in, out  -> 3 bursts
        user.send(PartyId::ServerA, Phase::Preprocess, 1, 1, vec![9])
            .unwrap();
        user.send(PartyId::ServerA, Phase::Preprocess, 1, 1, vec![9])
            .unwrap();
        user.recv(PartyId::ServerA).unwrap();
        user.send(PartyId::ServerA, Phase::Preprocess, 1, 3, vec![])
            .unwrap();
        let ut = user.finish();
        let at = server.join().unwrap();
        assert_eq!(ut.phases.phase(Phase::Preprocess).rounds, 3);
        // server: in, in, out, in -> 3 bursts
        assert_eq!(at.phases.phase(Phase::Preprocess).rounds, 3);
    }

    #[test]
    fn rounds_are_tracked_per_phase_and_per_peer() {
        let mut m = mesh(
            &[
                (PartyId::ServerA, PartyId::ServerB),
                (PartyId::ServerA, PartyId::ServerC),
            ],
            TIMEOUT,
        );
        let mut a = m.remove(&PartyId::ServerA).unwrap();
        let mut b = m.remove(&PartyId::ServerB).unwrap();
        let mut c = m.remove(&PartyId::ServerC).unwrap();
        let tb = thread::spawn(move || {
            b.recv(PartyId::ServerA).unwrap();
            b.recv(PartyId::ServerA).unwrap();
            b.finish()
        });
        let tc = thread::spawn(move || {
            c.recv(PartyId::ServerA).unwrap();
            c.finish()
        });
        // Same-direction frames to B in two different phases: one burst each.
        a.send(PartyId::ServerB, Phase::Setup, LAYER_NONE, 1, vec![])
            .unwrap();
        a.send(PartyId::ServerB, Phase::Preprocess, 2, 1, vec![])
            .unwrap();
        a.send(PartyId::ServerC, Phase::Preprocess, 2, 1, vec![])
            .unwrap();
        let at = a.finish();
        tb.join().unwrap();
        tc.join().unwrap();
        assert_eq!(at.phases.phase(Phase::Setup).rounds, 1);
        // One burst to B plus one burst to C.
        assert_eq!(at.phases.phase(Phase::Preprocess).rounds, 2);
        assert_eq!(at.pairs[&PartyId::ServerB][Phase::Preprocess.idx()].rounds, 1);
        assert_eq!(at.pairs[&PartyId::ServerC][Phase::Preprocess.idx()].rounds, 1);
    }

    #[test]
    fn blocked_waiting_is_not_participation() {
        let (mut user, mut a) = pair();
        let server = thread::spawn(move || {
            thread::sleep(Duration::from_millis(120));
            a.send(PartyId::User, Phase::Online, 1, 1, vec![]).unwrap();
            a.finish()
        });
        user.set_phase(Phase::Online);
        let start = Instant::now();
        user.recv(PartyId::ServerA).unwrap();
        assert!(start.elapsed() >= Duration::from_millis(100));
        let ut = user.finish();
        server.join().unwrap();
        let wall = ut.phases.phase(Phase::Online).wall_ms;
        assert!(
            wall < 60.0,
            "blocked wait leaked into participation time: {wall}ms"
        );
    }

    #[test]
    fn timeout_and_hangup_are_distinct_errors() {
        let (mut user, a) = pair();
        let mut m = mesh(&[(PartyId::User, PartyId::ServerA)], Duration::from_millis(40));
        let mut short_user = m.remove(&PartyId::User).unwrap();
        let _idle_a = m.remove(&PartyId::ServerA).unwrap();
        assert!(matches!(
            short_user.recv(PartyId::ServerA),
            Err(Error::Timeout(_))
        ));

        drop(a); // peer endpoint dropped -> channel closed
        assert!(matches!(
            user.recv(PartyId::ServerA),
            Err(Error::Transport(_))
        ));
        assert!(matches!(
            user.send(PartyId::ServerA, Phase::Setup, LAYER_NONE, 1, vec![]),
            Err(Error::Transport(_))
        ));
    }

    #[test]
    fn no_link_and_misaddressed_frames_are_rejected() {
        let (mut user, mut a) = pair();
        assert!(matches!(
            user.send(PartyId::ServerB, Phase::Setup, LAYER_NONE, 1, vec![]),
            Err(Error::Transport(_))
        ));
        // expect() rejects a frame of the wrong kind.
        let server = thread::spawn(move || {
            a.send(PartyId::User, Phase::Online, 1, 7, vec![]).unwrap();
            a.finish()
        });
        assert!(matches!(
            user.expect(PartyId::ServerA, Phase::Online, 8),
            Err(Error::Protocol(_))
        ));
        server.join().unwrap();
    }
}
