//! One party's view of the mesh: links to peers, counters, a transcript,
//! and the participation stopwatch.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use super::frame::{Dir, Frame, FrameInfo};
use super::metrics::PartyReport;
use super::{PartyId, Phase};
use crate::error::{Error, Result};

/// A carrier for whole encoded frames between two fixed parties. The
/// local and TCP transports implement this; the endpoint meters above it,
/// so both carriers produce identical counters for identical traffic.
pub trait Link: Send {
    /// Deliver one encoded frame to the peer.
    fn send(&mut self, bytes: &[u8]) -> Result<()>;

    /// Block until the peer's next frame arrives, up to `timeout`.
    /// Returns the full encoded frame (header + payload).
    fn recv(&mut self, timeout: Duration) -> Result<Vec<u8>>;
}

/// Per-peer communication counters (no wall time — time is a per-party
/// quantity, not a per-pair one).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounters {
    /// Bytes received from this peer.
    pub bytes_in: u64,
    /// Bytes sent to this peer.
    pub bytes_out: u64,
    /// Frames sent plus received on this pair.
    pub msgs: u64,
    /// Maximal unidirectional bursts on this pair.
    pub rounds: u64,
}

/// What a finished party hands back: summed per-phase counters, the
/// per-peer breakdown, and the full header transcript.
#[derive(Debug, Clone)]
pub struct PartyTally {
    /// The party this tally belongs to.
    pub party: PartyId,
    /// Per-phase counters summed over peers, wall time included.
    pub phases: PartyReport,
    /// Per-peer, per-phase communication counters (phase-indexed by
    /// [`Phase::idx`]).
    pub pairs: BTreeMap<PartyId, [PairCounters; 5]>,
    /// Every frame sent or received, in order, headers only.
    pub transcript: Vec<FrameInfo>,
}

struct PeerState {
    link: Box<dyn Link>,
    counters: [PairCounters; 5],
    last_dir: [Option<Dir>; 5],
}

/// One party's handle on the whole mesh. All sends and receives go
/// through here, which is what makes the metering complete: a party holds
/// no other channel to any peer.
pub struct Endpoint {
    party: PartyId,
    peers: BTreeMap<PartyId, PeerState>,
    timeout: Duration,
    phase: Phase,
    wall: [Duration; 5],
    active_since: Option<Instant>,
    transcript: Vec<FrameInfo>,
}

impl Endpoint {
    /// Assemble an endpoint from per-peer links. The stopwatch starts
    /// running (in `Setup`) immediately.
    pub fn new(party: PartyId, links: Vec<(PartyId, Box<dyn Link>)>, timeout: Duration) -> Self {
        let peers = links
            .into_iter()
            .map(|(peer, link)| {
                (
                    peer,
                    PeerState {
                        link,
                        counters: [PairCounters::default(); 5],
                        last_dir: [None; 5],
                    },
                )
            })
            .collect();
        Endpoint {
            party,
            peers,
            timeout,
            phase: Phase::Setup,
            wall: [Duration::ZERO; 5],
            active_since: Some(Instant::now()),
            transcript: Vec::new(),
        }
    }

    /// Whose endpoint this is.
    pub fn party(&self) -> PartyId {
        self.party
    }

    /// The peers this party has links to.
    pub fn peer_ids(&self) -> Vec<PartyId> {
        self.peers.keys().copied().collect()
    }

    /// Declare which phase subsequent participation time belongs to.
    /// Byte counters are attributed per frame (by the frame's own phase
    /// field); only the stopwatch follows this declaration.
    pub fn set_phase(&mut self, phase: Phase) {
        if phase != self.phase {
            self.checkpoint_clock();
            self.phase = phase;
        }
    }

    /// Currently declared activity phase.
    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn checkpoint_clock(&mut self) {
        if let Some(since) = self.active_since.take() {
            self.wall[self.phase.idx()] += since.elapsed();
            self.active_since = Some(Instant::now());
        }
    }

    fn peer(&mut self, peer: PartyId) -> Result<&mut PeerState> {
        let party = self.party;
        self.peers.get_mut(&peer).ok_or_else(|| {
            Error::Transport(format!("party {party} holds no link to {peer}"))
        })
    }

    fn meter(&mut self, frame: &Frame, dir: Dir, peer_id: PartyId) {
        let idx = frame.phase.idx();
        let wire = frame.wire_len();
        let peer = self.peers.get_mut(&peer_id).expect("metered peer exists");
        let cell = &mut peer.counters[idx];
        match dir {
            Dir::Out => cell.bytes_out += wire,
            Dir::In => cell.bytes_in += wire,
        }
        cell.msgs += 1;
        if peer.last_dir[idx] != Some(dir) {
            cell.rounds += 1;
            peer.last_dir[idx] = Some(dir);
        }
        self.transcript.push(frame.info(dir));
    }

    /// Send one frame to `to`, stamped with `phase`, `layer`, and `kind`.
    pub fn send(
        &mut self,
        to: PartyId,
        phase: Phase,
        layer: u16,
        kind: u16,
        payload: Vec<u8>,
    ) -> Result<()> {
        let frame = Frame {
            sender: self.party,
            receiver: to,
            phase,
            layer,
            kind,
            payload,
        };
        let bytes = frame.encode();
        self.peer(to)?.link.send(&bytes)?;
        self.meter(&frame, Dir::Out, to);
        Ok(())
    }

    /// Block until the next frame from `from` arrives and meter it. Time
    /// spent blocked is excluded from the participation stopwatch. The
    /// frame's sender and receiver bytes are checked against the link.
    pub fn recv(&mut self, from: PartyId) -> Result<Frame> {
        let timeout = self.timeout;
        self.checkpoint_clock();
        self.active_since = None;
        let received = self.peer(from)?.link.recv(timeout);
        self.active_since = Some(Instant::now());
        let frame = Frame::decode(&received?)?;
        if frame.sender != from || frame.receiver != self.party {
            return Err(Error::Protocol(format!(
                "frame addressed {} -> {} arrived on the {} -> {} link",
                frame.sender, frame.receiver, from, self.party
            )));
        }
        self.meter(&frame, Dir::In, from);
        Ok(frame)
    }

    /// Like [`Endpoint::recv`], but also checks phase and kind, which the
    /// deterministic protocol scripts always know in advance.
    pub fn expect(&mut self, from: PartyId, phase: Phase, kind: u16) -> Result<Frame> {
        let frame = self.recv(from)?;
        if frame.phase != phase || frame.kind != kind {
            return Err(Error::Protocol(format!(
                "expected kind {kind} ({phase}) from {from}, got kind {} ({})",
                frame.kind, frame.phase
            )));
        }
        Ok(frame)
    }

    /// Stop the clock and hand back counters, per-peer breakdown, and the
    /// transcript. Consumes the endpoint: nothing can be sent afterwards,
    /// and dropping the links is what lets peers observe a close.
    pub fn finish(mut self) -> PartyTally {
        self.checkpoint_clock();
        let mut phases = PartyReport::default();
        for phase in Phase::ALL {
            let cell = phases.phase_mut(phase);
            for peer in self.peers.values() {
                let pc = &peer.counters[phase.idx()];
                cell.bytes_in += pc.bytes_in;
                cell.bytes_out += pc.bytes_out;
                cell.msgs += pc.msgs;
                cell.rounds += pc.rounds;
            }
            cell.wall_ms = self.wall[phase.idx()].as_secs_f64() * 1e3;
        }
        PartyTally {
            party: self.party,
            phases,
            pairs: self
                .peers
                .into_iter()
                .map(|(id, st)| (id, st.counters))
                .collect(),
            transcript: self.transcript,
        }
    }
}

