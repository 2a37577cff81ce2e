//! Socket transport: the same mesh as [`local`](super::local), one process
//! per party.
//!
//! Addresses come from a map file with one `party=host:port` line per
//! participant (`user=127.0.0.1:9000`). For every pair the party with the
//! smaller wire byte initiates the connection; the other accepts on its
//! own mapped address. A two-byte hello (`[initiator, acceptor]`) lets the
//! acceptor route each inbound socket to the right peer regardless of
//! arrival order. After the handshake, frames travel exactly as on the
//! local transport — the endpoint meters above the carrier — so a TCP run
//! produces byte-identical counters to a local run of the same script.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::time::{Duration, Instant};

use super::endpoint::{Endpoint, Link};
use super::frame::{Frame, HEADER_BYTES};
use super::PartyId;
use crate::error::{Error, Result};

/// Party-to-address assignments parsed from a map file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    entries: BTreeMap<PartyId, SocketAddr>,
}

impl AddressMap {
    /// Parse `party=host:port` lines. Blank lines and `#` comments are
    /// allowed; every party a run involves must appear exactly once.
    pub fn parse(text: &str) -> Result<AddressMap> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, addr) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "address map line {}: expected party=host:port, got '{line}'",
                    no + 1
                ))
            })?;
            let party = PartyId::from_label(name.trim())?;
            let addr: SocketAddr = addr.trim().parse().map_err(|e| {
                Error::Config(format!("address map line {}: bad address: {e}", no + 1))
            })?;
            if entries.insert(party, addr).is_some() {
                return Err(Error::Config(format!(
                    "address map line {}: party '{party}' listed twice",
                    no + 1
                )));
            }
        }
        Ok(AddressMap { entries })
    }

    /// Read and parse a map file.
    pub fn read_file(path: &Path) -> Result<AddressMap> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("address map {}: {e}", path.display())))?;
        AddressMap::parse(&text)
    }

    /// The address assigned to `party`.
    pub fn addr(&self, party: PartyId) -> Result<SocketAddr> {
        self.entries
            .get(&party)
            .copied()
            .ok_or_else(|| Error::Config(format!("address map has no entry for '{party}'")))
    }

    /// Build a map programmatically (tests, single-machine drivers).
    pub fn from_entries(entries: impl IntoIterator<Item = (PartyId, SocketAddr)>) -> AddressMap {
        AddressMap {
            entries: entries.into_iter().collect(),
        }
    }
}

struct SocketLink {
    peer: PartyId,
    stream: TcpStream,
}

impl Link for SocketLink {
    fn send(&mut self, bytes: &[u8]) -> Result<()> {
        self.stream
            .write_all(bytes)
            .map_err(|e| Error::Transport(format!("writing to {}: {e}", self.peer)))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        self.stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| Error::Transport(format!("socket to {}: {e}", self.peer)))?;
        let mut header = [0u8; HEADER_BYTES];
        read_all(&mut self.stream, &mut header, self.peer, timeout)?;
        let (_, payload_len) = Frame::decode_header(&header)?;
        let mut buf = vec![0u8; HEADER_BYTES + payload_len];
        buf[..HEADER_BYTES].copy_from_slice(&header);
        read_all(&mut self.stream, &mut buf[HEADER_BYTES..], self.peer, timeout)?;
        Ok(buf)
    }
}

fn read_all(stream: &mut TcpStream, buf: &mut [u8], peer: PartyId, timeout: Duration) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Transport(format!("peer {peer} closed the socket")));
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {
                return Err(Error::Timeout(format!(
                    "a frame from {peer} ({}ms)",
                    timeout.as_millis()
                )));
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => {
                return Err(Error::Transport(format!("reading from {peer}: {e}")));
            }
        }
    }
    Ok(())
}

/// Establish `party`'s links for every pair in `pairs` that involves it,
/// and return its endpoint. Blocks until all of the party's connections
/// are up or `timeout` passes. All parties must be started within the
/// timeout of each other; initiators retry until the acceptor's listener
/// is bound.
pub fn mesh(
    party: PartyId,
    map: &AddressMap,
    pairs: &[(PartyId, PartyId)],
    timeout: Duration,
) -> Result<Endpoint> {
    let mut outbound: Vec<PartyId> = Vec::new();
    let mut inbound: Vec<PartyId> = Vec::new();
    for &(x, y) in pairs {
        assert_ne!(x, y, "a party cannot pair with itself");
        let (initiator, acceptor) = if x < y { (x, y) } else { (y, x) };
        if initiator == party {
            outbound.push(acceptor);
        } else if acceptor == party {
            inbound.push(initiator);
        }
    }

    let deadline = Instant::now() + timeout;
    let listener = if inbound.is_empty() {
        None
    } else {
        let addr = map.addr(party)?;
        let l = TcpListener::bind(addr)
            .map_err(|e| Error::Transport(format!("binding {addr} for {party}: {e}")))?;
        Some(l)
    };

    let mut links: Vec<(PartyId, Box<dyn Link>)> = Vec::new();

    // Outbound first: listeners are already bound (ours above, peers'
    // in their own processes), and retrying covers start-up skew.
    for peer in outbound {
        let addr = map.addr(peer)?;
        let stream = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(Error::Timeout(format!(
                            "connecting to {peer} at {addr}: {e}"
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(25));
                }
            }
        };
        stream
            .set_nodelay(true)
            .map_err(|e| Error::Transport(format!("socket to {peer}: {e}")))?;
        let mut stream = stream;
        stream
            .write_all(&[party as u8, peer as u8])
            .map_err(|e| Error::Transport(format!("hello to {peer}: {e}")))?;
        links.push((peer, Box::new(SocketLink { peer, stream })));
    }

    // Accept until every expected initiator has shown up.
    let mut waiting: Vec<PartyId> = inbound;
    if let Some(listener) = listener {
        while !waiting.is_empty() {
            let remaining = deadline
                .checked_duration_since(Instant::now())
                .ok_or_else(|| {
                    Error::Timeout(format!("still expecting connections from {waiting:?}"))
                })?;
            let (mut stream, _) = accept_with_timeout(&listener, remaining, &waiting)?;
            let mut hello = [0u8; 2];
            stream
                .set_read_timeout(Some(remaining))
                .map_err(|e| Error::Transport(format!("inbound socket: {e}")))?;
            read_all(&mut stream, &mut hello, party, remaining)?;
            let peer = PartyId::try_from(hello[0])?;
            if hello[1] != party as u8 {
                return Err(Error::Protocol(format!(
                    "{peer} connected here but addressed party byte {}",
                    hello[1]
                )));
            }
            let Some(pos) = waiting.iter().position(|&w| w == peer) else {
                return Err(Error::Protocol(format!(
                    "unexpected connection from {peer}"
                )));
            };
            waiting.swap_remove(pos);
            stream
                .set_nodelay(true)
                .map_err(|e| Error::Transport(format!("socket to {peer}: {e}")))?;
            links.push((peer, Box::new(SocketLink { peer, stream })));
        }
    }

    Ok(Endpoint::new(party, links, timeout))
}

fn accept_with_timeout(
    listener: &TcpListener,
    timeout: Duration,
    waiting: &[PartyId],
) -> Result<(TcpStream, SocketAddr)> {
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Transport(format!("listener: {e}")))?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok(pair) => {
                pair.0
                    .set_nonblocking(false)
                    .map_err(|e| Error::Transport(format!("inbound socket: {e}")))?;
                return Ok(pair);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::Timeout(format!(
                        "still expecting connections from {waiting:?}"
                    )));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(Error::Transport(format!("accepting: {e}"))),
        }
    }
}
