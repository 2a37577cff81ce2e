//! Framed, metered party-to-party channels.
//!
//! The four protocol participants — the user and servers `A`, `B`, `C` —
//! exchange length-prefixed binary frames over a fixed set of directed
//! pairs. Every frame carries an 11-byte little-endian header naming the
//! sender, receiver, protocol phase, layer ordinal, and message kind; the
//! metering layer charges `11 + payload` bytes to both endpoints and keeps
//! per-pair, per-phase counters.
//!
//! Two interchangeable carriers implement the same wire format:
//!
//! * [`local`] — in-process channels, one pair of queues per party pair,
//!   for single-machine runs where all four parties are threads;
//! * [`tcp`] — loopback-or-network sockets from an address-map file, one
//!   process per party.
//!
//! An [`Endpoint`] is one party's view of the mesh: it owns the links to
//! its peers, a participation stopwatch (time blocked waiting on a peer is
//! not charged), and the counters that [`MetricsReport`] aggregates. The
//! protocol code never touches sockets or queues directly — parties hold
//! only their endpoint, so the transcript is exactly what crossed the
//! frames.

mod endpoint;
mod frame;
pub mod local;
mod metrics;
pub mod tcp;

pub use endpoint::{Endpoint, Link, PairCounters, PartyTally};
pub use frame::{Dir, Frame, FrameInfo, HEADER_BYTES, LAYER_NONE, MAX_PAYLOAD};
pub use metrics::{run_id, MetricsReport, PartiesSection, PartyReport, PhaseCounters};
pub use tcp::AddressMap;

use crate::error::{Error, Result};

/// A protocol participant. The discriminant is the wire byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PartyId {
    /// The client holding the input and receiving the prediction.
    User = 0,
    /// The gateway server: talks to the user, coordinates B and C.
    ServerA = 1,
    /// First remote worker; holds one share of the remote weights.
    ServerB = 2,
    /// Second remote worker; holds the complementary weight share.
    ServerC = 3,
}

impl PartyId {
    /// All parties, in wire-byte order.
    pub const ALL: [PartyId; 4] = [
        PartyId::User,
        PartyId::ServerA,
        PartyId::ServerB,
        PartyId::ServerC,
    ];

    /// The communicating pairs of the four-party topology. The user talks
    /// only to the gateway; the gateway talks to everyone; B and C talk to
    /// each other. There is no user–B, user–C channel.
    pub const PAIRS: [(PartyId, PartyId); 4] = [
        (PartyId::User, PartyId::ServerA),
        (PartyId::ServerA, PartyId::ServerB),
        (PartyId::ServerA, PartyId::ServerC),
        (PartyId::ServerB, PartyId::ServerC),
    ];

    /// Dense index 0..4 (same as the wire byte).
    pub fn idx(self) -> usize {
        self as usize
    }

    /// Lower-case name used in reports and address maps.
    pub fn label(self) -> &'static str {
        match self {
            PartyId::User => "user",
            PartyId::ServerA => "a",
            PartyId::ServerB => "b",
            PartyId::ServerC => "c",
        }
    }

    /// Parse a report/address-map label.
    pub fn from_label(s: &str) -> Result<PartyId> {
        match s {
            "user" => Ok(PartyId::User),
            "a" => Ok(PartyId::ServerA),
            "b" => Ok(PartyId::ServerB),
            "c" => Ok(PartyId::ServerC),
            other => Err(Error::Config(format!(
                "unknown party '{other}' (expected user, a, b, or c)"
            ))),
        }
    }
}

impl TryFrom<u8> for PartyId {
    type Error = Error;

    fn try_from(b: u8) -> Result<PartyId> {
        match b {
            0 => Ok(PartyId::User),
            1 => Ok(PartyId::ServerA),
            2 => Ok(PartyId::ServerB),
            3 => Ok(PartyId::ServerC),
            other => Err(Error::Deserialize(format!("invalid party byte {other}"))),
        }
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Protocol phase a frame belongs to. The discriminant is the wire byte.
///
/// * `Setup` — key material: aggregated public key shares, switching and
///   rotation keys, the common reference seed. Once per run.
/// * `Preprocess` — everything input-independent that can be precomputed
///   per inference: encrypted masks, garbled tables, label transfers.
/// * `Online` — the input-dependent critical path from query to the last
///   activation.
/// * `Transition` — the gateway handing the masked activation to the
///   remote workers at the split boundary.
/// * `Output` — returning the (encrypted or share-form) prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Phase {
    /// Key establishment, once per run.
    Setup = 0,
    /// Per-inference input-independent precomputation.
    Preprocess = 1,
    /// Input-dependent critical path.
    Online = 2,
    /// Gateway-to-workers hand-off at the split.
    Transition = 3,
    /// Prediction delivery.
    Output = 4,
}

impl Phase {
    /// All phases, in execution order (also the report order).
    pub const ALL: [Phase; 5] = [
        Phase::Setup,
        Phase::Preprocess,
        Phase::Online,
        Phase::Transition,
        Phase::Output,
    ];

    /// Dense index 0..5 (same as the wire byte).
    pub fn idx(self) -> usize {
        self as usize
    }

    /// Lower-case name used as the JSON report key.
    pub fn label(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Preprocess => "preprocess",
            Phase::Online => "online",
            Phase::Transition => "transition",
            Phase::Output => "output",
        }
    }
}

impl TryFrom<u8> for Phase {
    type Error = Error;

    fn try_from(b: u8) -> Result<Phase> {
        match b {
            0 => Ok(Phase::Setup),
            1 => Ok(Phase::Preprocess),
            2 => Ok(Phase::Online),
            3 => Ok(Phase::Transition),
            4 => Ok(Phase::Output),
            other => Err(Error::Deserialize(format!("invalid phase byte {other}"))),
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}
