//! Communication and participation-time accounting.
//!
//! Counters are kept per party, per phase, and (inside the endpoint) per
//! peer. Definitions:
//!
//! * `bytes_in` / `bytes_out` — metered frame sizes (11-byte header plus
//!   payload) received / sent in the phase;
//! * `msgs` — frames sent plus frames received in the phase;
//! * `rounds` — per communicating pair, the number of maximal
//!   unidirectional bursts in that pair's frame sequence within the phase
//!   (a request followed by a reply is 2; three messages pushed one way
//!   count 1), summed over the party's pairs;
//! * `wall_ms` — participation time: wall-clock milliseconds the party
//!   spent computing or transferring in the phase, with time spent blocked
//!   waiting for a peer's next frame excluded. Phase attribution follows
//!   the party's declared activity (see [`Endpoint::set_phase`]), so a
//!   party helping several inferences accumulates, and an idle party stays
//!   near zero.
//!
//! [`Endpoint::set_phase`]: super::Endpoint::set_phase

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PartyId, Phase};
use crate::params::ProfileId;

/// Counter block for one party × phase cell of the report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseCounters {
    /// Bytes received (header + payload per frame).
    pub bytes_in: u64,
    /// Bytes sent (header + payload per frame).
    pub bytes_out: u64,
    /// Frames sent plus frames received.
    pub msgs: u64,
    /// Unidirectional bursts, summed over this party's pairs.
    pub rounds: u64,
    /// Participation time in milliseconds (blocked waits excluded).
    pub wall_ms: f64,
}

impl PhaseCounters {
    /// Fold another cell into this one (summing every field).
    pub fn absorb(&mut self, other: &PhaseCounters) {
        self.bytes_in += other.bytes_in;
        self.bytes_out += other.bytes_out;
        self.msgs += other.msgs;
        self.rounds += other.rounds;
        self.wall_ms += other.wall_ms;
    }
}

/// One party's row of the report: a counter block per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartyReport {
    /// Key-establishment traffic, once per run.
    pub setup: PhaseCounters,
    /// Input-independent per-inference precomputation.
    pub preprocess: PhaseCounters,
    /// Input-dependent critical path.
    pub online: PhaseCounters,
    /// Split-boundary hand-off.
    pub transition: PhaseCounters,
    /// Prediction delivery.
    pub output: PhaseCounters,
}

impl PartyReport {
    /// The cell for `phase`.
    pub fn phase(&self, phase: Phase) -> &PhaseCounters {
        match phase {
            Phase::Setup => &self.setup,
            Phase::Preprocess => &self.preprocess,
            Phase::Online => &self.online,
            Phase::Transition => &self.transition,
            Phase::Output => &self.output,
        }
    }

    /// Mutable access to the cell for `phase`.
    pub fn phase_mut(&mut self, phase: Phase) -> &mut PhaseCounters {
        match phase {
            Phase::Setup => &mut self.setup,
            Phase::Preprocess => &mut self.preprocess,
            Phase::Online => &mut self.online,
            Phase::Transition => &mut self.transition,
            Phase::Output => &mut self.output,
        }
    }

    /// Sum of all five cells.
    pub fn total(&self) -> PhaseCounters {
        let mut t = PhaseCounters::default();
        for p in Phase::ALL {
            t.absorb(self.phase(p));
        }
        t
    }
}

/// The `parties` object of the report, one row per participant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartiesSection {
    /// The client.
    pub user: PartyReport,
    /// The gateway server.
    pub a: PartyReport,
    /// First remote worker.
    pub b: PartyReport,
    /// Second remote worker.
    pub c: PartyReport,
}

impl PartiesSection {
    /// The row for `party`.
    pub fn party(&self, party: PartyId) -> &PartyReport {
        match party {
            PartyId::User => &self.user,
            PartyId::ServerA => &self.a,
            PartyId::ServerB => &self.b,
            PartyId::ServerC => &self.c,
        }
    }

    /// Mutable access to the row for `party`.
    pub fn party_mut(&mut self, party: PartyId) -> &mut PartyReport {
        match party {
            PartyId::User => &mut self.user,
            PartyId::ServerA => &mut self.a,
            PartyId::ServerB => &mut self.b,
            PartyId::ServerC => &mut self.c,
        }
    }
}

/// The metrics document a run writes (`--out`): identification header plus
/// the per-party, per-phase counter table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Deterministic digest identifying the run configuration.
    pub run_id: String,
    /// Protocol variant: `seco`, `delphi2`, or `delphi3`.
    pub mode: String,
    /// Split point: raw layers 1..=l ran on the gateway path.
    pub l: usize,
    /// Per-party counter rows.
    pub parties: PartiesSection,
}

impl MetricsReport {
    /// Pretty JSON, trailing newline included.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    /// Parse a report written by [`MetricsReport::to_json`].
    pub fn from_json(text: &str) -> crate::error::Result<MetricsReport> {
        serde_json::from_str(text)
            .map_err(|e| crate::error::Error::Deserialize(format!("metrics report: {e}")))
    }

    /// Zero every `wall_ms` field (used when comparing runs for
    /// determinism, where times legitimately differ).
    pub fn zero_wall(&mut self) {
        for party in PartyId::ALL {
            for phase in Phase::ALL {
                self.parties.party_mut(party).phase_mut(phase).wall_ms = 0.0;
            }
        }
    }

    /// Assemble the report from the four finished parties' tallies.
    pub fn from_tallies(
        run_id: String,
        mode: &str,
        l: usize,
        tallies: &[super::PartyTally],
    ) -> MetricsReport {
        let mut parties = PartiesSection::default();
        for tally in tallies {
            *parties.party_mut(tally.party) = tally.phases;
        }
        MetricsReport {
            run_id,
            mode: mode.to_string(),
            l,
            parties,
        }
    }
}

/// Deterministic run identifier: the SHA-256 digest (lower-case hex) of
/// the newline-joined configuration fields
/// `mode, l, model name, profile label, seed`.
pub fn run_id(mode: &str, l: usize, model_name: &str, profile: ProfileId, seed: u64) -> String {
    let canonical = format!("{mode}\n{l}\n{model_name}\n{}\n{seed}", profile.name());
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(digest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_shape_is_stable() {
        let mut report = MetricsReport {
            run_id: "abc123".into(),
            mode: "seco".into(),
            l: 2,
            parties: PartiesSection::default(),
        };
        let cell = report.parties.party_mut(PartyId::User).phase_mut(Phase::Online);
        cell.bytes_in = 11;
        cell.bytes_out = 22;
        cell.msgs = 2;
        cell.rounds = 2;
        cell.wall_ms = 1.5;

        let json = report.to_json();
        // Top-level keys in contract order.
        let positions: Vec<usize> = ["\"run_id\"", "\"mode\"", "\"l\"", "\"parties\""]
            .iter()
            .map(|k| json.find(k).expect(k))
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        // Party rows and phase cells spell exactly the contract keys.
        for key in ["\"user\"", "\"a\"", "\"b\"", "\"c\""] {
            assert!(json.contains(key), "missing {key}");
        }
        for key in [
            "\"setup\"",
            "\"preprocess\"",
            "\"online\"",
            "\"transition\"",
            "\"output\"",
            "\"bytes_in\"",
            "\"bytes_out\"",
            "\"msgs\"",
            "\"rounds\"",
            "\"wall_ms\"",
        ] {
            assert!(json.contains(key), "missing {key}");
        }

        let back = MetricsReport::from_json(&json).unwrap();
        assert_eq!(back, report);

        report.zero_wall();
        assert_eq!(
            report.parties.party(PartyId::User).phase(Phase::Online).wall_ms,
            0.0
        );
    }

    #[test]
    fn run_id_is_deterministic_and_injective_on_fields() {
        let a = run_id("seco", 2, "minionn_toy", ProfileId::Desk, 7);
        let b = run_id("seco", 2, "minionn_toy", ProfileId::Desk, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert!(a.bytes().all(|c| c.is_ascii_hexdigit()));
        for other in [
            run_id("delphi3", 2, "minionn_toy", ProfileId::Desk, 7),
            run_id("seco", 3, "minionn_toy", ProfileId::Desk, 7),
            run_id("seco", 2, "lenet_toy", ProfileId::Desk, 7),
            run_id("seco", 2, "minionn_toy", ProfileId::Paper, 7),
            run_id("seco", 2, "minionn_toy", ProfileId::Desk, 8),
        ] {
            assert_ne!(a, other);
        }
    }
}
