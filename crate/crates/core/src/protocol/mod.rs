//! The split-inference protocol: a user and three servers jointly evaluate
//! a lowered model without any single party seeing both the weights and the
//! activations.
//!
//! # Roles
//!
//! * **User** — owns the input and the final prediction. Holds the private
//!   key `sk₀` for the gateway segment and the transition masks.
//! * **Server A** (gateway) — holds the gateway-segment weights in the
//!   clear, talks to the user, and relays to the remote pair. For remote
//!   blocks it only ever holds uniformly masked values.
//! * **Servers B and C** (remote pair) — hold additive shares of the
//!   remote-segment weights and of the joint decryption key; neither alone
//!   learns weights or activations.
//!
//! # Modes
//!
//! * [`Mode::Seco`] — gateway blocks run user↔A (lattice-masked linear,
//!   two-party garbled ReLU); remote blocks run A/B/C (shared-weight linear
//!   with joint decryption, three-party garbled ReLU evaluated by C). A is
//!   offline during remote online layers.
//! * [`Mode::Delphi3`] — same remote linear algebra, but A evaluates every
//!   remote garbled circuit and re-broadcasts the masked activation, so A
//!   sits on the online critical path of every remote layer.
//! * [`Mode::Delphi2`] — the two-party baseline: the whole network is
//!   gateway-side (`l = L`), B and C exchange no protocol bytes.
//!
//! # Phases
//!
//! Every frame is tagged with the sender's phase. *Setup* distributes keys
//! once per run. *Preprocess* runs per inference in two stages: a
//! server-only stage (remote weights, masks, joint decryptions, remote
//! garbling) and a user-dependent stage (gateway masking, transition mask,
//! gateway garbling). *Online* consumes the input. *Transition* is the
//! single gateway→remote hand-off broadcast. *Output* returns the logits
//! (encrypted under the user's key when the remote pair contributed).
//!
//! The protocol's integer semantics equal [`crate::nn::infer_fixed`]
//! bit-for-bit: every acceptance path checks the joint computation against
//! that single-machine oracle.

pub mod audit;
mod dealer;
mod driver;
mod gateway;
pub mod messages;
mod otflow;
mod remote;
mod rng;
mod run;
mod setup;
mod shares;

pub use dealer::{
    gateway_forms, remote_weight_shares, skeleton, BlockDims, RemoteBlockShare, RemoteView,
    Skeleton,
};
pub use driver::{run_party, PartyOutcome, PartyView};
pub use run::{execute, RunOutcome};
pub use shares::{ShareKind, ShareRecord};

use crate::error::{Error, Result};
use crate::params::ProfileId;

/// Which protocol variant a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Gateway + offline-A remote layers (the primary protocol).
    Seco,
    /// Two-party baseline, entire network gateway-side.
    Delphi2,
    /// Three-server variant with A on the remote online path.
    Delphi3,
}

impl Mode {
    /// Parse a CLI mode name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "seco" => Ok(Mode::Seco),
            "delphi2" => Ok(Mode::Delphi2),
            "delphi3" => Ok(Mode::Delphi3),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected seco, delphi2, or delphi3)"
            ))),
        }
    }

    /// The CLI name.
    pub fn name(self) -> &'static str {
        match self {
            Mode::Seco => "seco",
            Mode::Delphi2 => "delphi2",
            Mode::Delphi3 => "delphi3",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Test-only switches that deliberately break the protocol's security for
/// debugging and negative controls. Compiled out of release artifacts.
#[cfg(feature = "insecure-test-modes")]
#[derive(Debug, Clone, Copy, Default)]
pub struct InsecureOptions {
    /// Draw every mask, blind, and password as zero so intermediate values
    /// travel in the clear (predictions stay correct).
    pub zero_randomness: bool,
    /// Replace curve-based oblivious transfer with a trusted-dealer stub.
    pub dealer_ot: bool,
    /// Flip one coordinate of the first correction share a party records,
    /// as a negative control: verification must catch the divergence.
    pub corrupt_share: bool,
}

/// Everything a party needs to know before the first frame: the public
/// run parameters. Weights and inputs are *not* here — they live in the
/// per-party views so knowledge separation is visible in the types.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Protocol variant.
    pub mode: Mode,
    /// Split index: raw layers ≤ `l` are gateway-side.
    pub l: usize,
    /// Parameter profile.
    pub profile: ProfileId,
    /// Public run seed (drives every deterministic derivation).
    pub seed: u64,
    /// Model name, entering the run id.
    pub model_name: String,
    /// Number of inferences this run executes back to back.
    pub inference_count: usize,
    /// Test-only insecurity switches.
    #[cfg(feature = "insecure-test-modes")]
    pub insecure: InsecureOptions,
}

impl RunConfig {
    /// The canonical run identifier for metrics reports.
    pub fn run_id(&self) -> String {
        crate::transport::run_id(
            self.mode.name(),
            self.l,
            &self.model_name,
            self.profile,
            self.seed,
        )
    }

    #[cfg(feature = "insecure-test-modes")]
    pub(crate) fn zero_randomness(&self) -> bool {
        self.insecure.zero_randomness
    }

    #[cfg(not(feature = "insecure-test-modes"))]
    pub(crate) fn zero_randomness(&self) -> bool {
        false
    }

    // The dealer-OT switch is only consulted from code that itself exists
    // only with the feature, so no always-false twin is needed.
    #[cfg(feature = "insecure-test-modes")]
    pub(crate) fn dealer_ot(&self) -> bool {
        self.insecure.dealer_ot
    }
}
