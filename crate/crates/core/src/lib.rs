//! Hybrid homomorphic-encryption / secure-multiparty-computation engine for
//! split neural-network inference.
//!
//! A user and three servers — a gateway `A` and two remote workers `B`, `C`
//! — jointly evaluate a neural network on the user's input. Layers up to a
//! split point l run between the user and the gateway (two-party); layers
//! past it run on the servers (three-party), with the user offline after
//! providing one masked input. Linear layers are evaluated under lattice
//! (RLWE) encryption; activations run inside garbled circuits; every value a
//! server sees is additively masked.
//!
//! Crate layout:
//!
//! * [`params`] / [`ring`] — parameter profiles, NTTs, RNS polynomials;
//! * [`bfv`] — the scale-and-round lattice scheme: batching, keys,
//!   homomorphic evaluation, the packed linear-layer kernel;
//! * [`mphe`] — the multi-party extension: aggregated public keys and
//!   distributed decryption;
//! * [`gc`] — boolean circuits, garbling, oblivious transfer, and the
//!   masked-ReLU circuits;
//! * [`nn`] — model format, fixed-point lowering, plaintext reference
//!   inference;
//! * [`transport`] — framed, metered party-to-party channels (in-process
//!   and TCP);
//! * [`protocol`] — the scripted four-party flows (`seco`, `delphi2`,
//!   `delphi3`), phase by phase.

pub mod bfv;
pub mod error;
pub mod gc;
pub mod mphe;
pub mod nn;
pub mod params;
pub mod protocol;
pub mod ring;
pub mod transport;

pub use error::{Error, Result};
pub use params::{ProfileId, RingParams};
