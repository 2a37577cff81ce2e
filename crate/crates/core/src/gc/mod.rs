//! Garbled-circuit machinery for the non-linear layers.
//!
//! Linear layers run under homomorphic encryption; activations
//! (truncate + ReLU over additive shares mod t) run as garbled boolean
//! circuits between a garbler and an evaluator. This module provides:
//!
//! - [`circuit`]: XOR/AND circuits with named input groups, arithmetic
//!   gadgets, and a plaintext evaluator that serves as the correctness
//!   oracle for everything garbled.
//! - [`garble`]: free-XOR + point-and-permute garbling with fixed-key
//!   AES row encryption and per-row validity tags.
//! - [`ot`]: batched 1-out-of-2 oblivious transfer (semi-honest,
//!   ristretto255) moving the evaluator's input labels.
//! - [`relu`]: the concrete masked-activation circuits for the
//!   two-party (user ↔ gateway) and three-party (remote servers) flows.

pub mod circuit;
pub mod garble;
pub mod ot;
pub mod relu;

pub use circuit::{bits_to_value, value_to_bits, BoolCircuit, CircuitBuilder, InputGroup};
pub use garble::{evaluate, garble, GarbledTables, GarblerSecrets};
pub use ot::{apply_key, OtKey, OtReceiver, OtSender};
pub use relu::{
    bits_to_residues, build_three_party, build_two_party, masked_relu_reference,
    residues_to_bits, MaskedReluSpec,
};
