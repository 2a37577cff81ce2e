//! Model files, layer lowering, split-aware blocks, and plaintext oracles.
//!
//! The pipeline: a [`format::Model`] (self-describing text file) lowers via
//! [`im2col`] into integer matrices, which [`blocks::lower`] groups into
//! split-aware protocol blocks; [`infer`] provides the exact fixed-point
//! reference semantics the protocol must reproduce, plus a floating-point
//! reference for drift characterization. [`gen`] builds the deterministic
//! model zoo used by the harness and benchmarks.

pub mod blocks;
pub mod format;
pub mod gen;
pub mod im2col;
pub mod infer;

pub use blocks::{lower, Deployment, LinearBlock};
pub use format::{Model, RawLayer, Shape};
pub use gen::{bench10, lenet_real, lenet_toy, minionn_real, minionn_toy, random_inputs};
pub use im2col::LinearForm;
pub use infer::{infer_fixed, infer_float, output_scale_bits, relu_trunc};
