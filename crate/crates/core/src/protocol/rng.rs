//! Deterministic per-purpose randomness streams.
//!
//! Every random draw in a run comes from a ChaCha20 stream keyed by the
//! public run seed plus the drawing party, a purpose tag, the block
//! ordinal, and the inference index. Two consequences the tests lean on:
//! runs are bit-reproducible for a fixed seed, and no stream is ever
//! shared between two draws (masks are fresh per block *and* per
//! inference by construction).
//!
//! Determinism here is not a security statement — the seed is public only
//! in the sense that the *harness* knows it; a deployment would key these
//! streams from each party's local entropy. What the protocol requires of
//! a draw is captured by where its stream lives: a value another party
//! must never predict is simply never derived from a stream that party's
//! code can name.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::transport::PartyId;

/// What a stream is for. The tag enters the stream key, so adding a
/// purpose can never collide with an existing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Purpose {
    /// Long-term key generation (secret keys, rotation keys).
    KeyGen = 1,
    /// Additive masks `r` hiding activations.
    Mask = 2,
    /// Blinds `s` hiding linear-share decryptions.
    Blind = 3,
    /// Gateway garbled-circuit passwords `d`.
    Password = 4,
    /// Garbling randomness (labels, permute bits).
    Garble = 5,
    /// Oblivious-transfer scalars, sender side.
    OtSender = 6,
    /// Oblivious-transfer scalars, receiver side.
    OtReceiver = 7,
    /// Encryption randomness (u, e₀, e₁ and partial-decryption noise).
    Encrypt = 8,
    /// Trusted-dealer OT stub (shared between both ends; test-only).
    #[cfg_attr(not(feature = "insecure-test-modes"), allow(dead_code))]
    DealerOt = 9,
    /// Remote weight-share dealing (B's pseudorandom half).
    WeightShare = 10,
}

/// The stream for one (party, purpose, block, inference) tuple.
pub(crate) fn stream(
    seed: u64,
    party: PartyId,
    purpose: Purpose,
    layer: u16,
    inference: u32,
) -> ChaCha20Rng {
    stream_aux(seed, party, purpose, layer, inference, 0)
}

/// As [`stream`], with an extra discriminator for call sites that need
/// several independent streams per block (e.g. one OT batch per
/// receiver).
pub(crate) fn stream_aux(
    seed: u64,
    party: PartyId,
    purpose: Purpose,
    layer: u16,
    inference: u32,
    aux: u16,
) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"protocol-stream");
    h.update(seed.to_le_bytes());
    h.update([party.idx() as u8, purpose as u8]);
    h.update(layer.to_le_bytes());
    h.update(inference.to_le_bytes());
    h.update(aux.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// The 32-byte seed every party expands into the shared reference
/// polynomial for joint keys.
pub(crate) fn reference_seed(seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"common-reference");
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    #[test]
    fn streams_differ_across_every_key_component() {
        let base = stream(7, PartyId::User, Purpose::Mask, 3, 0).next_u64();
        let variants = [
            stream(8, PartyId::User, Purpose::Mask, 3, 0),
            stream(7, PartyId::ServerA, Purpose::Mask, 3, 0),
            stream(7, PartyId::User, Purpose::Blind, 3, 0),
            stream(7, PartyId::User, Purpose::Mask, 4, 0),
            stream(7, PartyId::User, Purpose::Mask, 3, 1),
            stream_aux(7, PartyId::User, Purpose::Mask, 3, 0, 1),
        ];
        for (i, mut v) in variants.into_iter().enumerate() {
            assert_ne!(v.next_u64(), base, "variant {i} collided");
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a = stream(42, PartyId::ServerB, Purpose::Garble, 2, 5).next_u64();
        let b = stream(42, PartyId::ServerB, Purpose::Garble, 2, 5).next_u64();
        assert_eq!(a, b);
    }
}
