//! Batched 1-out-of-2 oblivious transfer (semi-honest) over ristretto255.
//!
//! The evaluator of a garbled circuit must obtain exactly one label per
//! input wire it owns without revealing which. Per transfer: the sender
//! holds a and A = aG for the whole batch; the receiver with choice bit
//! c picks b and answers B = bG + cA; the sender derives
//! k_j = H(i, aB − j·aA) for j ∈ {0,1} and the receiver derives
//! k_c = H(i, bA). Keys are 16-byte pads XORed onto the wire labels.
//! Each hash binds the transfer's batch-global index i, so keys never
//! repeat across gates or layers.
//!
//! Point operations dominate, so both sides draw their scalars
//! sequentially from the caller's deterministic stream and then process
//! the batch in parallel.

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::RngCore;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One transfer key: a 16-byte pad for one wire label.
pub type OtKey = [u8; 16];

fn key_from_point(index: u64, point: &RistrettoPoint) -> OtKey {
    let mut h = Sha256::new();
    h.update(b"label-transfer-v1");
    h.update(index.to_le_bytes());
    h.update(point.compress().as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 16];
    key.copy_from_slice(&digest[..16]);
    key
}

fn random_scalar(rng: &mut impl RngCore) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

/// Sender state for one batch: the secret exponent and its public point.
pub struct OtSender {
    a: Scalar,
    a_point: RistrettoPoint,
    a_times_a: RistrettoPoint,
}

impl OtSender {
    /// Draw the batch exponent.
    pub fn new(rng: &mut impl RngCore) -> Self {
        let a = random_scalar(rng);
        let a_point = RISTRETTO_BASEPOINT_TABLE * &a;
        OtSender {
            a,
            a_point,
            a_times_a: a_point * a,
        }
    }

    /// The sender's public point, sent once per batch.
    pub fn public(&self) -> [u8; 32] {
        self.a_point.compress().to_bytes()
    }

    /// Derive both keys for every transfer in the batch from the
    /// receiver's points. Transfer i hashes under index `base_index + i`.
    pub fn derive_keys(
        &self,
        receiver_points: &[[u8; 32]],
        base_index: u64,
    ) -> Result<Vec<(OtKey, OtKey)>> {
        receiver_points
            .par_iter()
            .enumerate()
            .map(|(i, bytes)| {
                let b_point = CompressedRistretto::from_slice(bytes)
                    .map_err(|_| Error::ObliviousTransfer("malformed receiver point".into()))?
                    .decompress()
                    .ok_or_else(|| {
                        Error::ObliviousTransfer("receiver point not on curve".into())
                    })?;
                let index = base_index + i as u64;
                let shared = b_point * self.a;
                let k0 = key_from_point(index, &shared);
                let k1 = key_from_point(index, &(shared - self.a_times_a));
                Ok((k0, k1))
            })
            .collect()
    }
}

/// Receiver state for one batch: per-transfer exponents and the keys for
/// the chosen bits.
pub struct OtReceiver {
    keys: Vec<OtKey>,
}

impl OtReceiver {
    /// Answer the sender's public point for a batch of choice bits.
    /// Returns the receiver state and the points to send back.
    pub fn respond(
        sender_public: &[u8; 32],
        choices: &[bool],
        base_index: u64,
        rng: &mut impl RngCore,
    ) -> Result<(Self, Vec<[u8; 32]>)> {
        let a_point = CompressedRistretto::from_slice(sender_public)
            .map_err(|_| Error::ObliviousTransfer("malformed sender point".into()))?
            .decompress()
            .ok_or_else(|| Error::ObliviousTransfer("sender point not on curve".into()))?;
        // scalars sequentially (deterministic), points in parallel
        let scalars: Vec<Scalar> = choices.iter().map(|_| random_scalar(rng)).collect();
        let pairs: Vec<(OtKey, [u8; 32])> = scalars
            .par_iter()
            .zip(choices)
            .enumerate()
            .map(|(i, (b, &c))| {
                let mut point = RISTRETTO_BASEPOINT_TABLE * b;
                if c {
                    point += a_point;
                }
                let key = key_from_point(base_index + i as u64, &(a_point * b));
                (key, point.compress().to_bytes())
            })
            .collect();
        let (keys, points) = pairs.into_iter().unzip();
        Ok((OtReceiver { keys }, points))
    }

    /// The key for each transfer's chosen bit.
    pub fn keys(&self) -> &[OtKey] {
        &self.keys
    }
}

/// XOR a label with a transfer key (used for both masking and
/// unmasking; labels travel as `key ⊕ label`).
pub fn apply_key(key: &OtKey, label: u128) -> u128 {
    label ^ u128::from_le_bytes(*key)
}

/// Trusted-dealer replacement for the curve-based transfer: one party
/// (the test harness) knows every key pair and hands the receiver the
/// chosen keys directly. Never secure — the dealer sees the choice bits.
#[cfg(feature = "insecure-test-modes")]
pub struct DealerOt {
    pairs: Vec<(OtKey, OtKey)>,
}

#[cfg(feature = "insecure-test-modes")]
impl DealerOt {
    /// Deal `count` key pairs from `rng`.
    pub fn deal(count: usize, rng: &mut impl RngCore) -> Self {
        let pairs = (0..count)
            .map(|_| {
                let mut k0 = [0u8; 16];
                let mut k1 = [0u8; 16];
                rng.fill_bytes(&mut k0);
                rng.fill_bytes(&mut k1);
                (k0, k1)
            })
            .collect();
        DealerOt { pairs }
    }

    /// Sender's view: both keys per transfer.
    pub fn sender_keys(&self) -> &[(OtKey, OtKey)] {
        &self.pairs
    }

    /// Receiver's view: the key for each choice bit.
    pub fn receiver_keys(&self, choices: &[bool]) -> Vec<OtKey> {
        assert_eq!(choices.len(), self.pairs.len());
        self.pairs
            .iter()
            .zip(choices)
            .map(|(&(k0, k1), &c)| if c { k1 } else { k0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn receiver_learns_exactly_the_chosen_keys() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let sender = OtSender::new(&mut rng);
        let choices: Vec<bool> = (0..64).map(|_| rng.random()).collect();
        let (receiver, points) =
            OtReceiver::respond(&sender.public(), &choices, 1000, &mut rng).unwrap();
        let pairs = sender.derive_keys(&points, 1000).unwrap();
        for ((&c, key), (k0, k1)) in choices.iter().zip(receiver.keys()).zip(&pairs) {
            let want = if c { k1 } else { k0 };
            let other = if c { k0 } else { k1 };
            assert_eq!(key, want);
            assert_ne!(key, other);
        }
    }

    #[test]
    fn keys_differ_across_indices() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let sender = OtSender::new(&mut rng);
        let choices = vec![false; 4];
        let (r1, p1) = OtReceiver::respond(&sender.public(), &choices, 0, &mut rng).unwrap();
        // same points hashed under a different base index give different keys
        let k_at_0 = sender.derive_keys(&p1, 0).unwrap();
        let k_at_9 = sender.derive_keys(&p1, 9).unwrap();
        assert_eq!(r1.keys()[0], k_at_0[0].0);
        assert_ne!(k_at_0[0].0, k_at_9[0].0);
    }

    #[test]
    fn malformed_points_are_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let sender = OtSender::new(&mut rng);
        let garbage = [[0xFFu8; 32]];
        assert!(sender.derive_keys(&garbage, 0).is_err());
        assert!(OtReceiver::respond(&[0xFFu8; 32], &[true], 0, &mut rng).is_err());
    }

    #[test]
    fn label_masking_roundtrips() {
        let key: OtKey = [7u8; 16];
        let label = 0x0123_4567_89AB_CDEF_0011_2233_4455_6677u128;
        assert_eq!(apply_key(&key, apply_key(&key, label)), label);
    }

    #[cfg(feature = "insecure-test-modes")]
    #[test]
    fn dealer_matches_choice_semantics() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let dealer = DealerOt::deal(16, &mut rng);
        let choices: Vec<bool> = (0..16).map(|i| i % 3 == 0).collect();
        let got = dealer.receiver_keys(&choices);
        for ((&(k0, k1), &c), key) in dealer.sender_keys().iter().zip(&choices).zip(&got) {
            assert_eq!(*key, if c { k1 } else { k0 });
        }
    }
}
