//! Slot batching: packing vectors over Z_t into ring elements so ring
//! operations act slot-wise and Galois automorphisms rotate the vector.
//!
//! t ≡ 1 (mod 2n), so R_t splits into n evaluation slots. The slots fall
//! into two orbits of the rotation group ⟨3⟩ ⊂ Z*_{2n} (exponents 3^j and
//! −3^j). A logical vector of length n/2 is written into *both* orbits, so
//! every automorphism X ↦ X^{3^k} acts as a clean cyclic rotation by k on
//! the logical vector with no cross-row traffic.
//!
//! Vectors shorter than n/2 must have power-of-two length d̃ | n/2 and are
//! replicated n/(2·d̃) times; a global rotation by k then equals the local
//! rotation by k mod d̃, which is what the packed linear kernel relies on.

use crate::params::pow_mod;
use crate::ring::{Domain, RingCtx, TPoly};

use super::{BfvCtx, Plaintext};

/// Maps logical slot j to the NTT output indices of its two copies.
pub struct SlotMap {
    row0: Vec<u32>,
    row1: Vec<u32>,
}

impl SlotMap {
    /// Build the map for one ring context by walking the orbit of 3 in
    /// Z*_{2n} through the empirically recovered evaluation exponents.
    pub fn new(ring: &RingCtx) -> Self {
        let n = ring.n();
        let two_n = 2 * n as u64;
        let half = n / 2;
        let mut row0 = Vec::with_capacity(half);
        let mut row1 = Vec::with_capacity(half);
        let mut g = 1u64;
        for _ in 0..half {
            row0.push(ring.index_of_exponent(g as u32) as u32);
            row1.push(ring.index_of_exponent((two_n - g) as u32) as u32);
            g = g * 3 % two_n;
        }
        // ⟨3⟩ has order n/2 in Z*_{2n} and −1 ∉ ⟨3⟩, so the two rows
        // together are a permutation of all n slots.
        debug_assert_eq!(pow_mod(3, half as u64, two_n), 1);
        SlotMap { row0, row1 }
    }

    /// Number of logical slots.
    pub fn len(&self) -> usize {
        self.row0.len()
    }

    /// True when the map is empty (never for valid parameters).
    pub fn is_empty(&self) -> bool {
        self.row0.is_empty()
    }
}

/// Encode a vector of residues mod t into a plaintext. `values.len()` must
/// be a power of two dividing n/2; shorter vectors are replicated to fill
/// every slot.
pub fn encode(ctx: &BfvCtx, values: &[u64]) -> Plaintext {
    let half = ctx.slot_count();
    let d = values.len();
    assert!(d > 0 && d.is_power_of_two() && half % d == 0, "vector length {d} must be a power of two dividing {half}");
    debug_assert!(values.iter().all(|&v| v < ctx.t()));
    let mut eval = TPoly::zero(&ctx.ring, Domain::Ntt);
    for j in 0..half {
        let v = values[j % d];
        eval.data[ctx.slots.row0[j] as usize] = v;
        eval.data[ctx.slots.row1[j] as usize] = v;
    }
    eval.intt(&ctx.ring);
    Plaintext { poly: eval }
}

/// Read the first `count` logical slots of a plaintext.
pub fn decode(ctx: &BfvCtx, m: &Plaintext, count: usize) -> Vec<u64> {
    assert!(count <= ctx.slot_count());
    let mut eval = m.poly.clone();
    eval.ntt(&ctx.ring);
    (0..count)
        .map(|j| eval.data[ctx.slots.row0[j] as usize])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{DESK, PAPER};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn slot_rows_partition_all_indices() {
        for params in [&DESK, &PAPER] {
            let ring = RingCtx::new(params);
            let map = SlotMap::new(&ring);
            let mut seen = vec![false; params.n];
            for &i in map.row0.iter().chain(&map.row1) {
                assert!(!seen[i as usize], "slot index repeated");
                seen[i as usize] = true;
            }
            assert!(seen.iter().all(|&b| b));
        }
    }

    #[test]
    fn encode_decode_roundtrip() {
        let ctx = BfvCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        for d in [1usize, 4, 32, ctx.slot_count()] {
            let values: Vec<u64> = (0..d).map(|_| rng.random_range(0..ctx.t())).collect();
            let m = encode(&ctx, &values);
            assert_eq!(decode(&ctx, &m, d), values);
        }
    }

    #[test]
    fn automorphism_rotates_slots() {
        let ctx = BfvCtx::new(&DESK);
        let half = ctx.slot_count();
        let values: Vec<u64> = (0..half as u64).collect();
        let m = encode(&ctx, &values);
        for k in [1usize, 2, 7, 513] {
            let g = ctx.ring.rotation_element(k);
            let rotated = Plaintext {
                poly: {
                    let mut p = m.poly.clone();
                    p.ntt(&ctx.ring);
                    // reuse RnsPoly-style permutation via coefficient path:
                    p.intt(&ctx.ring);
                    apply_t_automorphism(&ctx.ring, &p, g)
                },
            };
            let got = decode(&ctx, &rotated, half);
            let want: Vec<u64> = (0..half).map(|j| values[(j + k) % half]).collect();
            assert_eq!(got, want, "rotation by {k}");
        }
    }

    #[test]
    fn replicated_vectors_rotate_locally() {
        let ctx = BfvCtx::new(&DESK);
        let d = 16usize;
        let values: Vec<u64> = (100..100 + d as u64).collect();
        let m = encode(&ctx, &values);
        let g = ctx.ring.rotation_element(5);
        let rotated = Plaintext {
            poly: apply_t_automorphism(&ctx.ring, &m.poly, g),
        };
        let got = decode(&ctx, &rotated, d);
        let want: Vec<u64> = (0..d).map(|j| values[(j + 5) % d]).collect();
        assert_eq!(got, want);
    }

    /// Coefficient-domain automorphism over R_t (test helper).
    fn apply_t_automorphism(ring: &RingCtx, p: &TPoly, g: u64) -> TPoly {
        assert_eq!(p.domain, Domain::Coeff);
        let n = ring.n();
        let two_n = 2 * n;
        let t = ring.params.t;
        let mut out = TPoly::zero(ring, Domain::Coeff);
        for (i, &v) in p.data.iter().enumerate() {
            let e = g as usize * i % two_n;
            if e < n {
                out.data[e] = v;
            } else {
                out.data[e - n] = if v == 0 { 0 } else { t - v };
            }
        }
        out
    }
}
