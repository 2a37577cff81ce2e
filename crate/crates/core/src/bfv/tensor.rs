//! Exact degree-2 ciphertext products in an extended RNS basis.
//!
//! Multiplying two degree-1 ciphertexts produces the three components
//! (a0·b0, a0·b1 + a1·b0, a1·b1) whose *integer* values (with centered
//! operands) reach K·q²/2 after K accumulations — far beyond q. They are
//! therefore computed in the five-prime basis q ∪ aux (capacity ≈ 2^285 at
//! desk, 2^275 at paper parameters, both comfortably above the worst-case
//! 2^233 / 2^231 magnitudes), then scaled by t/q with exact big-integer
//! rounding and reduced back into q.
//!
//! No relinearization is involved anywhere: the resulting degree-2
//! ciphertext goes straight to two-round distributed decryption, so no
//! party ever needs a key power s².

use num_bigint::{BigInt, BigUint};
use num_traits::Signed;
use rayon::prelude::*;

use crate::ring::{Basis, Domain, RnsPoly};

use super::{BfvCtx, Ciphertext, Plaintext, SecretKey};

/// A degree-2 ciphertext over q: decrypts as ⌊(t/q)·[c0 + c1·s + c2·s²]⌉.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext3 {
    /// Constant component.
    pub c0: RnsPoly,
    /// s component.
    pub c1: RnsPoly,
    /// s² component.
    pub c2: RnsPoly,
}

impl Ciphertext3 {
    /// Subtract a degree-1 ciphertext (e.g. an encrypted additive mask).
    pub fn sub_assign_deg1(&mut self, ctx: &BfvCtx, ct: &Ciphertext) {
        self.c0.sub_assign(&ct.c0, &ctx.ring);
        self.c1.sub_assign(&ct.c1, &ctx.ring);
    }
}

/// Lift a Q-basis NTT-domain polynomial into the extended basis with the
/// centered representative, ready for exact products.
pub fn extend_to_aux(ctx: &BfvCtx, poly: &RnsPoly) -> RnsPoly {
    assert_eq!(poly.basis, Basis::Q);
    assert_eq!(poly.domain, Domain::Ntt);
    let mut coeff = poly.clone();
    coeff.intt(&ctx.ring);
    let q = ctx.ring.params.q();
    let half_q = q / 2;
    let n = ctx.ring.n();
    let moduli = ctx.ring.moduli(Basis::QAux);
    let mut out = RnsPoly::zero(&ctx.ring, Basis::QAux, Domain::Coeff);
    for i in 0..n {
        let x = ctx.ring.crt_q_to_u128(coeff.lane(0)[i], coeff.lane(1)[i]);
        if x <= half_q {
            for (l, &p) in moduli.iter().enumerate() {
                out.data[l * n + i] = (x % p as u128) as u64;
            }
        } else {
            let neg = q - x; // |centered| = q − x
            for (l, &p) in moduli.iter().enumerate() {
                let r = (neg % p as u128) as u64;
                out.data[l * n + i] = if r == 0 { 0 } else { p - r };
            }
        }
    }
    out.ntt(&ctx.ring);
    out
}

/// Accumulator for Σ_k ct_a(k) ⊗ ct_b(k) in the extended basis.
pub struct TensorAcc {
    c0: RnsPoly,
    c1: RnsPoly,
    c2: RnsPoly,
}

impl TensorAcc {
    /// Empty accumulator.
    pub fn new(ctx: &BfvCtx) -> Self {
        TensorAcc {
            c0: RnsPoly::zero(&ctx.ring, Basis::QAux, Domain::Ntt),
            c1: RnsPoly::zero(&ctx.ring, Basis::QAux, Domain::Ntt),
            c2: RnsPoly::zero(&ctx.ring, Basis::QAux, Domain::Ntt),
        }
    }

    /// Accumulate one product a ⊗ b.
    pub fn add_product(&mut self, ctx: &BfvCtx, a: &Ciphertext, b: &Ciphertext) {
        let parts: Vec<RnsPoly> = [&a.c0, &a.c1, &b.c0, &b.c1]
            .into_par_iter()
            .map(|p| extend_to_aux(ctx, p))
            .collect();
        let (a0, a1, b0, b1) = (&parts[0], &parts[1], &parts[2], &parts[3]);
        self.c0.add_assign(&RnsPoly::mul(a0, b0, &ctx.ring), &ctx.ring);
        let mut cross = RnsPoly::mul(a0, b1, &ctx.ring);
        cross.add_assign(&RnsPoly::mul(a1, b0, &ctx.ring), &ctx.ring);
        self.c1.add_assign(&cross, &ctx.ring);
        self.c2.add_assign(&RnsPoly::mul(a1, b1, &ctx.ring), &ctx.ring);
    }

    /// Scale by t/q with exact rounding and return to the q basis.
    pub fn finish(self, ctx: &BfvCtx) -> Ciphertext3 {
        let down = ScaleDown::new(ctx);
        Ciphertext3 {
            c0: down.apply(ctx, self.c0),
            c1: down.apply(ctx, self.c1),
            c2: down.apply(ctx, self.c2),
        }
    }
}

/// CRT constants for reconstructing the extended basis and rounding.
struct ScaleDown {
    big_q_full: BigUint,
    half_full: BigUint,
    units: Vec<BigUint>,
    q: BigInt,
    half_q: BigInt,
    t: BigInt,
}

impl ScaleDown {
    fn new(ctx: &BfvCtx) -> Self {
        let moduli = ctx.ring.moduli(Basis::QAux);
        let big_q_full: BigUint = moduli.iter().map(|&p| BigUint::from(p)).product();
        let units = moduli
            .iter()
            .map(|&p| {
                let rest = &big_q_full / p;
                let inv = crate::params::inv_mod(
                    (&rest % p).try_into().map(|v: u64| v).unwrap(),
                    p,
                );
                rest * inv
            })
            .collect();
        let q = BigInt::from(ctx.ring.params.q());
        ScaleDown {
            half_full: &big_q_full >> 1u32,
            big_q_full,
            units,
            half_q: &q >> 1u32,
            q,
            t: BigInt::from(ctx.t()),
        }
    }

    /// One polynomial: reconstruct each centered coefficient, compute
    /// ⌊t·x/q⌉, reduce mod q.
    fn apply(&self, ctx: &BfvCtx, mut poly: RnsPoly) -> RnsPoly {
        assert_eq!(poly.basis, Basis::QAux);
        poly.intt(&ctx.ring);
        let n = ctx.ring.n();
        let lanes: Vec<&[u64]> = (0..Basis::QAux.lanes()).map(|l| poly.lane(l)).collect();
        let [q0, q1] = ctx.ring.params.q_primes;
        let rows: Vec<(u64, u64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut x = BigUint::ZERO;
                for (lane, unit) in lanes.iter().zip(&self.units) {
                    x += unit * lane[i];
                }
                x %= &self.big_q_full;
                let centered = if x > self.half_full {
                    BigInt::from(x) - BigInt::from(self.big_q_full.clone())
                } else {
                    BigInt::from(x)
                };
                // round-to-nearest: floor((t·x + q/2) / q), exact for
                // negative x via floor division.
                let num = &self.t * centered + &self.half_q;
                let mut y = &num / &self.q;
                if num.is_negative() && (&y * &self.q) != num {
                    y -= 1;
                }
                let to_res = |p: u64| -> u64 {
                    let r = &y % p;
                    let r: i64 = r.try_into().expect("residue fits i64");
                    crate::ring::signed_to_residue(r, p)
                };
                (to_res(q0), to_res(q1))
            })
            .collect();
        let mut out = RnsPoly::zero(&ctx.ring, Basis::Q, Domain::Coeff);
        for (i, (r0, r1)) in rows.into_iter().enumerate() {
            out.lane_mut(0)[i] = r0;
            out.lane_mut(1)[i] = r1;
        }
        out.ntt(&ctx.ring);
        out
    }
}

/// Decrypt a degree-2 ciphertext with the full secret key (single-holder
/// reference path; the protocol itself uses distributed decryption).
pub fn decrypt3(ctx: &BfvCtx, sk: &SecretKey, ct: &Ciphertext3) -> Plaintext {
    let mut acc = RnsPoly::mul(&ct.c1, &sk.s, &ctx.ring);
    let s2 = RnsPoly::mul(&sk.s, &sk.s, &ctx.ring);
    acc.add_assign(&RnsPoly::mul(&ct.c2, &s2, &ctx.ring), &ctx.ring);
    acc.add_assign(&ct.c0, &ctx.ring);
    super::round_to_plaintext(ctx, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfv::{encode, encrypt, keygen_public, keygen_secret};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn single_product_matches_slotwise() {
        let ctx = BfvCtx::new(&crate::params::DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(81);
        let sk = keygen_secret(&ctx, &mut rng);
        let pk = keygen_public(&ctx, &sk, &mut rng);
        let t = ctx.t();
        let half = ctx.slot_count();
        let a: Vec<u64> = (0..half).map(|_| rng.random_range(0..t)).collect();
        let b: Vec<u64> = (0..half).map(|_| rng.random_range(0..t)).collect();
        let ct_a = encrypt(&ctx, &pk, &encode::encode(&ctx, &a), &mut rng);
        let ct_b = encrypt(&ctx, &pk, &encode::encode(&ctx, &b), &mut rng);
        let mut acc = TensorAcc::new(&ctx);
        acc.add_product(&ctx, &ct_a, &ct_b);
        let got = encode::decode(&ctx, &decrypt3(&ctx, &sk, &acc.finish(&ctx)), half);
        let want: Vec<u64> = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| ((x as u128 * y as u128) % t as u128) as u64)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn accumulated_products_match_sum() {
        let ctx = BfvCtx::new(&crate::params::DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(82);
        let sk = keygen_secret(&ctx, &mut rng);
        let pk = keygen_public(&ctx, &sk, &mut rng);
        let t = ctx.t();
        let d = 8usize;
        let k_terms = 5usize;
        let mut want = vec![0u64; d];
        let mut acc = TensorAcc::new(&ctx);
        for _ in 0..k_terms {
            let a: Vec<u64> = (0..d).map(|_| rng.random_range(0..t)).collect();
            let b: Vec<u64> = (0..d).map(|_| rng.random_range(0..t)).collect();
            for i in 0..d {
                want[i] = ((want[i] as u128 + a[i] as u128 * b[i] as u128 % t as u128)
                    % t as u128) as u64;
            }
            let ct_a = encrypt(&ctx, &pk, &encode::encode(&ctx, &a), &mut rng);
            let ct_b = encrypt(&ctx, &pk, &encode::encode(&ctx, &b), &mut rng);
            acc.add_product(&ctx, &ct_a, &ct_b);
        }
        let got = encode::decode(&ctx, &decrypt3(&ctx, &sk, &acc.finish(&ctx)), d);
        assert_eq!(got, want);
    }

    #[test]
    fn mask_subtraction_after_product() {
        let ctx = BfvCtx::new(&crate::params::DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(83);
        let sk = keygen_secret(&ctx, &mut rng);
        let pk = keygen_public(&ctx, &sk, &mut rng);
        let t = ctx.t();
        let d = 4usize;
        let a = vec![100u64, 200, 300, 400];
        let b = vec![5u64, 6, 7, 8];
        let s: Vec<u64> = (0..d).map(|_| rng.random_range(0..t)).collect();
        let ct_a = encrypt(&ctx, &pk, &encode::encode(&ctx, &a), &mut rng);
        let ct_b = encrypt(&ctx, &pk, &encode::encode(&ctx, &b), &mut rng);
        let ct_s = encrypt(&ctx, &pk, &encode::encode(&ctx, &s), &mut rng);
        let mut acc = TensorAcc::new(&ctx);
        acc.add_product(&ctx, &ct_a, &ct_b);
        let mut ct3 = acc.finish(&ctx);
        ct3.sub_assign_deg1(&ctx, &ct_s);
        let got = encode::decode(&ctx, &decrypt3(&ctx, &sk, &ct3), d);
        let want: Vec<u64> = (0..d)
            .map(|i| {
                (((a[i] as u128 * b[i] as u128) % t as u128 + t as u128 - s[i] as u128)
                    % t as u128) as u64
            })
            .collect();
        assert_eq!(got, want);
    }
}
