//! Polynomial rings R_q = Z_q[X]/(X^n + 1) in RNS representation, plus the
//! plaintext ring R_t.
//!
//! A [`RingCtx`] owns the NTT tables for every modulus of one parameter
//! profile and the evaluation-exponent maps that make Galois automorphisms a
//! pure index permutation in the NTT domain. [`RnsPoly`] is a polynomial
//! over the ciphertext basis (or the extended tensor basis), lane-major;
//! [`TPoly`] is a polynomial over the plaintext modulus t.

pub mod ntt;
pub mod sampler;

use crate::params::{
    add_mod, center_mod_t, inv_mod, mul_mod, sub_mod, ProfileId, RingParams, AUX_PRIMES, Q_PRIMES,
};
pub use ntt::NttTable;

/// Which representation a polynomial's data is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Coefficient vector (standard order).
    Coeff,
    /// Evaluations at roots of X^n + 1 (bit-reversed NTT order).
    Ntt,
}

/// Which RNS basis a polynomial lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// The ciphertext modulus q (two primes).
    Q,
    /// q extended by the auxiliary primes (five lanes), used only while
    /// forming exact degree-2 products.
    QAux,
}

impl Basis {
    /// Number of RNS lanes in this basis.
    pub fn lanes(self) -> usize {
        match self {
            Basis::Q => Q_PRIMES,
            Basis::QAux => Q_PRIMES + AUX_PRIMES,
        }
    }
}

/// Per-profile transform context: NTT tables for every modulus and the
/// structural maps shared by all of them.
pub struct RingCtx {
    /// The parameter profile this context serves.
    pub params: &'static RingParams,
    /// Tables for the ciphertext-side moduli: q primes first, then aux.
    ntt_ct: Vec<NttTable>,
    /// Table for the plaintext modulus t.
    ntt_t: NttTable,
    /// All five ciphertext-side moduli in lane order.
    moduli_ct: [u64; Q_PRIMES + AUX_PRIMES],
    /// Output index → evaluation exponent e (odd, < 2n).
    idx_to_exp: Vec<u32>,
    /// Evaluation exponent → output index (even entries unused).
    exp_to_idx: Vec<u32>,
    /// q0^{-1} mod q1, for CRT reconstruction of the Q basis.
    q0_inv_mod_q1: u64,
}

impl RingCtx {
    /// Build the context for one profile. Costs a few milliseconds; intended
    /// to be created once per party and shared.
    pub fn new(params: &'static RingParams) -> Self {
        let n = params.n;
        let mut ntt_ct = Vec::with_capacity(Q_PRIMES + AUX_PRIMES);
        let mut moduli_ct = [0u64; Q_PRIMES + AUX_PRIMES];
        for (lane, &p) in params
            .q_primes
            .iter()
            .chain(params.aux_primes.iter())
            .enumerate()
        {
            moduli_ct[lane] = p;
            ntt_ct.push(NttTable::new(p, n));
        }
        let ntt_t = NttTable::new(params.t, n);
        let idx_to_exp = ntt_t.evaluation_exponents();
        let mut exp_to_idx = vec![u32::MAX; 2 * n];
        for (i, &e) in idx_to_exp.iter().enumerate() {
            exp_to_idx[e as usize] = i as u32;
        }
        let q0_inv_mod_q1 = inv_mod(params.q_primes[0] % params.q_primes[1], params.q_primes[1]);
        RingCtx {
            params,
            ntt_ct,
            ntt_t,
            moduli_ct,
            idx_to_exp,
            exp_to_idx,
            q0_inv_mod_q1,
        }
    }

    /// Ring degree.
    pub fn n(&self) -> usize {
        self.params.n
    }

    /// NTT tables for the lanes of `basis`.
    pub fn tables(&self, basis: Basis) -> &[NttTable] {
        &self.ntt_ct[..basis.lanes()]
    }

    /// Moduli for the lanes of `basis`.
    pub fn moduli(&self, basis: Basis) -> &[u64] {
        &self.moduli_ct[..basis.lanes()]
    }

    /// NTT table over the plaintext modulus.
    pub fn t_table(&self) -> &NttTable {
        &self.ntt_t
    }

    /// Evaluation exponent of NTT output index `i`.
    pub fn exponent_of_index(&self, i: usize) -> u32 {
        self.idx_to_exp[i]
    }

    /// NTT output index evaluating at exponent `e` (must be odd).
    pub fn index_of_exponent(&self, e: u32) -> usize {
        let idx = self.exp_to_idx[e as usize];
        debug_assert_ne!(idx, u32::MAX, "even exponents have no slot");
        idx as usize
    }

    /// Galois element g = 3^k mod 2n realizing a rotation by `k` slots.
    pub fn rotation_element(&self, k: usize) -> u64 {
        let two_n = 2 * self.params.n as u64;
        let mut g = 1u64;
        for _ in 0..(k % self.params.slots()) {
            g = g * 3 % two_n;
        }
        g
    }

    /// CRT-reconstruct one coefficient from its Q-basis residues to the
    /// integer in [0, q).
    #[inline]
    pub fn crt_q_to_u128(&self, r0: u64, r1: u64) -> u128 {
        let [p0, p1] = self.params.q_primes;
        let diff = sub_mod(r1, r0 % p1, p1);
        let k = mul_mod(diff, self.q0_inv_mod_q1, p1);
        r0 as u128 + p0 as u128 * k as u128
    }
}

/// A polynomial over an RNS basis, lane-major: lane l is
/// `data[l*n .. (l+1)*n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPoly {
    /// Profile the polynomial belongs to.
    pub profile: ProfileId,
    /// RNS basis of the lanes.
    pub basis: Basis,
    /// Current representation.
    pub domain: Domain,
    /// Lane-major residues.
    pub data: Vec<u64>,
}

impl RnsPoly {
    /// The all-zero polynomial.
    pub fn zero(ctx: &RingCtx, basis: Basis, domain: Domain) -> Self {
        RnsPoly {
            profile: ctx.params.id,
            basis,
            domain,
            data: vec![0; basis.lanes() * ctx.n()],
        }
    }

    /// Number of coefficients per lane.
    pub fn n(&self) -> usize {
        self.data.len() / self.basis.lanes()
    }

    /// Residues of lane `l`.
    pub fn lane(&self, l: usize) -> &[u64] {
        let n = self.n();
        &self.data[l * n..(l + 1) * n]
    }

    /// Mutable residues of lane `l`.
    pub fn lane_mut(&mut self, l: usize) -> &mut [u64] {
        let n = self.n();
        &mut self.data[l * n..(l + 1) * n]
    }

    fn check_compatible(&self, other: &RnsPoly) {
        assert_eq!(self.profile, other.profile, "profile mismatch");
        assert_eq!(self.basis, other.basis, "basis mismatch");
        assert_eq!(self.domain, other.domain, "domain mismatch");
    }

    /// self += other (lane-wise).
    pub fn add_assign(&mut self, other: &RnsPoly, ctx: &RingCtx) {
        self.check_compatible(other);
        let n = ctx.n();
        for (l, &p) in ctx.moduli(self.basis).iter().enumerate() {
            let a = &mut self.data[l * n..(l + 1) * n];
            let b = &other.data[l * n..(l + 1) * n];
            for (x, &y) in a.iter_mut().zip(b) {
                *x = add_mod(*x, y, p);
            }
        }
    }

    /// self -= other (lane-wise).
    pub fn sub_assign(&mut self, other: &RnsPoly, ctx: &RingCtx) {
        self.check_compatible(other);
        let n = ctx.n();
        for (l, &p) in ctx.moduli(self.basis).iter().enumerate() {
            let a = &mut self.data[l * n..(l + 1) * n];
            let b = &other.data[l * n..(l + 1) * n];
            for (x, &y) in a.iter_mut().zip(b) {
                *x = sub_mod(*x, y, p);
            }
        }
    }

    /// self = −self.
    pub fn neg_assign(&mut self, ctx: &RingCtx) {
        let n = self.n();
        for (l, &p) in ctx.moduli(self.basis).iter().enumerate() {
            for x in &mut self.data[l * n..(l + 1) * n] {
                *x = if *x == 0 { 0 } else { p - *x };
            }
        }
    }

    /// self *= other, pointwise; both must be in the NTT domain.
    pub fn mul_assign(&mut self, other: &RnsPoly, ctx: &RingCtx) {
        self.check_compatible(other);
        assert_eq!(self.domain, Domain::Ntt, "ring products need NTT domain");
        let n = ctx.n();
        for (l, &p) in ctx.moduli(self.basis).iter().enumerate() {
            let a = &mut self.data[l * n..(l + 1) * n];
            let b = &other.data[l * n..(l + 1) * n];
            for (x, &y) in a.iter_mut().zip(b) {
                *x = mul_mod(*x, y, p);
            }
        }
    }

    /// out = a * b without mutating either operand.
    pub fn mul(a: &RnsPoly, b: &RnsPoly, ctx: &RingCtx) -> RnsPoly {
        let mut out = a.clone();
        out.mul_assign(b, ctx);
        out
    }

    /// Move to the NTT domain (no-op guard: panics if already there).
    pub fn ntt(&mut self, ctx: &RingCtx) {
        assert_eq!(self.domain, Domain::Coeff, "already in NTT domain");
        let n = ctx.n();
        for (l, table) in ctx.tables(self.basis).iter().enumerate() {
            table.forward(&mut self.data[l * n..(l + 1) * n]);
        }
        self.domain = Domain::Ntt;
    }

    /// Move to the coefficient domain.
    pub fn intt(&mut self, ctx: &RingCtx) {
        assert_eq!(self.domain, Domain::Ntt, "already in coefficient domain");
        let n = ctx.n();
        for (l, table) in ctx.tables(self.basis).iter().enumerate() {
            table.inverse(&mut self.data[l * n..(l + 1) * n]);
        }
        self.domain = Domain::Coeff;
    }

    /// Apply the Galois automorphism X ↦ X^g (g odd). Works in either
    /// domain: an index-with-sign permutation on coefficients, a pure slot
    /// permutation in the NTT domain.
    pub fn automorphism(&self, g: u64, ctx: &RingCtx) -> RnsPoly {
        let n = ctx.n();
        let two_n = 2 * n;
        assert_eq!(g % 2, 1, "Galois elements are odd");
        let g = g as usize % two_n;
        let mut out = RnsPoly::zero(ctx, self.basis, self.domain);
        match self.domain {
            Domain::Coeff => {
                for (l, &p) in ctx.moduli(self.basis).iter().enumerate() {
                    let src = self.lane(l);
                    let dst = out.lane_mut(l);
                    for (i, &v) in src.iter().enumerate() {
                        let e = g * i % two_n;
                        if e < n {
                            dst[e] = v;
                        } else {
                            dst[e - n] = if v == 0 { 0 } else { p - v };
                        }
                    }
                }
            }
            Domain::Ntt => {
                // out[i] = f(ψ^{g·e_i}) = src at the index evaluating there.
                let perm: Vec<u32> = (0..n)
                    .map(|i| {
                        let e = g * ctx.idx_to_exp[i] as usize % two_n;
                        ctx.exp_to_idx[e]
                    })
                    .collect();
                for l in 0..self.basis.lanes() {
                    let src = self.lane(l).to_vec();
                    let dst = out.lane_mut(l);
                    for (i, &s) in perm.iter().enumerate() {
                        dst[i] = src[s as usize];
                    }
                }
            }
        }
        out
    }

    /// Reconstruct every coefficient to its integer in [0, q). Requires the
    /// Q basis in coefficient domain.
    pub fn to_u128_coeffs(&self, ctx: &RingCtx) -> Vec<u128> {
        assert_eq!(self.basis, Basis::Q);
        assert_eq!(self.domain, Domain::Coeff);
        let (r0, r1) = (self.lane(0), self.lane(1));
        r0.iter()
            .zip(r1)
            .map(|(&a, &b)| ctx.crt_q_to_u128(a, b))
            .collect()
    }
}

/// A polynomial over the plaintext modulus t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TPoly {
    /// Profile the polynomial belongs to.
    pub profile: ProfileId,
    /// Current representation.
    pub domain: Domain,
    /// Residues mod t.
    pub data: Vec<u64>,
}

impl TPoly {
    /// The all-zero polynomial.
    pub fn zero(ctx: &RingCtx, domain: Domain) -> Self {
        TPoly {
            profile: ctx.params.id,
            domain,
            data: vec![0; ctx.n()],
        }
    }

    /// self += other mod t.
    pub fn add_assign(&mut self, other: &TPoly, ctx: &RingCtx) {
        assert_eq!(self.domain, other.domain);
        let t = ctx.params.t;
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x = add_mod(*x, y, t);
        }
    }

    /// self -= other mod t.
    pub fn sub_assign(&mut self, other: &TPoly, ctx: &RingCtx) {
        assert_eq!(self.domain, other.domain);
        let t = ctx.params.t;
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x = sub_mod(*x, y, t);
        }
    }

    /// Forward NTT over t.
    pub fn ntt(&mut self, ctx: &RingCtx) {
        assert_eq!(self.domain, Domain::Coeff);
        ctx.ntt_t.forward(&mut self.data);
        self.domain = Domain::Ntt;
    }

    /// Inverse NTT over t.
    pub fn intt(&mut self, ctx: &RingCtx) {
        assert_eq!(self.domain, Domain::Ntt);
        ctx.ntt_t.inverse(&mut self.data);
        self.domain = Domain::Coeff;
    }

    /// Lift to an RNS basis with the centered representative: each
    /// coefficient is mapped to (−t/2, t/2] first so the lift agrees with
    /// the signed value, not the residue. Input and output are in the
    /// coefficient domain.
    pub fn lift_centered(&self, ctx: &RingCtx, basis: Basis) -> RnsPoly {
        assert_eq!(self.domain, Domain::Coeff);
        let t = ctx.params.t;
        let mut out = RnsPoly::zero(ctx, basis, Domain::Coeff);
        for (l, &p) in ctx.moduli(basis).iter().enumerate() {
            let dst = out.lane_mut(l);
            for (i, &v) in self.data.iter().enumerate() {
                dst[i] = signed_to_residue(center_mod_t(v, t), p);
            }
        }
        out
    }
}

/// Residue of a small signed integer modulo p.
#[inline]
pub fn signed_to_residue(v: i64, p: u64) -> u64 {
    if v < 0 {
        p - ((-v) as u64 % p)
    } else {
        v as u64 % p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::DESK;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_poly(ctx: &RingCtx, basis: Basis, rng: &mut impl Rng) -> RnsPoly {
        let mut p = RnsPoly::zero(ctx, basis, Domain::Coeff);
        for (l, &m) in ctx.moduli(basis).iter().enumerate().collect::<Vec<_>>() {
            for x in p.lane_mut(l) {
                *x = rng.random_range(0..m);
            }
        }
        p
    }

    #[test]
    fn automorphism_domains_agree() {
        let ctx = RingCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let a = random_poly(&ctx, Basis::Q, &mut rng);
        for g in [3u64, 9, ctx.rotation_element(5), 2 * DESK.n as u64 - 1] {
            let via_coeff = a.automorphism(g, &ctx);
            let mut via_ntt = a.clone();
            via_ntt.ntt(&ctx);
            let mut permuted = via_ntt.automorphism(g, &ctx);
            permuted.intt(&ctx);
            assert_eq!(permuted, via_coeff, "g = {g}");
        }
    }

    #[test]
    fn automorphism_composes() {
        let ctx = RingCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let a = random_poly(&ctx, Basis::Q, &mut rng);
        let two_n = 2 * DESK.n as u64;
        let (g1, g2) = (3u64, ctx.rotation_element(7));
        let lhs = a.automorphism(g1, &ctx).automorphism(g2, &ctx);
        let rhs = a.automorphism(g1 * g2 % two_n, &ctx);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn automorphism_respects_multiplication() {
        // σ_g is a ring homomorphism: σ_g(a·b) = σ_g(a)·σ_g(b).
        let ctx = RingCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let mut a = random_poly(&ctx, Basis::Q, &mut rng);
        let mut b = random_poly(&ctx, Basis::Q, &mut rng);
        a.ntt(&ctx);
        b.ntt(&ctx);
        let g = ctx.rotation_element(3);
        let lhs = RnsPoly::mul(&a, &b, &ctx).automorphism(g, &ctx);
        let rhs = RnsPoly::mul(&a.automorphism(g, &ctx), &b.automorphism(g, &ctx), &ctx);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn crt_reconstruction_bounds() {
        let ctx = RingCtx::new(&DESK);
        let q = DESK.q();
        let [p0, p1] = DESK.q_primes;
        for x in [0u128, 1, 12345, q - 1, q / 2] {
            let r0 = (x % p0 as u128) as u64;
            let r1 = (x % p1 as u128) as u64;
            assert_eq!(ctx.crt_q_to_u128(r0, r1), x);
        }
    }

    #[test]
    fn centered_lift_of_small_negatives() {
        let ctx = RingCtx::new(&DESK);
        let t = DESK.t;
        let mut m = TPoly::zero(&ctx, Domain::Coeff);
        m.data[0] = t - 3; // −3 centered
        let lifted = m.lift_centered(&ctx, Basis::Q);
        for (l, &p) in ctx.moduli(Basis::Q).iter().enumerate() {
            assert_eq!(lifted.lane(l)[0], p - 3);
        }
    }
}
