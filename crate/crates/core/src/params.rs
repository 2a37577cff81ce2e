//! Ring and encryption parameter profiles, plus the modular-arithmetic
//! helpers everything above is built on.
//!
//! Two profiles ship:
//!
//! * `desk` — n = 2048, 20-bit plaintext modulus, for fast local test runs;
//! * `paper` — n = 8192, 41-bit plaintext modulus 2061584302081, the
//!   production-scale parameter point.
//!
//! The ciphertext modulus q is an RNS pair of NTT-friendly primes in both
//! profiles (≡ 1 mod 2n so negacyclic NTTs exist, and ≡ 1 mod 2n holds for
//! the plaintext modulus too, which is what makes slot batching available).
//! Three auxiliary primes per profile extend the basis for exact degree-2
//! ciphertext products. The noise budget that justifies the sizes is worked
//! out in `bfv`.

use crate::error::{Error, Result};

/// Number of RNS primes making up the ciphertext modulus q.
pub const Q_PRIMES: usize = 2;
/// Auxiliary primes used only to compute degree-2 tensor products exactly.
pub const AUX_PRIMES: usize = 3;

/// Identifies a parameter profile in serialized objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileId {
    /// Reduced parameters: n = 2048, t = 786433 (20 bits).
    Desk = 0,
    /// Production-scale parameters: n = 8192, t = 2061584302081 (41 bits).
    Paper = 1,
}

impl ProfileId {
    /// Parse from the CLI spelling.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(ProfileId::Desk),
            "paper" => Ok(ProfileId::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }

    /// CLI spelling.
    pub fn name(self) -> &'static str {
        match self {
            ProfileId::Desk => "desk",
            ProfileId::Paper => "paper",
        }
    }
}

/// Static description of one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingParams {
    /// Which profile this is (serialized into every ciphertext).
    pub id: ProfileId,
    /// Ring degree; R = Z[X]/(X^n + 1).
    pub n: usize,
    /// Plaintext modulus t (prime, ≡ 1 mod 2n).
    pub t: u64,
    /// RNS primes whose product is the ciphertext modulus q.
    pub q_primes: [u64; Q_PRIMES],
    /// Extra primes for the extended tensor basis (never part of q).
    pub aux_primes: [u64; AUX_PRIMES],
    /// Discrete-Gaussian width for the error distribution χ.
    pub sigma: f64,
    /// Samples from χ are rejected beyond ±⌈6σ⌉.
    pub gaussian_tail: i64,
}

/// n = 2048 profile for workstation-speed tests.
///
/// q ≈ 2^114 across two 57-bit primes; Δ/2 ≈ 2^93 dwarfs every worst-case
/// noise bound in the pipeline (see the budget table in `bfv`).
pub const DESK: RingParams = RingParams {
    id: ProfileId::Desk,
    n: 2048,
    t: 786_433, // 3 * 2^18 + 1
    q_primes: [144_115_188_075_835_393, 144_115_188_075_827_201],
    aux_primes: [
        144_115_188_075_814_913,
        144_115_188_075_749_377,
        144_115_188_075_737_089,
    ],
    sigma: 3.2,
    gaussian_tail: 20,
};

/// n = 8192 profile matching the production parameter point.
///
/// t = 2061584302081 is prime with t ≡ 1 (mod 16384), so slot batching is
/// available at this degree. q ≈ 2^110 across two 55-bit primes.
pub const PAPER: RingParams = RingParams {
    id: ProfileId::Paper,
    n: 8192,
    t: 2_061_584_302_081,
    q_primes: [36_028_797_018_652_673, 36_028_797_017_571_329],
    aux_primes: [
        36_028_797_017_456_641,
        36_028_797_017_276_417,
        36_028_797_017_014_273,
    ],
    sigma: 3.2,
    gaussian_tail: 20,
};

impl RingParams {
    /// Look a profile up by id.
    pub fn for_profile(id: ProfileId) -> &'static RingParams {
        match id {
            ProfileId::Desk => &DESK,
            ProfileId::Paper => &PAPER,
        }
    }

    /// The ciphertext modulus q as a 128-bit integer (it fits: ≤ 114 bits).
    pub fn q(&self) -> u128 {
        self.q_primes.iter().map(|&p| p as u128).product()
    }

    /// Δ = ⌈q/t⌉, the plaintext scaling factor.
    pub fn delta(&self) -> u128 {
        let q = self.q();
        let t = self.t as u128;
        q.div_ceil(t)
    }

    /// Number of usable plaintext slots (n/2; vectors are replicated across
    /// both automorphism orbits).
    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// Fail unless both operands came from the same profile.
    pub fn check_same(&self, other: &RingParams) -> Result<()> {
        if self.id == other.id {
            Ok(())
        } else {
            Err(Error::ParamMismatch(format!(
                "{} vs {}",
                self.id.name(),
                other.id.name()
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// Modular arithmetic on u64 primes (products via u128).
// ---------------------------------------------------------------------------

/// Add modulo `p`. Operands must already be reduced.
#[inline(always)]
pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b; // p < 2^63 so no overflow
    if s >= p {
        s - p
    } else {
        s
    }
}

/// Subtract modulo `p`. Operands must already be reduced.
#[inline(always)]
pub fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

/// Multiply modulo `p`.
#[inline(always)]
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

/// Modular exponentiation.
pub fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Inverse modulo a prime `p` (Fermat).
pub fn inv_mod(a: u64, p: u64) -> u64 {
    debug_assert!(a % p != 0, "zero has no inverse");
    pow_mod(a, p - 2, p)
}

/// Precomputed Shoup representation for multiplying by a fixed constant.
///
/// `mul_shoup(a, w, w_shoup, p)` computes `a*w mod p` with one widening
/// multiply and one wrapping multiply — the workhorse of the NTT butterflies.
#[inline(always)]
pub fn shoup_precompute(w: u64, p: u64) -> u64 {
    (((w as u128) << 64) / p as u128) as u64
}

/// Multiply by a Shoup-precomputed constant. Requires `p < 2^63`.
#[inline(always)]
pub fn mul_shoup(a: u64, w: u64, w_shoup: u64, p: u64) -> u64 {
    let q = ((a as u128 * w_shoup as u128) >> 64) as u64;
    let r = (a.wrapping_mul(w)).wrapping_sub(q.wrapping_mul(p));
    if r >= p {
        r - p
    } else {
        r
    }
}

/// Exact ⌊(t·x + q/2) / q⌋ for x < q ≤ 2^114, t ≤ 2^41 — the rounding step
/// of decryption, computed without big integers.
///
/// A float estimate lands within one of the true quotient; the remainder is
/// then corrected exactly in 192-bit limb arithmetic.
pub fn div_round_exact(t: u64, x: u128, q: u128) -> u64 {
    // Numerator N = t*x + q/2 as three 64-bit limbs.
    let xl = x as u64 as u128;
    let xh = (x >> 64) as u64 as u128;
    let t128 = t as u128;
    let lo_prod = t128 * xl; // ≤ 2^105
    let hi_prod = t128 * xh; // ≤ 2^91
    let mut n0 = lo_prod as u64 as u128;
    let mut n1 = (lo_prod >> 64) + (hi_prod as u64 as u128);
    let mut n2 = (hi_prod >> 64) + (n1 >> 64);
    n1 &= u64::MAX as u128;
    // add q/2
    let half = q >> 1;
    n0 += half as u64 as u128;
    n1 += (half >> 64) + (n0 >> 64);
    n0 &= u64::MAX as u128;
    n2 += n1 >> 64;
    n1 &= u64::MAX as u128;

    // Float estimate of the quotient (error ≪ 1 because t*x/q < 2^41 and
    // f64 carries 53 mantissa bits).
    let est = ((t as f64) * (x as f64) / (q as f64)).round();
    let mut m = if est < 0.0 { 0u64 } else { est as u64 };

    // Exact residual R = N - m*q as signed limbs; adjust m until 0 ≤ R < q.
    loop {
        let mq = m as u128; // m ≤ ~2^41
        let ql = q as u64 as u128;
        let qh = (q >> 64) as u64 as u128;
        let p0 = mq * ql; // ≤ 2^105
        let p1 = mq * qh + (p0 >> 64); // ≤ 2^92
        let s0 = p0 as u64 as u128;
        let s1 = p1 as u64 as u128;
        let s2 = p1 >> 64;

        // r = n - s, borrow-propagating
        let (r0, b0) = sub_limb(n0 as u64, s0 as u64, 0);
        let (r1, b1) = sub_limb(n1 as u64, s1 as u64, b0);
        let (r2, b2) = sub_limb(n2 as u64, s2 as u64, b1);

        if b2 != 0 {
            // negative: m too large
            m -= 1;
            continue;
        }
        let r = (r2 as u128) << 64 | (r1 as u128);
        // R as 192-bit; R < q iff top limb zero and low 128 bits < q
        let r_low = ((r1 as u128) << 64) | r0 as u128;
        if r2 == 0 && r_low < q {
            return m;
        }
        let _ = r;
        m += 1;
    }
}

#[inline(always)]
fn sub_limb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let (x, c1) = a.overflowing_sub(b);
    let (y, c2) = x.overflowing_sub(borrow);
    (y, (c1 as u64) | (c2 as u64))
}

/// Map a residue mod t to its centered representative in (-t/2, t/2].
#[inline]
pub fn center_mod_t(v: u64, t: u64) -> i64 {
    if v > t / 2 {
        v as i64 - t as i64
    } else {
        v as i64
    }
}

/// Map a (possibly negative) integer to its residue mod t.
#[inline]
pub fn to_residue_mod_t(v: i64, t: u64) -> u64 {
    let t_i = t as i64;
    let r = ((v % t_i) + t_i) % t_i;
    r as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_primes_are_ntt_friendly() {
        for params in [&DESK, &PAPER] {
            let two_n = 2 * params.n as u64;
            assert_eq!(params.t % two_n, 1, "t must be ≡ 1 mod 2n");
            for &p in params.q_primes.iter().chain(params.aux_primes.iter()) {
                assert_eq!(p % two_n, 1, "prime {p} not ≡ 1 mod 2n");
                assert!(p < (1u64 << 58), "primes must leave Shoup headroom");
            }
        }
    }

    #[test]
    fn delta_definition() {
        for params in [&DESK, &PAPER] {
            let q = params.q();
            let t = params.t as u128;
            let d = params.delta();
            assert!(d * t >= q);
            assert!((d - 1) * t < q);
        }
    }

    #[test]
    fn div_round_matches_bigint_reference() {
        use num_bigint::BigUint;
        for params in [&DESK, &PAPER] {
            let q = params.q();
            let t = params.t;
            let qb = BigUint::from(q);
            let tb = BigUint::from(t);
            let mut cases = vec![0u128, 1, q / 2, q / 2 + 1, q - 1, q / 3, q / 7 * 3];
            let mut state = 0x9e3779b97f4a7c15u128;
            for _ in 0..200 {
                state = state.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(12345);
                cases.push(state % q);
            }
            for x in cases {
                let got = div_round_exact(t, x, q);
                let want = ((&tb * BigUint::from(x) + (&qb >> 1u32)) / &qb)
                    .try_into()
                    .map(|v: u64| v)
                    .unwrap();
                assert_eq!(got, want, "x = {x}");
            }
        }
    }

    #[test]
    fn centering_roundtrip() {
        let t = DESK.t;
        for v in [-5i64, -1, 0, 1, 7, (t / 2) as i64, -((t / 2) as i64)] {
            assert_eq!(center_mod_t(to_residue_mod_t(v, t), t), v);
        }
    }
}
