//! Randomness for keys, encryption, and masks.
//!
//! Secret keys are uniform ternary; errors follow a rounded Gaussian with
//! σ = 3.2, rejection-sampled to the ±⌈6σ⌉ tail bound; public randomness is
//! uniform over the ring. Every sampler takes the caller's RNG so party-
//! and purpose-scoped deterministic streams stay in the caller's hands.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{signed_to_residue, Basis, Domain, RingCtx, RnsPoly};

/// Uniform ternary polynomial (coefficients in {−1, 0, 1}), coefficient
/// domain.
pub fn ternary(ctx: &RingCtx, basis: Basis, rng: &mut impl Rng) -> RnsPoly {
    let signed: Vec<i64> = (0..ctx.n()).map(|_| rng.random_range(-1..=1)).collect();
    from_signed(ctx, basis, &signed)
}

/// Rounded-Gaussian error polynomial (σ from the profile, tail-rejected),
/// coefficient domain.
pub fn gaussian(ctx: &RingCtx, basis: Basis, rng: &mut impl Rng) -> RnsPoly {
    let signed = gaussian_signed(ctx, rng);
    from_signed(ctx, basis, &signed)
}

/// The signed coefficients of one Gaussian sample (exposed so multi-party
/// flows can reuse one draw across bases).
pub fn gaussian_signed(ctx: &RingCtx, rng: &mut impl Rng) -> Vec<i64> {
    let normal = Normal::new(0.0, ctx.params.sigma).expect("sigma is positive");
    let tail = ctx.params.gaussian_tail;
    (0..ctx.n())
        .map(|_| loop {
            let v = normal.sample(rng).round() as i64;
            if v.abs() <= tail {
                break v;
            }
        })
        .collect()
}

/// Uniform polynomial sampled directly in the NTT domain (the transform is
/// a bijection, so this is uniform over the ring).
pub fn uniform_ntt(ctx: &RingCtx, basis: Basis, rng: &mut impl Rng) -> RnsPoly {
    let mut out = RnsPoly::zero(ctx, basis, Domain::Ntt);
    for (l, &p) in ctx.moduli(basis).iter().enumerate() {
        for x in out.lane_mut(l) {
            *x = rng.random_range(0..p);
        }
    }
    out
}

/// Build an RNS polynomial from one signed coefficient vector, reducing the
/// same integer into every lane.
pub fn from_signed(ctx: &RingCtx, basis: Basis, signed: &[i64]) -> RnsPoly {
    debug_assert_eq!(signed.len(), ctx.n());
    let mut out = RnsPoly::zero(ctx, basis, Domain::Coeff);
    for (l, &p) in ctx.moduli(basis).iter().enumerate() {
        let lane = out.lane_mut(l);
        for (x, &v) in lane.iter_mut().zip(signed) {
            *x = signed_to_residue(v, p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::DESK;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn ternary_values_and_lane_consistency() {
        let ctx = RingCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let s = ternary(&ctx, Basis::Q, &mut rng);
        let [p0, p1] = DESK.q_primes;
        let mut seen = [0usize; 3];
        for i in 0..ctx.n() {
            let v0 = s.lane(0)[i];
            let v1 = s.lane(1)[i];
            let signed = match v0 {
                0 => 0i64,
                v if v == 1 => 1,
                v if v == p0 - 1 => -1,
                other => panic!("non-ternary residue {other}"),
            };
            assert_eq!(v1, signed_to_residue(signed, p1), "lanes disagree");
            seen[(signed + 1) as usize] += 1;
        }
        // All three values occur in 2048 draws with overwhelming probability.
        assert!(seen.iter().all(|&c| c > 0));
    }

    #[test]
    fn gaussian_tail_respected() {
        let ctx = RingCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        for _ in 0..16 {
            let e = gaussian_signed(&ctx, &mut rng);
            assert!(e.iter().all(|v| v.abs() <= DESK.gaussian_tail));
        }
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let ctx = RingCtx::new(&DESK);
        let a = gaussian(&ctx, Basis::Q, &mut ChaCha20Rng::seed_from_u64(33));
        let b = gaussian(&ctx, Basis::Q, &mut ChaCha20Rng::seed_from_u64(33));
        assert_eq!(a, b);
        let u = uniform_ntt(&ctx, Basis::Q, &mut ChaCha20Rng::seed_from_u64(34));
        let v = uniform_ntt(&ctx, Basis::Q, &mut ChaCha20Rng::seed_from_u64(34));
        assert_eq!(u, v);
    }
}
