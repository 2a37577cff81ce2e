//! Homomorphic operations on degree-1 ciphertexts: addition, plaintext
//! multiplication, and slot rotation via Galois key switching.
//!
//! Key switching uses a hybrid gadget: each RNS prime contributes four
//! base-2^16 digits, so one switch touches eight gadget components. The
//! decomposition is exact (CRT units × digit powers reassemble the value),
//! so the only added noise is Σ dⱼ·eⱼ ≤ 8·n·2^15·B — about 2^36 at desk
//! parameters, far below every budget in play.

use std::collections::BTreeMap;

use rand::Rng;

use crate::params::mul_mod;
use crate::ring::{sampler, Basis, Domain, RnsPoly};

use super::{BfvCtx, Ciphertext, Plaintext, SecretKey, GADGET_DIGITS, GADGET_LOG_T};

/// A plaintext prepared for ciphertext multiplication: centered lift to the
/// ciphertext basis, NTT domain.
#[derive(Debug, Clone)]
pub struct MulOperand {
    pub(crate) rns: RnsPoly,
}

impl MulOperand {
    /// Prepare a plaintext as a multiplication operand.
    pub fn new(ctx: &BfvCtx, m: &Plaintext) -> Self {
        let mut rns = m.poly.lift_centered(&ctx.ring, Basis::Q);
        rns.ntt(&ctx.ring);
        MulOperand { rns }
    }
}

/// ct += other.
pub fn add_assign(ctx: &BfvCtx, ct: &mut Ciphertext, other: &Ciphertext) {
    ct.c0.add_assign(&other.c0, &ctx.ring);
    ct.c1.add_assign(&other.c1, &ctx.ring);
}

/// ct -= other.
pub fn sub_assign(ctx: &BfvCtx, ct: &mut Ciphertext, other: &Ciphertext) {
    ct.c0.sub_assign(&other.c0, &ctx.ring);
    ct.c1.sub_assign(&other.c1, &ctx.ring);
}

/// ct += Δ·m (plaintext addition; no fresh noise).
pub fn add_plain_assign(ctx: &BfvCtx, ct: &mut Ciphertext, m: &Plaintext) {
    ct.c0.add_assign(&super::scaled_plain(ctx, m), &ctx.ring);
}

/// ct -= Δ·m.
pub fn sub_plain_assign(ctx: &BfvCtx, ct: &mut Ciphertext, m: &Plaintext) {
    ct.c0.sub_assign(&super::scaled_plain(ctx, m), &ctx.ring);
}

/// ct := ct ⊙ w for a prepared plaintext operand (noise grows by a factor
/// ≤ n·‖w‖∞ in the worst case).
pub fn mul_plain_assign(ctx: &BfvCtx, ct: &mut Ciphertext, w: &MulOperand) {
    ct.c0.mul_assign(&w.rns, &ctx.ring);
    ct.c1.mul_assign(&w.rns, &ctx.ring);
}

/// One Galois switching key: the eight gadget encryptions of g_j·σ_g(s)
/// under s.
#[derive(Clone, PartialEq)]
pub struct KeySwitchKey {
    /// The Galois element this key realizes.
    pub galois: u64,
    /// (b_j, a_j) pairs, NTT domain, one per gadget digit.
    pub comps: Vec<(RnsPoly, RnsPoly)>,
}

/// Generate the switching key for X ↦ X^g under `sk`.
pub fn keygen_galois(ctx: &BfvCtx, sk: &SecretKey, g: u64, rng: &mut impl Rng) -> KeySwitchKey {
    let s_g = sk.s.automorphism(g, &ctx.ring);
    let n = ctx.ring.n();
    let mut comps = Vec::with_capacity(ctx.gadget_mod_q.len());
    for factor in &ctx.gadget_mod_q {
        let a = sampler::uniform_ntt(&ctx.ring, Basis::Q, rng);
        let mut e = sampler::gaussian(&ctx.ring, Basis::Q, rng);
        e.ntt(&ctx.ring);
        // b = −a·s + e + g_j·σ_g(s)
        let mut b = RnsPoly::mul(&a, &sk.s, &ctx.ring);
        b.neg_assign(&ctx.ring);
        b.add_assign(&e, &ctx.ring);
        let mut target = s_g.clone();
        for (l, &p) in ctx.ring.moduli(Basis::Q).iter().enumerate() {
            let f = factor[l];
            for x in &mut target.data[l * n..(l + 1) * n] {
                *x = mul_mod(*x, f, p);
            }
        }
        b.add_assign(&target, &ctx.ring);
        comps.push((b, a));
    }
    KeySwitchKey { galois: g, comps }
}

/// Decompose a coefficient-domain polynomial into gadget digits, lifted to
/// the full basis and transformed. Digit (i,k) holds bits [16k, 16k+16) of
/// lane i's residues.
fn gadget_digits(ctx: &BfvCtx, poly: &RnsPoly) -> Vec<RnsPoly> {
    assert_eq!(poly.domain, Domain::Coeff);
    let n = ctx.ring.n();
    let mask = (1u64 << GADGET_LOG_T) - 1;
    let mut digits = Vec::with_capacity(2 * GADGET_DIGITS);
    for lane in 0..Basis::Q.lanes() {
        let src = poly.lane(lane);
        for k in 0..GADGET_DIGITS {
            let shift = GADGET_LOG_T * k as u32;
            let mut d = RnsPoly::zero(&ctx.ring, Basis::Q, Domain::Coeff);
            for l in 0..Basis::Q.lanes() {
                let dst = &mut d.data[l * n..(l + 1) * n];
                for (x, &v) in dst.iter_mut().zip(src) {
                    *x = (v >> shift) & mask; // < 2^16 < every prime
                }
            }
            d.ntt(&ctx.ring);
            digits.push(d);
        }
    }
    digits
}

/// Apply the automorphism X ↦ X^g to a ciphertext and switch back to the
/// original key.
pub fn apply_galois(ctx: &BfvCtx, ct: &Ciphertext, ksk: &KeySwitchKey) -> Ciphertext {
    let c0g = ct.c0.automorphism(ksk.galois, &ctx.ring);
    let mut c1g = ct.c1.automorphism(ksk.galois, &ctx.ring);
    c1g.intt(&ctx.ring);
    let digits = gadget_digits(ctx, &c1g);
    let mut c0 = c0g;
    let mut c1 = RnsPoly::zero(&ctx.ring, Basis::Q, Domain::Ntt);
    for (d, (b, a)) in digits.iter().zip(&ksk.comps) {
        c0.add_assign(&RnsPoly::mul(d, b, &ctx.ring), &ctx.ring);
        c1.add_assign(&RnsPoly::mul(d, a, &ctx.ring), &ctx.ring);
    }
    Ciphertext { c0, c1 }
}

/// Rotation keys for every power-of-two hop, enabling arbitrary rotations
/// in ≤ log₂(n/2) switches and incremental slot walks in one switch each.
#[derive(Clone, PartialEq)]
pub struct GaloisKeys {
    /// hop size (power of two) → switching key for 3^hop.
    pub hops: BTreeMap<usize, KeySwitchKey>,
}

impl GaloisKeys {
    /// Generate keys for hops 1, 2, 4, …, n/4.
    pub fn generate(ctx: &BfvCtx, sk: &SecretKey, rng: &mut impl Rng) -> Self {
        let mut hops = BTreeMap::new();
        let mut hop = 1usize;
        while hop < ctx.slot_count() {
            let g = ctx.ring.rotation_element(hop);
            hops.insert(hop, keygen_galois(ctx, sk, g, rng));
            hop <<= 1;
        }
        GaloisKeys { hops }
    }

    /// Key for one power-of-two hop.
    pub fn hop(&self, size: usize) -> &KeySwitchKey {
        self.hops
            .get(&size)
            .unwrap_or_else(|| panic!("no rotation key for hop {size}"))
    }
}

/// Rotate the packed vector left by `k` slots (binary decomposition of k;
/// popcount(k) switches).
pub fn rotate(ctx: &BfvCtx, ct: &Ciphertext, k: usize, keys: &GaloisKeys) -> Ciphertext {
    let k = k % ctx.slot_count();
    let mut out = ct.clone();
    let mut remaining = k;
    let mut hop = 1usize;
    while remaining > 0 {
        if remaining & 1 == 1 {
            out = apply_galois(ctx, &out, keys.hop(hop));
        }
        remaining >>= 1;
        hop <<= 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfv::{decrypt, encode, encrypt, keygen_public, keygen_secret, noise_log2};
    use crate::params::DESK;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (BfvCtx, SecretKey, super::super::PublicKey, ChaCha20Rng) {
        let ctx = BfvCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        let sk = keygen_secret(&ctx, &mut rng);
        let pk = keygen_public(&ctx, &sk, &mut rng);
        (ctx, sk, pk, rng)
    }

    #[test]
    fn homomorphic_add_sub_plain_ops() {
        let (ctx, sk, pk, mut rng) = setup();
        let t = ctx.t();
        let half = ctx.slot_count();
        let a: Vec<u64> = (0..half).map(|_| rng.random_range(0..t)).collect();
        let b: Vec<u64> = (0..half).map(|_| rng.random_range(0..t)).collect();
        let ma = encode::encode(&ctx, &a);
        let mb = encode::encode(&ctx, &b);
        let mut ct = encrypt(&ctx, &pk, &ma, &mut rng);
        let ctb = encrypt(&ctx, &pk, &mb, &mut rng);

        add_assign(&ctx, &mut ct, &ctb); // a + b
        add_plain_assign(&ctx, &mut ct, &ma); // 2a + b
        sub_assign(&ctx, &mut ct, &ctb); // 2a
        let got = encode::decode(&ctx, &decrypt(&ctx, &sk, &ct), half);
        let want: Vec<u64> = a.iter().map(|&x| (2 * x) % t).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn mul_plain_matches_slotwise_product() {
        let (ctx, sk, pk, mut rng) = setup();
        let t = ctx.t();
        let half = ctx.slot_count();
        let a: Vec<u64> = (0..half).map(|_| rng.random_range(0..t)).collect();
        // Multiplier values sized like fixed-point weights.
        let w: Vec<u64> = (0..half)
            .map(|_| {
                let v = rng.random_range(-1024i64..=1024);
                crate::params::to_residue_mod_t(v, t)
            })
            .collect();
        let ma = encode::encode(&ctx, &a);
        let mw = encode::encode(&ctx, &w);
        let mut ct = encrypt(&ctx, &pk, &ma, &mut rng);
        mul_plain_assign(&ctx, &mut ct, &MulOperand::new(&ctx, &mw));
        let got = encode::decode(&ctx, &decrypt(&ctx, &sk, &ct), half);
        let want: Vec<u64> = a
            .iter()
            .zip(&w)
            .map(|(&x, &y)| ((x as u128 * y as u128) % t as u128) as u64)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn rotation_via_key_switch() {
        let (ctx, sk, pk, mut rng) = setup();
        let keys = GaloisKeys::generate(&ctx, &sk, &mut rng);
        let half = ctx.slot_count();
        let values: Vec<u64> = (0..half as u64).map(|v| v * 3 + 1).collect();
        let ct = encrypt(&ctx, &pk, &encode::encode(&ctx, &values), &mut rng);
        for k in [1usize, 2, 5, 100, half - 1] {
            let rot = rotate(&ctx, &ct, k, &keys);
            let got = encode::decode(&ctx, &decrypt(&ctx, &sk, &rot), half);
            let want: Vec<u64> = (0..half).map(|j| values[(j + k) % half]).collect();
            assert_eq!(got, want, "rotation by {k}");
        }
    }

    #[test]
    fn key_switch_noise_within_budget() {
        let (ctx, sk, pk, mut rng) = setup();
        let keys = GaloisKeys::generate(&ctx, &sk, &mut rng);
        let half = ctx.slot_count();
        let values: Vec<u64> = (0..half as u64).collect();
        let ct = encrypt(&ctx, &pk, &encode::encode(&ctx, &values), &mut rng);
        let rot = rotate(&ctx, &ct, 1, &keys);
        let rotated: Vec<u64> = (0..half).map(|j| values[(j + 1) % half]).collect();
        let expected = encode::encode(&ctx, &rotated);
        let noise = noise_log2(&ctx, &sk, &rot, &expected);
        assert!(noise < 37.0, "switch noise 2^{noise:.1} above worst-case bound");
    }
}
