//! Multi-party extension of the lattice scheme: a public key aggregated
//! from per-party shares of the secret, and distributed decryption, so no
//! server ever holds the full key.
//!
//! * Key generation: all parties derive the same uniform p1 from a public
//!   seed; party i publishes p0_i = −s_i·p1 + e_i; the common key is
//!   (Σ p0_i, p1), a valid public key for s = Σ s_i.
//! * Degree-1 decryption: each party returns pd_i = s_i·c1 + e_i; the
//!   combiner computes ⌊(t/q)·[c0 + Σ pd_i]⌉.
//! * Degree-2 decryption is two such rounds: first each party returns
//!   h_i = s_i·c2 + e_i, folding the ciphertext to
//!   (c0, c1 + Σ h_i) — degree 1 again — then the standard round runs.
//!   A single round cannot work: [c0 + Σ_i s_i(c1 + c2·s_i)] misses every
//!   cross term s_i·c2·s_j, so the fold must complete before the second
//!   projection starts.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

use crate::bfv::{BfvCtx, Ciphertext, Ciphertext3, Plaintext, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::ring::{sampler, Basis, RnsPoly};

/// A labeled partial contribution (public-key share or decryption share).
/// The label is the contributing party's wire id; combiners reject
/// duplicates so a share can't be counted twice.
#[derive(Debug, Clone)]
pub struct Partial {
    /// Wire id of the contributing party.
    pub holder: u8,
    /// The contributed polynomial (NTT domain).
    pub value: RnsPoly,
}

/// Derive the shared uniform p1 from a public seed. Every key holder runs
/// this locally; broadcasting the 32-byte seed replaces broadcasting a full
/// ring element.
pub fn common_reference_poly(ctx: &BfvCtx, seed: [u8; 32]) -> RnsPoly {
    let mut rng = ChaCha20Rng::from_seed(seed);
    sampler::uniform_ntt(&ctx.ring, Basis::Q, &mut rng)
}

/// Party i's public-key share p0_i = −s_i·p1 + e_i.
pub fn partial_public_key(
    ctx: &BfvCtx,
    share: &SecretKey,
    p1: &RnsPoly,
    rng: &mut impl Rng,
) -> RnsPoly {
    let mut e = sampler::gaussian(&ctx.ring, Basis::Q, rng);
    e.ntt(&ctx.ring);
    let mut p0 = RnsPoly::mul(&share.s, p1, &ctx.ring);
    p0.neg_assign(&ctx.ring);
    p0.add_assign(&e, &ctx.ring);
    p0
}

/// Aggregate the shares into the common public key (Σ p0_i, p1).
pub fn aggregate_public_key(
    ctx: &BfvCtx,
    p1: &RnsPoly,
    partials: &[Partial],
) -> Result<PublicKey> {
    check_distinct(partials)?;
    let mut p0 = RnsPoly::zero(&ctx.ring, Basis::Q, crate::ring::Domain::Ntt);
    for part in partials {
        p0.add_assign(&part.value, &ctx.ring);
    }
    Ok(PublicKey {
        p0,
        p1: p1.clone(),
    })
}

/// One party's decryption share for a key component: s_i·c + e_i. Serves
/// both the degree-1 round (c = c1) and the degree-2 fold (c = c2).
pub fn partial_decrypt(
    ctx: &BfvCtx,
    share: &SecretKey,
    component: &RnsPoly,
    rng: &mut impl Rng,
) -> RnsPoly {
    let mut e = sampler::gaussian(&ctx.ring, Basis::Q, rng);
    e.ntt(&ctx.ring);
    let mut pd = RnsPoly::mul(&share.s, component, &ctx.ring);
    pd.add_assign(&e, &ctx.ring);
    pd
}

/// Combine a degree-1 ciphertext with every party's decryption share.
pub fn combine_decrypt(
    ctx: &BfvCtx,
    ct: &Ciphertext,
    partials: &[Partial],
) -> Result<Plaintext> {
    check_distinct(partials)?;
    let mut acc = ct.c0.clone();
    for part in partials {
        acc.add_assign(&part.value, &ctx.ring);
    }
    Ok(crate::bfv::round_to_plaintext(ctx, acc))
}

/// Fold a degree-2 ciphertext down to degree 1 using every party's
/// s_i·c2 share: (c0, c1 + Σ h_i).
pub fn fold_degree2(
    ctx: &BfvCtx,
    ct: &Ciphertext3,
    h_partials: &[Partial],
) -> Result<Ciphertext> {
    check_distinct(h_partials)?;
    let mut c1 = ct.c1.clone();
    for part in h_partials {
        c1.add_assign(&part.value, &ctx.ring);
    }
    Ok(Ciphertext {
        c0: ct.c0.clone(),
        c1,
    })
}

fn check_distinct(partials: &[Partial]) -> Result<()> {
    for (i, a) in partials.iter().enumerate() {
        for b in &partials[i + 1..] {
            if a.holder == b.holder {
                return Err(Error::ShareReuse(format!(
                    "party {} contributed twice",
                    a.holder
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfv::tensor::TensorAcc;
    use crate::bfv::{decode, decrypt, encode, encrypt, keygen_secret};
    use crate::params::DESK;
    use rand::SeedableRng;

    struct Parties {
        ctx: BfvCtx,
        shares: Vec<SecretKey>,
        joint: SecretKey,
        pk: PublicKey,
    }

    fn setup(seed: u64, count: usize) -> (Parties, ChaCha20Rng) {
        let ctx = BfvCtx::new(&DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let shares: Vec<SecretKey> = (0..count).map(|_| keygen_secret(&ctx, &mut rng)).collect();
        let mut joint = shares[0].clone();
        for sh in &shares[1..] {
            joint.s.add_assign(&sh.s, &ctx.ring);
        }
        let p1 = common_reference_poly(&ctx, [7u8; 32]);
        let partials: Vec<Partial> = shares
            .iter()
            .enumerate()
            .map(|(i, sh)| Partial {
                holder: i as u8,
                value: partial_public_key(&ctx, sh, &p1, &mut rng),
            })
            .collect();
        let pk = aggregate_public_key(&ctx, &p1, &partials).unwrap();
        (
            Parties {
                ctx,
                shares,
                joint,
                pk,
            },
            rng,
        )
    }

    #[test]
    fn aggregated_key_decrypts_with_joint_secret() {
        let (p, mut rng) = setup(101, 3);
        let values: Vec<u64> = (0..p.ctx.slot_count())
            .map(|_| rng.random_range(0..p.ctx.t()))
            .collect();
        let ct = encrypt(&p.ctx, &p.pk, &encode(&p.ctx, &values), &mut rng);
        // Oracle: the aggregated key behaves exactly like the summed secret.
        let got = decode(&p.ctx, &decrypt(&p.ctx, &p.joint, &ct), values.len());
        assert_eq!(got, values);
    }

    #[test]
    fn distributed_decryption_matches_joint_key() {
        let (p, mut rng) = setup(102, 3);
        let values: Vec<u64> = (0..64).map(|_| rng.random_range(0..p.ctx.t())).collect();
        let ct = encrypt(&p.ctx, &p.pk, &encode(&p.ctx, &values), &mut rng);
        let partials: Vec<Partial> = p
            .shares
            .iter()
            .enumerate()
            .map(|(i, sh)| Partial {
                holder: i as u8,
                value: partial_decrypt(&p.ctx, sh, &ct.c1, &mut rng),
            })
            .collect();
        let m = combine_decrypt(&p.ctx, &ct, &partials).unwrap();
        assert_eq!(decode(&p.ctx, &m, values.len()), values);
    }

    #[test]
    fn duplicate_share_rejected() {
        let (p, mut rng) = setup(103, 3);
        let ct = encrypt(&p.ctx, &p.pk, &encode(&p.ctx, &[1, 2, 3, 4]), &mut rng);
        let pd = Partial {
            holder: 1,
            value: partial_decrypt(&p.ctx, &p.shares[0], &ct.c1, &mut rng),
        };
        let err = combine_decrypt(&p.ctx, &ct, &[pd.clone(), pd]).unwrap_err();
        assert!(matches!(err, Error::ShareReuse(_)));
    }

    #[test]
    fn two_round_degree2_decryption() {
        let (p, mut rng) = setup(104, 3);
        let t = p.ctx.t();
        let a: Vec<u64> = (0..32).map(|_| rng.random_range(0..t)).collect();
        let b: Vec<u64> = (0..32).map(|_| rng.random_range(0..t)).collect();
        let ct_a = encrypt(&p.ctx, &p.pk, &encode(&p.ctx, &a), &mut rng);
        let ct_b = encrypt(&p.ctx, &p.pk, &encode(&p.ctx, &b), &mut rng);
        let mut acc = TensorAcc::new(&p.ctx);
        acc.add_product(&p.ctx, &ct_a, &ct_b);
        let ct3 = acc.finish(&p.ctx);

        // Round 1: everyone projects c2.
        let hs: Vec<Partial> = p
            .shares
            .iter()
            .enumerate()
            .map(|(i, sh)| Partial {
                holder: i as u8,
                value: partial_decrypt(&p.ctx, sh, &ct3.c2, &mut rng),
            })
            .collect();
        let folded = fold_degree2(&p.ctx, &ct3, &hs).unwrap();

        // Round 2: standard degree-1 distributed decryption.
        let pds: Vec<Partial> = p
            .shares
            .iter()
            .enumerate()
            .map(|(i, sh)| Partial {
                holder: i as u8,
                value: partial_decrypt(&p.ctx, sh, &folded.c1, &mut rng),
            })
            .collect();
        let m = combine_decrypt(&p.ctx, &folded, &pds).unwrap();
        let want: Vec<u64> = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| ((x as u128 * y as u128) % t as u128) as u64)
            .collect();
        assert_eq!(decode(&p.ctx, &m, want.len()), want);

        // Cross-check against the joint-key reference decryption.
        let reference = crate::bfv::tensor::decrypt3(&p.ctx, &p.joint, &ct3);
        assert_eq!(decode(&p.ctx, &reference, want.len()), want);
    }
}
