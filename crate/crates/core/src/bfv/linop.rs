//! Packed matrix–vector products via the generalized-diagonal method.
//!
//! A matrix M (out×in) is padded to d̃×d̃ with d̃ the next power of two of
//! max(out, in), and stored as its d̃ generalized diagonals
//! `diag_k[i] = M[i][(i+k) mod d̃]`. For a vector replicated at period d̃
//! across the slots,
//!
//! ```text
//! (M·v)[i] = Σ_k diag_k[i] · v[(i+k) mod d̃] = Σ_k diag_k[i] · rot_k(v)[i]
//! ```
//!
//! so the product is K ≤ d̃ slot-wise multiply-accumulates against rotated
//! copies of the input. All-zero diagonals are skipped. Two execution
//! styles exist: rotating a single input ciphertext in place (hop-1
//! switches, one per step — the gateway path), and consuming pre-rotated
//! ciphertexts supplied by whoever knows the vector (the remote path,
//! which needs no rotation keys at all).

use rayon::prelude::*;

use crate::params::to_residue_mod_t;
use crate::ring::{Basis, Domain, RnsPoly};

use super::eval::{add_assign, apply_galois, mul_plain_assign, GaloisKeys, MulOperand};
use super::{encode, BfvCtx, Ciphertext};

/// A matrix lowered to generalized diagonals over Z_t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinOpPlan {
    /// Padded dimension d̃ (power of two ≤ n/2).
    pub dim: usize,
    /// Logical output length.
    pub out_dim: usize,
    /// Logical input length.
    pub in_dim: usize,
    /// Diagonal k, or None when it is identically zero. Values are residues
    /// mod t; slots ≥ out_dim are zero.
    pub diagonals: Vec<Option<Vec<u64>>>,
}

impl LinOpPlan {
    /// Lower an integer matrix (row-major, `rows[i][j]` = M[i][j]) into
    /// diagonal form. Entries may be any signed integers; they are reduced
    /// mod t.
    pub fn from_matrix(rows: &[Vec<i64>], t: u64) -> Self {
        let out_dim = rows.len();
        let in_dim = rows.first().map_or(0, Vec::len);
        assert!(out_dim > 0 && in_dim > 0, "empty matrix");
        assert!(rows.iter().all(|r| r.len() == in_dim), "ragged matrix");
        let dim = out_dim.max(in_dim).next_power_of_two();
        let diagonals = (0..dim)
            .map(|k| {
                let mut d = vec![0u64; dim];
                let mut any = false;
                for (i, slot) in d.iter_mut().enumerate() {
                    let j = (i + k) % dim;
                    if i < out_dim && j < in_dim && rows[i][j] != 0 {
                        *slot = to_residue_mod_t(rows[i][j], t);
                        any = true;
                    }
                }
                any.then_some(d)
            })
            .collect();
        LinOpPlan {
            dim,
            out_dim,
            in_dim,
            diagonals,
        }
    }

    /// Number of non-zero diagonals.
    pub fn active_diagonals(&self) -> usize {
        self.diagonals.iter().flatten().count()
    }

    /// Reference product over Z_t (the oracle the packed kernels are tested
    /// against, and the path plaintext inference uses).
    pub fn apply_plain(&self, v: &[u64], t: u64) -> Vec<u64> {
        assert_eq!(v.len(), self.in_dim);
        let mut out = vec![0u64; self.out_dim];
        for (k, diag) in self.diagonals.iter().enumerate() {
            let Some(diag) = diag else { continue };
            for (i, o) in out.iter_mut().enumerate() {
                let j = (i + k) % self.dim;
                if j < self.in_dim {
                    *o = ((*o as u128 + diag[i] as u128 * v[j] as u128) % t as u128) as u64;
                }
            }
        }
        out
    }

    /// Encode every active diagonal as a multiplication operand.
    pub fn prepare(&self, ctx: &BfvCtx) -> PreparedDiagonals {
        let ops = self
            .diagonals
            .par_iter()
            .map(|d| {
                d.as_ref()
                    .map(|vals| MulOperand::new(ctx, &encode::encode(ctx, vals)))
            })
            .collect();
        PreparedDiagonals { dim: self.dim, ops }
    }
}

/// Diagonals lifted and transformed, ready for slot-wise multiplication.
pub struct PreparedDiagonals {
    /// Padded dimension the operands were built for.
    pub dim: usize,
    ops: Vec<Option<MulOperand>>,
}

/// Trivial encryption of zero (both components zero); the additive identity
/// for ciphertext accumulation.
pub fn zero_ciphertext(ctx: &BfvCtx) -> Ciphertext {
    Ciphertext {
        c0: RnsPoly::zero(&ctx.ring, Basis::Q, Domain::Ntt),
        c1: RnsPoly::zero(&ctx.ring, Basis::Q, Domain::Ntt),
    }
}

/// Gateway-style product: walk the input ciphertext through hop-1
/// rotations, multiplying by each active diagonal as it lines up. Uses
/// K−1 key switches for K active diagonals at consecutive offsets.
///
/// The input must hold the vector replicated at period `plan.dim`.
pub fn apply_rotations(
    ctx: &BfvCtx,
    ct_in: &Ciphertext,
    diagonals: &PreparedDiagonals,
    keys: &GaloisKeys,
) -> Ciphertext {
    let mut acc = zero_ciphertext(ctx);
    let mut cur = ct_in.clone();
    let mut cur_k = 0usize;
    for (k, op) in diagonals.ops.iter().enumerate() {
        let Some(op) = op else { continue };
        while cur_k < k {
            cur = apply_galois(ctx, &cur, keys.hop(1));
            cur_k += 1;
        }
        let mut term = cur.clone();
        mul_plain_assign(ctx, &mut term, op);
        add_assign(ctx, &mut acc, &term);
    }
    acc
}

/// Remote-style product: the vector owner supplied `cts[k]` = Enc(rot_k(v))
/// for every k < d̃, so the product is pure multiply-accumulate.
pub fn apply_pre_rotated(
    ctx: &BfvCtx,
    cts: &[Ciphertext],
    diagonals: &PreparedDiagonals,
) -> Ciphertext {
    assert_eq!(cts.len(), diagonals.dim, "need one ciphertext per offset");
    let terms: Vec<Ciphertext> = diagonals
        .ops
        .par_iter()
        .zip(cts)
        .filter_map(|(op, ct)| {
            op.as_ref().map(|op| {
                let mut term = ct.clone();
                mul_plain_assign(ctx, &mut term, op);
                term
            })
        })
        .collect();
    let mut acc = zero_ciphertext(ctx);
    for term in &terms {
        add_assign(ctx, &mut acc, term);
    }
    acc
}

/// The rotations a vector owner must pre-encrypt for [`apply_pre_rotated`]:
/// rot_k(v) for k < d̃, each still of length d̃.
pub fn pre_rotations(v: &[u64], dim: usize) -> Vec<Vec<u64>> {
    assert!(v.len() <= dim);
    let mut padded = v.to_vec();
    padded.resize(dim, 0);
    (0..dim)
        .map(|k| (0..dim).map(|i| padded[(i + k) % dim]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfv::{decrypt, encrypt, keygen_public, keygen_secret, PublicKey, SecretKey};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (BfvCtx, SecretKey, PublicKey, ChaCha20Rng) {
        let ctx = BfvCtx::new(&crate::params::DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        let sk = keygen_secret(&ctx, &mut rng);
        let pk = keygen_public(&ctx, &sk, &mut rng);
        (ctx, sk, pk, rng)
    }

    fn random_matrix(out: usize, input: usize, rng: &mut impl Rng) -> Vec<Vec<i64>> {
        (0..out)
            .map(|_| (0..input).map(|_| rng.random_range(-128..=128)).collect())
            .collect()
    }

    fn oracle_matvec(m: &[Vec<i64>], v: &[u64], t: u64) -> Vec<u64> {
        m.iter()
            .map(|row| {
                let mut acc: i128 = 0;
                for (&w, &x) in row.iter().zip(v) {
                    acc += w as i128 * x as i128;
                }
                acc.rem_euclid(t as i128) as u64
            })
            .collect()
    }

    #[test]
    fn plain_reference_matches_direct_matvec() {
        let mut rng = ChaCha20Rng::seed_from_u64(72);
        let t = crate::params::DESK.t;
        for (out, input) in [(4usize, 16usize), (16, 4), (10, 10), (1, 8)] {
            let m = random_matrix(out, input, &mut rng);
            let plan = LinOpPlan::from_matrix(&m, t);
            let v: Vec<u64> = (0..input).map(|_| rng.random_range(0..1000)).collect();
            assert_eq!(plan.apply_plain(&v, t), oracle_matvec(&m, &v, t));
        }
    }

    #[test]
    fn rotation_kernel_matches_oracle() {
        let (ctx, sk, pk, mut rng) = setup();
        let keys = GaloisKeys::generate(&ctx, &sk, &mut rng);
        let t = ctx.t();
        for (out, input) in [(16usize, 16usize), (4, 16), (16, 4), (12, 7)] {
            let m = random_matrix(out, input, &mut rng);
            let plan = LinOpPlan::from_matrix(&m, t);
            let v: Vec<u64> = (0..input).map(|_| rng.random_range(0..t)).collect();
            let mut padded = v.clone();
            padded.resize(plan.dim, 0);
            let ct = encrypt(&ctx, &pk, &encode::encode(&ctx, &padded), &mut rng);
            let out_ct = apply_rotations(&ctx, &ct, &plan.prepare(&ctx), &keys);
            let got = encode::decode(&ctx, &decrypt(&ctx, &sk, &out_ct), out);
            assert_eq!(got, oracle_matvec(&m, &v, t), "shape {out}x{input}");
        }
    }

    #[test]
    fn pre_rotated_kernel_matches_oracle() {
        let (ctx, sk, pk, mut rng) = setup();
        let t = ctx.t();
        for (out, input) in [(8usize, 8usize), (16, 5), (3, 16)] {
            let m = random_matrix(out, input, &mut rng);
            let plan = LinOpPlan::from_matrix(&m, t);
            let v: Vec<u64> = (0..input).map(|_| rng.random_range(0..t)).collect();
            let cts: Vec<Ciphertext> = pre_rotations(&v, plan.dim)
                .iter()
                .map(|r| encrypt(&ctx, &pk, &encode::encode(&ctx, r), &mut rng))
                .collect();
            let out_ct = apply_pre_rotated(&ctx, &cts, &plan.prepare(&ctx));
            let got = encode::decode(&ctx, &decrypt(&ctx, &sk, &out_ct), out);
            assert_eq!(got, oracle_matvec(&m, &v, t), "shape {out}x{input}");
        }
    }

    #[test]
    fn identity_matrix_uses_one_diagonal() {
        let t = crate::params::DESK.t;
        let m: Vec<Vec<i64>> = (0..8)
            .map(|i| (0..8).map(|j| (i == j) as i64).collect())
            .collect();
        let plan = LinOpPlan::from_matrix(&m, t);
        assert_eq!(plan.active_diagonals(), 1);
    }
}
