//! Per-party knowledge: dimension skeletons, weight-share dealing, and
//! residue arithmetic helpers.
//!
//! What a party may know is expressed by what its view *contains*, not by
//! trust in the code path that built it: the user's view holds block
//! dimensions only, server A's holds the gateway matrices plus dimensions,
//! and each remote server's holds one additive share of the remote
//! matrices. Shares are dealt deterministically from the run seed (B's
//! half is a pseudorandom matrix, C's is the difference), so both servers
//! derive consistent shares without a dealer message; the audit checks
//! recombination against the lowered model from outside the views.

use rand_chacha::rand_core::RngCore;

use crate::error::{Error, Result};
use crate::nn::{Deployment, LinearForm};
use crate::params::to_residue_mod_t;
use crate::protocol::rng::{stream_aux, Purpose};
use crate::transport::PartyId;

/// Public shape of one block: everything about it that is architecture,
/// nothing that is weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDims {
    /// 1-based block ordinal; frames tag messages with it.
    pub ordinal: usize,
    /// Input vector length.
    pub in_len: usize,
    /// Output vector length.
    pub out_len: usize,
    /// Whether a truncate-then-ReLU site terminates the block.
    pub relu_after: bool,
    /// Right-shift at the ReLU site (0 without one).
    pub shift: u32,
    /// Packing dimension: `max(out_len, in_len)` rounded up to a power of
    /// two. Mask vectors pad to this length; rotations act modulo it.
    pub dim: usize,
}

impl BlockDims {
    /// Rotation offsets that can touch the `out_len × in_len` rectangle of
    /// the dim×dim padded matrix. Depends only on dimensions, so every
    /// party derives the same set without seeing weights.
    pub fn active_offsets(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&m| (0..self.out_len).any(|i| (i + m) % self.dim < self.in_len))
            .collect()
    }
}

/// The public split shape: per-block dimensions plus where the gateway
/// segment ends and how it hands off.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    /// All blocks, in inference order.
    pub blocks: Vec<BlockDims>,
    /// Number of leading gateway-side blocks.
    pub gateway_blocks: usize,
    /// Whether the gateway segment ends un-truncated (δ re-mask hand-off).
    pub delta_remask: bool,
}

impl Skeleton {
    /// Ordinal of the first remote block, if a remote segment exists.
    pub fn transition_ordinal(&self) -> Option<usize> {
        (self.gateway_blocks < self.blocks.len()).then_some(self.gateway_blocks + 1)
    }

    /// Dimensions of block `ordinal` (1-based).
    pub fn block(&self, ordinal: usize) -> &BlockDims {
        &self.blocks[ordinal - 1]
    }

    /// Total block count.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Logits vector length.
    pub fn output_len(&self) -> usize {
        self.blocks.last().expect("at least one block").out_len
    }
}

/// Extract the public dimension skeleton from a lowered deployment.
pub fn skeleton(dep: &Deployment) -> Skeleton {
    let blocks = dep
        .blocks
        .iter()
        .map(|b| BlockDims {
            ordinal: b.ordinal,
            in_len: b.form.in_len(),
            out_len: b.form.out_len(),
            relu_after: b.relu_after,
            shift: b.shift,
            dim: b.form.in_len().max(b.form.out_len()).next_power_of_two(),
        })
        .collect();
    Skeleton {
        blocks,
        gateway_blocks: dep.gateway_blocks,
        delta_remask: dep.delta_remask,
    }
}

/// One remote server's additive share of one remote block: matrix and
/// bias as residues mod t.
#[derive(Debug, Clone)]
pub struct RemoteBlockShare {
    /// Block ordinal (1-based).
    pub ordinal: usize,
    /// `out_len × in_len` weight-share rows, residues in [0, t).
    pub f_share: Vec<Vec<u64>>,
    /// Bias-share vector, residues in [0, t).
    pub b_share: Vec<u64>,
}

/// Everything one remote server knows about the remote segment.
#[derive(Debug, Clone)]
pub struct RemoteView {
    /// Which server this view belongs to (B or C).
    pub party: PartyId,
    /// Shares of every remote block, transition block first.
    pub blocks: Vec<RemoteBlockShare>,
}

impl RemoteView {
    /// This server's share of block `ordinal`.
    pub fn block(&self, ordinal: usize) -> &RemoteBlockShare {
        self.blocks
            .iter()
            .find(|b| b.ordinal == ordinal)
            .unwrap_or_else(|| panic!("no remote share for block {ordinal}"))
    }
}

/// Deal `party`'s additive share of every remote block. B's share is a
/// seed-derived pseudorandom matrix; C's is the true matrix minus it.
/// Dealt once per run — weights do not change between inferences.
pub fn remote_weight_shares(dep: &Deployment, t: u64, seed: u64, party: PartyId) -> Result<RemoteView> {
    if party != PartyId::ServerB && party != PartyId::ServerC {
        return Err(Error::InvalidArgument(format!(
            "remote weight shares belong to servers B and C, not {party}"
        )));
    }
    let mut blocks = Vec::new();
    for block in &dep.blocks[dep.gateway_blocks..] {
        let ordinal = block.ordinal;
        let mut w_rng = stream_aux(seed, PartyId::ServerB, Purpose::WeightShare, ordinal as u16, 0, 0);
        let mut b_rng = stream_aux(seed, PartyId::ServerB, Purpose::WeightShare, ordinal as u16, 0, 1);
        let f_half: Vec<Vec<u64>> = block
            .form
            .rows
            .iter()
            .map(|row| uniform_vec(&mut w_rng, t, row.len()))
            .collect();
        let b_half = uniform_vec(&mut b_rng, t, block.form.bias.len());
        let (f_share, b_share) = if party == PartyId::ServerB {
            (f_half, b_half)
        } else {
            let f_rest = block
                .form
                .rows
                .iter()
                .zip(&f_half)
                .map(|(row, half)| {
                    row.iter()
                        .zip(half)
                        .map(|(&w, &h)| sub_mod_t(to_residue_mod_t(w, t), h, t))
                        .collect()
                })
                .collect();
            let b_rest = block
                .form
                .bias
                .iter()
                .zip(&b_half)
                .map(|(&w, &h)| sub_mod_t(to_residue_mod_t(w, t), h, t))
                .collect();
            (f_rest, b_rest)
        };
        blocks.push(RemoteBlockShare {
            ordinal,
            f_share,
            b_share,
        });
    }
    Ok(RemoteView { party, blocks })
}

/// Gateway server A's weight knowledge: the composed forms of the leading
/// blocks, cloned out of the deployment so A's view carries no remote
/// weights.
pub fn gateway_forms(dep: &Deployment) -> Vec<LinearForm> {
    dep.blocks[..dep.gateway_blocks]
        .iter()
        .map(|b| b.form.clone())
        .collect()
}

/// `a + b mod t` on residues.
pub(crate) fn add_mod_t(a: u64, b: u64, t: u64) -> u64 {
    let s = a + b; // both < t < 2^58, no overflow
    if s >= t {
        s - t
    } else {
        s
    }
}

/// `a - b mod t` on residues.
pub(crate) fn sub_mod_t(a: u64, b: u64, t: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + t - b
    }
}

/// Elementwise `a + b mod t`.
pub(crate) fn add_vec_t(a: &[u64], b: &[u64], t: u64) -> Vec<u64> {
    assert_eq!(a.len(), b.len(), "residue vector length mismatch");
    a.iter().zip(b).map(|(&x, &y)| add_mod_t(x, y, t)).collect()
}

/// Elementwise `a - b mod t`.
pub(crate) fn sub_vec_t(a: &[u64], b: &[u64], t: u64) -> Vec<u64> {
    assert_eq!(a.len(), b.len(), "residue vector length mismatch");
    a.iter().zip(b).map(|(&x, &y)| sub_mod_t(x, y, t)).collect()
}

/// Residue matrix–vector product `rows · x mod t`.
pub(crate) fn matvec_mod_t(rows: &[Vec<u64>], x: &[u64], t: u64) -> Vec<u64> {
    rows.iter()
        .map(|row| {
            assert_eq!(row.len(), x.len(), "matvec dimension mismatch");
            let mut acc: u128 = 0;
            for (&w, &v) in row.iter().zip(x) {
                acc += w as u128 * v as u128; // ≤ 2^94 for any supported block
            }
            (acc % t as u128) as u64
        })
        .collect()
}

/// One uniform residue in [0, t), by rejection from the smallest covering
/// power of two (acceptance rate > 1/2).
pub(crate) fn uniform_residue(rng: &mut impl RngCore, t: u64) -> u64 {
    debug_assert!(t > 1);
    let bits = 64 - (t - 1).leading_zeros();
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    loop {
        let v = rng.next_u64() & mask;
        if v < t {
            return v;
        }
    }
}

/// A vector of uniform residues.
pub(crate) fn uniform_vec(rng: &mut impl RngCore, t: u64, len: usize) -> Vec<u64> {
    (0..len).map(|_| uniform_residue(rng, t)).collect()
}

/// A fresh mask/blind/password vector — uniform residues, or zeros when
/// the zero-randomness debugging switch is on.
pub(crate) fn draw_vec(
    cfg: &crate::protocol::RunConfig,
    rng: &mut impl RngCore,
    t: u64,
    len: usize,
) -> Vec<u64> {
    if cfg.zero_randomness() {
        vec![0; len]
    } else {
        uniform_vec(rng, t, len)
    }
}

/// Extract rotation diagonal `m` of a residue matrix padded to dim×dim:
/// `diag[i] = rows[i][(i + m) % dim]` where the rectangle covers it, 0
/// elsewhere.
pub(crate) fn share_diagonal(rows: &[Vec<u64>], dims: &BlockDims, m: usize) -> Vec<u64> {
    (0..dims.dim)
        .map(|i| {
            let j = (i + m) % dims.dim;
            if i < dims.out_len && j < dims.in_len {
                rows[i][j]
            } else {
                0
            }
        })
        .collect()
}

/// Pad a residue vector with zeros to `len`.
pub(crate) fn pad_to(v: &[u64], len: usize) -> Vec<u64> {
    assert!(v.len() <= len, "vector longer than padding target");
    let mut out = v.to_vec();
    out.resize(len, 0);
    out
}

/// Left-rotate a vector by `m` (`out[i] = v[(i + m) % len]`).
pub(crate) fn rotate_left(v: &[u64], m: usize) -> Vec<u64> {
    let n = v.len();
    (0..n).map(|i| v[(i + m) % n]).collect()
}
