//! Split-aware lowering of a raw layer list into protocol blocks.
//!
//! A deployment splits the raw layers 1..=L at index `l`: layers 1..=l run on
//! the gateway segment (user + server A), layers l+1..=L on the remote
//! segment (servers A, B, C). Within a segment, every maximal run of
//! consecutive linear layers composes into a single integer matrix (they
//! commute with nothing in between), and an immediately following in-segment
//! ReLU attaches to that block.
//!
//! Truncation is bound to ReLU sites, never to the split: the shift at a ReLU
//! equals `scale_bits ×` (number of linear members since the previous ReLU),
//! *including* members on the other side of the split when the split cuts a
//! linear run. The hand-off value then crosses the boundary un-truncated (the
//! δ-remask path), so every split point computes the identical function — the
//! plaintext oracle is split-invariant by construction. The final block is
//! never truncated; its outputs are the fixed-point logits.
//!
//! When the remote segment begins with a ReLU (the split fell right after a
//! linear layer), the first remote block is a synthetic identity matrix with
//! the ReLU attached; the identity contributes no scale.

use crate::error::{Error, Result};
use crate::nn::format::{Model, RawLayer, Shape};
use crate::nn::im2col::{lower_layer, LinearForm};

/// One protocol block: a composed linear map, optionally ending in a
/// truncate-then-ReLU site.
#[derive(Clone, Debug)]
pub struct LinearBlock {
    /// 1-based position in the deployment; frames tag messages with it.
    pub ordinal: usize,
    /// The composed matrix and bias.
    pub form: LinearForm,
    /// Whether a ReLU site terminates this block.
    pub relu_after: bool,
    /// Right-shift applied at the ReLU site (0 when `relu_after` is false).
    pub shift: u32,
    /// First raw layer the block covers (1-based; the ReLU of a synthetic
    /// identity block counts).
    pub first_raw: usize,
    /// Last raw layer the block covers, including the attached ReLU.
    pub last_raw: usize,
}

/// A model lowered at a specific split index.
#[derive(Clone, Debug)]
pub struct Deployment {
    /// Fixed-point fractional bits (copied from the model).
    pub scale_bits: u32,
    /// The split index `l` (raw layers ≤ l are gateway-side).
    pub l_raw: usize,
    /// Total raw layer count `L`.
    pub layer_count: usize,
    /// Blocks in inference order.
    pub blocks: Vec<LinearBlock>,
    /// Number of leading blocks that belong to the gateway segment.
    pub gateway_blocks: usize,
    /// True when the gateway segment ends without a ReLU (split cut a linear
    /// run or fell right after a linear layer): the user re-masks the
    /// un-truncated hand-off value with δ = y_c − r instead of a GC round.
    pub delta_remask: bool,
}

impl Deployment {
    /// Ordinal of the transition block (first remote block), if any remote
    /// segment exists.
    pub fn transition_ordinal(&self) -> Option<usize> {
        (self.gateway_blocks < self.blocks.len()).then_some(self.gateway_blocks + 1)
    }

    /// Length of the inference input vector.
    pub fn input_len(&self) -> usize {
        self.blocks[0].form.in_len()
    }

    /// Length of the logits vector.
    pub fn output_len(&self) -> usize {
        self.blocks[self.blocks.len() - 1].form.out_len()
    }

    /// Worst-case output magnitude per block, by interval arithmetic from the
    /// input bound `2^scale_bits`, mirroring the truncation schedule.
    pub fn magnitude_bounds(&self) -> Vec<i128> {
        let mut bound = 1i128 << self.scale_bits;
        let mut out = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let row_bound = block
                .form
                .rows
                .iter()
                .zip(&block.form.bias)
                .map(|(row, &b)| {
                    row.iter().map(|&w| (w as i128).abs()).sum::<i128>() * bound
                        + (b as i128).abs()
                })
                .max()
                .unwrap_or(0);
            out.push(row_bound);
            bound = if block.relu_after {
                (row_bound >> block.shift) + 1
            } else {
                row_bound
            };
        }
        out
    }

    /// Check that every block fits the plaintext modulus `t` (centered
    /// residues must decode unambiguously) and the packing budget
    /// `max_dim` (slot count per ciphertext).
    pub fn check_capacity(&self, t: u64, max_dim: usize) -> Result<()> {
        for (block, bound) in self.blocks.iter().zip(self.magnitude_bounds()) {
            if 2 * bound >= t as i128 {
                return Err(Error::Config(format!(
                    "block {} can reach magnitude {bound}, exceeding t/2 = {}",
                    block.ordinal,
                    t / 2
                )));
            }
            let dim = block.form.in_len().max(block.form.out_len());
            if dim > max_dim {
                return Err(Error::Config(format!(
                    "block {} needs dimension {dim}, packing budget is {max_dim}",
                    block.ordinal
                )));
            }
        }
        Ok(())
    }
}

/// Compose `second ∘ first`. `first_members` is the number of raw linear
/// members already composed into `first`: the bias of `second` sits at scale
/// `(members(second)+1)·s` and must be lifted by `2^(s·first_members)` to the
/// output scale `(first_members + members(second) + 1)·s`.
fn compose(second: &LinearForm, first: &LinearForm, scale_bits: u32, first_members: u32) -> LinearForm {
    assert_eq!(second.in_len(), first.out_len(), "compose dimension mismatch");
    let lift = 1i128 << (scale_bits * first_members);
    let in_len = first.in_len();
    // Iterate only the nonzero entries of `second` — pool rows are 4-sparse,
    // which turns the real-shape compositions from minutes into milliseconds.
    let composed: Vec<(Vec<i64>, i64)> = second
        .rows
        .iter()
        .zip(&second.bias)
        .map(|(srow, &sb)| {
            let mut row_acc = vec![0i128; in_len];
            let mut bias_acc = sb as i128 * lift;
            for (m, &sw) in srow.iter().enumerate() {
                if sw == 0 {
                    continue;
                }
                for (acc, &fw) in row_acc.iter_mut().zip(&first.rows[m]) {
                    *acc += sw as i128 * fw as i128;
                }
                bias_acc += sw as i128 * first.bias[m] as i128;
            }
            let row = row_acc
                .into_iter()
                .map(|v| i64::try_from(v).expect("composed weight exceeds i64"))
                .collect();
            (row, i64::try_from(bias_acc).expect("composed bias exceeds i64"))
        })
        .collect();
    let mut rows = Vec::with_capacity(composed.len());
    let mut bias = Vec::with_capacity(composed.len());
    for (r, b) in composed {
        rows.push(r);
        bias.push(b);
    }
    LinearForm { rows, bias }
}

/// Lift a form's bias by `2^(scale·members)`: applied to the first member of
/// a block whose input arrives un-truncated from `members` earlier linear
/// layers (the split cut a linear run).
fn lift_bias(form: &mut LinearForm, scale_bits: u32, members: u32) {
    if members == 0 {
        return;
    }
    let lift = 1i128 << (scale_bits * members);
    for b in &mut form.bias {
        *b = i64::try_from(*b as i128 * lift).expect("lifted bias exceeds i64");
    }
}

fn identity_form(dim: usize) -> LinearForm {
    LinearForm {
        rows: (0..dim)
            .map(|r| {
                let mut row = vec![0i64; dim];
                row[r] = 1;
                row
            })
            .collect(),
        bias: vec![0; dim],
    }
}

/// Lower `model` at split index `l` (0 ≤ l ≤ L).
pub fn lower(model: &Model, l: usize) -> Result<Deployment> {
    let layer_count = model.layer_count();
    if l > layer_count {
        return Err(Error::Config(format!(
            "split l = {l} exceeds layer count {layer_count}"
        )));
    }
    model.validate()?;
    let shapes = model.shapes()?;
    let shape_before = |raw_1based: usize| -> Shape {
        if raw_1based == 1 {
            model.input_shape
        } else {
            shapes[raw_1based - 2]
        }
    };

    let mut blocks: Vec<LinearBlock> = Vec::new();
    // Linear members accumulated since the last ReLU, carried across the
    // split boundary by the δ-remask hand-off.
    let mut pending_members: u32 = 0;
    let mut gateway_blocks = 0;
    let mut delta_remask = false;

    for (seg_start, seg_end) in [(1usize, l), (l + 1, layer_count)] {
        if seg_start > seg_end {
            if seg_start == 1 {
                // empty gateway segment (l = 0)
            }
            continue;
        }
        let mut i = seg_start;
        while i <= seg_end {
            let first_raw = i;
            let (form, members): (LinearForm, u32) =
                if let RawLayer::Relu = model.layers[i - 1] {
                    // A segment can only *start* with a ReLU (runs inside a
                    // segment always end at a ReLU or the segment end): the
                    // split fell right after a linear layer. Synthesize the
                    // identity so the usual block machinery applies.
                    debug_assert_eq!(i, l + 1, "in-segment runs consume their relu");
                    (identity_form(shape_before(i).len()), 0)
                } else {
                    let mut f =
                        lower_layer(&model.layers[i - 1], shape_before(i), model.scale_bits)?;
                    lift_bias(&mut f, model.scale_bits, pending_members);
                    i += 1;
                    let mut acc = (f, 1u32);
                    while i <= seg_end && model.layers[i - 1].is_linear() {
                        let next =
                            lower_layer(&model.layers[i - 1], shape_before(i), model.scale_bits)?;
                        acc = (
                            compose(&next, &acc.0, model.scale_bits, pending_members + acc.1),
                            acc.1 + 1,
                        );
                        i += 1;
                    }
                    acc
                };
            let mut relu_after = false;
            let mut shift = 0u32;
            if i <= seg_end && !model.layers[i - 1].is_linear() {
                relu_after = true;
                shift = model.scale_bits * (pending_members + members);
                i += 1;
            }
            let last_raw = i - 1;
            if relu_after {
                pending_members = 0;
            } else {
                pending_members += members;
            }
            // The δ path exists exactly when the *gateway* segment ends in a
            // block with no ReLU (and a remote segment follows).
            if seg_end == l && i > seg_end && !relu_after && l < layer_count {
                delta_remask = true;
            }
            blocks.push(LinearBlock {
                ordinal: blocks.len() + 1,
                form,
                relu_after,
                shift,
                first_raw,
                last_raw,
            });
        }
        if seg_end == l {
            gateway_blocks = blocks.len();
        }
    }

    Ok(Deployment {
        scale_bits: model.scale_bits,
        l_raw: l,
        layer_count,
        blocks,
        gateway_blocks,
        delta_remask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::im2col::matvec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn fc(out: usize, input: usize, rng: &mut ChaCha20Rng) -> RawLayer {
        RawLayer::Fc {
            out,
            weights: (0..out * input).map(|_| rng.random_range(-8i64..=8)).collect(),
            bias: (0..out).map(|_| rng.random_range(-50i64..=50)).collect(),
        }
    }

    fn five_layer_fc_model() -> Model {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        Model {
            name: "chain".into(),
            scale_bits: 4,
            input_shape: Shape::Flat(6),
            layers: vec![
                fc(6, 6, &mut rng),
                RawLayer::Relu,
                fc(5, 6, &mut rng),
                RawLayer::Relu,
                fc(3, 5, &mut rng),
            ],
        }
    }

    #[test]
    fn relu_split_keeps_blocks_whole() {
        let m = five_layer_fc_model();
        let dep = lower(&m, 2).unwrap(); // raw 2 is the first relu
        assert_eq!(dep.blocks.len(), 3);
        assert_eq!(dep.gateway_blocks, 1);
        assert!(!dep.delta_remask);
        assert_eq!(dep.transition_ordinal(), Some(2));
        let spans: Vec<(usize, usize, bool)> = dep
            .blocks
            .iter()
            .map(|b| (b.first_raw, b.last_raw, b.relu_after))
            .collect();
        assert_eq!(spans, vec![(1, 2, true), (3, 4, true), (5, 5, false)]);
        assert_eq!(dep.blocks[0].shift, 4);
    }

    #[test]
    fn linear_split_inserts_identity_transition() {
        let m = five_layer_fc_model();
        let dep = lower(&m, 1).unwrap(); // raw 1 linear, raw 2 relu → remote starts with relu
        assert_eq!(dep.gateway_blocks, 1);
        assert!(dep.delta_remask);
        assert!(!dep.blocks[0].relu_after);
        let transition = &dep.blocks[1];
        assert_eq!((transition.first_raw, transition.last_raw), (2, 2));
        assert!(transition.relu_after);
        // identity contributes no scale: shift covers the cut fc only
        assert_eq!(transition.shift, 4);
        for (r, row) in transition.form.rows.iter().enumerate() {
            assert!(row.iter().enumerate().all(|(c, &v)| v == i64::from(r == c)));
        }
    }

    #[test]
    fn degenerate_splits_cover_whole_model() {
        let m = five_layer_fc_model();
        let all_remote = lower(&m, 0).unwrap();
        assert_eq!(all_remote.gateway_blocks, 0);
        assert_eq!(all_remote.transition_ordinal(), Some(1));
        assert_eq!(all_remote.blocks.len(), 3);

        let all_gateway = lower(&m, 5).unwrap();
        assert_eq!(all_gateway.gateway_blocks, 3);
        assert_eq!(all_gateway.transition_ordinal(), None);
        assert!(!all_gateway.delta_remask);
        assert!(lower(&m, 6).is_err());
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        // fc(4→3) then fc(3→2) composed as one block must equal applying the
        // pieces in order with the un-truncated bias-lift semantics.
        let m = Model {
            name: "pair".into(),
            scale_bits: 4,
            input_shape: Shape::Flat(4),
            layers: vec![fc(3, 4, &mut rng), fc(2, 3, &mut rng)],
        };
        let dep = lower(&m, 0).unwrap();
        assert_eq!(dep.blocks.len(), 1);
        let (f1, f2) = (
            lower_layer(&m.layers[0], Shape::Flat(4), 4).unwrap(),
            lower_layer(&m.layers[1], Shape::Flat(3), 4).unwrap(),
        );
        for _ in 0..20 {
            let x: Vec<i64> = (0..4).map(|_| rng.random_range(-16i64..=16)).collect();
            let mid: Vec<i64> = matvec(&f1, &x).iter().map(|&v| v as i64).collect();
            let seq: Vec<i128> = f2
                .rows
                .iter()
                .zip(&f2.bias)
                .map(|(row, &b)| {
                    row.iter()
                        .zip(&mid)
                        .map(|(&w, &v)| w as i128 * v as i128)
                        .sum::<i128>()
                        + ((b as i128) << 4)
                })
                .collect();
            assert_eq!(matvec(&dep.blocks[0].form, &x), seq);
        }
    }

    #[test]
    fn capacity_check_enforces_modulus_and_packing() {
        let m = five_layer_fc_model();
        let dep = lower(&m, 0).unwrap();
        dep.check_capacity(crate::params::DESK.t, 1024).unwrap();
        assert!(dep.check_capacity(1 << 10, 1024).is_err());
        assert!(dep.check_capacity(crate::params::DESK.t, 4).is_err());
    }

    #[test]
    fn shift_accumulates_across_composed_members_and_split() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        // conv, pool, relu: shift at the relu must be 2·s regardless of split
        let m = Model {
            name: "cp".into(),
            scale_bits: 5,
            input_shape: Shape::Chw(1, 4, 4),
            layers: vec![
                RawLayer::Conv {
                    channels: 2,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    weights: (0..18).map(|_| rng.random_range(-8i64..=8)).collect(),
                    bias: vec![4, -4],
                },
                RawLayer::Pool { kernel: 2 },
                RawLayer::Relu,
                fc(2, 8, &mut rng),
            ],
        };
        for l in 0..=4 {
            let dep = lower(&m, l).unwrap();
            let relu_block = dep.blocks.iter().find(|b| b.relu_after).unwrap();
            assert_eq!(relu_block.shift, 10, "l={l}");
        }
        // split mid-run (l=1) tears conv|pool and must mark the δ path
        assert!(lower(&m, 1).unwrap().delta_remask);
        assert_eq!(lower(&m, 1).unwrap().blocks[1].first_raw, 2);
    }
}
