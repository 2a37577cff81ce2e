//! Plaintext inference oracles.
//!
//! [`infer_fixed`] is the exact integer semantics the protocol must
//! reproduce bit-for-bit: blocks in order, `y = M·x + b` with i128
//! accumulation, truncate-then-ReLU at each ReLU site (negative → 0,
//! otherwise arithmetic right shift), final block un-truncated. Because
//! truncation is bound to ReLU sites (see the lowering module), the result
//! is independent of the split index used to lower the model.
//!
//! [`infer_float`] interprets the *stored* fixed-point weights exactly
//! (weights ÷ 2^s, biases ÷ 2^2s, pool multiplier ÷ 2^s), so comparing it
//! with the decoded fixed-point logits isolates arithmetic rounding drift —
//! weight quantization does not enter the comparison.

use crate::error::{Error, Result};
use crate::nn::blocks::Deployment;
use crate::nn::format::{Model, RawLayer, Shape};
use crate::nn::im2col::{matvec, pool_multiplier};

/// Truncate-then-ReLU on a reconstructed (signed) pre-activation.
pub fn relu_trunc(v: i128, shift: u32) -> i128 {
    if v <= 0 {
        0
    } else {
        v >> shift
    }
}

/// Exact fixed-point forward pass over the deployment's blocks.
pub fn infer_fixed(dep: &Deployment, input: &[i64]) -> Result<Vec<i64>> {
    if input.len() != dep.input_len() {
        return Err(Error::InvalidArgument(format!(
            "input has {} entries, deployment expects {}",
            input.len(),
            dep.input_len()
        )));
    }
    let mut x: Vec<i64> = input.to_vec();
    for block in &dep.blocks {
        let pre = matvec(&block.form, &x);
        x = pre
            .into_iter()
            .map(|v| {
                let v = if block.relu_after {
                    relu_trunc(v, block.shift)
                } else {
                    v
                };
                i64::try_from(v)
                    .map_err(|_| Error::Model(format!("block {} overflowed i64", block.ordinal)))
            })
            .collect::<Result<_>>()?;
    }
    Ok(x)
}

/// Floating-point forward pass over the stored (decoded) weights.
pub fn infer_float(model: &Model, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != model.input_shape.len() {
        return Err(Error::InvalidArgument(format!(
            "input has {} entries, model expects {}",
            input.len(),
            model.input_shape.len()
        )));
    }
    let s = 2f64.powi(model.scale_bits as i32);
    let mut x: Vec<f64> = input.to_vec();
    let mut shape = model.input_shape;
    for layer in &model.layers {
        match *layer {
            RawLayer::Conv {
                channels,
                kernel,
                stride,
                pad,
                ref weights,
                ref bias,
            } => {
                let Shape::Chw(in_c, h, w) = shape else {
                    return Err(Error::Model("conv needs CxHxW input".into()));
                };
                let oh = (h + 2 * pad - kernel) / stride + 1;
                let ow = (w + 2 * pad - kernel) / stride + 1;
                let mut out = vec![0f64; channels * oh * ow];
                for o in 0..channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = bias[o] as f64 / (s * s);
                            for c in 0..in_c {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if iy < 0
                                            || ix < 0
                                            || iy >= h as isize
                                            || ix >= w as isize
                                        {
                                            continue;
                                        }
                                        let wgt = weights
                                            [((o * in_c + c) * kernel + ky) * kernel + kx]
                                            as f64
                                            / s;
                                        acc += wgt * x[(c * h + iy as usize) * w + ix as usize];
                                    }
                                }
                            }
                            out[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                x = out;
                shape = Shape::Chw(channels, oh, ow);
            }
            RawLayer::Pool { kernel } => {
                let Shape::Chw(c, h, w) = shape else {
                    return Err(Error::Model("pool needs CxHxW input".into()));
                };
                let (oh, ow) = (h / kernel, w / kernel);
                let q = pool_multiplier(kernel, model.scale_bits) as f64 / s;
                let mut out = vec![0f64; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = 0f64;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    acc += x
                                        [(ch * h + oy * kernel + ky) * w + ox * kernel + kx];
                                }
                            }
                            out[(ch * oh + oy) * ow + ox] = acc * q;
                        }
                    }
                }
                x = out;
                shape = Shape::Chw(c, oh, ow);
            }
            RawLayer::Relu => {
                for v in &mut x {
                    *v = v.max(0.0);
                }
            }
            RawLayer::Fc {
                out,
                ref weights,
                ref bias,
            } => {
                let in_len = shape.len();
                let mut y = vec![0f64; out];
                for (r, yr) in y.iter_mut().enumerate() {
                    let mut acc = bias[r] as f64 / (s * s);
                    for (j, &xj) in x.iter().enumerate() {
                        acc += weights[r * in_len + j] as f64 / s * xj;
                    }
                    *yr = acc;
                }
                x = y;
                shape = Shape::Flat(out);
            }
        }
    }
    Ok(x)
}

/// Fixed-point scale (in bits) of the logits: `scale_bits ×` (1 + linear
/// members of the final un-truncated run).
pub fn output_scale_bits(dep: &Deployment) -> u32 {
    // Walk back from the last block until a ReLU terminates the run.
    let mut members = 0u32;
    for block in dep.blocks.iter().rev() {
        if block.relu_after {
            break;
        }
        // Synthetic identity blocks contribute nothing; every raw linear
        // member contributes one scale step. Count members by raw span.
        members += block
            .form
            .rows
            .first()
            .map(|_| (block.last_raw - block.first_raw + 1) as u32)
            .unwrap_or(0);
    }
    dep.scale_bits * (members + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::blocks::lower;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Random fc layer with row sums (weights + bias) bounded by `norm` in
    /// real value, quantized at `s` fractional bits.
    fn normalized_fc(out: usize, input: usize, s: u32, norm: f64, rng: &mut ChaCha20Rng) -> RawLayer {
        let scale = 2f64.powi(s as i32);
        let mut weights = Vec::with_capacity(out * input);
        let mut bias = Vec::with_capacity(out);
        for _ in 0..out {
            let raw: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b_raw: f64 = rng.random_range(-1.0..1.0);
            let total: f64 = raw.iter().map(|w| w.abs()).sum::<f64>() + b_raw.abs();
            let adj = if total > 0.0 { norm / total } else { 0.0 };
            for w in &raw {
                weights.push((w * adj * scale).round() as i64);
            }
            bias.push((b_raw * adj * scale * scale).round() as i64);
        }
        RawLayer::Fc { out, weights, bias }
    }

    fn random_model(seed: u64) -> Model {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Model {
            name: "rand".into(),
            scale_bits: 5,
            input_shape: Shape::Chw(1, 4, 4),
            layers: vec![
                RawLayer::Conv {
                    channels: 2,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    weights: (0..18).map(|_| rng.random_range(-4i64..=4)).collect(),
                    bias: (0..2).map(|_| rng.random_range(-20i64..=20)).collect(),
                },
                RawLayer::Pool { kernel: 2 },
                RawLayer::Relu,
                normalized_fc(6, 8, 5, 0.9, &mut rng),
                RawLayer::Relu,
                normalized_fc(4, 6, 5, 0.9, &mut rng),
                normalized_fc(3, 4, 5, 0.9, &mut rng),
            ],
        }
    }

    #[test]
    fn split_invariance_over_every_l() {
        for seed in [1u64, 2, 3] {
            let m = random_model(seed);
            let mut rng = ChaCha20Rng::seed_from_u64(100 + seed);
            let inputs: Vec<Vec<i64>> = (0..5)
                .map(|_| (0..16).map(|_| rng.random_range(0..32i64)).collect())
                .collect();
            let reference: Vec<Vec<i64>> = inputs
                .iter()
                .map(|x| infer_fixed(&lower(&m, 0).unwrap(), x).unwrap())
                .collect();
            for l in 0..=m.layer_count() {
                let dep = lower(&m, l).unwrap();
                for (x, want) in inputs.iter().zip(&reference) {
                    assert_eq!(&infer_fixed(&dep, x).unwrap(), want, "l={l}");
                }
            }
        }
    }

    #[test]
    fn relu_truncation_sign_convention() {
        assert_eq!(relu_trunc(-1, 3), 0);
        assert_eq!(relu_trunc(0, 3), 0);
        assert_eq!(relu_trunc(17, 3), 2);
        assert_eq!(relu_trunc(17, 0), 17);
    }

    #[test]
    fn fixed_point_tracks_float_reference_on_two_linear_net() {
        // Small norms keep worst-case drift comfortably inside 2^(2-s).
        let s = 10u32;
        for seed in 0..5u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(40 + seed);
            let m = Model {
                name: "drift".into(),
                scale_bits: s,
                input_shape: Shape::Flat(4),
                layers: vec![
                    normalized_fc(4, 4, s, 0.5, &mut rng),
                    RawLayer::Relu,
                    normalized_fc(2, 4, s, 0.5, &mut rng),
                ],
            };
            let dep = lower(&m, 0).unwrap();
            let out_scale = 2f64.powi(output_scale_bits(&dep) as i32);
            for _ in 0..20 {
                let x_fixed: Vec<i64> =
                    (0..4).map(|_| rng.random_range(0..512i64)).collect();
                let x_float: Vec<f64> =
                    x_fixed.iter().map(|&v| v as f64 / 1024.0).collect();
                let got = infer_fixed(&dep, &x_fixed).unwrap();
                let want = infer_float(&m, &x_float).unwrap();
                for (g, w) in got.iter().zip(&want) {
                    let drift = (*g as f64 / out_scale - w).abs();
                    assert!(drift <= 2f64.powi(2 - s as i32), "drift {drift}");
                }
            }
        }
    }

    #[test]
    fn output_scale_counts_trailing_linear_members() {
        let m = random_model(1);
        // final run = fc, fc (two members) → scale 3·s
        assert_eq!(output_scale_bits(&lower(&m, 0).unwrap()), 15);
        assert_eq!(output_scale_bits(&lower(&m, 7).unwrap()), 15);
    }
}
