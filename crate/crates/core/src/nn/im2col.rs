//! Lowering spatial layers to integer matrices.
//!
//! Every linear layer kind (conv, pool, fc) is expressed as one integer
//! matrix-vector product `y = M·x + b` over the channel-major flattening
//! (`index = c·h·w + y·w + x`). The protocol only ever sees these matrices;
//! this module also carries naive direct implementations of conv and pool
//! that serve as independent oracles for the lowering.

use crate::error::{Error, Result};
use crate::nn::format::{layer_output_shape, RawLayer, Shape};

/// One raw linear layer as a matrix-vector product.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearForm {
    /// Dense rows, `rows[out][in]`, fixed-point at the model's weight scale.
    pub rows: Vec<Vec<i64>>,
    /// Bias at twice the weight scale (added after one product).
    pub bias: Vec<i64>,
}

impl LinearForm {
    /// Output length.
    pub fn out_len(&self) -> usize {
        self.rows.len()
    }

    /// Input length.
    pub fn in_len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// `M·x + b` with i128 accumulation (no intermediate overflow for any model
/// that fits the plaintext modulus).
pub fn matvec(form: &LinearForm, x: &[i64]) -> Vec<i128> {
    assert_eq!(x.len(), form.in_len(), "matvec dimension mismatch");
    form.rows
        .iter()
        .zip(&form.bias)
        .map(|(row, &b)| {
            row.iter()
                .zip(x)
                .map(|(&w, &xi)| w as i128 * xi as i128)
                .sum::<i128>()
                + b as i128
        })
        .collect()
}

/// The average-pool multiplier `round(2^scale / k²)`, the fixed-point
/// encoding of `1/k²` that makes pool a linear layer at the weight scale.
pub fn pool_multiplier(kernel: usize, scale_bits: u32) -> i64 {
    let kk = (kernel * kernel) as i64;
    ((1i64 << scale_bits) + kk / 2) / kk
}

/// Lower one linear layer to its matrix form. `relu` is rejected.
pub fn lower_layer(layer: &RawLayer, input: Shape, scale_bits: u32) -> Result<LinearForm> {
    let out_shape = layer_output_shape(layer, input)?;
    let in_len = input.len();
    let out_len = out_shape.len();
    match *layer {
        RawLayer::Conv {
            channels,
            kernel,
            stride,
            pad,
            ref weights,
            ref bias,
        } => {
            let Shape::Chw(in_c, h, w) = input else {
                unreachable!("layer_output_shape validated conv input");
            };
            let Shape::Chw(_, oh, ow) = out_shape else {
                unreachable!("conv output is spatial");
            };
            let mut rows = vec![vec![0i64; in_len]; out_len];
            let mut bias_vec = vec![0i64; out_len];
            for o in 0..channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let row = &mut rows[(o * oh + oy) * ow + ox];
                        for c in 0..in_c {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let wgt =
                                        weights[((o * in_c + c) * kernel + ky) * kernel + kx];
                                    row[(c * h + iy as usize) * w + ix as usize] += wgt;
                                }
                            }
                        }
                        bias_vec[(o * oh + oy) * ow + ox] = bias[o];
                    }
                }
            }
            Ok(LinearForm {
                rows,
                bias: bias_vec,
            })
        }
        RawLayer::Pool { kernel } => {
            let Shape::Chw(c, h, w) = input else {
                unreachable!("layer_output_shape validated pool input");
            };
            let (oh, ow) = (h / kernel, w / kernel);
            let q = pool_multiplier(kernel, scale_bits);
            let mut rows = vec![vec![0i64; in_len]; out_len];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let row = &mut rows[(ch * oh + oy) * ow + ox];
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                row[(ch * h + oy * kernel + ky) * w + ox * kernel + kx] = q;
                            }
                        }
                    }
                }
            }
            Ok(LinearForm {
                rows,
                bias: vec![0; out_len],
            })
        }
        RawLayer::Relu => Err(Error::Model("relu has no matrix form".into())),
        RawLayer::Fc {
            out,
            ref weights,
            ref bias,
        } => Ok(LinearForm {
            rows: (0..out)
                .map(|r| weights[r * in_len..(r + 1) * in_len].to_vec())
                .collect(),
            bias: bias.clone(),
        }),
    }
}

/// Naive direct convolution, the oracle for the conv lowering.
pub fn conv_direct(
    x: &[i64],
    input: Shape,
    channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    weights: &[i64],
    bias: &[i64],
) -> Vec<i128> {
    let Shape::Chw(in_c, h, w) = input else {
        panic!("conv_direct needs CxHxW input");
    };
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + 2 * pad - kernel) / stride + 1;
    let mut out = vec![0i128; channels * oh * ow];
    for o in 0..channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o] as i128;
                for c in 0..in_c {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let wgt = weights[((o * in_c + c) * kernel + ky) * kernel + kx];
                            let xv = x[(c * h + iy as usize) * w + ix as usize];
                            acc += wgt as i128 * xv as i128;
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Naive direct average pool (× `pool_multiplier`), the oracle for the pool
/// lowering.
pub fn pool_direct(x: &[i64], input: Shape, kernel: usize, scale_bits: u32) -> Vec<i128> {
    let Shape::Chw(c, h, w) = input else {
        panic!("pool_direct needs CxHxW input");
    };
    let (oh, ow) = (h / kernel, w / kernel);
    let q = pool_multiplier(kernel, scale_bits) as i128;
    let mut out = vec![0i128; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0i128;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        acc += x[(ch * h + oy * kernel + ky) * w + ox * kernel + kx] as i128;
                    }
                }
                out[(ch * oh + oy) * ow + ox] = acc * q;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_vec(rng: &mut ChaCha20Rng, len: usize, bound: i64) -> Vec<i64> {
        (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
    }

    #[test]
    fn conv_matrix_matches_direct_convolution() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for (in_c, h, w, channels, kernel, stride, pad) in
            [(1, 6, 6, 2, 3, 1, 1), (2, 5, 5, 3, 3, 2, 1), (3, 4, 6, 1, 2, 2, 0)]
        {
            let input = Shape::Chw(in_c, h, w);
            let weights = random_vec(&mut rng, channels * in_c * kernel * kernel, 31);
            let bias = random_vec(&mut rng, channels, 500);
            let layer = RawLayer::Conv {
                channels,
                kernel,
                stride,
                pad,
                weights: weights.clone(),
                bias: bias.clone(),
            };
            let form = lower_layer(&layer, input, 5).unwrap();
            for _ in 0..5 {
                let x = random_vec(&mut rng, input.len(), 32);
                let via_matrix = matvec(&form, &x);
                let direct =
                    conv_direct(&x, input, channels, kernel, stride, pad, &weights, &bias);
                assert_eq!(via_matrix, direct);
            }
        }
    }

    #[test]
    fn unit_kernel_identity_conv_is_the_identity_matrix() {
        let layer = RawLayer::Conv {
            channels: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
            weights: vec![1],
            bias: vec![0],
        };
        let form = lower_layer(&layer, Shape::Chw(1, 3, 3), 5).unwrap();
        for (r, row) in form.rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, if r == c { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn real_shape_first_conv_has_expected_dimensions() {
        // 5×5 kernel, stride 1, no padding, 16 output channels on 28×28×1.
        let layer = RawLayer::Conv {
            channels: 16,
            kernel: 5,
            stride: 1,
            pad: 0,
            weights: vec![1; 16 * 25],
            bias: vec![0; 16],
        };
        let input = Shape::Chw(1, 28, 28);
        assert_eq!(
            layer_output_shape(&layer, input).unwrap(),
            Shape::Chw(16, 24, 24)
        );
        let form = lower_layer(&layer, input, 10).unwrap();
        assert_eq!(form.out_len(), 24 * 24 * 16);
        assert_eq!(form.in_len(), 28 * 28);
    }

    #[test]
    fn pool_matrix_matches_direct_pool() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let input = Shape::Chw(3, 4, 6);
        let layer = RawLayer::Pool { kernel: 2 };
        let form = lower_layer(&layer, input, 5).unwrap();
        let q = pool_multiplier(2, 5);
        assert_eq!(q, 8); // 32 / 4
        for row in &form.rows {
            assert_eq!(row.iter().sum::<i64>(), 4 * q);
        }
        for _ in 0..5 {
            let x = random_vec(&mut rng, input.len(), 32);
            assert_eq!(matvec(&form, &x), pool_direct(&x, input, 2, 5));
        }
    }

    #[test]
    fn fc_rows_are_the_stored_weights() {
        let layer = RawLayer::Fc {
            out: 2,
            weights: vec![1, 2, 3, 4, 5, 6],
            bias: vec![7, 8],
        };
        let form = lower_layer(&layer, Shape::Flat(3), 5).unwrap();
        assert_eq!(form.rows, vec![vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(matvec(&form, &[1, 1, 1]), vec![13, 23]);
    }
}
