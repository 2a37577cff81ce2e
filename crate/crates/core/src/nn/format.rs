//! Self-describing model files and fixed-point vector files.
//!
//! A model file is line-oriented UTF-8 text:
//!
//! ```text
//! seco-model v1
//! name: minionn_toy
//! scale_bits: 5
//! input: 1x8x8
//! layer: conv channels=2 kernel=3 stride=1 pad=1
//! weights: <base64>
//! bias: <base64>
//! layer: pool kernel=2
//! layer: relu
//! layer: fc out=16
//! weights: <base64>
//! bias: <base64>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. `input:` is either
//! `CxHxW` (channels × height × width) or a single integer for flat vectors.
//! Weight blobs are base64 of little-endian `i32` arrays holding values that
//! are *already* fixed-point encoded at `scale_bits` (biases at
//! `2·scale_bits`, since they are added after one weight·input product).
//! Layouts: conv `[out_ch][in_ch][k][k]`, fc `[out][in]`; spatial data is
//! flattened channel-major, `index = c·h·w + y·w + x`. `pool` is a
//! non-overlapping average pool: it multiplies by `round(2^scale_bits / k²)`
//! and therefore counts as a linear layer with the same weight scale as conv
//! and fc. Every model must start and end with a linear layer, and two `relu`
//! lines may not be adjacent.
//!
//! Vector files (inference inputs and prediction outputs) hold one vector per
//! line: space-separated integers at `scale_bits`. Input entries must lie in
//! `[-2^scale_bits, 2^scale_bits]` (i.e. real values in `[-1, 1]`).

use std::fmt::Write as _;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use crate::error::{Error, Result};

/// Shape of the data flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// A flat vector of the given length.
    Flat(usize),
    /// Channels × height × width, flattened channel-major when used as a
    /// vector.
    Chw(usize, usize, usize),
}

impl Shape {
    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Chw(c, h, w) => c * h * w,
        }
    }

    /// True when the shape holds no entries (never for valid models).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One raw layer as listed in the model file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawLayer {
    /// 2-D convolution, square kernel, symmetric zero padding.
    Conv {
        /// Output channels.
        channels: usize,
        /// Kernel side length.
        kernel: usize,
        /// Spatial stride.
        stride: usize,
        /// Zero padding on each border.
        pad: usize,
        /// `[out_ch][in_ch][k][k]`, fixed-point at `scale_bits`.
        weights: Vec<i64>,
        /// `[out_ch]`, fixed-point at `2·scale_bits`.
        bias: Vec<i64>,
    },
    /// Non-overlapping average pool (stride = kernel).
    Pool {
        /// Window side length.
        kernel: usize,
    },
    /// Truncate-then-ReLU activation site.
    Relu,
    /// Fully connected layer over the flattened input.
    Fc {
        /// Output length.
        out: usize,
        /// `[out][in]`, fixed-point at `scale_bits`.
        weights: Vec<i64>,
        /// `[out]`, fixed-point at `2·scale_bits`.
        bias: Vec<i64>,
    },
}

impl RawLayer {
    /// True for layers realized as matrix-vector products (conv, pool, fc).
    pub fn is_linear(&self) -> bool {
        !matches!(self, RawLayer::Relu)
    }

    /// Short kind tag used in file syntax and error messages.
    pub fn kind(&self) -> &'static str {
        match self {
            RawLayer::Conv { .. } => "conv",
            RawLayer::Pool { .. } => "pool",
            RawLayer::Relu => "relu",
            RawLayer::Fc { .. } => "fc",
        }
    }
}

/// A parsed, validated model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    /// Identifier from the `name:` header.
    pub name: String,
    /// Fixed-point fractional bits for inputs and weights.
    pub scale_bits: u32,
    /// Shape of the inference input.
    pub input_shape: Shape,
    /// Layers in inference order, 1-based layer i = `layers[i-1]`.
    pub layers: Vec<RawLayer>,
}

impl Model {
    /// Number of raw layers (the `L` in split indices `l ∈ 0..=L`).
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Shape *after* each layer; `shapes()[i]` is the output of layer `i+1`.
    /// Validates the whole dimension chain.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer_output_shape(layer, cur).map_err(|e| match e {
                Error::Model(msg) => Error::Model(format!("layer {}: {msg}", i + 1)),
                other => other,
            })?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Structural validation: non-empty, linear first and last layer, no
    /// adjacent ReLUs, dimension chain and weight-blob lengths consistent.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Model("model has no layers".into()));
        }
        if self.input_shape.is_empty() {
            return Err(Error::Model("input shape is empty".into()));
        }
        if !(1..=30).contains(&self.scale_bits) {
            return Err(Error::Model(format!(
                "scale_bits {} outside 1..=30",
                self.scale_bits
            )));
        }
        if !self.layers[0].is_linear() {
            return Err(Error::Model("first layer must be linear".into()));
        }
        if !self.layers[self.layers.len() - 1].is_linear() {
            return Err(Error::Model("last layer must be linear".into()));
        }
        for pair in self.layers.windows(2) {
            if !pair[0].is_linear() && !pair[1].is_linear() {
                return Err(Error::Model("consecutive relu layers".into()));
            }
        }
        self.shapes()?;
        Ok(())
    }

    /// Parse and validate a model from file text.
    pub fn parse(text: &str) -> Result<Model> {
        let model = parse_model(text)?;
        model.validate()?;
        Ok(model)
    }

    /// Read and validate a model file.
    pub fn read_file(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        Model::parse(&text).map_err(|e| match e {
            Error::Model(msg) => Error::Model(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Serialize to file text (inverse of [`Model::parse`]).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("seco-model v1\n");
        let _ = writeln!(s, "name: {}", self.name);
        let _ = writeln!(s, "scale_bits: {}", self.scale_bits);
        match self.input_shape {
            Shape::Flat(n) => drop(writeln!(s, "input: {n}")),
            Shape::Chw(c, h, w) => drop(writeln!(s, "input: {c}x{h}x{w}")),
        }
        for layer in &self.layers {
            match layer {
                RawLayer::Conv {
                    channels,
                    kernel,
                    stride,
                    pad,
                    weights,
                    bias,
                } => {
                    let _ = writeln!(
                        s,
                        "layer: conv channels={channels} kernel={kernel} stride={stride} pad={pad}"
                    );
                    let _ = writeln!(s, "weights: {}", encode_blob(weights));
                    let _ = writeln!(s, "bias: {}", encode_blob(bias));
                }
                RawLayer::Pool { kernel } => {
                    let _ = writeln!(s, "layer: pool kernel={kernel}");
                }
                RawLayer::Relu => s.push_str("layer: relu\n"),
                RawLayer::Fc { out, weights, bias } => {
                    let _ = writeln!(s, "layer: fc out={out}");
                    let _ = writeln!(s, "weights: {}", encode_blob(weights));
                    let _ = writeln!(s, "bias: {}", encode_blob(bias));
                }
            }
        }
        s
    }

    /// Validate and write a model file.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Output shape of `layer` applied to `input`.
pub fn layer_output_shape(layer: &RawLayer, input: Shape) -> Result<Shape> {
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
                return Err(Error::Model("conv needs CxHxW input".into()));
            };
            if kernel == 0 || stride == 0 || channels == 0 {
                return Err(Error::Model("conv kernel/stride/channels must be positive".into()));
            }
            let span_h = h + 2 * pad;
            let span_w = w + 2 * pad;
            if span_h < kernel || span_w < kernel {
                return Err(Error::Model("conv kernel larger than padded input".into()));
            }
            if (span_h - kernel) % stride != 0 || (span_w - kernel) % stride != 0 {
                return Err(Error::Model("conv stride does not tile the input".into()));
            }
            let oh = (span_h - kernel) / stride + 1;
            let ow = (span_w - kernel) / stride + 1;
            let want = channels * in_c * kernel * kernel;
            if weights.len() != want {
                return Err(Error::Model(format!(
                    "conv weight blob holds {} values, expected {want}",
                    weights.len()
                )));
            }
            if bias.len() != channels {
                return Err(Error::Model(format!(
                    "conv bias blob holds {} values, expected {channels}",
                    bias.len()
                )));
            }
            Ok(Shape::Chw(channels, oh, ow))
        }
        RawLayer::Pool { kernel } => {
            let Shape::Chw(c, h, w) = input else {
                return Err(Error::Model("pool needs CxHxW input".into()));
            };
            if kernel == 0 || h % kernel != 0 || w % kernel != 0 {
                return Err(Error::Model(format!(
                    "pool kernel {kernel} does not tile {h}x{w}"
                )));
            }
            Ok(Shape::Chw(c, h / kernel, w / kernel))
        }
        RawLayer::Relu => Ok(input),
        RawLayer::Fc {
            out,
            ref weights,
            ref bias,
        } => {
            let in_len = input.len();
            if out == 0 {
                return Err(Error::Model("fc out must be positive".into()));
            }
            if weights.len() != out * in_len {
                return Err(Error::Model(format!(
                    "fc weight blob holds {} values, expected {}",
                    weights.len(),
                    out * in_len
                )));
            }
            if bias.len() != out {
                return Err(Error::Model(format!(
                    "fc bias blob holds {} values, expected {out}",
                    bias.len()
                )));
            }
            Ok(Shape::Flat(out))
        }
    }
}

fn encode_blob(values: &[i64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        // i32 range is enforced at write time by construction of the
        // generators; a value outside it would corrupt silently, so clamp
        // loudly instead.
        let v = i32::try_from(v).expect("weight exceeds i32 range");
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_blob(line_no: usize, b64: &str) -> Result<Vec<i64>> {
    let bytes = BASE64
        .decode(b64.trim())
        .map_err(|e| Error::Model(format!("line {line_no}: bad base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Model(format!(
            "line {line_no}: blob length {} not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as i64)
        .collect())
}

/// Parse `key=value` attributes from a `layer:` line.
fn attrs<'a>(line_no: usize, rest: &'a str) -> Result<Vec<(&'a str, usize)>> {
    rest.split_whitespace()
        .map(|tok| {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Model(format!("line {line_no}: expected key=value, got {tok:?}")))?;
            let v: usize = v
                .parse()
                .map_err(|_| Error::Model(format!("line {line_no}: bad integer in {tok:?}")))?;
            Ok((k, v))
        })
        .collect()
}

fn take_attr(line_no: usize, attrs: &[(&str, usize)], key: &str) -> Result<usize> {
    attrs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::Model(format!("line {line_no}: missing {key}=")))
}

fn parse_model(text: &str) -> Result<Model> {
    let mut name = None;
    let mut scale_bits = None;
    let mut input_shape = None;
    let mut layers: Vec<RawLayer> = Vec::new();
    // Linear layers awaiting their weights/bias lines, as (layer index, got_weights).
    let mut pending: Option<(usize, bool)> = None;
    let mut saw_magic = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_magic {
            if line != "seco-model v1" {
                return Err(Error::Model(format!(
                    "line {line_no}: expected \"seco-model v1\" header"
                )));
            }
            saw_magic = true;
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(Error::Model(format!("line {line_no}: expected \"key: value\"")));
        };
        let rest = rest.trim();
        match key.trim() {
            "name" => name = Some(rest.to_string()),
            "scale_bits" => {
                scale_bits = Some(rest.parse().map_err(|_| {
                    Error::Model(format!("line {line_no}: bad scale_bits {rest:?}"))
                })?);
            }
            "input" => {
                let dims: Vec<&str> = rest.split('x').collect();
                input_shape = Some(match dims.as_slice() {
                    [n] => Shape::Flat(parse_dim(line_no, n)?),
                    [c, h, w] => Shape::Chw(
                        parse_dim(line_no, c)?,
                        parse_dim(line_no, h)?,
                        parse_dim(line_no, w)?,
                    ),
                    _ => {
                        return Err(Error::Model(format!(
                            "line {line_no}: input must be N or CxHxW"
                        )))
                    }
                });
            }
            "layer" => {
                if let Some((i, got_w)) = pending.take() {
                    if !got_w {
                        return Err(Error::Model(format!(
                            "line {line_no}: {} layer is missing weights",
                            layers[i].kind()
                        )));
                    }
                    return Err(Error::Model(format!(
                        "line {line_no}: {} layer is missing bias",
                        layers[i].kind()
                    )));
                }
                let (kind, rest) = match rest.split_once(char::is_whitespace) {
                    Some((k, r)) => (k, r),
                    None => (rest, ""),
                };
                match kind {
                    "conv" => {
                        let a = attrs(line_no, rest)?;
                        layers.push(RawLayer::Conv {
                            channels: take_attr(line_no, &a, "channels")?,
                            kernel: take_attr(line_no, &a, "kernel")?,
                            stride: take_attr(line_no, &a, "stride")?,
                            pad: take_attr(line_no, &a, "pad")?,
                            weights: Vec::new(),
                            bias: Vec::new(),
                        });
                        pending = Some((layers.len() - 1, false));
                    }
                    "pool" => {
                        let a = attrs(line_no, rest)?;
                        layers.push(RawLayer::Pool {
                            kernel: take_attr(line_no, &a, "kernel")?,
                        });
                    }
                    "relu" => layers.push(RawLayer::Relu),
                    "fc" => {
                        let a = attrs(line_no, rest)?;
                        layers.push(RawLayer::Fc {
                            out: take_attr(line_no, &a, "out")?,
                            weights: Vec::new(),
                            bias: Vec::new(),
                        });
                        pending = Some((layers.len() - 1, false));
                    }
                    other => {
                        return Err(Error::Model(format!(
                            "line {line_no}: unknown layer kind {other:?}"
                        )))
                    }
                }
            }
            "weights" => {
                let Some((i, got_w)) = pending else {
                    return Err(Error::Model(format!(
                        "line {line_no}: weights without a preceding conv/fc layer"
                    )));
                };
                if got_w {
                    return Err(Error::Model(format!("line {line_no}: duplicate weights")));
                }
                let blob = decode_blob(line_no, rest)?;
                match &mut layers[i] {
                    RawLayer::Conv { weights, .. } | RawLayer::Fc { weights, .. } => {
                        *weights = blob;
                    }
                    _ => unreachable!("pending only set for conv/fc"),
                }
                pending = Some((i, true));
            }
            "bias" => {
                let Some((i, got_w)) = pending else {
                    return Err(Error::Model(format!(
                        "line {line_no}: bias without a preceding conv/fc layer"
                    )));
                };
                if !got_w {
                    return Err(Error::Model(format!(
                        "line {line_no}: bias before weights"
                    )));
                }
                let blob = decode_blob(line_no, rest)?;
                match &mut layers[i] {
                    RawLayer::Conv { bias, .. } | RawLayer::Fc { bias, .. } => *bias = blob,
                    _ => unreachable!("pending only set for conv/fc"),
                }
                pending = None;
            }
            other => {
                return Err(Error::Model(format!(
                    "line {line_no}: unknown key {other:?}"
                )));
            }
        }
    }

    if !saw_magic {
        return Err(Error::Model("empty model file".into()));
    }
    if let Some((i, _)) = pending {
        return Err(Error::Model(format!(
            "{} layer is missing weights or bias",
            layers[i].kind()
        )));
    }
    Ok(Model {
        name: name.ok_or_else(|| Error::Model("missing name:".into()))?,
        scale_bits: scale_bits.ok_or_else(|| Error::Model("missing scale_bits:".into()))?,
        input_shape: input_shape.ok_or_else(|| Error::Model("missing input:".into()))?,
        layers,
    })
}

fn parse_dim(line_no: usize, s: &str) -> Result<usize> {
    let n: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Model(format!("line {line_no}: bad dimension {s:?}")))?;
    if n == 0 {
        return Err(Error::Model(format!("line {line_no}: zero dimension")));
    }
    Ok(n)
}

/// Read a vector file: one inference per line, space-separated integers at
/// the model's scale. Checks length and the `[-2^scale, 2^scale]` input range.
pub fn read_vectors(path: &Path, expect_len: usize, scale_bits: u32) -> Result<Vec<Vec<i64>>> {
    let text = std::fs::read_to_string(path)?;
    parse_vectors(&text, expect_len, scale_bits)
        .map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

/// Parse the vector-file text format (see [`read_vectors`]).
pub fn parse_vectors(text: &str, expect_len: usize, scale_bits: u32) -> Result<Vec<Vec<i64>>> {
    let bound = 1i64 << scale_bits;
    let mut vectors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut v = Vec::with_capacity(expect_len);
        for tok in line.split_whitespace() {
            let x: i64 = tok.parse().map_err(|_| {
                Error::Model(format!("line {}: bad integer {tok:?}", idx + 1))
            })?;
            if x.abs() > bound {
                return Err(Error::Model(format!(
                    "line {}: input {x} outside [-{bound}, {bound}]",
                    idx + 1
                )));
            }
            v.push(x);
        }
        if v.len() != expect_len {
            return Err(Error::Model(format!(
                "line {}: vector has {} entries, model expects {expect_len}",
                idx + 1,
                v.len()
            )));
        }
        vectors.push(v);
    }
    if vectors.is_empty() {
        return Err(Error::Model("no input vectors in file".into()));
    }
    Ok(vectors)
}

/// Render vectors in the vector-file format (one per line).
pub fn vectors_to_text(vectors: &[Vec<i64>]) -> String {
    let mut s = String::new();
    for v in vectors {
        let line: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_conv_model() -> Model {
        Model {
            name: "tiny".into(),
            scale_bits: 5,
            input_shape: Shape::Chw(1, 4, 4),
            layers: vec![
                RawLayer::Conv {
                    channels: 2,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    weights: (0..2 * 9).map(|i| i as i64 - 9).collect(),
                    bias: vec![3, -4],
                },
                RawLayer::Pool { kernel: 2 },
                RawLayer::Relu,
                RawLayer::Fc {
                    out: 3,
                    weights: (0..3 * 8).map(|i| (i as i64 % 5) - 2).collect(),
                    bias: vec![1, 0, -1],
                },
            ],
        }
    }

    #[test]
    fn roundtrips_through_text() {
        let m = tiny_conv_model();
        let text = m.to_text();
        let back = Model::parse(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn shape_chain_is_computed() {
        let m = tiny_conv_model();
        assert_eq!(
            m.shapes().unwrap(),
            vec![
                Shape::Chw(2, 4, 4),
                Shape::Chw(2, 2, 2),
                Shape::Chw(2, 2, 2),
                Shape::Flat(3),
            ]
        );
        assert_eq!(m.layer_count(), 4);
    }

    #[test]
    fn structural_validation_rejects_bad_models() {
        let mut relu_first = tiny_conv_model();
        relu_first.layers.insert(0, RawLayer::Relu);
        assert!(relu_first.validate().is_err());

        let mut relu_last = tiny_conv_model();
        relu_last.layers.push(RawLayer::Relu);
        assert!(relu_last.validate().is_err());

        let mut twice = tiny_conv_model();
        twice.layers.insert(2, RawLayer::Relu);
        assert!(twice.validate().is_err());

        let mut bad_blob = tiny_conv_model();
        if let RawLayer::Conv { weights, .. } = &mut bad_blob.layers[0] {
            weights.pop();
        }
        assert!(bad_blob.validate().is_err());

        let mut bad_pool = tiny_conv_model();
        if let RawLayer::Pool { kernel } = &mut bad_pool.layers[1] {
            *kernel = 3; // does not tile 4x4
        }
        assert!(bad_pool.validate().is_err());
    }

    #[test]
    fn parser_reports_syntax_errors_with_lines() {
        let missing_bias = "seco-model v1\nname: x\nscale_bits: 5\ninput: 2\n\
                            layer: fc out=1\nweights: AAAAAAAAAAA=\nlayer: relu\n";
        let err = Model::parse(missing_bias).unwrap_err().to_string();
        assert!(err.contains("missing bias"), "{err}");

        let bad_b64 = "seco-model v1\nname: x\nscale_bits: 5\ninput: 2\n\
                       layer: fc out=1\nweights: !!!\nbias: AAAAAA==\n";
        let err = Model::parse(bad_b64).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");

        let err = Model::parse("not a model\n").unwrap_err().to_string();
        assert!(err.contains("seco-model v1"), "{err}");
    }

    #[test]
    fn vector_files_roundtrip_and_enforce_range() {
        let vecs = vec![vec![1i64, -32, 5], vec![0, 0, 32]];
        let text = vectors_to_text(&vecs);
        assert_eq!(parse_vectors(&text, 3, 5).unwrap(), vecs);
        assert!(parse_vectors(&text, 4, 5).is_err());
        assert!(parse_vectors("1 2 33\n", 3, 5).is_err());
        assert!(parse_vectors("", 3, 5).is_err());
    }
}
