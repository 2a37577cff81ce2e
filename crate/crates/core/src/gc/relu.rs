//! The masked activation circuits evaluated under garbling.
//!
//! Both circuits reconstruct a batch of pre-activation values from
//! additive shares mod t, apply fixed-point truncation and ReLU, and
//! re-mask the result with the next layer's mask before it leaves the
//! circuit — so every party only ever sees masked values.
//!
//! Truncation and ReLU commute into a sign test: a residue v encodes a
//! negative value iff v ≥ (t+1)/2, ReLU sends those to zero regardless
//! of how they would truncate, and truncating a non-negative value is a
//! plain right shift. So each value costs one comparison, one shift
//! (free rewiring), one zero-mux, plus the modular share additions and
//! mask subtractions.
//!
//! Two-party circuit (gateway layers, and every layer of the two-party
//! baseline): out = ReLU(⌊(g + e mod t)⌋ >> shift) − m, with the
//! garbler holding `garbler_share` and the evaluator holding
//! `evaluator_share` and `next_mask`.
//!
//! Three-party circuit (remote layers): the two server shares, the
//! jointly decrypted linear correction (weights·mask − both weight-share
//! masks), and all three shares of the next mask enter as separate
//! groups: out = ReLU((share_b + share_c + correction) >> shift)
//! − mask_a − mask_b − mask_c.

use super::circuit::{BoolCircuit, CircuitBuilder, WireId};

/// Shape of one masked activation circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedReluSpec {
    /// Number of values processed side by side.
    pub values: usize,
    /// Plaintext modulus; all inputs are residues in [0, t).
    pub t: u64,
    /// Fixed-point truncation shift applied to non-negative values.
    pub shift: u32,
}

impl MaskedReluSpec {
    /// Bits per value: smallest width holding t − 1.
    pub fn bits(&self) -> usize {
        (64 - (self.t - 1).leading_zeros()) as usize
    }
}

/// Truncate-then-ReLU on one reconstructed residue, then subtract masks.
fn masked_relu_value(
    b: &mut CircuitBuilder,
    spec: &MaskedReluSpec,
    shares: &[&[WireId]],
    masks: &[&[WireId]],
) -> Vec<WireId> {
    let bits = spec.bits();
    let mut v = shares[0].to_vec();
    for share in &shares[1..] {
        v = b.mod_add(&v, share, spec.t);
    }
    let negative = b.ge_const(&v, spec.t.div_ceil(2));
    let mut shifted: Vec<WireId> = v[spec.shift as usize..].to_vec();
    while shifted.len() < bits {
        shifted.push(b.constant(false));
    }
    let zeros = b.const_bits(0, bits);
    let mut out = b.mux(negative, &zeros, &shifted);
    for mask in masks {
        out = b.mod_sub(&out, mask, spec.t);
    }
    out
}

/// The two-party circuit. Input groups, in wire order: garbler-bound
/// `garbler_share` and `password`, then evaluator-bound `evaluator_share`
/// and `next_mask` (all `values · bits` wires). Outputs
/// `relu(trunc(garbler_share + evaluator_share)) - next_mask - password`:
/// the evaluator decodes a value it cannot de-mask (it never learns
/// `password`), and the garbler strips `password` after receiving it, so
/// neither side sees the bare activation.
pub fn build_two_party(spec: &MaskedReluSpec) -> BoolCircuit {
    let bits = spec.bits();
    let n = spec.values * bits;
    let mut b = CircuitBuilder::new();
    let g = b.input_group("garbler_share", n);
    let d = b.input_group("password", n);
    let e = b.input_group("evaluator_share", n);
    let m = b.input_group("next_mask", n);
    for i in 0..spec.values {
        let w = i * bits..(i + 1) * bits;
        let out = masked_relu_value(
            &mut b,
            spec,
            &[&g[w.clone()], &e[w.clone()]],
            &[&m[w.clone()], &d[w]],
        );
        b.outputs(&out);
    }
    b.finish()
}

/// The three-party circuit. Input groups, in wire order: `share_b`,
/// `correction`, `mask_a`, `mask_b` (garbler-bound), then `share_c`,
/// `mask_c` (evaluator-bound). Outputs the re-masked activations.
pub fn build_three_party(spec: &MaskedReluSpec) -> BoolCircuit {
    let bits = spec.bits();
    let n = spec.values * bits;
    let mut b = CircuitBuilder::new();
    let share_b = b.input_group("share_b", n);
    let correction = b.input_group("correction", n);
    let mask_a = b.input_group("mask_a", n);
    let mask_b = b.input_group("mask_b", n);
    let share_c = b.input_group("share_c", n);
    let mask_c = b.input_group("mask_c", n);
    for i in 0..spec.values {
        let w = i * bits..(i + 1) * bits;
        let out = masked_relu_value(
            &mut b,
            spec,
            &[&share_b[w.clone()], &share_c[w.clone()], &correction[w.clone()]],
            &[&mask_a[w.clone()], &mask_b[w.clone()], &mask_c[w]],
        );
        b.outputs(&out);
    }
    b.finish()
}

/// Reference semantics of both circuits, one value at a time: residues
/// in, residue out. The plaintext forward pass and the protocol tests
/// check against this.
pub fn masked_relu_reference(shares: &[u64], masks: &[u64], t: u64, shift: u32) -> u64 {
    let v = shares.iter().fold(0u64, |acc, &s| (acc + s) % t);
    let relu = if v > (t - 1) / 2 { 0 } else { v >> shift };
    masks.iter().fold(relu, |acc, &m| (acc + t - m % t) % t)
}

/// Pack residues into the little-endian bit layout of one input group.
pub fn residues_to_bits(values: &[u64], bits: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(values.len() * bits);
    for &v in values {
        out.extend((0..bits).map(|i| v >> i & 1 == 1));
    }
    out
}

/// Unpack circuit outputs back into residues.
pub fn bits_to_residues(bits_in: &[bool], bits: usize) -> Vec<u64> {
    bits_in
        .chunks(bits)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | (b as u64) << i)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gc::garble::{evaluate, garble};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const T: u64 = 786_433;

    fn eval_plain_grouped(c: &BoolCircuit, groups: &[(&str, &[u64])], bits: usize) -> Vec<u64> {
        let mut inputs = vec![false; c.input_count];
        for (name, vals) in groups {
            let g = c.group(name);
            let packed = residues_to_bits(vals, bits);
            assert_eq!(packed.len(), g.len);
            inputs[g.start..g.start + g.len].copy_from_slice(&packed);
        }
        bits_to_residues(&c.eval_plain(&inputs).unwrap(), bits)
    }

    #[test]
    fn two_party_matches_reference() {
        let spec = MaskedReluSpec {
            values: 4,
            t: T,
            shift: 7,
        };
        let c = build_two_party(&spec);
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for _ in 0..100 {
            let g: Vec<u64> = (0..4).map(|_| rng.random_range(0..T)).collect();
            let d: Vec<u64> = (0..4).map(|_| rng.random_range(0..T)).collect();
            let e: Vec<u64> = (0..4).map(|_| rng.random_range(0..T)).collect();
            let m: Vec<u64> = (0..4).map(|_| rng.random_range(0..T)).collect();
            let got = eval_plain_grouped(
                &c,
                &[
                    ("garbler_share", &g),
                    ("password", &d),
                    ("evaluator_share", &e),
                    ("next_mask", &m),
                ],
                spec.bits(),
            );
            for i in 0..4 {
                assert_eq!(
                    got[i],
                    masked_relu_reference(&[g[i], e[i]], &[m[i], d[i]], T, 7)
                );
            }
        }
    }

    #[test]
    fn two_party_sign_boundaries() {
        let spec = MaskedReluSpec {
            values: 1,
            t: T,
            shift: 3,
        };
        let c = build_two_party(&spec);
        // v = share sum lands exactly on the positive/negative boundary
        for v in [0, 1, (T - 1) / 2, (T + 1) / 2, T - 1] {
            let g = v / 2;
            let e = v - g;
            let got = eval_plain_grouped(
                &c,
                &[
                    ("garbler_share", &[g]),
                    ("password", &[0]),
                    ("evaluator_share", &[e]),
                    ("next_mask", &[0]),
                ],
                spec.bits(),
            );
            let want = if v > (T - 1) / 2 { 0 } else { v >> 3 };
            assert_eq!(got[0], want, "v={v}");
        }
    }

    #[test]
    fn three_party_matches_reference_including_shift_zero() {
        for shift in [0u32, 7] {
            let spec = MaskedReluSpec {
                values: 3,
                t: T,
                shift,
            };
            let c = build_three_party(&spec);
            let mut rng = ChaCha20Rng::seed_from_u64(42 + shift as u64);
            for _ in 0..60 {
                let draw = |rng: &mut ChaCha20Rng| -> Vec<u64> {
                    (0..3).map(|_| rng.random_range(0..T)).collect()
                };
                let (sb, sc, d) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
                let (ma, mb, mc) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
                let got = eval_plain_grouped(
                    &c,
                    &[
                        ("share_b", &sb),
                        ("share_c", &sc),
                        ("correction", &d),
                        ("mask_a", &ma),
                        ("mask_b", &mb),
                        ("mask_c", &mc),
                    ],
                    spec.bits(),
                );
                for i in 0..3 {
                    assert_eq!(
                        got[i],
                        masked_relu_reference(
                            &[sb[i], sc[i], d[i]],
                            &[ma[i], mb[i], mc[i]],
                            T,
                            shift
                        )
                    );
                }
            }
        }
    }

    #[test]
    fn garbled_three_party_matches_plain() {
        let spec = MaskedReluSpec {
            values: 2,
            t: T,
            shift: 7,
        };
        let c = build_three_party(&spec);
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let (tables, secrets) = garble(&c, &mut rng);
        for _ in 0..10 {
            let mut inputs = vec![false; c.input_count];
            for b in inputs.iter_mut() {
                *b = rng.random();
            }
            let mut labels = Vec::new();
            for g in &c.groups {
                labels.extend(secrets.active_labels(g, &inputs[g.start..g.start + g.len]));
            }
            let garbled = evaluate(&c, &tables, &labels).unwrap();
            assert_eq!(garbled, c.eval_plain(&inputs).unwrap());
        }
    }

    #[test]
    fn and_cost_is_linear_in_width() {
        let spec = MaskedReluSpec {
            values: 8,
            t: T,
            shift: 7,
        };
        let c2 = build_two_party(&spec);
        let c3 = build_three_party(&spec);
        let bits = spec.bits();
        // per value: each mod_add ≈ 3b, compare ≈ b, mux ≈ b, each mod_sub ≈ 3b
        assert!(c2.and_count() <= spec.values * (12 * (bits + 1)));
        assert!(c3.and_count() <= spec.values * (18 * (bits + 1)));
        assert_eq!(c2.outputs.len(), spec.values * bits);
        assert_eq!(c3.outputs.len(), spec.values * bits);
    }
}
