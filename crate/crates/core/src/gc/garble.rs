//! Garbling and evaluation of [`BoolCircuit`]s.
//!
//! Scheme: 128-bit wire labels with free XOR — a circuit-global offset
//! `R` (forced odd so the permute bit of a label pair always differs)
//! relates the two labels of every wire, `K1 = K0 ⊕ R`, and XOR gates
//! cost nothing. AND gates use point-and-permute: four 24-byte rows,
//! each the encryption of the correct output label followed by an
//! 8-byte zero tag under a hash of the two input labels. The row an
//! evaluator opens is selected by the permute (low) bits of the labels
//! it holds, and a non-zero tag after decryption means the row was
//! tampered with ([`Error::GarbledRowAuth`]).
//!
//! The row cipher is the fixed-key AES-128 Matyas–Meyer–Oseas
//! construction H(x) = AES_k(x) ⊕ x applied to 2·Ka ⊕ 4·Kb ⊕ tweak,
//! with doubling in GF(2^128) and a tweak that binds gate index, row,
//! and block position, so no two rows anywhere share a pad.

use aes::cipher::{BlockCipherEncrypt, KeyInit};
use aes::Aes128;
use rand::RngCore;

use super::circuit::{BoolCircuit, Gate, InputGroup};
use crate::bfv::serial::{read_u32, read_u64, read_u8, Wire};
use crate::error::{Error, Result};

/// Bytes per garbled row: 16-byte label plus 8-byte zero tag.
pub const ROW_BYTES: usize = 24;
/// Rows per AND gate.
pub const ROWS_PER_GATE: usize = 4;

/// Fixed MMO key. Any constant works — security rests on label entropy,
/// not on this value being secret.
const MMO_KEY: [u8; 16] = [
    0x8a, 0x41, 0xd7, 0x03, 0x5e, 0xc9, 0x26, 0xb0, 0x1f, 0x64, 0xab, 0x92, 0x38, 0x7d, 0xe5,
    0x0c,
];

/// Doubling in GF(2^128) modulo x^128 + x^7 + x^2 + x + 1.
fn gf_double(x: u128) -> u128 {
    let shifted = x << 1;
    if x >> 127 == 1 {
        shifted ^ 0x87
    } else {
        shifted
    }
}

struct RowCipher {
    aes: Aes128,
}

impl RowCipher {
    fn new() -> Self {
        RowCipher {
            aes: Aes128::new(&MMO_KEY.into()),
        }
    }

    /// H(x) = AES_k(x) ⊕ x.
    fn mmo(&self, x: u128) -> u128 {
        let mut block = x.to_le_bytes().into();
        self.aes.encrypt_block(&mut block);
        u128::from_le_bytes(block.into()) ^ x
    }

    /// The 24-byte one-time pad for (gate, row) under input labels (ka, kb).
    fn row_pad(&self, ka: u128, kb: u128, gate: u64, row: usize) -> [u8; ROW_BYTES] {
        let base = gf_double(ka) ^ gf_double(gf_double(kb));
        let tweak = (gate as u128) << 16 | (row as u128) << 8;
        let block0 = self.mmo(base ^ tweak);
        let block1 = self.mmo(base ^ tweak ^ 1);
        let mut pad = [0u8; ROW_BYTES];
        pad[..16].copy_from_slice(&block0.to_le_bytes());
        pad[16..].copy_from_slice(&block1.to_le_bytes()[..8]);
        pad
    }
}

/// The material sent to the evaluator: AND-gate rows, active labels for
/// constant wires, and the output decode bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GarbledTables {
    /// `ROWS_PER_GATE · ROW_BYTES` bytes per AND gate, in gate order.
    pub rows: Vec<u8>,
    /// Active label per constant wire, in `circuit.constants` order.
    pub constant_labels: Vec<u128>,
    /// Decode bit per output wire: plaintext = lsb(label) ⊕ decode.
    pub decode: Vec<bool>,
}

/// The garbler's private state: every wire's zero-label and the global
/// offset. Input labels for either party derive from this.
pub struct GarblerSecrets {
    r: u128,
    k0: Vec<u128>,
    decode: Vec<bool>,
}

impl GarblerSecrets {
    /// The active labels encoding `values` on an input group (sent
    /// directly for the garbler's own inputs).
    pub fn active_labels(&self, group: &InputGroup, values: &[bool]) -> Vec<u128> {
        assert_eq!(values.len(), group.len, "group '{}' width", group.name);
        group
            .wires()
            .zip(values)
            .map(|(w, &v)| if v { self.k0[w] ^ self.r } else { self.k0[w] })
            .collect()
    }

    /// Both labels (zero, one) per wire of a group — the sender side of
    /// an oblivious transfer for the evaluator's inputs.
    pub fn label_pairs(&self, group: &InputGroup) -> Vec<(u128, u128)> {
        group
            .wires()
            .map(|w| (self.k0[w], self.k0[w] ^ self.r))
            .collect()
    }

    /// Decode plaintext outputs from the labels an evaluator derived
    /// (the garbler-side mirror of evaluator decoding; used in tests).
    pub fn decode_bits(&self) -> &[bool] {
        &self.decode
    }
}

/// Garble `circuit` with labels drawn from `rng`.
pub fn garble(circuit: &BoolCircuit, rng: &mut impl RngCore) -> (GarbledTables, GarblerSecrets) {
    let cipher = RowCipher::new();
    let mut r_bytes = [0u8; 16];
    rng.fill_bytes(&mut r_bytes);
    let r = u128::from_le_bytes(r_bytes) | 1;

    let mut k0 = vec![0u128; circuit.wire_count];
    let fresh = |rng: &mut dyn RngCore| {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        u128::from_le_bytes(b)
    };
    for w in 0..circuit.input_count {
        k0[w] = fresh(rng);
    }
    for &(w, _) in &circuit.constants {
        k0[w] = fresh(rng);
    }

    let mut rows = Vec::with_capacity(circuit.and_count() * ROWS_PER_GATE * ROW_BYTES);
    for (gate_idx, gate) in circuit.gates.iter().enumerate() {
        match *gate {
            Gate::Xor { a, b, out } => k0[out] = k0[a] ^ k0[b],
            Gate::And { a, b, out } => {
                k0[out] = fresh(rng);
                let mut gate_rows = [[0u8; ROW_BYTES]; ROWS_PER_GATE];
                for va in 0..2u8 {
                    for vb in 0..2u8 {
                        let ka = if va == 1 { k0[a] ^ r } else { k0[a] };
                        let kb = if vb == 1 { k0[b] ^ r } else { k0[b] };
                        let kout = if va & vb == 1 { k0[out] ^ r } else { k0[out] };
                        let pos = ((ka & 1) << 1 | (kb & 1)) as usize;
                        let pad = cipher.row_pad(ka, kb, gate_idx as u64, pos);
                        let mut row = [0u8; ROW_BYTES];
                        row[..16].copy_from_slice(&kout.to_le_bytes());
                        for (rb, pb) in row.iter_mut().zip(pad) {
                            *rb ^= pb;
                        }
                        gate_rows[pos] = row;
                    }
                }
                for row in gate_rows {
                    rows.extend_from_slice(&row);
                }
            }
        }
    }

    let decode: Vec<bool> = circuit.outputs.iter().map(|&w| k0[w] & 1 == 1).collect();
    let constant_labels = circuit
        .constants
        .iter()
        .map(|&(w, v)| if v { k0[w] ^ r } else { k0[w] })
        .collect();

    (
        GarbledTables {
            rows,
            constant_labels,
            decode: decode.clone(),
        },
        GarblerSecrets { r, k0, decode },
    )
}

/// Evaluate a garbled circuit. `input_labels` holds the active label for
/// every input wire, in wire order (garbler inputs sent directly,
/// evaluator inputs obtained through oblivious transfer).
pub fn evaluate(
    circuit: &BoolCircuit,
    tables: &GarbledTables,
    input_labels: &[u128],
) -> Result<Vec<bool>> {
    if input_labels.len() != circuit.input_count {
        return Err(Error::InvalidArgument(format!(
            "circuit takes {} input labels, got {}",
            circuit.input_count,
            input_labels.len()
        )));
    }
    if tables.constant_labels.len() != circuit.constants.len() {
        return Err(Error::InvalidArgument(
            "constant label count does not match circuit".into(),
        ));
    }
    let expected_rows = circuit.and_count() * ROWS_PER_GATE * ROW_BYTES;
    if tables.rows.len() != expected_rows {
        return Err(Error::InvalidArgument(format!(
            "garbled tables hold {} bytes, circuit needs {}",
            tables.rows.len(),
            expected_rows
        )));
    }
    if tables.decode.len() != circuit.outputs.len() {
        return Err(Error::InvalidArgument(
            "decode map length does not match circuit outputs".into(),
        ));
    }

    let cipher = RowCipher::new();
    let mut labels = vec![0u128; circuit.wire_count];
    labels[..input_labels.len()].copy_from_slice(input_labels);
    for (&(w, _), &label) in circuit.constants.iter().zip(&tables.constant_labels) {
        labels[w] = label;
    }

    let mut and_seen = 0usize;
    for (gate_idx, gate) in circuit.gates.iter().enumerate() {
        match *gate {
            Gate::Xor { a, b, out } => labels[out] = labels[a] ^ labels[b],
            Gate::And { a, b, out } => {
                let (ka, kb) = (labels[a], labels[b]);
                let pos = ((ka & 1) << 1 | (kb & 1)) as usize;
                let offset = (and_seen * ROWS_PER_GATE + pos) * ROW_BYTES;
                let row = &tables.rows[offset..offset + ROW_BYTES];
                let pad = cipher.row_pad(ka, kb, gate_idx as u64, pos);
                let mut plain = [0u8; ROW_BYTES];
                for (p, (rb, pb)) in plain.iter_mut().zip(row.iter().zip(pad)) {
                    *p = rb ^ pb;
                }
                if plain[16..] != [0u8; 8] {
                    return Err(Error::GarbledRowAuth { gate: gate_idx });
                }
                labels[out] = u128::from_le_bytes(plain[..16].try_into().unwrap());
                and_seen += 1;
            }
        }
    }

    Ok(circuit
        .outputs
        .iter()
        .zip(&tables.decode)
        .map(|(&w, &d)| (labels[w] & 1 == 1) ^ d)
        .collect())
}

impl Wire for GarbledTables {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.rows);
        out.extend_from_slice(&(self.constant_labels.len() as u32).to_le_bytes());
        for &label in &self.constant_labels {
            out.extend_from_slice(&label.to_le_bytes());
        }
        out.extend_from_slice(&(self.decode.len() as u32).to_le_bytes());
        out.extend(self.decode.iter().map(|&b| b as u8));
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let row_bytes = read_u32(input, "garbled rows")? as usize;
        if row_bytes % (ROWS_PER_GATE * ROW_BYTES) != 0 || row_bytes > 1 << 30 {
            return Err(Error::Deserialize("garbled row byte count".into()));
        }
        if input.len() < row_bytes {
            return Err(Error::Deserialize("garbled rows truncated".into()));
        }
        let rows = input[..row_bytes].to_vec();
        *input = &input[row_bytes..];
        let n_consts = read_u32(input, "constant labels")? as usize;
        if n_consts > 2 {
            return Err(Error::Deserialize("constant label count".into()));
        }
        let mut constant_labels = Vec::with_capacity(n_consts);
        for _ in 0..n_consts {
            let lo = read_u64(input, "constant label")? as u128;
            let hi = read_u64(input, "constant label")? as u128;
            constant_labels.push(hi << 64 | lo);
        }
        let n_out = read_u32(input, "decode map")? as usize;
        if n_out > 1 << 24 {
            return Err(Error::Deserialize("decode map length".into()));
        }
        let mut decode = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            match read_u8(input, "decode bit")? {
                0 => decode.push(false),
                1 => decode.push(true),
                _ => return Err(Error::Deserialize("decode bit".into())),
            }
        }
        Ok(GarbledTables {
            rows,
            constant_labels,
            decode,
        })
    }
}

/// Label vectors cross the wire when parties exchange active labels.
impl Wire for Vec<u128> {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for &label in self {
            out.extend_from_slice(&label.to_le_bytes());
        }
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let n = read_u32(input, "label vector")? as usize;
        if n > 1 << 24 {
            return Err(Error::Deserialize("label vector length".into()));
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let lo = read_u64(input, "label")? as u128;
            let hi = read_u64(input, "label")? as u128;
            labels.push(hi << 64 | lo);
        }
        Ok(labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gc::circuit::{bits_to_value, value_to_bits, CircuitBuilder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn mod_add_circuit(width: usize, t: u64) -> BoolCircuit {
        let mut b = CircuitBuilder::new();
        let x = b.input_group("x", width);
        let y = b.input_group("y", width);
        let out = b.mod_add(&x, &y, t);
        b.outputs(&out);
        b.finish()
    }

    fn labels_for(
        circuit: &BoolCircuit,
        secrets: &GarblerSecrets,
        inputs: &[bool],
    ) -> Vec<u128> {
        let mut labels = Vec::new();
        for g in &circuit.groups {
            labels.extend(secrets.active_labels(g, &inputs[g.start..g.start + g.len]));
        }
        labels
    }

    #[test]
    fn garbled_matches_plain_eval() {
        let t = 786_433u64;
        let circuit = mod_add_circuit(20, t);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let (tables, secrets) = garble(&circuit, &mut rng);
        for _ in 0..50 {
            let (x, y) = (rng.random_range(0..t), rng.random_range(0..t));
            let mut inputs = value_to_bits(x, 20);
            inputs.extend(value_to_bits(y, 20));
            let got = evaluate(&circuit, &tables, &labels_for(&circuit, &secrets, &inputs))
                .unwrap();
            assert_eq!(got, circuit.eval_plain(&inputs).unwrap());
            assert_eq!(bits_to_value(&got), (x + y) % t);
        }
    }

    #[test]
    fn tampered_row_is_rejected() {
        let circuit = mod_add_circuit(8, 251);
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let (mut tables, secrets) = garble(&circuit, &mut rng);
        let inputs = [value_to_bits(100, 8), value_to_bits(200, 8)].concat();
        let labels = labels_for(&circuit, &secrets, &inputs);
        evaluate(&circuit, &tables, &labels).unwrap();
        // flip one byte in every row of the first gate so whichever row
        // the evaluator opens is damaged
        for row in 0..ROWS_PER_GATE {
            tables.rows[row * ROW_BYTES + 20] ^= 0xA5;
        }
        match evaluate(&circuit, &tables, &labels) {
            Err(Error::GarbledRowAuth { .. }) => {}
            other => panic!("expected row auth failure, got {other:?}"),
        }
    }

    #[test]
    fn xor_only_circuit_has_no_rows() {
        let mut b = CircuitBuilder::new();
        let x = b.input_group("x", 16);
        let y = b.input_group("y", 16);
        let out: Vec<_> = x.iter().zip(&y).map(|(&a, &c)| b.xor(a, c)).collect();
        b.outputs(&out);
        let circuit = b.finish();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let (tables, secrets) = garble(&circuit, &mut rng);
        assert!(tables.rows.is_empty());
        let inputs = [value_to_bits(0xF0F0, 16), value_to_bits(0x1234, 16)].concat();
        let got = evaluate(&circuit, &tables, &labels_for(&circuit, &secrets, &inputs))
            .unwrap();
        assert_eq!(bits_to_value(&got), 0xF0F0 ^ 0x1234);
    }

    #[test]
    fn tables_roundtrip_on_the_wire() {
        let circuit = mod_add_circuit(12, 4001);
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let (tables, _) = garble(&circuit, &mut rng);
        let bytes = tables.to_bytes();
        assert_eq!(GarbledTables::from_bytes(&bytes).unwrap(), tables);
        let labels: Vec<u128> = (0..40).map(|i| i as u128 * 0x1234_5678).collect();
        assert_eq!(Vec::<u128>::from_bytes(&labels.to_bytes()).unwrap(), labels);
    }
}
