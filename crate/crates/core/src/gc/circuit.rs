//! Boolean circuits over XOR/AND with named input groups, plus the
//! arithmetic gadgets the masked-activation circuits are built from.
//!
//! Circuits are built gate-by-gate through [`CircuitBuilder`]; NOT is
//! XOR-with-constant-one so the whole circuit stays in the free-XOR
//! fragment (only AND gates cost garbled rows). Values are little-endian
//! bit vectors; the arithmetic gadgets (`add`, `sub`, `mux`, `mod_add`,
//! `mod_sub`) each spend one AND per bit via the carry trick
//! c′ = c ⊕ ((a⊕c) ∧ (b⊕c)).

use crate::error::{Error, Result};

/// Index of a wire inside one circuit.
pub type WireId = usize;

/// A two-input gate; outputs always get fresh wire ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    /// out = a ⊕ b (free under garbling).
    Xor {
        /// Left input wire.
        a: WireId,
        /// Right input wire.
        b: WireId,
        /// Output wire.
        out: WireId,
    },
    /// out = a ∧ b (one garbled table).
    And {
        /// Left input wire.
        a: WireId,
        /// Right input wire.
        b: WireId,
        /// Output wire.
        out: WireId,
    },
}

/// A contiguous run of input wires owned by one logical value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputGroup {
    /// Role name, referenced by the protocol when binding values.
    pub name: &'static str,
    /// First wire of the group.
    pub start: WireId,
    /// Number of wires.
    pub len: usize,
}

impl InputGroup {
    /// The wire ids of this group.
    pub fn wires(&self) -> std::ops::Range<WireId> {
        self.start..self.start + self.len
    }
}

/// A finished circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolCircuit {
    /// Total number of wires (inputs, constants, gate outputs).
    pub wire_count: usize,
    /// Wires [0, input_count) are inputs, grouped by `groups`.
    pub input_count: usize,
    /// Named input groups partitioning the input wires.
    pub groups: Vec<InputGroup>,
    /// Constant wires: (wire, value). Allocated after the inputs.
    pub constants: Vec<(WireId, bool)>,
    /// Gates in evaluation order (inputs of a gate always precede it).
    pub gates: Vec<Gate>,
    /// Output wires, in result order.
    pub outputs: Vec<WireId>,
}

impl BoolCircuit {
    /// Number of AND gates (the only gates that cost garbled rows).
    pub fn and_count(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g, Gate::And { .. }))
            .count()
    }

    /// Input group by name.
    pub fn group(&self, name: &str) -> &InputGroup {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .unwrap_or_else(|| panic!("circuit has no input group '{name}'"))
    }

    /// Evaluate in the clear — the oracle every garbled execution is
    /// checked against. `inputs` covers wires [0, input_count).
    pub fn eval_plain(&self, inputs: &[bool]) -> Result<Vec<bool>> {
        if inputs.len() != self.input_count {
            return Err(Error::InvalidArgument(format!(
                "circuit takes {} input bits, got {}",
                self.input_count,
                inputs.len()
            )));
        }
        let mut wires = vec![false; self.wire_count];
        wires[..inputs.len()].copy_from_slice(inputs);
        for &(w, v) in &self.constants {
            wires[w] = v;
        }
        for gate in &self.gates {
            match *gate {
                Gate::Xor { a, b, out } => wires[out] = wires[a] ^ wires[b],
                Gate::And { a, b, out } => wires[out] = wires[a] & wires[b],
            }
        }
        Ok(self.outputs.iter().map(|&w| wires[w]).collect())
    }
}

/// Incremental circuit builder. Allocate every input group before the
/// first gate; constants may be requested at any point.
pub struct CircuitBuilder {
    wire_count: usize,
    input_count: usize,
    groups: Vec<InputGroup>,
    constants: Vec<(WireId, bool)>,
    const_cache: [Option<WireId>; 2],
    gates: Vec<Gate>,
    gates_started: bool,
    finished_outputs: Vec<WireId>,
}

impl CircuitBuilder {
    /// Fresh builder.
    pub fn new() -> Self {
        CircuitBuilder {
            wire_count: 0,
            input_count: 0,
            groups: Vec::new(),
            constants: Vec::new(),
            const_cache: [None; 2],
            gates: Vec::new(),
            gates_started: false,
            finished_outputs: Vec::new(),
        }
    }

    /// Allocate `len` input wires under `name`.
    pub fn input_group(&mut self, name: &'static str, len: usize) -> Vec<WireId> {
        assert!(
            !self.gates_started && self.constants.is_empty(),
            "allocate all inputs before gates and constants"
        );
        let start = self.wire_count;
        self.wire_count += len;
        self.input_count += len;
        self.groups.push(InputGroup { name, start, len });
        (start..start + len).collect()
    }

    /// The wire carrying constant `v` (allocated once per value).
    pub fn constant(&mut self, v: bool) -> WireId {
        if let Some(w) = self.const_cache[v as usize] {
            return w;
        }
        let w = self.wire_count;
        self.wire_count += 1;
        self.constants.push((w, v));
        self.const_cache[v as usize] = Some(w);
        w
    }

    fn fresh(&mut self) -> WireId {
        let w = self.wire_count;
        self.wire_count += 1;
        w
    }

    /// out = a ⊕ b.
    pub fn xor(&mut self, a: WireId, b: WireId) -> WireId {
        self.gates_started = true;
        let out = self.fresh();
        self.gates.push(Gate::Xor { a, b, out });
        out
    }

    /// out = a ∧ b.
    pub fn and(&mut self, a: WireId, b: WireId) -> WireId {
        self.gates_started = true;
        let out = self.fresh();
        self.gates.push(Gate::And { a, b, out });
        out
    }

    /// out = ¬a (XOR with constant one; free).
    pub fn not(&mut self, a: WireId) -> WireId {
        let one = self.constant(true);
        self.xor(a, one)
    }

    /// Ripple add with optional initial carry. Returns (`width` sum bits,
    /// carry out). One AND per bit.
    pub fn add(
        &mut self,
        a: &[WireId],
        b: &[WireId],
        carry_in: bool,
    ) -> (Vec<WireId>, WireId) {
        assert_eq!(a.len(), b.len());
        let mut carry = self.constant(carry_in);
        let mut sum = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let xc = self.xor(x, carry);
            let yc = self.xor(y, carry);
            sum.push(self.xor(xc, y));
            let t = self.and(xc, yc);
            carry = self.xor(carry, t);
        }
        (sum, carry)
    }

    /// a − b as two's complement: a + ¬b + 1. The returned carry is 1 iff
    /// a ≥ b (no borrow).
    pub fn sub(&mut self, a: &[WireId], b: &[WireId]) -> (Vec<WireId>, WireId) {
        let nb: Vec<WireId> = b.iter().map(|&w| self.not(w)).collect();
        self.add(a, &nb, true)
    }

    /// Wires encoding constant `k` over `width` bits (little-endian).
    pub fn const_bits(&mut self, k: u64, width: usize) -> Vec<WireId> {
        (0..width).map(|i| self.constant(k >> i & 1 == 1)).collect()
    }

    /// sel ? x : y, bit-wise. One AND per bit.
    pub fn mux(&mut self, sel: WireId, x: &[WireId], y: &[WireId]) -> Vec<WireId> {
        assert_eq!(x.len(), y.len());
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let d = self.xor(xi, yi);
                let t = self.and(sel, d);
                self.xor(yi, t)
            })
            .collect()
    }

    /// 1 iff the value on `a` is ≥ k (unsigned).
    pub fn ge_const(&mut self, a: &[WireId], k: u64) -> WireId {
        let kb = self.const_bits(k, a.len());
        let (_, carry) = self.sub(a, &kb);
        carry
    }

    /// (x + y) mod t for x, y < t < 2^width.
    pub fn mod_add(&mut self, x: &[WireId], y: &[WireId], t: u64) -> Vec<WireId> {
        let width = x.len();
        let zero = self.constant(false);
        let mut xe = x.to_vec();
        let mut ye = y.to_vec();
        xe.push(zero);
        ye.push(zero);
        let (s, _) = self.add(&xe, &ye, false); // width+1 bits, exact
        let tb = self.const_bits(t, width + 1);
        let (d, ge_t) = self.sub(&s, &tb);
        let folded = self.mux(ge_t, &d, &s);
        folded[..width].to_vec()
    }

    /// (x − y) mod t for x, y < t < 2^width.
    pub fn mod_sub(&mut self, x: &[WireId], y: &[WireId], t: u64) -> Vec<WireId> {
        let width = x.len();
        let (d, no_borrow) = self.sub(x, y);
        let tb = self.const_bits(t, width);
        let (wrapped, _) = self.add(&d, &tb, false); // (x−y)+t mod 2^width
        self.mux(no_borrow, &d, &wrapped)
    }

    /// Mark `wires` as circuit outputs (append order = result order).
    pub fn outputs(&mut self, wires: &[WireId]) {
        self.finished_outputs.extend_from_slice(wires);
    }

    /// Finish the circuit.
    pub fn finish(self) -> BoolCircuit {
        BoolCircuit {
            wire_count: self.wire_count,
            input_count: self.input_count,
            groups: self.groups,
            constants: self.constants,
            gates: self.gates,
            outputs: self.finished_outputs,
        }
    }
}

impl Default for CircuitBuilder {
    fn default() -> Self {
        Self::new()
    }
}

/// A value as little-endian bits.
pub fn value_to_bits(v: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| v >> i & 1 == 1).collect()
}

/// Little-endian bits back to a value.
pub fn bits_to_value(bits: &[bool]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (b as u64) << i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn two_value_circuit(
        width: usize,
        f: impl FnOnce(&mut CircuitBuilder, Vec<WireId>, Vec<WireId>) -> Vec<WireId>,
    ) -> BoolCircuit {
        let mut b = CircuitBuilder::new();
        let x = b.input_group("x", width);
        let y = b.input_group("y", width);
        let out = f(&mut b, x, y);
        b.outputs(&out);
        b.finish()
    }

    fn run2(c: &BoolCircuit, width: usize, x: u64, y: u64) -> u64 {
        let mut inputs = value_to_bits(x, width);
        inputs.extend(value_to_bits(y, width));
        bits_to_value(&c.eval_plain(&inputs).unwrap())
    }

    #[test]
    fn adder_exhaustive_8bit() {
        let c = two_value_circuit(8, |b, x, y| b.add(&x, &y, false).0);
        for x in 0..256u64 {
            for y in 0..256u64 {
                assert_eq!(run2(&c, 8, x, y), (x + y) & 0xFF, "{x}+{y}");
            }
        }
    }

    #[test]
    fn subtractor_and_comparison() {
        let mut b = CircuitBuilder::new();
        let x = b.input_group("x", 8);
        let y = b.input_group("y", 8);
        let (d, ge) = b.sub(&x, &y);
        b.outputs(&d);
        b.outputs(&[ge]);
        let c = b.finish();
        let mut rng = ChaCha20Rng::seed_from_u64(111);
        for _ in 0..500 {
            let (x, y) = (rng.random_range(0..256u64), rng.random_range(0..256u64));
            let mut inputs = value_to_bits(x, 8);
            inputs.extend(value_to_bits(y, 8));
            let out = c.eval_plain(&inputs).unwrap();
            assert_eq!(bits_to_value(&out[..8]), x.wrapping_sub(y) & 0xFF);
            assert_eq!(out[8], x >= y);
        }
    }

    #[test]
    fn modular_arithmetic_matches_reference() {
        let t = 786_433u64;
        let width = 20;
        let add_c = two_value_circuit(width, |b, x, y| b.mod_add(&x, &y, t));
        let sub_c = two_value_circuit(width, |b, x, y| b.mod_sub(&x, &y, t));
        let mut rng = ChaCha20Rng::seed_from_u64(112);
        for _ in 0..300 {
            let (x, y) = (rng.random_range(0..t), rng.random_range(0..t));
            assert_eq!(run2(&add_c, width, x, y), (x + y) % t);
            assert_eq!(run2(&sub_c, width, x, y), (x + t - y) % t);
        }
        // boundary cases
        for (x, y) in [(0, 0), (t - 1, t - 1), (0, t - 1), (t - 1, 0)] {
            assert_eq!(run2(&add_c, width, x, y), (x + y) % t);
            assert_eq!(run2(&sub_c, width, x, y), (x + t - y) % t);
        }
    }

    #[test]
    fn mux_and_ge_const() {
        let t = 1000u64;
        let mut b = CircuitBuilder::new();
        let x = b.input_group("x", 10);
        let ge = b.ge_const(&x, t / 2);
        let zeros = b.const_bits(0, 10);
        let picked = b.mux(ge, &zeros, &x);
        b.outputs(&picked);
        b.outputs(&[ge]);
        let c = b.finish();
        for x in [0u64, 1, 499, 500, 501, 999] {
            let out = c.eval_plain(&value_to_bits(x, 10)).unwrap();
            let want = if x >= 500 { 0 } else { x };
            assert_eq!(bits_to_value(&out[..10]), want, "x={x}");
            assert_eq!(out[10], x >= 500);
        }
    }
}
