//! Negacyclic number-theoretic transforms over word-sized primes.
//!
//! The forward transform runs Cooley–Tukey butterflies with the 2n-th root
//! of unity merged into the twiddles, so negacyclic wrap-around needs no
//! separate pre-twist; output lands in bit-reversed order. The inverse is
//! the matching Gentleman–Sande pass. All twiddles carry Shoup companions,
//! making each butterfly two integer multiplies plus a conditional subtract.

use std::collections::HashMap;

use crate::params::{add_mod, inv_mod, mul_mod, mul_shoup, pow_mod, shoup_precompute, sub_mod};

/// Precomputed negacyclic NTT for one modulus.
pub struct NttTable {
    /// The (prime) modulus.
    pub p: u64,
    /// Transform length; must be a power of two, p ≡ 1 (mod 2n).
    pub n: usize,
    /// ψ, the primitive 2n-th root of unity the tables are built from.
    pub psi: u64,
    fwd: Vec<u64>,
    fwd_shoup: Vec<u64>,
    inv: Vec<u64>,
    inv_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl NttTable {
    /// Build tables for modulus `p` and length `n`.
    ///
    /// Panics if `n` is not a power of two or `p` is not 1 mod 2n — both are
    /// construction-time configuration errors.
    pub fn new(p: u64, n: usize) -> Self {
        assert!(n.is_power_of_two(), "transform length must be a power of two");
        assert_eq!((p - 1) % (2 * n as u64), 0, "p must be 1 mod 2n");
        let bits = n.trailing_zeros();
        let psi = find_primitive_2n_root(p, n);
        let psi_inv = inv_mod(psi, p);
        let mut fwd = vec![0u64; n];
        let mut inv = vec![0u64; n];
        for (i, (f, v)) in fwd.iter_mut().zip(inv.iter_mut()).enumerate() {
            let r = bit_reverse(i, bits) as u64;
            *f = pow_mod(psi, r, p);
            *v = pow_mod(psi_inv, r, p);
        }
        let fwd_shoup = fwd.iter().map(|&w| shoup_precompute(w, p)).collect();
        let inv_shoup = inv.iter().map(|&w| shoup_precompute(w, p)).collect();
        let n_inv = inv_mod(n as u64, p);
        NttTable {
            p,
            n,
            psi,
            fwd,
            fwd_shoup,
            inv,
            inv_shoup,
            n_inv,
            n_inv_shoup: shoup_precompute(n_inv, p),
        }
    }

    /// In-place forward transform; standard-order input, bit-reversed output.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let p = self.p;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let s = self.fwd[m + i];
                let s_sh = self.fwd_shoup[m + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_shoup(a[j + t], s, s_sh, p);
                    a[j] = add_mod(u, v, p);
                    a[j + t] = sub_mod(u, v, p);
                }
            }
            m <<= 1;
        }
    }

    /// In-place inverse transform; bit-reversed input, standard-order output.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let p = self.p;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.inv[h + i];
                let s_sh = self.inv_shoup[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, p);
                    a[j + t] = mul_shoup(sub_mod(u, v, p), s, s_sh, p);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_shoup(*x, self.n_inv, self.n_inv_shoup, p);
        }
    }

    /// For each output index i, the exponent e ∈ [0, 2n) with
    /// `forward(f)[i] = f(ψ^e)`, recovered by transforming the monomial X
    /// and taking discrete logs. The map depends only on the butterfly
    /// schedule, so it is shared by every modulus.
    pub fn evaluation_exponents(&self) -> Vec<u32> {
        let two_n = 2 * self.n;
        let mut dlog = HashMap::with_capacity(two_n);
        let mut cur = 1u64;
        for k in 0..two_n {
            dlog.insert(cur, k as u32);
            cur = mul_mod(cur, self.psi, self.p);
        }
        let mut a = vec![0u64; self.n];
        a[1] = 1;
        self.forward(&mut a);
        a.iter()
            .map(|v| *dlog.get(v).expect("NTT output of X must be a power of ψ"))
            .collect()
    }
}

/// Reverse the low `bits` bits of `x`.
#[inline]
pub fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

/// Find a primitive 2n-th root of unity mod p: the smallest candidate base g
/// for which c = g^{(p-1)/2n} satisfies c^n = −1.
fn find_primitive_2n_root(p: u64, n: usize) -> u64 {
    let two_n = 2 * n as u64;
    let exp = (p - 1) / two_n;
    for g in 2..p {
        let c = pow_mod(g, exp, p);
        if pow_mod(c, n as u64, p) == p - 1 {
            return c;
        }
    }
    unreachable!("every prime ≡ 1 mod 2n has a primitive 2n-th root")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{DESK, PAPER};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Oracle: schoolbook negacyclic product, O(n²).
    pub fn schoolbook_negacyclic(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                let prod = mul_mod(ai, bj, p);
                let k = i + j;
                if k < n {
                    out[k] = add_mod(out[k], prod, p);
                } else {
                    out[k - n] = sub_mod(out[k - n], prod, p);
                }
            }
        }
        out
    }

    fn all_moduli() -> Vec<(u64, usize)> {
        let mut v = Vec::new();
        for params in [&DESK, &PAPER] {
            for &p in params.q_primes.iter().chain(params.aux_primes.iter()) {
                v.push((p, params.n));
            }
            v.push((params.t, params.n));
        }
        v
    }

    #[test]
    fn roundtrip_all_moduli() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for (p, n) in all_moduli() {
            let table = NttTable::new(p, n);
            let orig: Vec<u64> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let mut a = orig.clone();
            table.forward(&mut a);
            table.inverse(&mut a);
            assert_eq!(a, orig, "roundtrip failed for p = {p}");
        }
    }

    #[test]
    fn pointwise_mul_matches_schoolbook() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let (p, n) = (DESK.q_primes[0], DESK.n);
        let table = NttTable::new(p, n);
        for _ in 0..3 {
            let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let want = schoolbook_negacyclic(&a, &b, p);
            let mut fa = a.clone();
            let mut fb = b.clone();
            table.forward(&mut fa);
            table.forward(&mut fb);
            let mut fc: Vec<u64> = fa
                .iter()
                .zip(&fb)
                .map(|(&x, &y)| mul_mod(x, y, p))
                .collect();
            table.inverse(&mut fc);
            assert_eq!(fc, want);
        }
    }

    #[test]
    fn negacyclic_wraparound_sign() {
        // X^{n-1} · X = X^n = −1 in R.
        let (p, n) = (DESK.t, DESK.n);
        let table = NttTable::new(p, n);
        let mut a = vec![0u64; n];
        let mut b = vec![0u64; n];
        a[n - 1] = 1;
        b[1] = 1;
        table.forward(&mut a);
        table.forward(&mut b);
        let mut c: Vec<u64> = a.iter().zip(&b).map(|(&x, &y)| mul_mod(x, y, p)).collect();
        table.inverse(&mut c);
        assert_eq!(c[0], p - 1);
        assert!(c[1..].iter().all(|&x| x == 0));
    }

    #[test]
    fn exponent_map_structural_and_shared() {
        for params in [&DESK, &PAPER] {
            let reference = NttTable::new(params.t, params.n).evaluation_exponents();
            let two_n = 2 * params.n as u32;
            let mut seen = vec![false; params.n];
            for &e in &reference {
                assert_eq!(e % 2, 1, "evaluation exponents must be odd");
                assert!(e < two_n);
                let slot = (e as usize - 1) / 2;
                assert!(!seen[slot], "exponent repeated");
                seen[slot] = true;
            }
            // Same butterfly schedule ⇒ same map for every modulus.
            for &p in &params.q_primes {
                assert_eq!(NttTable::new(p, params.n).evaluation_exponents(), reference);
            }
        }
    }
}
