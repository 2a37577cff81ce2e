//! Binary wire format for ring and scheme objects.
//!
//! Every object is self-describing: a profile byte, representation flags,
//! then a little-endian u32 element count followed by the little-endian
//! u64 elements. Composite objects (ciphertexts, keys) concatenate their
//! self-describing parts. Readers validate every tag and length and fail
//! with a deserialization error rather than panic.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::params::ProfileId;
use crate::ring::{Basis, Domain, RnsPoly, TPoly};

use super::eval::{GaloisKeys, KeySwitchKey};
use super::tensor::Ciphertext3;
use super::{Ciphertext, PublicKey};

/// Objects that cross party boundaries as length-delimited binary.
pub trait Wire: Sized {
    /// Append the encoding of `self` to `out`.
    fn write_to(&self, out: &mut Vec<u8>);
    /// Parse one value, advancing `input` past it.
    fn read_from(input: &mut &[u8]) -> Result<Self>;

    /// Encode into a fresh buffer.
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    /// Decode a buffer that must contain exactly one value.
    fn from_bytes(mut input: &[u8]) -> Result<Self> {
        let v = Self::read_from(&mut input)?;
        if input.is_empty() {
            Ok(v)
        } else {
            Err(Error::Deserialize(format!(
                "{} trailing bytes after value",
                input.len()
            )))
        }
    }
}

pub(crate) fn bad(what: &str) -> Error {
    Error::Deserialize(format!("truncated or malformed {what}"))
}

pub(crate) fn read_u8(input: &mut &[u8], what: &str) -> Result<u8> {
    input.read_u8().map_err(|_| bad(what))
}

pub(crate) fn read_u32(input: &mut &[u8], what: &str) -> Result<u32> {
    input.read_u32::<LittleEndian>().map_err(|_| bad(what))
}

pub(crate) fn read_u64(input: &mut &[u8], what: &str) -> Result<u64> {
    input.read_u64::<LittleEndian>().map_err(|_| bad(what))
}

fn profile_from_byte(b: u8) -> Result<ProfileId> {
    match b {
        0 => Ok(ProfileId::Desk),
        1 => Ok(ProfileId::Paper),
        other => Err(Error::Deserialize(format!("unknown profile byte {other}"))),
    }
}

/// Upper bound on serialized element counts (largest legal object: a
/// five-lane polynomial at n = 8192).
const MAX_ELEMS: u32 = 5 * 8192;

fn write_u64_slice(out: &mut Vec<u8>, data: &[u64]) {
    out.write_u32::<LittleEndian>(data.len() as u32)
        .expect("vec write");
    out.reserve(data.len() * 8);
    for &v in data {
        out.write_u64::<LittleEndian>(v).expect("vec write");
    }
}

fn read_u64_vec(input: &mut &[u8], what: &str) -> Result<Vec<u64>> {
    let count = read_u32(input, what)?;
    if count > MAX_ELEMS {
        return Err(Error::Deserialize(format!(
            "{what}: element count {count} exceeds limit"
        )));
    }
    let mut data = Vec::with_capacity(count as usize);
    for _ in 0..count {
        data.push(read_u64(input, what)?);
    }
    Ok(data)
}

impl Wire for RnsPoly {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.push(self.profile as u8);
        out.push(match self.basis {
            Basis::Q => 0,
            Basis::QAux => 1,
        });
        out.push(match self.domain {
            Domain::Coeff => 0,
            Domain::Ntt => 1,
        });
        write_u64_slice(out, &self.data);
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let profile = profile_from_byte(read_u8(input, "poly header")?)?;
        let basis = match read_u8(input, "poly header")? {
            0 => Basis::Q,
            1 => Basis::QAux,
            b => return Err(Error::Deserialize(format!("unknown basis byte {b}"))),
        };
        let domain = match read_u8(input, "poly header")? {
            0 => Domain::Coeff,
            1 => Domain::Ntt,
            b => return Err(Error::Deserialize(format!("unknown domain byte {b}"))),
        };
        let data = read_u64_vec(input, "poly data")?;
        let params = crate::params::RingParams::for_profile(profile);
        let expect = basis.lanes() * params.n;
        if data.len() != expect {
            return Err(Error::Deserialize(format!(
                "poly has {} elements, profile expects {expect}",
                data.len()
            )));
        }
        for (l, &p) in params
            .q_primes
            .iter()
            .chain(params.aux_primes.iter())
            .take(basis.lanes())
            .enumerate()
        {
            if data[l * params.n..(l + 1) * params.n].iter().any(|&v| v >= p) {
                return Err(Error::Deserialize(format!("lane {l} residue out of range")));
            }
        }
        Ok(RnsPoly {
            profile,
            basis,
            domain,
            data,
        })
    }
}

impl Wire for TPoly {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.push(self.profile as u8);
        out.push(match self.domain {
            Domain::Coeff => 0,
            Domain::Ntt => 1,
        });
        write_u64_slice(out, &self.data);
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let profile = profile_from_byte(read_u8(input, "t-poly header")?)?;
        let domain = match read_u8(input, "t-poly header")? {
            0 => Domain::Coeff,
            1 => Domain::Ntt,
            b => return Err(Error::Deserialize(format!("unknown domain byte {b}"))),
        };
        let data = read_u64_vec(input, "t-poly data")?;
        let params = crate::params::RingParams::for_profile(profile);
        if data.len() != params.n {
            return Err(Error::Deserialize(format!(
                "t-poly has {} coefficients, profile expects {}",
                data.len(),
                params.n
            )));
        }
        if data.iter().any(|&v| v >= params.t) {
            return Err(Error::Deserialize("t-poly residue out of range".into()));
        }
        Ok(TPoly {
            profile,
            domain,
            data,
        })
    }
}

impl Wire for Ciphertext {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.push(2); // component count
        self.c0.write_to(out);
        self.c1.write_to(out);
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let comps = read_u8(input, "ciphertext header")?;
        if comps != 2 {
            return Err(Error::Deserialize(format!(
                "expected 2 ciphertext components, found {comps}"
            )));
        }
        let c0 = RnsPoly::read_from(input)?;
        let c1 = RnsPoly::read_from(input)?;
        if c0.profile != c1.profile || c0.basis != c1.basis || c0.domain != c1.domain {
            return Err(Error::Deserialize(
                "ciphertext components disagree on representation".into(),
            ));
        }
        Ok(Ciphertext { c0, c1 })
    }
}

impl Wire for Ciphertext3 {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.push(3);
        self.c0.write_to(out);
        self.c1.write_to(out);
        self.c2.write_to(out);
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let comps = read_u8(input, "ciphertext header")?;
        if comps != 3 {
            return Err(Error::Deserialize(format!(
                "expected 3 ciphertext components, found {comps}"
            )));
        }
        Ok(Ciphertext3 {
            c0: RnsPoly::read_from(input)?,
            c1: RnsPoly::read_from(input)?,
            c2: RnsPoly::read_from(input)?,
        })
    }
}

impl Wire for PublicKey {
    fn write_to(&self, out: &mut Vec<u8>) {
        self.p0.write_to(out);
        self.p1.write_to(out);
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        Ok(PublicKey {
            p0: RnsPoly::read_from(input)?,
            p1: RnsPoly::read_from(input)?,
        })
    }
}

impl Wire for KeySwitchKey {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.write_u64::<LittleEndian>(self.galois).expect("vec write");
        out.push(self.comps.len() as u8);
        for (b, a) in &self.comps {
            b.write_to(out);
            a.write_to(out);
        }
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let galois = read_u64(input, "switch-key header")?;
        let count = read_u8(input, "switch-key header")? as usize;
        if count == 0 || count > 16 {
            return Err(Error::Deserialize(format!(
                "implausible switch-key component count {count}"
            )));
        }
        let mut comps = Vec::with_capacity(count);
        for _ in 0..count {
            let b = RnsPoly::read_from(input)?;
            let a = RnsPoly::read_from(input)?;
            comps.push((b, a));
        }
        Ok(KeySwitchKey { galois, comps })
    }
}

impl Wire for GaloisKeys {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.push(self.hops.len() as u8);
        for (&hop, ksk) in &self.hops {
            out.write_u32::<LittleEndian>(hop as u32).expect("vec write");
            ksk.write_to(out);
        }
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        let count = read_u8(input, "rotation-key header")? as usize;
        let mut hops = std::collections::BTreeMap::new();
        for _ in 0..count {
            let hop = read_u32(input, "rotation-key hop")? as usize;
            let ksk = KeySwitchKey::read_from(input)?;
            if hops.insert(hop, ksk).is_some() {
                return Err(Error::Deserialize(format!("duplicate hop {hop}")));
            }
        }
        Ok(GaloisKeys { hops })
    }
}

/// Raw share/mask vectors (residues mod t) as they appear inside frames.
impl Wire for Vec<u64> {
    fn write_to(&self, out: &mut Vec<u8>) {
        write_u64_slice(out, self);
    }

    fn read_from(input: &mut &[u8]) -> Result<Self> {
        read_u64_vec(input, "u64 vector")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfv::{encode, encrypt, keygen_public, keygen_secret, BfvCtx};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn ciphertext_roundtrip_and_tamper_detection() {
        let ctx = BfvCtx::new(&crate::params::DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(91);
        let sk = keygen_secret(&ctx, &mut rng);
        let pk = keygen_public(&ctx, &sk, &mut rng);
        let ct = encrypt(&ctx, &pk, &encode::encode(&ctx, &[1, 2, 3, 4]), &mut rng);
        let bytes = ct.to_bytes();
        let back = Ciphertext::from_bytes(&bytes).unwrap();
        assert_eq!(back, ct);

        // Truncation fails cleanly.
        assert!(Ciphertext::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        // Out-of-range residue fails cleanly.
        let mut tampered = bytes.clone();
        let len = tampered.len();
        for b in &mut tampered[len - 8..] {
            *b = 0xFF;
        }
        assert!(Ciphertext::from_bytes(&tampered).is_err());
        // Trailing garbage fails cleanly.
        let mut extended = bytes;
        extended.push(0);
        assert!(Ciphertext::from_bytes(&extended).is_err());
    }

    #[test]
    fn galois_keys_roundtrip() {
        let ctx = BfvCtx::new(&crate::params::DESK);
        let mut rng = ChaCha20Rng::seed_from_u64(92);
        let sk = keygen_secret(&ctx, &mut rng);
        let keys = crate::bfv::GaloisKeys::generate(&ctx, &sk, &mut rng);
        let back = GaloisKeys::from_bytes(&keys.to_bytes()).unwrap();
        assert!(back == keys);
    }

    #[test]
    fn share_vector_roundtrip() {
        let v: Vec<u64> = vec![0, 1, 786432, 42];
        assert_eq!(Vec::<u64>::from_bytes(&v.to_bytes()).unwrap(), v);
    }
}
