//! Frame kind catalog and payload codecs.
//!
//! Every protocol frame carries one of these `u16` kinds. The numbering
//! groups kinds by flow (setup 1–5, gateway preprocessing 10–17, remote
//! linear preprocessing 20–26, remote garbling 30–35, online 40–47,
//! hand-off 50, output 60–62) and is part of the wire contract: peers
//! validate the kind of every frame they consume.
//!
//! Payloads reuse the length-prefixed little-endian encoding of
//! [`crate::bfv::serial::Wire`]; this module adds the few aggregate
//! shapes the protocol needs (ciphertext lists, label vectors, OT point
//! and key-pair lists).

use crate::bfv::serial::{bad, read_u32, Wire};
use crate::bfv::Ciphertext;
use crate::error::{Error, Result};
use crate::gc::OtKey;
use crate::transport::{Endpoint, Frame, PartyId, Phase};

/// Setup: user's gateway public key, user → A.
pub const USER_PK: u16 = 1;
/// Setup: user's rotation keys, user → A.
pub const USER_GALOIS: u16 = 2;
/// Setup: gateway public key forwarded, A → B and A → C.
pub const PK_FORWARD: u16 = 3;
/// Setup: one holder's share of the joint public key, B/C → A.
pub const JOINT_PK_SHARE: u16 = 4;
/// Setup: the aggregated joint public key, A → user/B/C.
pub const JOINT_PK: u16 = 5;

/// Gateway preprocessing: encrypted input mask, user → A.
pub const MASK_CT: u16 = 10;
/// Gateway preprocessing: encrypted blinded weight·mask product, A → user.
pub const MASKED_LIN_CT: u16 = 11;
/// Gateway preprocessing: garbled tables, A → user.
pub const GC_TABLES: u16 = 12;
/// Gateway preprocessing: OT sender public point, A → user.
pub const OT_PUBLIC: u16 = 13;
/// Gateway preprocessing: OT receiver points, user → A.
pub const OT_POINTS: u16 = 14;
/// Gateway preprocessing: OT masked label pairs, A → user.
pub const OT_PAIRS: u16 = 15;
/// Gateway preprocessing: active labels for A's password input, A → user.
pub const PASSWORD_LABELS: u16 = 16;
/// Gateway preprocessing: un-truncated hand-off re-mask δ, user → A.
pub const HANDOFF_DELTA: u16 = 17;

/// Remote linear preprocessing: encrypted weight-share diagonals, B/C → A.
pub const WEIGHT_DIAGS: u16 = 20;
/// Remote linear preprocessing: encrypted blind share, B/C → A.
pub const WEIGHT_BLIND: u16 = 21;
/// Remote linear preprocessing: encrypted mask-share rotations,
/// user/B/C → A.
pub const MASK_ROTS: u16 = 22;
/// Joint decryption, quadratic component c₂, A → B and A → C.
pub const DEC_QUAD: u16 = 23;
/// Joint decryption, share of s·c₂, B/C → A.
pub const DEC_QUAD_SHARE: u16 = 24;
/// Joint decryption, folded linear component c₁, A → B and A → C.
pub const DEC_LIN: u16 = 25;
/// Joint decryption, share of s·c₁ (plus noise), B/C → A.
pub const DEC_LIN_SHARE: u16 = 26;

/// Remote garbling: garbled tables, B → evaluator.
pub const REMOTE_GC_TABLES: u16 = 30;
/// Remote garbling: active labels for B's own mask share, B → evaluator.
pub const GARBLER_MASK_LABELS: u16 = 31;
/// Remote garbling OT: sender public point, B → receiver.
pub const REMOTE_OT_PUBLIC: u16 = 32;
/// Remote garbling OT: receiver points, receiver → B.
pub const REMOTE_OT_POINTS: u16 = 33;
/// Remote garbling OT: masked label pairs, B → receiver.
pub const REMOTE_OT_PAIRS: u16 = 34;
/// Remote garbling: labels forwarded to the evaluator (A → C for the
/// correction and A's mask share; C → A for C's mask share when A
/// evaluates).
pub const FORWARD_LABELS: u16 = 35;

/// Online: masked input vector, user → A.
pub const MASKED_INPUT: u16 = 40;
/// Online: active labels for the garbler's linear share, A/B → evaluator.
pub const GARBLER_SHARE_LABELS: u16 = 41;
/// Online: the evaluated (still-masked) circuit output, evaluator → garbler
/// (and → C when A evaluates).
pub const GC_VALUE: u16 = 42;
/// Online: active labels for B's linear share (three-party circuit),
/// B → evaluator.
pub const REMOTE_SHARE_LABELS: u16 = 43;
/// Online OT: sender public point, B → receiver.
pub const ONLINE_OT_PUBLIC: u16 = 44;
/// Online OT: receiver points, receiver → B.
pub const ONLINE_OT_POINTS: u16 = 45;
/// Online OT: masked label pairs, B → receiver.
pub const ONLINE_OT_PAIRS: u16 = 46;
/// Online: C's share labels forwarded to A when A evaluates, C → A.
pub const ONLINE_FORWARD_LABELS: u16 = 47;

/// Hand-off: the masked transition activation, A → B and A → C.
pub const HANDOFF_VALUE: u16 = 50;

/// Output: encrypted final linear share, B/C → A.
pub const OUTPUT_SHARE_CT: u16 = 60;
/// Output: encrypted logits, A → user.
pub const RESULT_CT: u16 = 61;
/// Output: plain blinded logits share (two-party tail), A → user.
pub const RESULT_PLAIN: u16 = 62;

/// Receive the next frame from `from`, checking kind, phase, *and* block
/// ordinal. The endpoint itself sequences only by kind and phase, so flows
/// that interleave several blocks use this to pin each frame to its block.
pub(crate) fn expect_at(
    ep: &mut Endpoint,
    from: PartyId,
    phase: Phase,
    kind: u16,
    layer: u16,
) -> Result<Frame> {
    let frame = ep.expect(from, phase, kind)?;
    if frame.layer != layer {
        return Err(Error::Protocol(format!(
            "frame of kind {kind} from {} addresses block {}, expected block {layer}",
            from.label(),
            frame.layer
        )));
    }
    Ok(frame)
}

/// Encode a ciphertext list: `u32` count, then each ciphertext.
pub fn cts_to_bytes(cts: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(cts.len() as u32).to_le_bytes());
    for ct in cts {
        ct.write_to(&mut out);
    }
    out
}

/// Decode a ciphertext list, rejecting trailing bytes.
pub fn cts_from_bytes(bytes: &[u8]) -> Result<Vec<Ciphertext>> {
    let mut input = bytes;
    let count = read_u32(&mut input, "ciphertext list")? as usize;
    if count > 1 << 16 {
        return Err(bad("ciphertext list length"));
    }
    let mut cts = Vec::with_capacity(count);
    for _ in 0..count {
        cts.push(Ciphertext::read_from(&mut input)?);
    }
    if !input.is_empty() {
        return Err(bad("ciphertext list trailing bytes"));
    }
    Ok(cts)
}

/// Encode a label vector: `u32` count, then 16 little-endian bytes each.
pub fn labels_to_bytes(labels: &[u128]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 16 * labels.len());
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for label in labels {
        out.extend_from_slice(&label.to_le_bytes());
    }
    out
}

/// Decode a label vector, rejecting trailing bytes.
pub fn labels_from_bytes(bytes: &[u8]) -> Result<Vec<u128>> {
    let mut input = bytes;
    let count = read_u32(&mut input, "label list")? as usize;
    if input.len() != 16 * count {
        return Err(bad("label list length"));
    }
    let labels = input
        .chunks_exact(16)
        .map(|c| u128::from_le_bytes(c.try_into().expect("16-byte chunk")))
        .collect();
    Ok(labels)
}

/// Encode an OT point list: `u32` count, then 32 bytes each.
pub fn points_to_bytes(points: &[[u8; 32]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 32 * points.len());
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        out.extend_from_slice(p);
    }
    out
}

/// Decode an OT point list, rejecting trailing bytes.
pub fn points_from_bytes(bytes: &[u8]) -> Result<Vec<[u8; 32]>> {
    let mut input = bytes;
    let count = read_u32(&mut input, "point list")? as usize;
    if input.len() != 32 * count {
        return Err(bad("point list length"));
    }
    let points = input
        .chunks_exact(32)
        .map(|c| c.try_into().expect("32-byte chunk"))
        .collect();
    Ok(points)
}

/// Encode masked OT label pairs: `u32` count, then two 16-byte masked
/// labels per transfer.
pub fn pairs_to_bytes(pairs: &[(u128, u128)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 32 * pairs.len());
    out.extend_from_slice(&(pairs.len() as u32).to_le_bytes());
    for &(m0, m1) in pairs {
        out.extend_from_slice(&m0.to_le_bytes());
        out.extend_from_slice(&m1.to_le_bytes());
    }
    out
}

/// Decode masked OT label pairs, rejecting trailing bytes.
pub fn pairs_from_bytes(bytes: &[u8]) -> Result<Vec<(u128, u128)>> {
    let mut input = bytes;
    let count = read_u32(&mut input, "pair list")? as usize;
    if input.len() != 32 * count {
        return Err(bad("pair list length"));
    }
    let pairs = input
        .chunks_exact(32)
        .map(|c| {
            (
                u128::from_le_bytes(c[..16].try_into().expect("16-byte half")),
                u128::from_le_bytes(c[16..].try_into().expect("16-byte half")),
            )
        })
        .collect();
    Ok(pairs)
}

/// Mask both labels of each pair under the corresponding OT keys.
pub fn mask_pairs(keys: &[(OtKey, OtKey)], labels: &[(u128, u128)]) -> Vec<(u128, u128)> {
    assert_eq!(keys.len(), labels.len(), "OT batch size mismatch");
    keys.iter()
        .zip(labels)
        .map(|((k0, k1), &(l0, l1))| (crate::gc::apply_key(k0, l0), crate::gc::apply_key(k1, l1)))
        .collect()
}

/// Unmask the chosen label of each pair under the receiver's keys.
pub fn unmask_pairs(keys: &[OtKey], choices: &[bool], pairs: &[(u128, u128)]) -> Vec<u128> {
    assert_eq!(keys.len(), pairs.len(), "OT batch size mismatch");
    assert_eq!(choices.len(), pairs.len(), "OT batch size mismatch");
    keys.iter()
        .zip(choices)
        .zip(pairs)
        .map(|((key, &c), &(m0, m1))| crate::gc::apply_key(key, if c { m1 } else { m0 }))
        .collect()
}
