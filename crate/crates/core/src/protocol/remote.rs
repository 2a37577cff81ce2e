//! Remote-segment flows: servers B and C hold additive shares of the
//! trailing blocks' weights and evaluate them with A coordinating, so that
//! no single server sees weights, activations, or the user's data.
//!
//! Preprocessing establishes, per remote block k, the correction
//! `E_k = F_k·r_k − s²_k − s³_k + b_k` at A: the holders send their weight
//! shares as encrypted diagonals and their mask shares as encrypted
//! rotations under the joint key, A completes the mask with its own share
//! in plaintext, multiplies diagonal by rotation homomorphically, and the
//! two-round joint decryption (quadratic fold, then linear projection)
//! yields E_k — a value that is meaningless without the blinds it hides.
//! Online, each holder computes its share `F^j·(x_k−r_k) + s^j`, and a
//! garbled circuit recombines the two shares with `E_k`, applies
//! `ReLU(trunc(·))`, and re-masks with the next block's three mask shares.
//! In the `seco` mode B garbles and C evaluates, keeping A silent during
//! remote layers; the `delphi3` baseline routes every circuit through A as
//! evaluator instead.
//!
//! The final block has no circuit: the holders encrypt their linear shares
//! under the *user's* key, A adds `E_N`, and the user decrypts the logits.

use std::collections::BTreeMap;

use crate::bfv::serial::Wire;
use crate::bfv::tensor::{Ciphertext3, TensorAcc};
use crate::bfv::{
    decode, encode, encrypt,
    eval::{add_assign, add_plain_assign},
    BfvCtx, Ciphertext,
};
use crate::error::{Error, Result};
use crate::gc::{
    bits_to_residues, build_three_party, evaluate, garble, residues_to_bits, BoolCircuit,
    GarbledTables, GarblerSecrets,
};
use crate::mphe::{combine_decrypt, fold_degree2, partial_decrypt, Partial};
use crate::protocol::dealer::{
    add_vec_t, draw_vec, matvec_mod_t, pad_to, rotate_left, share_diagonal, sub_vec_t, RemoteView,
    Skeleton,
};
use crate::protocol::gateway::relu_spec;
use crate::protocol::messages::{
    expect_at, labels_from_bytes, labels_to_bytes, DEC_LIN, DEC_LIN_SHARE, DEC_QUAD,
    DEC_QUAD_SHARE, FORWARD_LABELS, GARBLER_MASK_LABELS, GC_VALUE, HANDOFF_VALUE, MASK_ROTS,
    ONLINE_FORWARD_LABELS, OUTPUT_SHARE_CT, REMOTE_GC_TABLES, REMOTE_SHARE_LABELS, RESULT_CT,
    WEIGHT_BLIND, WEIGHT_DIAGS,
};
use crate::protocol::otflow::{ot_recv, ot_send, ONLINE_OT, REMOTE_OT};
use crate::protocol::rng::{stream, stream_aux, Purpose};
use crate::protocol::setup::HolderKeys;
use crate::protocol::shares::{ShareKind, ShareRecord};
use crate::protocol::{Mode, RunConfig};
use crate::ring::RnsPoly;
use crate::transport::{Endpoint, PartyId, Phase, LAYER_NONE};

/// Discriminators keeping a block's Encrypt-purpose streams apart: linear
/// preprocessing ciphertexts, the two joint-decryption noise draws, and
/// the output-share encryption must never share randomness.
const ENC_MAIN: u16 = 0;
const ENC_DEC_QUAD: u16 = 1;
const ENC_DEC_LIN: u16 = 2;
const ENC_OUTPUT: u16 = 3;

/// One garbled remote block, garbler (B) side.
pub(crate) struct RemoteGarblerUnit {
    circuit: BoolCircuit,
    secrets: GarblerSecrets,
}

/// One garbled remote block, evaluator side (C in `seco`, A in `delphi3`).
pub(crate) struct RemoteEvalUnit {
    circuit: BoolCircuit,
    tables: GarbledTables,
    /// Active labels for the garbler's own mask input (group `mask_b`).
    mask_b_labels: Vec<u128>,
    /// Active labels for A's inputs (groups `correction` then `mask_a`).
    a_input_labels: Vec<u128>,
    /// Active labels for C's mask input (group `mask_c`).
    mask_c_labels: Vec<u128>,
}

/// Holder-side output of remote preprocessing for one inference.
pub(crate) struct HolderPre {
    garbler: BTreeMap<usize, RemoteGarblerUnit>,
    evaluator: BTreeMap<usize, RemoteEvalUnit>,
}

/// A-side output of remote stage-1 preprocessing for one inference.
pub(crate) struct ARemotePre {
    /// Summed weight ciphertexts for the transition block, held until the
    /// user's mask rotations arrive in stage 2.
    tr_weights: Option<(Vec<Ciphertext>, Ciphertext)>,
    /// Evaluator units for the blocks A evaluates (`delphi3` only).
    gc: BTreeMap<usize, RemoteEvalUnit>,
}

/// Multiply summed weight diagonals by summed mask rotations and subtract
/// the (degree-1) blind ciphertext, producing the degree-2 encryption of
/// `F·r − s² − s³ + b` for one block.
fn tensor_block(
    ctx: &BfvCtx,
    diags: &[Ciphertext],
    ws: &Ciphertext,
    rots: &[Ciphertext],
) -> Result<Ciphertext3> {
    if diags.len() != rots.len() {
        return Err(Error::Protocol(format!(
            "{} weight diagonals against {} mask rotations",
            diags.len(),
            rots.len()
        )));
    }
    let mut acc = TensorAcc::new(ctx);
    for (d, r) in diags.iter().zip(rots) {
        acc.add_product(ctx, d, r);
    }
    let mut ct3 = acc.finish(ctx);
    ct3.sub_assign_deg1(ctx, ws);
    Ok(ct3)
}

fn expect_labels(payload: &[u8], expected: usize, what: &str, k: usize) -> Result<Vec<u128>> {
    let labels = labels_from_bytes(payload)?;
    if labels.len() != expected {
        return Err(Error::Protocol(format!(
            "block {k}: {what} carries {} labels, expected {expected}",
            labels.len()
        )));
    }
    Ok(labels)
}

#[cfg(feature = "insecure-test-modes")]
fn maybe_corrupt(cfg: &RunConfig, skel: &Skeleton, k: usize, t: u64, e: Vec<u64>) -> Vec<u64> {
    if cfg.insecure.corrupt_share && Some(k) == skel.transition_ordinal() {
        let mut bad = e;
        bad[0] = (bad[0] + 1) % t;
        return bad;
    }
    e
}

#[cfg(not(feature = "insecure-test-modes"))]
fn maybe_corrupt(_cfg: &RunConfig, _skel: &Skeleton, _k: usize, _t: u64, e: Vec<u64>) -> Vec<u64> {
    e
}

/// Holder (B or C) side of all remote preprocessing for one inference:
/// linear material, both joint-decryption batches, and the garbled blocks.
#[allow(clippy::too_many_arguments)]
pub(crate) fn holder_preprocess(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    view: &RemoteView,
    keys: &HolderKeys,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<HolderPre> {
    let t = ctx.ring.params.t;
    let party = ep.party();
    let a = PartyId::ServerA;
    let n = skel.block_count();
    let mut pre = HolderPre {
        garbler: BTreeMap::new(),
        evaluator: BTreeMap::new(),
    };
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(pre);
    };

    // Linear material: weight-share diagonals and the blind share for every
    // remote block; mask-share rotations for every block after the
    // transition (the transition input is masked by the user instead).
    for k in tr..=n {
        let dims = skel.block(k);
        let block = view.block(k);
        let mut enc_rng =
            stream_aux(cfg.seed, party, Purpose::Encrypt, k as u16, inference, ENC_MAIN);
        for m in dims.active_offsets() {
            let diag = share_diagonal(&block.f_share, dims, m);
            let ct = encrypt(ctx, &keys.joint_pk, &encode(ctx, &diag), &mut enc_rng);
            ep.send(a, Phase::Preprocess, k as u16, WEIGHT_DIAGS, ct.to_bytes())?;
        }

        let mut blind_rng = stream(cfg.seed, party, Purpose::Blind, k as u16, inference);
        let s = draw_vec(cfg, &mut blind_rng, t, dims.out_len);
        rec.insert(ShareKind::RemoteBlind, k, inference, 2, s)?;
        let s = rec.take(ShareKind::RemoteBlind, k, inference)?;
        let ws = sub_vec_t(&s, &block.b_share, t);
        let ct = encrypt(
            ctx,
            &keys.joint_pk,
            &encode(ctx, &pad_to(&ws, dims.dim)),
            &mut enc_rng,
        );
        ep.send(a, Phase::Preprocess, k as u16, WEIGHT_BLIND, ct.to_bytes())?;

        if k > tr {
            let mut mask_rng = stream(cfg.seed, party, Purpose::Mask, k as u16, inference);
            let r = draw_vec(cfg, &mut mask_rng, t, dims.in_len);
            rec.insert(ShareKind::RemoteMask, k, inference, 2, r)?;
            let padded = pad_to(&rec.take(ShareKind::RemoteMask, k, inference)?, dims.dim);
            for m in dims.active_offsets() {
                let ct = encrypt(
                    ctx,
                    &keys.joint_pk,
                    &encode(ctx, &rotate_left(&padded, m)),
                    &mut enc_rng,
                );
                ep.send(a, Phase::Preprocess, k as u16, MASK_ROTS, ct.to_bytes())?;
            }
        }
    }

    // First joint-decryption batch: every block whose mask the servers
    // share. The transition block waits for the user's ciphertexts at A.
    let stage1: Vec<usize> = (tr + 1..=n).collect();
    holder_decrypt_rounds(ctx, cfg, keys, ep, inference, &stage1)?;

    // Garbled blocks that are ready without the user: all but the
    // transition.
    for k in tr + 1..n {
        holder_gc_preprocess(cfg, skel, t, ep, rec, inference, k, &mut pre)?;
    }

    // Transition block: second decryption batch, then its circuit.
    holder_decrypt_rounds(ctx, cfg, keys, ep, inference, &[tr])?;
    if tr < n {
        holder_gc_preprocess(cfg, skel, t, ep, rec, inference, tr, &mut pre)?;
    }
    Ok(pre)
}

/// Answer A's two-round joint decryption for the given blocks: first the
/// quadratic fold shares s_j·c₂, then the linear shares s_j·c₁.
fn holder_decrypt_rounds(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    keys: &HolderKeys,
    ep: &mut Endpoint,
    inference: u32,
    ordinals: &[usize],
) -> Result<()> {
    let party = ep.party();
    let a = PartyId::ServerA;
    for &k in ordinals {
        let frame = expect_at(ep, a, Phase::Preprocess, DEC_QUAD, k as u16)?;
        let c2 = RnsPoly::from_bytes(&frame.payload)?;
        let mut rng = stream_aux(
            cfg.seed,
            party,
            Purpose::Encrypt,
            k as u16,
            inference,
            ENC_DEC_QUAD,
        );
        let h = partial_decrypt(ctx, &keys.share, &c2, &mut rng);
        ep.send(a, Phase::Preprocess, k as u16, DEC_QUAD_SHARE, h.to_bytes())?;
    }
    for &k in ordinals {
        let frame = expect_at(ep, a, Phase::Preprocess, DEC_LIN, k as u16)?;
        let c1 = RnsPoly::from_bytes(&frame.payload)?;
        let mut rng = stream_aux(
            cfg.seed,
            party,
            Purpose::Encrypt,
            k as u16,
            inference,
            ENC_DEC_LIN,
        );
        let pd = partial_decrypt(ctx, &keys.share, &c1, &mut rng);
        ep.send(a, Phase::Preprocess, k as u16, DEC_LIN_SHARE, pd.to_bytes())?;
    }
    Ok(())
}

/// Dispatch one block's garbled-circuit preprocessing to this holder's
/// role in the current mode.
#[allow(clippy::too_many_arguments)]
fn holder_gc_preprocess(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    k: usize,
    pre: &mut HolderPre,
) -> Result<()> {
    match (cfg.mode, ep.party()) {
        (Mode::Seco, PartyId::ServerB) => {
            let unit =
                garbler_gc_preprocess(cfg, skel, t, ep, rec, inference, k, PartyId::ServerC)?;
            pre.garbler.insert(k, unit);
        }
        (Mode::Delphi3, PartyId::ServerB) => {
            let unit =
                garbler_gc_preprocess(cfg, skel, t, ep, rec, inference, k, PartyId::ServerA)?;
            pre.garbler.insert(k, unit);
        }
        (Mode::Seco, PartyId::ServerC) => {
            let unit = evaluator_gc_preprocess(cfg, skel, t, ep, rec, inference, k)?;
            pre.evaluator.insert(k, unit);
        }
        (Mode::Delphi3, PartyId::ServerC) => {
            forwarder_gc_preprocess(cfg, skel, t, ep, rec, inference, k)?;
        }
        (mode, party) => {
            return Err(Error::Protocol(format!(
                "party {} has no garbling role in mode {mode}",
                party.label()
            )));
        }
    }
    Ok(())
}

/// B garbles block k's circuit, hands the evaluator the tables and its own
/// mask labels, and serves both label OTs (A's correction + mask share,
/// C's mask share).
#[allow(clippy::too_many_arguments)]
fn garbler_gc_preprocess(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    k: usize,
    evaluator: PartyId,
) -> Result<RemoteGarblerUnit> {
    let spec = relu_spec(skel, t, k);
    let bits = spec.bits();
    let circuit = build_three_party(&spec);
    let mut garble_rng = stream(
        cfg.seed,
        PartyId::ServerB,
        Purpose::Garble,
        k as u16,
        inference,
    );
    let (tables, secrets) = garble(&circuit, &mut garble_rng);
    ep.send(
        evaluator,
        Phase::Preprocess,
        k as u16,
        REMOTE_GC_TABLES,
        tables.to_bytes(),
    )?;

    let own_mask = rec.take(ShareKind::RemoteMask, k + 1, inference)?;
    let mb = secrets.active_labels(circuit.group("mask_b"), &residues_to_bits(&own_mask, bits));
    ep.send(
        evaluator,
        Phase::Preprocess,
        k as u16,
        GARBLER_MASK_LABELS,
        labels_to_bytes(&mb),
    )?;

    let mut pairs = secrets.label_pairs(circuit.group("correction"));
    pairs.extend(secrets.label_pairs(circuit.group("mask_a")));
    ot_send(
        ep,
        cfg,
        PartyId::ServerA,
        Phase::Preprocess,
        k as u16,
        &REMOTE_OT,
        &pairs,
        inference,
    )?;

    let pairs = secrets.label_pairs(circuit.group("mask_c"));
    ot_send(
        ep,
        cfg,
        PartyId::ServerC,
        Phase::Preprocess,
        k as u16,
        &REMOTE_OT,
        &pairs,
        inference,
    )?;
    Ok(RemoteGarblerUnit { circuit, secrets })
}

/// C (in `seco`) collects everything needed to evaluate block k online:
/// tables and B's mask labels directly, A's labels via A's forward, and
/// its own mask labels by OT.
fn evaluator_gc_preprocess(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    k: usize,
) -> Result<RemoteEvalUnit> {
    let spec = relu_spec(skel, t, k);
    let bits = spec.bits();
    let width = spec.values * bits;
    let circuit = build_three_party(&spec);
    let b = PartyId::ServerB;

    let frame = expect_at(ep, b, Phase::Preprocess, REMOTE_GC_TABLES, k as u16)?;
    let tables = GarbledTables::from_bytes(&frame.payload)?;
    let frame = expect_at(ep, b, Phase::Preprocess, GARBLER_MASK_LABELS, k as u16)?;
    let mask_b_labels = expect_labels(&frame.payload, width, "garbler mask labels", k)?;
    let frame = expect_at(ep, PartyId::ServerA, Phase::Preprocess, FORWARD_LABELS, k as u16)?;
    let a_input_labels = expect_labels(&frame.payload, 2 * width, "forwarded labels", k)?;

    let own_mask = rec.take(ShareKind::RemoteMask, k + 1, inference)?;
    let mask_c_labels = ot_recv(
        ep,
        cfg,
        b,
        Phase::Preprocess,
        k as u16,
        &REMOTE_OT,
        &residues_to_bits(&own_mask, bits),
        inference,
    )?;
    Ok(RemoteEvalUnit {
        circuit,
        tables,
        mask_b_labels,
        a_input_labels,
        mask_c_labels,
    })
}

/// C (in `delphi3`) only fetches its mask labels by OT and forwards them
/// to A, which evaluates.
fn forwarder_gc_preprocess(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    k: usize,
) -> Result<()> {
    let spec = relu_spec(skel, t, k);
    let own_mask = rec.take(ShareKind::RemoteMask, k + 1, inference)?;
    let labels = ot_recv(
        ep,
        cfg,
        PartyId::ServerB,
        Phase::Preprocess,
        k as u16,
        &REMOTE_OT,
        &residues_to_bits(&own_mask, spec.bits()),
        inference,
    )?;
    ep.send(
        PartyId::ServerA,
        Phase::Preprocess,
        k as u16,
        FORWARD_LABELS,
        labels_to_bytes(&labels),
    )
}

/// A's server-only preprocessing: collect weight and mask ciphertexts,
/// run the homomorphic products and the first joint-decryption batch, and
/// prepare every garbled block except the transition.
pub(crate) fn a_remote_stage1(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<ARemotePre> {
    let t = ctx.ring.params.t;
    let n = skel.block_count();
    let mut pre = ARemotePre {
        tr_weights: None,
        gc: BTreeMap::new(),
    };
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(pre);
    };

    let mut tensors: Vec<(usize, Ciphertext3)> = Vec::new();
    for k in tr..=n {
        let dims = skel.block(k);
        let (diags, ws) = a_receive_weights(ctx, skel, ep, k)?;
        if k == tr {
            // The transition mask comes encrypted from the user; the
            // product waits for stage 2.
            pre.tr_weights = Some((diags, ws));
            continue;
        }

        let mut rots = Vec::new();
        for m in dims.active_offsets() {
            let fb = expect_at(ep, PartyId::ServerB, Phase::Preprocess, MASK_ROTS, k as u16)?;
            let mut ct = Ciphertext::from_bytes(&fb.payload)?;
            let fc = expect_at(ep, PartyId::ServerC, Phase::Preprocess, MASK_ROTS, k as u16)?;
            add_assign(ctx, &mut ct, &Ciphertext::from_bytes(&fc.payload)?);
            rots.push((m, ct));
        }
        // A's own mask share joins as plaintext, completing r = r¹+r²+r³
        // inside the encryption.
        let mut mask_rng = stream(cfg.seed, PartyId::ServerA, Purpose::Mask, k as u16, inference);
        let r = draw_vec(cfg, &mut mask_rng, t, dims.in_len);
        rec.insert(ShareKind::RemoteMask, k, inference, 2, r)?;
        let padded = pad_to(&rec.take(ShareKind::RemoteMask, k, inference)?, dims.dim);
        for (m, ct) in &mut rots {
            add_plain_assign(ctx, ct, &encode(ctx, &rotate_left(&padded, *m)));
        }
        let rots: Vec<Ciphertext> = rots.into_iter().map(|(_, ct)| ct).collect();
        tensors.push((k, tensor_block(ctx, &diags, &ws, &rots)?));
    }

    a_decrypt_corrections(ctx, cfg, skel, ep, rec, inference, tensors)?;

    for k in tr + 1..n {
        match cfg.mode {
            Mode::Seco => a_gc_forward(cfg, skel, t, ep, rec, inference, k)?,
            Mode::Delphi3 => {
                let unit = a_gc_evaluator_preprocess(cfg, skel, t, ep, rec, inference, k)?;
                pre.gc.insert(k, unit);
            }
            Mode::Delphi2 => {
                return Err(Error::Protocol(
                    "two-party mode has no remote segment".into(),
                ));
            }
        }
    }
    Ok(pre)
}

/// A's user-dependent remote preprocessing: the transition block's
/// product (over the user's mask rotations), its joint decryption, and
/// its garbled circuit.
#[allow(clippy::too_many_arguments)]
pub(crate) fn a_remote_stage2(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    pre: &mut ARemotePre,
    mask_rot_cts: &[Ciphertext],
) -> Result<()> {
    let t = ctx.ring.params.t;
    let n = skel.block_count();
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(());
    };
    let (diags, ws) = pre
        .tr_weights
        .take()
        .ok_or_else(|| Error::Protocol("transition weights already consumed".into()))?;
    let ct3 = tensor_block(ctx, &diags, &ws, mask_rot_cts)?;
    a_decrypt_corrections(ctx, cfg, skel, ep, rec, inference, vec![(tr, ct3)])?;
    if tr < n {
        match cfg.mode {
            Mode::Seco => a_gc_forward(cfg, skel, t, ep, rec, inference, tr)?,
            Mode::Delphi3 => {
                let unit = a_gc_evaluator_preprocess(cfg, skel, t, ep, rec, inference, tr)?;
                pre.gc.insert(tr, unit);
            }
            Mode::Delphi2 => {
                return Err(Error::Protocol(
                    "two-party mode has no remote segment".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Receive one block's weight-share material from both holders, summed
/// into joint-key ciphertexts of the full diagonals and blind.
fn a_receive_weights(
    ctx: &BfvCtx,
    skel: &Skeleton,
    ep: &mut Endpoint,
    k: usize,
) -> Result<(Vec<Ciphertext>, Ciphertext)> {
    let dims = skel.block(k);
    let mut diags = Vec::new();
    for _ in dims.active_offsets() {
        let fb = expect_at(ep, PartyId::ServerB, Phase::Preprocess, WEIGHT_DIAGS, k as u16)?;
        let mut ct = Ciphertext::from_bytes(&fb.payload)?;
        let fc = expect_at(ep, PartyId::ServerC, Phase::Preprocess, WEIGHT_DIAGS, k as u16)?;
        add_assign(ctx, &mut ct, &Ciphertext::from_bytes(&fc.payload)?);
        diags.push(ct);
    }
    let fb = expect_at(ep, PartyId::ServerB, Phase::Preprocess, WEIGHT_BLIND, k as u16)?;
    let mut ws = Ciphertext::from_bytes(&fb.payload)?;
    let fc = expect_at(ep, PartyId::ServerC, Phase::Preprocess, WEIGHT_BLIND, k as u16)?;
    add_assign(ctx, &mut ws, &Ciphertext::from_bytes(&fc.payload)?);
    Ok((diags, ws))
}

/// Drive one batch of two-round joint decryptions and record each block's
/// correction value.
#[allow(clippy::too_many_arguments)]
fn a_decrypt_corrections(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    tensors: Vec<(usize, Ciphertext3)>,
) -> Result<()> {
    let t = ctx.ring.params.t;
    for (k, ct3) in &tensors {
        let bytes = ct3.c2.to_bytes();
        ep.send(PartyId::ServerB, Phase::Preprocess, *k as u16, DEC_QUAD, bytes.clone())?;
        ep.send(PartyId::ServerC, Phase::Preprocess, *k as u16, DEC_QUAD, bytes)?;
    }
    let mut folded = Vec::new();
    for (k, ct3) in &tensors {
        let hb = recv_partial(ep, PartyId::ServerB, DEC_QUAD_SHARE, *k)?;
        let hc = recv_partial(ep, PartyId::ServerC, DEC_QUAD_SHARE, *k)?;
        folded.push((*k, fold_degree2(ctx, ct3, &[hb, hc])?));
    }
    for (k, ct) in &folded {
        let bytes = ct.c1.to_bytes();
        ep.send(PartyId::ServerB, Phase::Preprocess, *k as u16, DEC_LIN, bytes.clone())?;
        ep.send(PartyId::ServerC, Phase::Preprocess, *k as u16, DEC_LIN, bytes)?;
    }
    for (k, ct) in &folded {
        let pb = recv_partial(ep, PartyId::ServerB, DEC_LIN_SHARE, *k)?;
        let pc = recv_partial(ep, PartyId::ServerC, DEC_LIN_SHARE, *k)?;
        let pt = combine_decrypt(ctx, ct, &[pb, pc])?;
        let e = decode(ctx, &pt, skel.block(*k).out_len);
        let e = maybe_corrupt(cfg, skel, *k, t, e);
        rec.insert(ShareKind::Correction, *k, inference, 1, e)?;
    }
    Ok(())
}

fn recv_partial(ep: &mut Endpoint, from: PartyId, kind: u16, k: usize) -> Result<Partial> {
    let frame = expect_at(ep, from, Phase::Preprocess, kind, k as u16)?;
    Ok(Partial {
        holder: from.idx() as u8,
        value: RnsPoly::from_bytes(&frame.payload)?,
    })
}

/// A (in `seco`) fetches its circuit inputs by OT from the garbler and
/// forwards the labels to the evaluator, never touching the tables.
fn a_gc_forward(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    k: usize,
) -> Result<()> {
    let spec = relu_spec(skel, t, k);
    let bits = spec.bits();
    let correction = rec.take(ShareKind::Correction, k, inference)?;
    let own_mask = rec.take(ShareKind::RemoteMask, k + 1, inference)?;
    let mut choices = residues_to_bits(&correction, bits);
    choices.extend(residues_to_bits(&own_mask, bits));
    let labels = ot_recv(
        ep,
        cfg,
        PartyId::ServerB,
        Phase::Preprocess,
        k as u16,
        &REMOTE_OT,
        &choices,
        inference,
    )?;
    ep.send(
        PartyId::ServerC,
        Phase::Preprocess,
        k as u16,
        FORWARD_LABELS,
        labels_to_bytes(&labels),
    )
}

/// A (in `delphi3`) collects everything needed to evaluate block k:
/// tables and B's mask labels directly, its own inputs by OT, and C's
/// mask labels via C's forward.
fn a_gc_evaluator_preprocess(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    k: usize,
) -> Result<RemoteEvalUnit> {
    let spec = relu_spec(skel, t, k);
    let bits = spec.bits();
    let width = spec.values * bits;
    let circuit = build_three_party(&spec);
    let b = PartyId::ServerB;

    let frame = expect_at(ep, b, Phase::Preprocess, REMOTE_GC_TABLES, k as u16)?;
    let tables = GarbledTables::from_bytes(&frame.payload)?;
    let frame = expect_at(ep, b, Phase::Preprocess, GARBLER_MASK_LABELS, k as u16)?;
    let mask_b_labels = expect_labels(&frame.payload, width, "garbler mask labels", k)?;

    let correction = rec.take(ShareKind::Correction, k, inference)?;
    let own_mask = rec.take(ShareKind::RemoteMask, k + 1, inference)?;
    let mut choices = residues_to_bits(&correction, bits);
    choices.extend(residues_to_bits(&own_mask, bits));
    let a_input_labels = ot_recv(
        ep,
        cfg,
        b,
        Phase::Preprocess,
        k as u16,
        &REMOTE_OT,
        &choices,
        inference,
    )?;

    let frame = expect_at(ep, PartyId::ServerC, Phase::Preprocess, FORWARD_LABELS, k as u16)?;
    let mask_c_labels = expect_labels(&frame.payload, width, "forwarded mask labels", k)?;
    Ok(RemoteEvalUnit {
        circuit,
        tables,
        mask_b_labels,
        a_input_labels,
        mask_c_labels,
    })
}

/// Holder side of the hand-off: record the masked transition value A
/// broadcasts.
pub(crate) fn holder_receive_handoff(
    skel: &Skeleton,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<()> {
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(());
    };
    let frame = expect_at(ep, PartyId::ServerA, Phase::Transition, HANDOFF_VALUE, tr as u16)?;
    let held = Vec::<u64>::from_bytes(&frame.payload)?;
    if held.len() != skel.block(tr).in_len {
        return Err(Error::Protocol(format!(
            "hand-off value has {} entries, block {tr} takes {}",
            held.len(),
            skel.block(tr).in_len
        )));
    }
    rec.insert(ShareKind::HeldValue, tr, inference, 1, held)
}

/// Holder side of the remote online pass: compute each block's linear
/// share and run its garbled circuit in this mode's role; both holders
/// end up holding every subsequent masked activation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn holder_online(
    cfg: &RunConfig,
    skel: &Skeleton,
    view: &RemoteView,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    pre: &HolderPre,
) -> Result<()> {
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(());
    };
    let n = skel.block_count();
    let party = ep.party();

    for k in tr..=n {
        let block = view.block(k);
        let held = rec.take(ShareKind::HeldValue, k, inference)?;
        let s = rec.take(ShareKind::RemoteBlind, k, inference)?;
        let share = add_vec_t(&matvec_mod_t(&block.f_share, &held, t), &s, t);
        rec.insert(ShareKind::RemoteShare, k, inference, 1, share)?;
        if k == n {
            // The final linear share feeds the output phase instead of a
            // circuit.
            break;
        }
        let share = rec.take(ShareKind::RemoteShare, k, inference)?;
        let spec = relu_spec(skel, t, k);
        let bits = spec.bits();
        let value = match (cfg.mode, party) {
            (Mode::Seco, PartyId::ServerB) | (Mode::Delphi3, PartyId::ServerB) => {
                let evaluator = if cfg.mode == Mode::Seco {
                    PartyId::ServerC
                } else {
                    PartyId::ServerA
                };
                let unit = pre
                    .garbler
                    .get(&k)
                    .ok_or_else(|| Error::Protocol(format!("block {k} was never garbled")))?;
                let labels = unit.secrets.active_labels(
                    unit.circuit.group("share_b"),
                    &residues_to_bits(&share, bits),
                );
                ep.send(
                    evaluator,
                    Phase::Online,
                    k as u16,
                    REMOTE_SHARE_LABELS,
                    labels_to_bytes(&labels),
                )?;
                let pairs = unit.secrets.label_pairs(unit.circuit.group("share_c"));
                ot_send(
                    ep,
                    cfg,
                    PartyId::ServerC,
                    Phase::Online,
                    k as u16,
                    &ONLINE_OT,
                    &pairs,
                    inference,
                )?;
                let from = evaluator;
                let frame = expect_at(ep, from, Phase::Online, GC_VALUE, k as u16)?;
                Vec::<u64>::from_bytes(&frame.payload)?
            }
            (Mode::Seco, PartyId::ServerC) => {
                let unit = pre
                    .evaluator
                    .get(&k)
                    .ok_or_else(|| Error::Protocol(format!("no evaluator unit for block {k}")))?;
                let frame =
                    expect_at(ep, PartyId::ServerB, Phase::Online, REMOTE_SHARE_LABELS, k as u16)?;
                let sb = expect_labels(&frame.payload, spec.values * bits, "garbler share labels", k)?;
                let sc = ot_recv(
                    ep,
                    cfg,
                    PartyId::ServerB,
                    Phase::Online,
                    k as u16,
                    &ONLINE_OT,
                    &residues_to_bits(&share, bits),
                    inference,
                )?;
                let mut labels = sb;
                labels.extend(&unit.a_input_labels);
                labels.extend(&unit.mask_b_labels);
                labels.extend(&sc);
                labels.extend(&unit.mask_c_labels);
                let out = evaluate(&unit.circuit, &unit.tables, &labels)?;
                let value = bits_to_residues(&out, bits);
                ep.send(
                    PartyId::ServerB,
                    Phase::Online,
                    k as u16,
                    GC_VALUE,
                    value.to_bytes(),
                )?;
                value
            }
            (Mode::Delphi3, PartyId::ServerC) => {
                let sc = ot_recv(
                    ep,
                    cfg,
                    PartyId::ServerB,
                    Phase::Online,
                    k as u16,
                    &ONLINE_OT,
                    &residues_to_bits(&share, bits),
                    inference,
                )?;
                ep.send(
                    PartyId::ServerA,
                    Phase::Online,
                    k as u16,
                    ONLINE_FORWARD_LABELS,
                    labels_to_bytes(&sc),
                )?;
                let frame =
                    expect_at(ep, PartyId::ServerA, Phase::Online, GC_VALUE, k as u16)?;
                Vec::<u64>::from_bytes(&frame.payload)?
            }
            (mode, party) => {
                return Err(Error::Protocol(format!(
                    "party {} has no online role in mode {mode}",
                    party.label()
                )));
            }
        };
        if value.len() != skel.block(k).out_len {
            return Err(Error::Protocol(format!(
                "evaluated block {k} returned {} values, expected {}",
                value.len(),
                skel.block(k).out_len
            )));
        }
        rec.insert(ShareKind::HeldValue, k + 1, inference, 1, value)?;
    }
    Ok(())
}

/// A evaluates every remote circuit online (`delphi3` only) and returns
/// each masked activation to both holders.
pub(crate) fn a_remote_online(
    cfg: &RunConfig,
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    pre: &ARemotePre,
) -> Result<()> {
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(());
    };
    debug_assert_eq!(cfg.mode, Mode::Delphi3);
    let n = skel.block_count();
    for k in tr..n {
        let unit = pre
            .gc
            .get(&k)
            .ok_or_else(|| Error::Protocol(format!("no evaluator unit for block {k}")))?;
        let spec = relu_spec(skel, t, k);
        let bits = spec.bits();
        let width = spec.values * bits;
        let frame = expect_at(ep, PartyId::ServerB, Phase::Online, REMOTE_SHARE_LABELS, k as u16)?;
        let sb = expect_labels(&frame.payload, width, "garbler share labels", k)?;
        let frame =
            expect_at(ep, PartyId::ServerC, Phase::Online, ONLINE_FORWARD_LABELS, k as u16)?;
        let sc = expect_labels(&frame.payload, width, "forwarded share labels", k)?;
        let mut labels = sb;
        labels.extend(&unit.a_input_labels);
        labels.extend(&unit.mask_b_labels);
        labels.extend(&sc);
        labels.extend(&unit.mask_c_labels);
        let out = evaluate(&unit.circuit, &unit.tables, &labels)?;
        let value = bits_to_residues(&out, bits);
        let bytes = value.to_bytes();
        ep.send(PartyId::ServerB, Phase::Online, k as u16, GC_VALUE, bytes.clone())?;
        ep.send(PartyId::ServerC, Phase::Online, k as u16, GC_VALUE, bytes)?;
        // A sees only the masked activation; recorded for the audits, never
        // used by the flows.
        rec.insert(ShareKind::HeldValue, k + 1, inference, 0, value)?;
    }
    Ok(())
}

/// Holder side of the output phase: encrypt the final linear share under
/// the user's key.
pub(crate) fn holder_output(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    keys: &HolderKeys,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<()> {
    if skel.transition_ordinal().is_none() {
        return Ok(());
    }
    let n = skel.block_count();
    let dims = skel.block(n);
    let share = rec.take(ShareKind::RemoteShare, n, inference)?;
    let mut enc_rng = stream_aux(
        cfg.seed,
        ep.party(),
        Purpose::Encrypt,
        n as u16,
        inference,
        ENC_OUTPUT,
    );
    let ct = encrypt(
        ctx,
        &keys.user_pk,
        &encode(ctx, &pad_to(&share, dims.dim)),
        &mut enc_rng,
    );
    ep.send(
        PartyId::ServerA,
        Phase::Output,
        n as u16,
        OUTPUT_SHARE_CT,
        ct.to_bytes(),
    )
}

/// A's output phase: sum the holders' encrypted shares, add the final
/// correction in plaintext, and return the result to the user.
pub(crate) fn a_remote_output(
    ctx: &BfvCtx,
    skel: &Skeleton,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<()> {
    let n = skel.block_count();
    let dims = skel.block(n);
    let fb = expect_at(ep, PartyId::ServerB, Phase::Output, OUTPUT_SHARE_CT, n as u16)?;
    let mut ct = Ciphertext::from_bytes(&fb.payload)?;
    let fc = expect_at(ep, PartyId::ServerC, Phase::Output, OUTPUT_SHARE_CT, n as u16)?;
    add_assign(ctx, &mut ct, &Ciphertext::from_bytes(&fc.payload)?);
    let e = rec.take(ShareKind::Correction, n, inference)?;
    add_plain_assign(ctx, &mut ct, &encode(ctx, &pad_to(&e, dims.dim)));
    ep.send(
        PartyId::User,
        Phase::Output,
        LAYER_NONE,
        RESULT_CT,
        ct.to_bytes(),
    )
}
