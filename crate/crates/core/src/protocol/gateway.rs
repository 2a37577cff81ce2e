//! Gateway-segment flows: the user and server A jointly evaluate the
//! leading blocks.
//!
//! Per inference and block k ≤ g, preprocessing establishes
//! `y_c = F_k·r_k − s_k` at the user (via the user-keyed lattice scheme
//! and A's rotation plan) and, at ReLU sites, a garbled circuit whose
//! evaluator inputs the user fetched by oblivious transfer. Online, A
//! computes `y_s = F_k·(x_k−r_k) + b_k + s_k`, sends its garbler labels,
//! and the user evaluates `ReLU(trunc(y_s + y_c)) − r_{k+1} − d_{k+1}`,
//! returning a value A finishes by adding its password `d_{k+1}`. Neither
//! side ever holds a bare activation: the user's view is blinded by `s`,
//! A's by `r`.
//!
//! When the gateway segment ends without a ReLU, the user instead sends
//! `δ = y_c − r_tr` in preprocessing and A forms the hand-off as
//! `y_s + δ` online; when it ends at a ReLU, the hand-off *is* the last
//! circuit's output with `r_tr` as its next mask.

use std::collections::BTreeMap;

use crate::bfv::serial::Wire;
use crate::bfv::{
    decode, decrypt, encode, encrypt, eval::sub_plain_assign, linop::apply_rotations,
    linop::LinOpPlan, linop::PreparedDiagonals, BfvCtx, Ciphertext,
};
use crate::error::{Error, Result};
use crate::gc::{
    build_two_party, evaluate, garble, bits_to_residues, residues_to_bits, BoolCircuit,
    GarbledTables, GarblerSecrets, MaskedReluSpec,
};
use crate::nn::LinearForm;
use crate::params::{center_mod_t, to_residue_mod_t};
use crate::protocol::dealer::{
    add_vec_t, draw_vec, matvec_mod_t, pad_to, rotate_left, sub_vec_t,
};
use crate::protocol::messages::{
    expect_at, labels_from_bytes, labels_to_bytes, GC_TABLES, GC_VALUE, GARBLER_SHARE_LABELS,
    HANDOFF_DELTA, MASKED_INPUT, MASKED_LIN_CT, MASK_CT, MASK_ROTS, PASSWORD_LABELS,
    RESULT_CT, RESULT_PLAIN,
};
use crate::protocol::otflow::{ot_recv, ot_send, GATEWAY_OT};
use crate::protocol::rng::{stream, Purpose};
use crate::protocol::setup::{GatewayKeys, UserKeys};
use crate::protocol::shares::{ShareKind, ShareRecord};
use crate::protocol::{dealer::Skeleton, RunConfig};
use crate::transport::{Endpoint, PartyId, Phase, LAYER_NONE};

/// One garbled gateway block, user (evaluator) side.
pub(crate) struct UserGcUnit {
    circuit: BoolCircuit,
    tables: GarbledTables,
    /// Active labels for A's password input (sent directly).
    password_labels: Vec<u128>,
    /// Active labels for the user's own inputs (via OT):
    /// evaluator share then next mask.
    chosen_labels: Vec<u128>,
}

/// User-side output of gateway preprocessing for one inference.
pub(crate) struct UserPre {
    gc: BTreeMap<usize, UserGcUnit>,
}

/// One garbled gateway block, A (garbler) side.
pub(crate) struct ServerGcUnit {
    circuit: BoolCircuit,
    secrets: GarblerSecrets,
}

/// A-side output of gateway preprocessing for one inference.
pub(crate) struct GatewayPre {
    gc: BTreeMap<usize, ServerGcUnit>,
    delta: Option<Vec<u64>>,
    /// Encrypted rotations of the transition mask, one per active offset
    /// (consumed by the remote linear flow).
    pub mask_rot_cts: Vec<Ciphertext>,
}

/// A's residue-domain view of the gateway weights, prepared once per run.
pub(crate) struct GatewayWeights {
    /// Per gateway block: rows and bias as residues mod t.
    res: Vec<(Vec<Vec<u64>>, Vec<u64>)>,
    /// Per gateway block: rotation plan and NTT-domain diagonals.
    prepared: Vec<(LinOpPlan, PreparedDiagonals)>,
}

/// Lower A's gateway forms into residue matrices and rotation plans.
pub(crate) fn gateway_weights(ctx: &BfvCtx, forms: &[LinearForm], t: u64) -> GatewayWeights {
    let res = forms
        .iter()
        .map(|f| {
            let rows = f
                .rows
                .iter()
                .map(|row| row.iter().map(|&w| to_residue_mod_t(w, t)).collect())
                .collect();
            let bias = f.bias.iter().map(|&b| to_residue_mod_t(b, t)).collect();
            (rows, bias)
        })
        .collect();
    let prepared = forms
        .iter()
        .map(|f| {
            let plan = LinOpPlan::from_matrix(&f.rows, t);
            let diagonals = plan.prepare(ctx);
            (plan, diagonals)
        })
        .collect();
    GatewayWeights { res, prepared }
}

/// Ordinals of the gateway blocks that end in a ReLU (and therefore run a
/// garbled circuit).
fn gc_ordinals(skel: &Skeleton) -> Vec<usize> {
    (1..=skel.gateway_blocks)
        .filter(|&k| skel.block(k).relu_after)
        .collect()
}

/// Whether this run hands off un-truncated via δ (requires a non-empty
/// gateway segment and a remote segment).
fn delta_handoff(skel: &Skeleton) -> bool {
    skel.delta_remask && skel.gateway_blocks > 0 && skel.transition_ordinal().is_some()
}

/// The masked-ReLU circuit shape for block `k`.
pub(crate) fn relu_spec(skel: &Skeleton, t: u64, k: usize) -> MaskedReluSpec {
    let dims = skel.block(k);
    MaskedReluSpec {
        values: dims.out_len,
        t,
        shift: dims.shift,
    }
}

/// User side of gateway preprocessing for one inference: draw masks, send
/// them encrypted, decrypt the blinded products, and fetch garbled-circuit
/// inputs.
pub(crate) fn user_gateway_preprocess(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    keys: &UserKeys,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<UserPre> {
    let t = ctx.ring.params.t;
    let g = skel.gateway_blocks;
    let a = PartyId::ServerA;

    // Masks for every gateway block input, each used twice: once inside an
    // encryption (or the masked input), once as a circuit input (or δ).
    for k in 1..=g {
        let dims = skel.block(k);
        let mut mask_rng = stream(cfg.seed, PartyId::User, Purpose::Mask, k as u16, inference);
        let r = draw_vec(cfg, &mut mask_rng, t, dims.in_len);
        rec.insert(ShareKind::GatewayMask, k, inference, 2, r)?;
        let r = rec.take(ShareKind::GatewayMask, k, inference)?;
        let mut enc_rng = stream(cfg.seed, PartyId::User, Purpose::Encrypt, k as u16, inference);
        let ct = encrypt(ctx, &keys.pk, &encode(ctx, &pad_to(&r, dims.dim)), &mut enc_rng);
        ep.send(a, Phase::Preprocess, k as u16, MASK_CT, ct.to_bytes())?;
    }

    // Transition mask: rotations encrypted under the joint key, so A can
    // fold them into the shared-weight product it cannot decrypt alone.
    if let Some(tr) = skel.transition_ordinal() {
        let dims = skel.block(tr);
        let mut mask_rng = stream(cfg.seed, PartyId::User, Purpose::Mask, tr as u16, inference);
        let r = draw_vec(cfg, &mut mask_rng, t, dims.in_len);
        rec.insert(ShareKind::GatewayMask, tr, inference, 2, r)?;
        let r = rec.take(ShareKind::GatewayMask, tr, inference)?;
        let joint = keys
            .joint_pk
            .as_ref()
            .ok_or_else(|| Error::Protocol("transition requires the joint key".into()))?;
        let padded = pad_to(&r, dims.dim);
        let mut enc_rng = stream(cfg.seed, PartyId::User, Purpose::Encrypt, tr as u16, inference);
        for m in dims.active_offsets() {
            let ct = encrypt(ctx, joint, &encode(ctx, &rotate_left(&padded, m)), &mut enc_rng);
            ep.send(a, Phase::Preprocess, tr as u16, MASK_ROTS, ct.to_bytes())?;
        }
    }

    // Blinded products: y_c^k = F_k·r_k − s_k, decrypted under the user key.
    for k in 1..=g {
        let dims = skel.block(k);
        let frame = expect_at(ep, a, Phase::Preprocess, MASKED_LIN_CT, k as u16)?;
        let ct = Ciphertext::from_bytes(&frame.payload)?;
        let y_c = decode(ctx, &decrypt(ctx, &keys.sk, &ct), dims.out_len);
        #[cfg(feature = "insecure-test-modes")]
        let y_c = if cfg.insecure.corrupt_share && k == 1 && skel.transition_ordinal().is_none() {
            let mut bad = y_c;
            bad[0] = (bad[0] + 1) % t;
            bad
        } else {
            y_c
        };
        rec.insert(ShareKind::UserDecrypt, k, inference, 1, y_c)?;
    }

    // Garbled blocks: receive tables, fetch evaluator labels by OT, receive
    // password labels.
    let mut gc = BTreeMap::new();
    for k in gc_ordinals(skel) {
        let spec = relu_spec(skel, t, k);
        let bits = spec.bits();
        let circuit = build_two_party(&spec);
        let frame = expect_at(ep, a, Phase::Preprocess, GC_TABLES, k as u16)?;
        let tables = GarbledTables::from_bytes(&frame.payload)?;
        let y_c = rec.take(ShareKind::UserDecrypt, k, inference)?;
        let next_mask = rec.take(ShareKind::GatewayMask, k + 1, inference)?;
        let mut choices = residues_to_bits(&y_c, bits);
        choices.extend(residues_to_bits(&next_mask, bits));
        let chosen_labels = ot_recv(
            ep,
            cfg,
            a,
            Phase::Preprocess,
            k as u16,
            &GATEWAY_OT,
            &choices,
            inference,
        )?;
        let frame = expect_at(ep, a, Phase::Preprocess, PASSWORD_LABELS, k as u16)?;
        let password_labels = labels_from_bytes(&frame.payload)?;
        gc.insert(
            k,
            UserGcUnit {
                circuit,
                tables,
                password_labels,
                chosen_labels,
            },
        );
    }

    // Un-truncated hand-off: δ = y_c^g − r_tr lets A re-mask without a ReLU.
    if delta_handoff(skel) {
        let tr = skel.transition_ordinal().expect("checked above");
        let y_c = rec.take(ShareKind::UserDecrypt, skel.gateway_blocks, inference)?;
        let r_tr = rec.take(ShareKind::GatewayMask, tr, inference)?;
        let delta = sub_vec_t(&y_c, &r_tr, t);
        rec.insert(ShareKind::HandoffDelta, skel.gateway_blocks, inference, 0, delta.clone())?;
        ep.send(
            a,
            Phase::Preprocess,
            skel.gateway_blocks as u16,
            HANDOFF_DELTA,
            delta.to_bytes(),
        )?;
    }

    Ok(UserPre { gc })
}

/// Server A side of gateway preprocessing for one inference.
pub(crate) fn a_gateway_preprocess(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    keys: &GatewayKeys,
    weights: &GatewayWeights,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<GatewayPre> {
    let t = ctx.ring.params.t;
    let g = skel.gateway_blocks;
    let u = PartyId::User;

    let mut mask_cts = Vec::with_capacity(g);
    for k in 1..=g {
        let frame = expect_at(ep, u, Phase::Preprocess, MASK_CT, k as u16)?;
        mask_cts.push(Ciphertext::from_bytes(&frame.payload)?);
    }

    let mut mask_rot_cts = Vec::new();
    if let Some(tr) = skel.transition_ordinal() {
        for _ in skel.block(tr).active_offsets() {
            let frame = expect_at(ep, u, Phase::Preprocess, MASK_ROTS, tr as u16)?;
            mask_rot_cts.push(Ciphertext::from_bytes(&frame.payload)?);
        }
    }

    for (k, mask_ct) in (1..=g).zip(&mask_cts) {
        let dims = skel.block(k);
        let (_, diagonals) = &weights.prepared[k - 1];
        let mut product = apply_rotations(ctx, mask_ct, diagonals, &keys.user_galois);
        let mut blind_rng = stream(cfg.seed, PartyId::ServerA, Purpose::Blind, k as u16, inference);
        let s = draw_vec(cfg, &mut blind_rng, t, dims.out_len);
        rec.insert(ShareKind::GatewayBlind, k, inference, 2, s)?;
        let s = rec.take(ShareKind::GatewayBlind, k, inference)?;
        sub_plain_assign(ctx, &mut product, &encode(ctx, &pad_to(&s, dims.dim)));
        ep.send(u, Phase::Preprocess, k as u16, MASKED_LIN_CT, product.to_bytes())?;
    }

    let mut gc = BTreeMap::new();
    for k in gc_ordinals(skel) {
        let spec = relu_spec(skel, t, k);
        let bits = spec.bits();
        let circuit = build_two_party(&spec);
        let mut garble_rng = stream(cfg.seed, PartyId::ServerA, Purpose::Garble, k as u16, inference);
        let (tables, secrets) = garble(&circuit, &mut garble_rng);
        ep.send(u, Phase::Preprocess, k as u16, GC_TABLES, tables.to_bytes())?;

        let mut labels = secrets.label_pairs(circuit.group("evaluator_share"));
        labels.extend(secrets.label_pairs(circuit.group("next_mask")));
        ot_send(
            ep,
            cfg,
            u,
            Phase::Preprocess,
            k as u16,
            &GATEWAY_OT,
            &labels,
            inference,
        )?;

        let mut pwd_rng = stream(cfg.seed, PartyId::ServerA, Purpose::Password, k as u16, inference);
        let d = draw_vec(cfg, &mut pwd_rng, t, spec.values);
        rec.insert(ShareKind::Password, k, inference, 2, d)?;
        let d = rec.take(ShareKind::Password, k, inference)?;
        let password_labels =
            secrets.active_labels(circuit.group("password"), &residues_to_bits(&d, bits));
        ep.send(
            u,
            Phase::Preprocess,
            k as u16,
            PASSWORD_LABELS,
            labels_to_bytes(&password_labels),
        )?;
        gc.insert(k, ServerGcUnit { circuit, secrets });
    }

    let delta = if delta_handoff(skel) {
        let frame = expect_at(ep, u, Phase::Preprocess, HANDOFF_DELTA, g as u16)?;
        let delta = Vec::<u64>::from_bytes(&frame.payload)?;
        if delta.len() != skel.block(g).out_len {
            return Err(Error::Protocol(format!(
                "hand-off re-mask has {} entries, block {g} produces {}",
                delta.len(),
                skel.block(g).out_len
            )));
        }
        Some(delta)
    } else {
        None
    };

    Ok(GatewayPre {
        gc,
        delta,
        mask_rot_cts,
    })
}

/// User side of the gateway online pass: send the masked input, evaluate
/// each garbled block, and return the (still password-masked) outputs to A.
pub(crate) fn user_gateway_online(
    skel: &Skeleton,
    t: u64,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    input: &[i64],
    pre: &UserPre,
) -> Result<()> {
    let a = PartyId::ServerA;
    let x: Vec<u64> = input.iter().map(|&v| to_residue_mod_t(v, t)).collect();
    if x.len() != skel.block(1).in_len {
        return Err(Error::InvalidArgument(format!(
            "input has {} entries, model expects {}",
            x.len(),
            skel.block(1).in_len
        )));
    }
    let r1 = rec.take(ShareKind::GatewayMask, 1, inference)?;
    let masked = sub_vec_t(&x, &r1, t);
    ep.send(a, Phase::Online, 1, MASKED_INPUT, masked.to_bytes())?;

    for (&k, unit) in &pre.gc {
        let spec = relu_spec(skel, t, k);
        let frame = expect_at(ep, a, Phase::Online, GARBLER_SHARE_LABELS, k as u16)?;
        let mut labels = labels_from_bytes(&frame.payload)?;
        labels.extend(&unit.password_labels);
        labels.extend(&unit.chosen_labels);
        let bits = evaluate(&unit.circuit, &unit.tables, &labels)?;
        let value = bits_to_residues(&bits, spec.bits());
        ep.send(a, Phase::Online, k as u16, GC_VALUE, value.to_bytes())?;
    }
    Ok(())
}

/// Server A side of the gateway online pass. Returns the hand-off value
/// `x_tr − r_tr` when a remote segment follows, or the final blinded
/// share `y_s^N` when the whole network is gateway-side.
pub(crate) fn a_gateway_online(
    skel: &Skeleton,
    t: u64,
    weights: &GatewayWeights,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
    pre: &GatewayPre,
) -> Result<Vec<u64>> {
    let u = PartyId::User;
    let g = skel.gateway_blocks;

    let frame = expect_at(ep, u, Phase::Online, MASKED_INPUT, 1)?;
    let masked_input = Vec::<u64>::from_bytes(&frame.payload)?;
    if masked_input.len() != skel.block(1).in_len {
        return Err(Error::Protocol(format!(
            "masked input has {} entries, model expects {}",
            masked_input.len(),
            skel.block(1).in_len
        )));
    }
    rec.insert(ShareKind::HeldValue, 1, inference, 1, masked_input)?;

    for k in 1..=g {
        let dims = skel.block(k);
        let held = rec.take(ShareKind::HeldValue, k, inference)?;
        let (rows, bias) = &weights.res[k - 1];
        let s = rec.take(ShareKind::GatewayBlind, k, inference)?;
        let mut y_s = matvec_mod_t(rows, &held, t);
        y_s = add_vec_t(&add_vec_t(&y_s, bias, t), &s, t);
        rec.insert(ShareKind::GatewayShare, k, inference, 1, y_s)?;

        if let Some(unit) = pre.gc.get(&k) {
            let spec = relu_spec(skel, t, k);
            let y_s = rec.take(ShareKind::GatewayShare, k, inference)?;
            let labels = unit.secrets.active_labels(
                unit.circuit.group("garbler_share"),
                &residues_to_bits(&y_s, spec.bits()),
            );
            ep.send(
                u,
                Phase::Online,
                k as u16,
                GARBLER_SHARE_LABELS,
                labels_to_bytes(&labels),
            )?;
            let frame = expect_at(ep, u, Phase::Online, GC_VALUE, k as u16)?;
            let value = Vec::<u64>::from_bytes(&frame.payload)?;
            if value.len() != dims.out_len {
                return Err(Error::Protocol(format!(
                    "evaluated block {k} returned {} values, expected {}",
                    value.len(),
                    dims.out_len
                )));
            }
            let d = rec.take(ShareKind::Password, k, inference)?;
            let next = add_vec_t(&value, &d, t);
            rec.insert(ShareKind::HeldValue, k + 1, inference, 1, next)?;
        }
    }

    match skel.transition_ordinal() {
        None => {
            // Entire network gateway-side: the driver sends y_s^N plain in
            // the output phase.
            rec.take(ShareKind::GatewayShare, g, inference)
        }
        Some(tr) => {
            if let Some(delta) = &pre.delta {
                let y_s = rec.take(ShareKind::GatewayShare, g, inference)?;
                let handoff = add_vec_t(&y_s, delta, t);
                rec.insert(ShareKind::HeldValue, tr, inference, 1, handoff)?;
            }
            // A ReLU-terminated gateway (or a bare input when l = 0) already
            // recorded the held value under the transition ordinal.
            rec.take(ShareKind::HeldValue, tr, inference)
        }
    }
}

/// User side of the output phase: recombine A's plain share with the held
/// blind (gateway-only runs) or decrypt the aggregated output ciphertext
/// (runs with a remote segment), then centre into signed fixed point.
pub(crate) fn user_receive_output(
    ctx: &BfvCtx,
    skel: &Skeleton,
    keys: &UserKeys,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
    inference: u32,
) -> Result<Vec<i64>> {
    let t = ctx.ring.params.t;
    let a = PartyId::ServerA;
    let n = skel.block_count();
    let out_len = skel.output_len();

    let logits_res = if skel.transition_ordinal().is_none() {
        let frame = expect_at(ep, a, Phase::Output, RESULT_PLAIN, n as u16)?;
        let y_s = Vec::<u64>::from_bytes(&frame.payload)?;
        if y_s.len() != out_len {
            return Err(Error::Protocol(format!(
                "output share has {} entries, model produces {out_len}",
                y_s.len()
            )));
        }
        let y_c = rec.take(ShareKind::UserDecrypt, n, inference)?;
        add_vec_t(&y_s, &y_c, t)
    } else {
        let frame = expect_at(ep, a, Phase::Output, RESULT_CT, LAYER_NONE)?;
        let ct = Ciphertext::from_bytes(&frame.payload)?;
        decode(ctx, &decrypt(ctx, &keys.sk, &ct), out_len)
    };

    rec.insert(ShareKind::Logits, n, inference, 0, logits_res.clone())?;
    Ok(logits_res.iter().map(|&v| center_mod_t(v, t)).collect())
}
