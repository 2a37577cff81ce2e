//! Per-party protocol scripts: what each of the four parties does from
//! first frame to last, given its private view of the run.
//!
//! A party's knowledge is its [`PartyView`] variant — the user holds the
//! inputs, A holds the gateway weights, B and C hold remote weight shares.
//! Everything else (dimensions, mode, seed) is public [`RunConfig`] and
//! skeleton. The script runs setup once, then loops over inferences in
//! phase order, and finishes into a [`PartyOutcome`] carrying the traffic
//! tally, the share ledger for the audits, and (user only) the
//! predictions.

use crate::bfv::serial::Wire;
use crate::bfv::BfvCtx;
use crate::error::{Error, Result};
use crate::nn::LinearForm;
use crate::params::RingParams;
use crate::protocol::dealer::{RemoteView, Skeleton};
use crate::protocol::gateway::{
    a_gateway_online, a_gateway_preprocess, gateway_weights, user_gateway_online,
    user_gateway_preprocess, user_receive_output,
};
use crate::protocol::messages::{HANDOFF_VALUE, RESULT_PLAIN};
use crate::protocol::remote::{
    a_remote_online, a_remote_output, a_remote_stage1, a_remote_stage2, holder_online,
    holder_output, holder_preprocess, holder_receive_handoff,
};
use crate::protocol::setup::{gateway_setup, holder_setup, user_setup};
use crate::protocol::shares::ShareRecord;
use crate::protocol::{Mode, RunConfig};
use crate::transport::{Endpoint, PartyId, PartyTally, Phase};

/// One party's private knowledge going into a run.
pub enum PartyView {
    /// The user: inference inputs, one vector per inference.
    User { inputs: Vec<Vec<i64>> },
    /// Server A: the gateway blocks' weights in the clear.
    Gateway { forms: Vec<LinearForm> },
    /// Server B or C: additive shares of the remote blocks' weights.
    Remote { view: RemoteView },
}

/// What a party walks away with after a run.
pub struct PartyOutcome {
    /// Who ran this script.
    pub party: PartyId,
    /// Traffic and timing, per phase and peer, with the full transcript.
    pub tally: PartyTally,
    /// Every secret the party recorded, with use budgets (audit input).
    pub shares: ShareRecord,
    /// The predictions, on the user's outcome only.
    pub predictions: Option<Vec<Vec<i64>>>,
}

/// Run one party's end of the protocol to completion.
pub fn run_party(
    cfg: &RunConfig,
    skel: &Skeleton,
    view: PartyView,
    mut ep: Endpoint,
) -> Result<PartyOutcome> {
    let party = ep.party();
    let ctx = BfvCtx::new(RingParams::for_profile(cfg.profile));
    let mut rec = ShareRecord::new();
    let predictions = match (party, view) {
        (PartyId::User, PartyView::User { inputs }) => {
            Some(run_user(&ctx, cfg, skel, inputs, &mut ep, &mut rec)?)
        }
        (PartyId::ServerA, PartyView::Gateway { forms }) => {
            run_gateway(&ctx, cfg, skel, forms, &mut ep, &mut rec)?;
            None
        }
        (PartyId::ServerB | PartyId::ServerC, PartyView::Remote { view }) => {
            run_holder(&ctx, cfg, skel, view, &mut ep, &mut rec)?;
            None
        }
        (party, _) => {
            return Err(Error::InvalidArgument(format!(
                "view does not belong to {party}"
            )));
        }
    };
    Ok(PartyOutcome {
        party,
        tally: ep.finish(),
        shares: rec,
        predictions,
    })
}

fn run_user(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    inputs: Vec<Vec<i64>>,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
) -> Result<Vec<Vec<i64>>> {
    if inputs.len() != cfg.inference_count {
        return Err(Error::InvalidArgument(format!(
            "{} inputs for {} inferences",
            inputs.len(),
            cfg.inference_count
        )));
    }
    let t = ctx.ring.params.t;
    let keys = user_setup(ctx, cfg, ep)?;
    let mut predictions = Vec::with_capacity(inputs.len());
    for (inf, input) in inputs.iter().enumerate() {
        let inference = inf as u32;
        ep.set_phase(Phase::Preprocess);
        let pre = user_gateway_preprocess(ctx, cfg, skel, &keys, ep, rec, inference)?;
        ep.set_phase(Phase::Online);
        user_gateway_online(skel, t, ep, rec, inference, input, &pre)?;
        ep.set_phase(Phase::Output);
        predictions.push(user_receive_output(ctx, skel, &keys, ep, rec, inference)?);
    }
    Ok(predictions)
}

fn run_gateway(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    forms: Vec<LinearForm>,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
) -> Result<()> {
    if forms.len() != skel.gateway_blocks {
        return Err(Error::InvalidArgument(format!(
            "{} gateway forms for {} gateway blocks",
            forms.len(),
            skel.gateway_blocks
        )));
    }
    let t = ctx.ring.params.t;
    let n = skel.block_count();
    let keys = gateway_setup(ctx, cfg, ep)?;
    let weights = gateway_weights(ctx, &forms, t);
    for inf in 0..cfg.inference_count {
        let inference = inf as u32;
        ep.set_phase(Phase::Preprocess);
        let mut remote_pre = a_remote_stage1(ctx, cfg, skel, ep, rec, inference)?;
        let gateway_pre = a_gateway_preprocess(ctx, cfg, skel, &keys, &weights, ep, rec, inference)?;
        a_remote_stage2(
            ctx,
            cfg,
            skel,
            ep,
            rec,
            inference,
            &mut remote_pre,
            &gateway_pre.mask_rot_cts,
        )?;

        ep.set_phase(Phase::Online);
        let final_share = a_gateway_online(skel, t, &weights, ep, rec, inference, &gateway_pre)?;

        match skel.transition_ordinal() {
            None => {
                // Whole network gateway-side: A's blinded logits share goes
                // back plain; the user holds the counter-blind.
                ep.set_phase(Phase::Output);
                ep.send(
                    PartyId::User,
                    Phase::Output,
                    n as u16,
                    RESULT_PLAIN,
                    final_share.to_bytes(),
                )?;
            }
            Some(tr) => {
                ep.set_phase(Phase::Transition);
                let bytes = final_share.to_bytes();
                ep.send(
                    PartyId::ServerB,
                    Phase::Transition,
                    tr as u16,
                    HANDOFF_VALUE,
                    bytes.clone(),
                )?;
                ep.send(
                    PartyId::ServerC,
                    Phase::Transition,
                    tr as u16,
                    HANDOFF_VALUE,
                    bytes,
                )?;
                if cfg.mode == Mode::Delphi3 {
                    ep.set_phase(Phase::Online);
                    a_remote_online(cfg, skel, t, ep, rec, inference, &remote_pre)?;
                }
                ep.set_phase(Phase::Output);
                a_remote_output(ctx, skel, ep, rec, inference)?;
            }
        }
    }
    Ok(())
}

fn run_holder(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    skel: &Skeleton,
    view: RemoteView,
    ep: &mut Endpoint,
    rec: &mut ShareRecord,
) -> Result<()> {
    if view.party != ep.party() {
        return Err(Error::InvalidArgument(format!(
            "remote view for {} handed to {}",
            view.party,
            ep.party()
        )));
    }
    let t = ctx.ring.params.t;
    let Some(keys) = holder_setup(ctx, cfg, ep)? else {
        // Two-party mode: B and C hold nothing and exchange no bytes.
        return Ok(());
    };
    for inf in 0..cfg.inference_count {
        let inference = inf as u32;
        ep.set_phase(Phase::Preprocess);
        let pre = holder_preprocess(ctx, cfg, skel, &view, &keys, ep, rec, inference)?;
        ep.set_phase(Phase::Transition);
        holder_receive_handoff(skel, ep, rec, inference)?;
        ep.set_phase(Phase::Online);
        holder_online(cfg, skel, &view, t, ep, rec, inference, &pre)?;
        ep.set_phase(Phase::Output);
        holder_output(ctx, cfg, skel, &keys, ep, rec, inference)?;
    }
    Ok(())
}
