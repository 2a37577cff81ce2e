//! Post-run audits: recombine the parties' share ledgers against the
//! plaintext oracle and check the run's hygiene claims.
//!
//! The audits run *outside* the protocol (only the harness, which dealt
//! every view, can call them) and read ledgers non-destructively:
//!
//! * **recombination** — for every block, the recorded shares sum to the
//!   oracle's `F·x_k + b_k` mod t: gateway blocks recombine A's blinded
//!   share with the user's decryption, remote blocks recombine both
//!   holders' shares with A's correction.
//! * **masked holdings** — every value a server holds "in the clear" is
//!   the oracle activation plus the recorded mask(s), i.e. servers only
//!   ever see masked activations.
//! * **weight shares** — the remote weight shares recombine to the model
//!   weights while each share alone carries no trace of them.
//! * **user transcript** — with a remote segment, no frame the user sends
//!   or receives references a block beyond the transition.
//! * **masking uniformity** — a χ² statistic over freshly masked values,
//!   for the statistical acceptance check.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::im2col::matvec;
use crate::nn::{infer_fixed, relu_trunc, Deployment};
use crate::params::{to_residue_mod_t, RingParams};
use crate::protocol::dealer::{
    add_mod_t, add_vec_t, remote_weight_shares, skeleton, uniform_residue, Skeleton,
};
use crate::protocol::driver::PartyOutcome;
use crate::protocol::run::RunOutcome;
use crate::protocol::shares::ShareKind;
use crate::protocol::RunConfig;
use crate::transport::{PartyId, LAYER_NONE};

fn res_vec(v: &[i64], t: u64) -> Vec<u64> {
    v.iter().map(|&x| to_residue_mod_t(x, t)).collect()
}

fn res_i128(v: i128, t: u64) -> u64 {
    v.rem_euclid(t as i128) as u64
}

/// The oracle's input to every block (`states[k-1]` feeds block `k`),
/// with the logits as the final entry. Centred fixed-point integers.
pub fn oracle_block_states(dep: &Deployment, input: &[i64]) -> Result<Vec<Vec<i64>>> {
    let mut states = Vec::with_capacity(dep.blocks.len() + 1);
    let mut x: Vec<i64> = input.to_vec();
    states.push(x.clone());
    for block in &dep.blocks {
        let pre = matvec(&block.form, &x);
        x = pre
            .into_iter()
            .map(|v| {
                let v = if block.relu_after {
                    relu_trunc(v, block.shift)
                } else {
                    v
                };
                i64::try_from(v)
                    .map_err(|_| Error::Model(format!("block {} overflowed i64", block.ordinal)))
            })
            .collect::<Result<_>>()?;
        states.push(x.clone());
    }
    Ok(states)
}

fn outcome_for(outcomes: &[PartyOutcome], party: PartyId) -> Result<&PartyOutcome> {
    outcomes
        .iter()
        .find(|o| o.party == party)
        .ok_or_else(|| Error::Protocol(format!("no outcome recorded for {party}")))
}

fn peek(
    outcome: &PartyOutcome,
    kind: ShareKind,
    ordinal: usize,
    inference: u32,
) -> Result<&[u64]> {
    outcome
        .shares
        .peek(kind, ordinal, inference)
        .ok_or_else(|| {
            Error::Protocol(format!(
                "{} never recorded {kind:?} for block {ordinal}, inference {inference}",
                outcome.party
            ))
        })
}

/// Check that every block's recorded shares recombine to the oracle's
/// linear output, for every inference. The returned error names the first
/// divergent block.
pub fn audit_recombination(
    cfg: &RunConfig,
    dep: &Deployment,
    inputs: &[Vec<i64>],
    outcomes: &[PartyOutcome],
) -> Result<()> {
    let t = RingParams::for_profile(cfg.profile).t;
    let skel = skeleton(dep);
    let g = skel.gateway_blocks;
    let user = outcome_for(outcomes, PartyId::User)?;
    let a = outcome_for(outcomes, PartyId::ServerA)?;
    let b = outcome_for(outcomes, PartyId::ServerB)?;
    let c = outcome_for(outcomes, PartyId::ServerC)?;

    for (inf, input) in inputs.iter().enumerate() {
        let inference = inf as u32;
        let states = oracle_block_states(dep, input)?;
        for k in 1..=skel.block_count() {
            let want: Vec<u64> = matvec(&dep.blocks[k - 1].form, &states[k - 1])
                .into_iter()
                .map(|v| res_i128(v, t))
                .collect();
            let got = if k <= g {
                let y_s = peek(a, ShareKind::GatewayShare, k, inference)?;
                let y_c = peek(user, ShareKind::UserDecrypt, k, inference)?;
                if y_s.len() != y_c.len() {
                    return Err(Error::Protocol(format!(
                        "block {k} shares disagree in length ({} vs {})",
                        y_s.len(),
                        y_c.len()
                    )));
                }
                add_vec_t(y_s, y_c, t)
            } else {
                let sb = peek(b, ShareKind::RemoteShare, k, inference)?;
                let sc = peek(c, ShareKind::RemoteShare, k, inference)?;
                let e = peek(a, ShareKind::Correction, k, inference)?;
                if sb.len() != sc.len() || sb.len() != e.len() {
                    return Err(Error::Protocol(format!(
                        "block {k} shares disagree in length ({}, {}, {})",
                        sb.len(),
                        sc.len(),
                        e.len()
                    )));
                }
                add_vec_t(&add_vec_t(sb, sc, t), e, t)
            };
            if got != want {
                return Err(Error::Protocol(format!(
                    "block {k} recombines wrongly on inference {inf}: the shares do not \
                     sum to the oracle's linear output"
                )));
            }
        }
    }
    Ok(())
}

/// Check that every held value is the oracle activation under the recorded
/// mask(s): user-masked up to the transition, three-share-masked beyond it.
pub fn audit_masked_holdings(
    cfg: &RunConfig,
    dep: &Deployment,
    inputs: &[Vec<i64>],
    outcomes: &[PartyOutcome],
) -> Result<()> {
    let t = RingParams::for_profile(cfg.profile).t;
    let skel = skeleton(dep);
    let tr = skel.transition_ordinal();
    let user = outcome_for(outcomes, PartyId::User)?;
    let servers: Vec<&PartyOutcome> = [PartyId::ServerA, PartyId::ServerB, PartyId::ServerC]
        .iter()
        .map(|&p| outcome_for(outcomes, p))
        .collect::<Result<_>>()?;

    let states: Vec<Vec<Vec<u64>>> = inputs
        .iter()
        .map(|input| {
            Ok(oracle_block_states(dep, input)?
                .iter()
                .map(|x| res_vec(x, t))
                .collect())
        })
        .collect::<Result<_>>()?;

    for outcome in outcomes {
        for (&(kind, k, inference), held) in outcome.shares.iter() {
            if kind != ShareKind::HeldValue {
                continue;
            }
            let x_k = states
                .get(inference as usize)
                .and_then(|s| s.get(k - 1))
                .ok_or_else(|| {
                    Error::Protocol(format!(
                        "{} holds a value for unknown block {k}, inference {inference}",
                        outcome.party
                    ))
                })?;
            let mut unmasked = held.to_vec();
            match tr {
                Some(tr_ord) if k > tr_ord => {
                    // Remote mask: three additive server shares.
                    for server in &servers {
                        let share = peek(server, ShareKind::RemoteMask, k, inference)?;
                        if share.len() != unmasked.len() {
                            return Err(Error::Protocol(format!(
                                "mask share length mismatch at block {k}"
                            )));
                        }
                        unmasked = add_vec_t(&unmasked, share, t);
                    }
                }
                _ => {
                    // Gateway (or transition) mask: drawn by the user alone.
                    let r = peek(user, ShareKind::GatewayMask, k, inference)?;
                    if r.len() != unmasked.len() {
                        return Err(Error::Protocol(format!(
                            "mask length mismatch at block {k}"
                        )));
                    }
                    unmasked = add_vec_t(&unmasked, r, t);
                }
            }
            if &unmasked != x_k {
                return Err(Error::Protocol(format!(
                    "{} holds block {k} (inference {inference}) under a mask that does \
                     not restore the oracle activation",
                    outcome.party
                )));
            }
        }
    }
    Ok(())
}

/// Check that the dealt remote weight shares recombine to the model's
/// residue weights, and that neither share alone equals them.
pub fn audit_weight_shares(dep: &Deployment, t: u64, seed: u64) -> Result<()> {
    let b = remote_weight_shares(dep, t, seed, PartyId::ServerB)?;
    let c = remote_weight_shares(dep, t, seed, PartyId::ServerC)?;
    for (sb, sc) in b.blocks.iter().zip(&c.blocks) {
        let form = &dep.blocks[sb.ordinal - 1].form;
        let mut b_differs = false;
        let mut c_differs = false;
        for (i, row) in form.rows.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                let want = to_residue_mod_t(w, t);
                if add_mod_t(sb.f_share[i][j], sc.f_share[i][j], t) != want {
                    return Err(Error::Protocol(format!(
                        "weight shares of block {} do not recombine at ({i},{j})",
                        sb.ordinal
                    )));
                }
                b_differs |= sb.f_share[i][j] != want;
                c_differs |= sc.f_share[i][j] != want;
            }
        }
        for (i, &w) in form.bias.iter().enumerate() {
            let want = to_residue_mod_t(w, t);
            if add_mod_t(sb.b_share[i], sc.b_share[i], t) != want {
                return Err(Error::Protocol(format!(
                    "bias shares of block {} do not recombine at {i}",
                    sb.ordinal
                )));
            }
            b_differs |= sb.b_share[i] != want;
            c_differs |= sc.b_share[i] != want;
        }
        if !(b_differs && c_differs) {
            return Err(Error::Protocol(format!(
                "a weight share of block {} equals the plain weights",
                sb.ordinal
            )));
        }
    }
    Ok(())
}

/// Check that the user never touched a frame about a block beyond the
/// transition (vacuous without a remote segment).
pub fn audit_user_transcript(skel: &Skeleton, outcomes: &[PartyOutcome]) -> Result<()> {
    let Some(tr) = skel.transition_ordinal() else {
        return Ok(());
    };
    let user = outcome_for(outcomes, PartyId::User)?;
    for info in &user.tally.transcript {
        if info.layer != LAYER_NONE && info.layer as usize > tr {
            return Err(Error::Protocol(format!(
                "the user touched a frame for block {} (kind {}), beyond the \
                 transition block {tr}",
                info.layer, info.kind
            )));
        }
    }
    Ok(())
}

/// χ² statistic of `samples` fresh maskings of one fixed value, bucketed
/// into `bins` equal residue ranges. Under uniform masking this follows a
/// χ² distribution with `bins − 1` degrees of freedom.
pub fn masking_chi2(t: u64, samples: usize, bins: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let protected = t / 3;
    let mut counts = vec![0u64; bins];
    for _ in 0..samples {
        let r = uniform_residue(&mut rng, t);
        let masked = add_mod_t(protected, r, t);
        let bin = ((masked as u128 * bins as u128) / t as u128) as usize;
        counts[bin] += 1;
    }
    let expected = samples as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Run every audit that applies to a completed run, and check the
/// predictions against the oracle. Errors name the first divergence.
pub fn verify_run(
    cfg: &RunConfig,
    dep: &Deployment,
    inputs: &[Vec<i64>],
    run: &RunOutcome,
) -> Result<()> {
    let t = RingParams::for_profile(cfg.profile).t;
    audit_weight_shares(dep, t, cfg.seed)?;
    audit_recombination(cfg, dep, inputs, &run.outcomes)?;
    audit_masked_holdings(cfg, dep, inputs, &run.outcomes)?;
    audit_user_transcript(&skeleton(dep), &run.outcomes)?;
    if run.predictions.len() != inputs.len() {
        return Err(Error::Protocol(format!(
            "{} predictions for {} inputs",
            run.predictions.len(),
            inputs.len()
        )));
    }
    for (i, (input, got)) in inputs.iter().zip(&run.predictions).enumerate() {
        let want = infer_fixed(dep, input)?;
        if got != &want {
            return Err(Error::Protocol(format!(
                "inference {i} predicts {got:?}, the oracle computes {want:?}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_accepts_uniform_masking() {
        // df = 63, α = 0.01 critical value 92.01.
        for seed in 0..3 {
            let stat = masking_chi2(786_433, 10_000, 64, seed);
            assert!(stat < 92.01, "seed {seed}: χ² = {stat}");
        }
    }

    #[test]
    fn chi2_rejects_constant_masking() {
        // All mass in one bin: χ² ≈ samples · (bins − 1).
        let t = 786_433u64;
        let bins = 64usize;
        let samples = 10_000usize;
        let mut counts = vec![0u64; bins];
        let masked = t / 3; // what "masking with zero" leaves behind
        let bin = ((masked as u128 * bins as u128) / t as u128) as usize;
        counts[bin] = samples as u64;
        let expected = samples as f64 / bins as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat > 92.01 * 100.0, "χ² = {stat}");
    }
}
