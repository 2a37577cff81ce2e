//! Multi-party harness: validate a run, deal each party its private view,
//! and execute all four parties over in-process transport.
//!
//! The harness is the only place where every view exists at once — it
//! plays the trusted dealer for weight shares and inputs, then hands each
//! thread exactly one [`PartyView`]. The party scripts themselves never
//! see another party's secrets; the audits inspect the returned ledgers
//! to prove it.

use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::nn::Deployment;
use crate::params::RingParams;
use crate::protocol::dealer::{gateway_forms, remote_weight_shares, skeleton};
use crate::protocol::driver::{run_party, PartyOutcome, PartyView};
use crate::protocol::{Mode, RunConfig};
use crate::transport::{local, MetricsReport, PartyId, PartyTally};

/// How long any party may block on a single receive before the run is
/// declared wedged. Generous: paper-profile preprocessing legitimately
/// keeps peers waiting.
const MESH_TIMEOUT: Duration = Duration::from_secs(120);

/// Everything a completed run produced.
pub struct RunOutcome {
    /// Per-inference predictions, as centred fixed-point integers.
    pub predictions: Vec<Vec<i64>>,
    /// Communication and timing report.
    pub metrics: MetricsReport,
    /// Per-party tallies and share ledgers, in party order.
    pub outcomes: Vec<PartyOutcome>,
}

/// Validate the configuration against the deployment and run all four
/// parties to completion on local transport.
pub fn execute(cfg: &RunConfig, dep: &Deployment, inputs: &[Vec<i64>]) -> Result<RunOutcome> {
    let params = RingParams::for_profile(cfg.profile);
    let t = params.t;
    dep.check_capacity(t, params.slots())?;
    let skel = skeleton(dep);
    let n = skel.block_count();
    let g = skel.gateway_blocks;

    if cfg.mode == Mode::Delphi2 && skel.transition_ordinal().is_some() {
        return Err(Error::Config(format!(
            "mode delphi2 keeps every layer gateway-side; {g} of {n} blocks is not a valid split"
        )));
    }
    if skel.block(n).relu_after {
        return Err(Error::Config(
            "the final block must not end in a ReLU".into(),
        ));
    }
    for k in 1..n {
        if !skel.block(k).relu_after && k != g {
            return Err(Error::Config(format!(
                "block {k} has no ReLU; only the last gateway block may omit one"
            )));
        }
    }
    let expect_delta = skel.transition_ordinal().is_some() && g > 0 && !skel.block(g).relu_after;
    if skel.delta_remask != expect_delta {
        return Err(Error::Config(
            "hand-off metadata disagrees with the block structure".into(),
        ));
    }
    if inputs.len() != cfg.inference_count {
        return Err(Error::Config(format!(
            "{} inputs supplied for {} inferences",
            inputs.len(),
            cfg.inference_count
        )));
    }
    for (i, input) in inputs.iter().enumerate() {
        if input.len() != dep.input_len() {
            return Err(Error::Config(format!(
                "input {i} has {} entries, the model takes {}",
                input.len(),
                dep.input_len()
            )));
        }
        let bound = 1i64 << dep.scale_bits;
        if let Some(v) = input.iter().find(|v| v.unsigned_abs() > bound as u64) {
            return Err(Error::Config(format!(
                "input {i} holds {v}, outside the fixed-point range ±{bound}"
            )));
        }
    }

    let views: Vec<(PartyId, PartyView)> = vec![
        (
            PartyId::User,
            PartyView::User {
                inputs: inputs.to_vec(),
            },
        ),
        (
            PartyId::ServerA,
            PartyView::Gateway {
                forms: gateway_forms(dep),
            },
        ),
        (
            PartyId::ServerB,
            PartyView::Remote {
                view: remote_weight_shares(dep, t, cfg.seed, PartyId::ServerB)?,
            },
        ),
        (
            PartyId::ServerC,
            PartyView::Remote {
                view: remote_weight_shares(dep, t, cfg.seed, PartyId::ServerC)?,
            },
        ),
    ];

    let mut endpoints = local::full_mesh(MESH_TIMEOUT);
    let results: Vec<(PartyId, Result<PartyOutcome>)> = thread::scope(|scope| {
        let mut handles = Vec::new();
        for (party, view) in views {
            let ep = endpoints.remove(&party).expect("endpoint for every party");
            let skel = &skel;
            handles.push((party, scope.spawn(move || run_party(cfg, skel, view, ep))));
        }
        handles
            .into_iter()
            .map(|(party, handle)| {
                let res = handle
                    .join()
                    .unwrap_or_else(|_| Err(Error::Protocol(format!("party {party} panicked"))));
                (party, res)
            })
            .collect()
    });

    // A timeout is usually the *symptom* of another party's failure (its
    // peers starve once it stops sending), so report a substantive error
    // over a timeout whenever one exists.
    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_timeout: Option<Error> = None;
    let mut first_other: Option<Error> = None;
    for (_, res) in results {
        match res {
            Ok(out) => outcomes.push(out),
            Err(e @ Error::Timeout(_)) => {
                first_timeout.get_or_insert(e);
            }
            Err(e) => {
                first_other.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_other {
        return Err(e);
    }
    if let Some(e) = first_timeout {
        return Err(e);
    }

    let predictions = outcomes
        .iter()
        .find_map(|o| o.predictions.clone())
        .ok_or_else(|| Error::Protocol("run produced no predictions".into()))?;
    let tallies: Vec<PartyTally> = outcomes.iter().map(|o| o.tally.clone()).collect();
    let metrics = MetricsReport::from_tallies(cfg.run_id(), cfg.mode.name(), cfg.l, &tallies);
    Ok(RunOutcome {
        predictions,
        metrics,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{self, infer_fixed, lower};
    use crate::params::ProfileId;

    fn config(mode: Mode, l: usize, inferences: usize) -> RunConfig {
        RunConfig {
            mode,
            l,
            profile: ProfileId::Desk,
            seed: 7,
            model_name: "minionn-toy".into(),
            inference_count: inferences,
            #[cfg(feature = "insecure-test-modes")]
            insecure: Default::default(),
        }
    }

    fn run_and_check(mode: Mode, l: usize) {
        let model = nn::minionn_toy(1);
        let dep = lower(&model, l).expect("lower");
        let inputs = nn::random_inputs(&model, 2, 99);
        let cfg = config(mode, l, inputs.len());
        let out = execute(&cfg, &dep, &inputs).expect("run");
        for (input, got) in inputs.iter().zip(&out.predictions) {
            let want = infer_fixed(&dep, input).expect("oracle");
            assert_eq!(got, &want, "mode {mode}, split {l}");
        }
    }

    #[test]
    fn split_run_matches_oracle() {
        run_and_check(Mode::Seco, 2);
    }

    #[test]
    fn full_gateway_run_matches_oracle() {
        let l = nn::minionn_toy(1).layer_count();
        run_and_check(Mode::Delphi2, l);
    }

    #[test]
    fn three_server_baseline_matches_oracle() {
        run_and_check(Mode::Delphi3, 2);
    }

    #[test]
    fn full_remote_run_matches_oracle() {
        run_and_check(Mode::Seco, 0);
    }

    #[test]
    fn delphi2_rejects_a_split() {
        let model = nn::minionn_toy(1);
        let dep = lower(&model, 1).expect("lower");
        let inputs = nn::random_inputs(&model, 1, 5);
        let cfg = config(Mode::Delphi2, 1, 1);
        let err = execute(&cfg, &dep, &inputs).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }
}
