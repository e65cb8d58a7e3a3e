use std::collections::HashMap;

use rand::Rng;

use crate::compstate::{decompose, ActionRef, ComposedObject, Decomposition, Library, TransitionParams};
use crate::domain::{DatasetObject, Domain};
use crate::error::{Error, Result};
use crate::gflownet::policy::{Decision, PolicyModel};
use crate::gflownet::sampler::{Rollouts, Trajectory};
use crate::nn::{Matrix, Tape, Var};
use crate::schedule::Schedule;
use crate::stateflow::{interpolate, Predictor};

/// `(log_Z + sum log P_F - log R)^2` for a single trajectory.
pub fn tb_loss_value(log_z: f64, sum_log_pf: f64, reward: f64) -> Result<f64> {
    if !(reward > 0.0) {
        return Err(Error::Invariant(format!("trajectory balance needs a positive reward, got {reward}")));
    }
    Ok((log_z + sum_log_pf - reward.ln()).powi(2))
}

/// Mean trajectory-balance loss over `trajs`, recomputing every policy
/// log-probability on the tape. Distinct prefixes are evaluated once.
pub fn tb_loss<P: Predictor + Sync + ?Sized>(
    policy: &PolicyModel,
    tape: &mut Tape,
    rollouts: &Rollouts<'_, P>,
    trajs: &[Trajectory],
) -> Result<Var> {
    if trajs.is_empty() {
        return Err(Error::Empty("trajectory batch".into()));
    }
    for t in trajs {
        if !(t.reward > 0.0) || !t.log_reward.is_finite() {
            return Err(Error::Invariant(format!("trajectory balance needs a positive reward, got {}", t.reward)));
        }
    }
    // distinct decision prefixes in first-visit order
    let mut index: HashMap<Vec<ActionRef>, usize> = HashMap::new();
    let mut prefixes: Vec<Vec<ActionRef>> = Vec::new();
    for t in trajs {
        let acts = t.actions();
        for k in 0..acts.len() {
            let p = acts[..k].to_vec();
            if !index.contains_key(&p) {
                index.insert(p.clone(), prefixes.len());
                prefixes.push(p);
            }
        }
    }
    let states = prefixes.iter().map(|p| rollouts.state(p)).collect::<Result<Vec<_>>>()?;
    let actions = states.iter().map(|x| rollouts.domain.action_space(x)).collect::<Result<Vec<_>>>()?;
    let decisions: Vec<Decision<'_>> = prefixes
        .iter()
        .zip(&states)
        .zip(&actions)
        .map(|((p, x), a)| Decision { x, step: rollouts.decision_step(p.len()), actions: a })
        .collect();
    let mut offsets = Vec::with_capacity(actions.len());
    let mut acc = 0;
    for a in &actions {
        offsets.push(acc);
        acc += a.len();
    }
    let lp = policy.log_probs_on_tape(tape, rollouts.domain.library(), rollouts.sched, &decisions, false)?;

    let mut picks = Vec::new();
    let mut owner = Vec::new();
    for (ti, t) in trajs.iter().enumerate() {
        let acts = t.actions();
        for k in 0..acts.len() {
            let d = index[&acts[..k]];
            let j = actions[d].iter().position(|a| *a == acts[k]).ok_or_else(|| {
                Error::Invariant("trajectory action missing from the legal set".into())
            })?;
            picks.push(offsets[d] + j);
            owner.push(ti);
        }
    }
    let chosen = tape.gather(lp.log_probs, &picks)?;
    let sums = tape.segment_sum(chosen, &owner, trajs.len())?;
    let z = tape.param(policy.store(), policy.log_z_id());
    let zs = tape.gather(z, &vec![0; trajs.len()])?;
    let lhs = tape.add(zs, sums)?;
    let log_r = tape.constant(Matrix::column(trajs.iter().map(|t| t.log_reward).collect()));
    let diff = tape.sub(lhs, log_r)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / trajs.len() as f64))
}

/// One supervised decision: the state before a component was added and
/// the action that added it.
#[derive(Debug, Clone, PartialEq)]
pub struct CeExample {
    pub x: ComposedObject,
    pub step: u32,
    pub actions: Vec<ActionRef>,
    pub target: usize,
}

/// Decision points along a decomposed object. Each state holds the
/// components generated so far, noise-free interpolated at the next
/// generation step, with self-conditioning set to the clean states.
pub fn ce_examples(
    domain: &Domain,
    sched: &Schedule,
    d: &Decomposition,
    params: &TransitionParams,
) -> Result<Vec<CeExample>> {
    let lib: &Library = domain.library();
    let mut out = Vec::with_capacity(d.components.len());
    let mut no_noise = crate::rng::stream(0, &[]);
    for i in 0..d.components.len() {
        let step = d.components[i].gen_step;
        let x = if i == 0 {
            ComposedObject::empty()
        } else {
            let prefix = Decomposition {
                components: d.components[..i].to_vec(),
                coords: d.coords[..i].to_vec(),
                order: d.order[..i].to_vec(),
            };
            let s = interpolate(lib, sched, &prefix, sched.time(step)?, 0.0, params, &mut no_noise)?;
            let mut x = s.x_t;
            x.set_self_cond(prefix.coords.clone())?;
            x
        };
        let actions = domain.action_space(&x).map_err(|e| Error::DataPipeline(format!("component {i}: {e}")))?;
        let full = ComposedObject::from_components(lib, &d.components[..=i], params)?;
        let truth = full.action_for(i);
        let target = actions.iter().position(|a| *a == truth).ok_or_else(|| {
            Error::DataPipeline(format!("ground-truth action {} is not legal", truth.key(lib)))
        })?;
        out.push(CeExample { x, step, actions, target });
    }
    Ok(out)
}

/// Examples from randomly decomposed dataset objects.
pub fn ce_batch<R: Rng + ?Sized>(
    domain: &Domain,
    sched: &Schedule,
    objects: &[&DatasetObject],
    sigma_prior: f64,
    rng: &mut R,
) -> Result<Vec<CeExample>> {
    let mut out = Vec::new();
    for o in objects {
        let d = decompose(domain.library(), sched, &o.components, &o.coords, rng)?;
        let params = domain.transition_params(rng.random(), sigma_prior);
        out.extend(ce_examples(domain, sched, &d, &params)?);
    }
    Ok(out)
}

/// Mean negative log-probability of the ground-truth actions.
pub fn ce_loss(
    policy: &PolicyModel,
    tape: &mut Tape,
    lib: &Library,
    sched: &Schedule,
    batch: &[CeExample],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Empty("cross-entropy batch".into()));
    }
    let decisions: Vec<Decision<'_>> =
        batch.iter().map(|e| Decision { x: &e.x, step: e.step, actions: &e.actions }).collect();
    let lp = policy.log_probs_on_tape(tape, lib, sched, &decisions, false)?;
    let mut picks = Vec::with_capacity(batch.len());
    let mut acc = 0;
    for e in batch {
        picks.push(acc + e.target);
        acc += e.actions.len();
    }
    let chosen = tape.gather(lp.log_probs, &picks)?;
    let total = tape.sum(chosen);
    Ok(tape.scale(total, -1.0 / batch.len() as f64))
}

/// Mean `log K` over the examples: the loss of the uniform policy.
pub fn uniform_baseline(batch: &[CeExample]) -> f64 {
    batch.iter().map(|e| (e.actions.len() as f64).ln()).sum::<f64>() / batch.len().max(1) as f64
}
