use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::domain::{DatasetObject, Domain};
use crate::error::{Error, Result};
use crate::gflownet::loss::{ce_batch, ce_loss, tb_loss, uniform_baseline, CeExample};
use crate::gflownet::policy::PolicyModel;
use crate::gflownet::sampler::{sample_many, PolicyView, Rollouts};
use crate::nn::{AdamConfig, Tape};
use crate::rng;
use crate::schedule::Schedule;
use crate::stateflow::Predictor;

const TB_TAG: u64 = 0x7B;
const CE_TAG: u64 = 0xCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Tb,
    Ce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyHyper {
    pub batch: usize,
    pub iters: usize,
    pub lr: f64,
    #[serde(rename = "lr_logZ")]
    pub lr_log_z: f64,
    pub eps_random: f64,
    pub objective: Objective,
    /// Objects in the fixed cross-entropy dataset.
    pub ce_dataset_size: usize,
    /// Exponent applied to the reward when drawing the cross-entropy dataset.
    pub ce_reward_beta: f64,
    /// Evaluate the exact TV distance every this many iterations (0: never).
    pub tv_every: usize,
}

impl Default for PolicyHyper {
    fn default() -> Self {
        Self {
            batch: 64,
            iters: 1500,
            lr: 1e-4,
            lr_log_z: 1e-3,
            eps_random: 0.05,
            objective: Objective::Tb,
            ce_dataset_size: 1000,
            ce_reward_beta: 3.0,
            tv_every: 100,
        }
    }
}

impl PolicyHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("policy batch must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_random) {
            return Err(Error::Config("eps_random must lie in [0, 1]".into()));
        }
        if !(self.lr >= 0.0 && self.lr_log_z >= 0.0) {
            return Err(Error::Config("policy learning rates must be >= 0".into()));
        }
        if self.objective == Objective::Ce && (self.ce_dataset_size == 0 || !(self.ce_reward_beta >= 0.0)) {
            return Err(Error::Config("ce_dataset_size must be >= 1 and ce_reward_beta >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetric {
    pub iter: usize,
    pub tb_loss: f64,
    pub mean_reward: f64,
    pub mean_len: f64,
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tv_vs_oracle: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeMetric {
    pub iter: usize,
    pub ce_loss: f64,
    pub uniform_baseline: f64,
    pub wall_ms: u64,
}

/// Online trajectory-balance training against a frozen state flow.
#[allow(clippy::too_many_arguments)]
pub fn train_policy_tb<P: Predictor + Sync + ?Sized>(
    policy: &mut PolicyModel,
    rollouts: &Rollouts<'_, P>,
    hyper: &PolicyHyper,
    seed: u64,
    threads: usize,
    tv: Option<&dyn Fn(&PolicyModel) -> Result<f64>>,
    mut on_metric: impl FnMut(&PolicyMetric) -> Result<()>,
) -> Result<()> {
    hyper.validate()?;
    let z = policy.log_z_id();
    policy.store_mut().set_lr(z, hyper.lr_log_z);
    let start = Instant::now();
    for iter in 0..hyper.iters {
        let trajs = {
            let view = PolicyView::new(Some(policy));
            sample_many(rollouts, &view, hyper.batch, hyper.eps_random, seed, &[TB_TAG, iter as u64], threads)?
        };
        let mut tape = Tape::new();
        let loss = tb_loss(policy, &mut tape, rollouts, &trajs)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { what: format!("trajectory balance loss at iteration {iter}") });
        }
        let grads = tape.backward(loss)?;
        drop(tape);
        policy.store_mut().adam_step(&grads, hyper.lr, AdamConfig::default())?;
        let n = trajs.len() as f64;
        let tv_vs_oracle = match tv {
            Some(f) if hyper.tv_every > 0 && (iter + 1) % hyper.tv_every == 0 => Some(f(policy)?),
            _ => None,
        };
        on_metric(&PolicyMetric {
            iter,
            tb_loss: value,
            mean_reward: trajs.iter().map(|t| t.reward).sum::<f64>() / n,
            mean_len: trajs.iter().map(|t| t.len() as f64).sum::<f64>() / n,
            log_z: policy.log_z(),
            tv_vs_oracle,
            wall_ms: start.elapsed().as_millis() as u64,
        })?;
    }
    Ok(())
}

/// Every decision of every object under one fixed decomposition per object,
/// for held-out style evaluation of the cross-entropy objective.
pub fn ce_eval_examples(
    domain: &Domain,
    sched: &Schedule,
    data: &[DatasetObject],
    sigma_prior: f64,
    seed: u64,
) -> Result<Vec<CeExample>> {
    let refs: Vec<&DatasetObject> = data.iter().collect();
    let mut r = rng::stream(seed, &[CE_TAG, u64::MAX]);
    ce_batch(domain, sched, &refs, sigma_prior, &mut r)
}

/// Supervised training on decomposed dataset objects.
#[allow(clippy::too_many_arguments)]
pub fn train_policy_ce(
    policy: &mut PolicyModel,
    domain: &Domain,
    sched: &Schedule,
    data: &[DatasetObject],
    hyper: &PolicyHyper,
    sigma_prior: f64,
    seed: u64,
    mut on_metric: impl FnMut(&CeMetric) -> Result<()>,
) -> Result<()> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("cross-entropy dataset".into()));
    }
    let start = Instant::now();
    for iter in 0..hyper.iters {
        let mut r = rng::stream(seed, &[CE_TAG, iter as u64]);
        let take = hyper.batch.min(data.len());
        let objects: Vec<&DatasetObject> =
            sample_indices(&mut r, data.len(), take).into_iter().map(|i| &data[i]).collect();
        let batch = ce_batch(domain, sched, &objects, sigma_prior, &mut r)?;
        let mut tape = Tape::new();
        let loss = ce_loss(policy, &mut tape, domain.library(), sched, &batch)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { what: format!("cross-entropy loss at iteration {iter}") });
        }
        let grads = tape.backward(loss)?;
        drop(tape);
        policy.store_mut().adam_step(&grads, hyper.lr, AdamConfig::default())?;
        on_metric(&CeMetric {
            iter,
            ce_loss: value,
            uniform_baseline: uniform_baseline(&batch),
            wall_ms: start.elapsed().as_millis() as u64,
        })?;
    }
    Ok(())
}

/// Mean negative log-likelihood of `examples` under `policy`.
pub fn ce_nll(policy: &PolicyModel, lib: &crate::compstate::Library, sched: &Schedule, examples: &[CeExample]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = ce_loss(policy, &mut tape, lib, sched, examples)?;
    Ok(tape.value(l).item())
}
