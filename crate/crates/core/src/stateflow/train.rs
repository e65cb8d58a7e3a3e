use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compstate::{decompose, Library, TransitionParams};
use crate::domain::DatasetObject;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Matrix, Tape, Var};
use crate::rng;
use crate::schedule::Schedule;
use crate::stateflow::interpolate::{interpolate, NoisySample};
use crate::stateflow::model::{split_rows, StateFlowModel};

const TRAIN_TAG: u64 = 0x5F10;
/// Decay of the running-loss average.
pub const RUNNING_DECAY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateFlowHyper {
    /// Interpolation noise.
    pub sigma: f64,
    /// Dataset jitter.
    pub sigma_data: f64,
    /// Dataset size used by the CLI.
    pub dataset_size: usize,
    pub batch: usize,
    pub iters: usize,
    pub lr: f64,
    pub self_cond_prob: f64,
}

impl Default for StateFlowHyper {
    fn default() -> Self {
        Self { sigma: 0.05, sigma_data: 0.05, dataset_size: 10_000, batch: 64, iters: 2000, lr: 2e-3, self_cond_prob: 0.5 }
    }
}

impl StateFlowHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.dataset_size == 0 {
            return Err(Error::Config("stateflow batch and dataset_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.self_cond_prob) {
            return Err(Error::Config("self_cond_prob must lie in [0, 1]".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma_data >= 0.0 && self.lr >= 0.0) {
            return Err(Error::Config("stateflow sigma, sigma_data and lr must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFlowMetric {
    pub iter: usize,
    pub loss: f64,
    pub running_loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

/// Mean over the batch of the summed squared error over present points.
pub fn state_loss_from(tape: &mut Tape, pred: Var, batch: &[NoisySample]) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Empty("state_loss batch".into()));
    }
    let targets: Vec<f64> = batch.iter().flat_map(|s| s.targets.iter().flatten().flatten().copied()).collect();
    let target = tape.constant(Matrix::new(targets.len() / 2, 2, targets)?);
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

pub fn state_loss(
    model: &StateFlowModel,
    tape: &mut Tape,
    lib: &Library,
    sched: &Schedule,
    batch: &[NoisySample],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Empty("state_loss batch".into()));
    }
    let queries: Vec<_> = batch.iter().map(|s| (&s.x_t, s.t.step())).collect();
    let pred = model.forward(tape, lib, sched, &queries, false)?;
    state_loss_from(tape, pred, batch)
}

/// Builds one training batch. Each sample draws an object, a construction
/// order, a grid time in `1..=n_steps` and an initial-state seed.
pub fn sample_batch<R: Rng + ?Sized>(
    lib: &Library,
    sched: &Schedule,
    data: &[DatasetObject],
    hyper: &StateFlowHyper,
    sigma_prior: f64,
    point_budget: usize,
    rng: &mut R,
) -> Result<Vec<NoisySample>> {
    if data.is_empty() {
        return Err(Error::Empty("training dataset".into()));
    }
    (0..hyper.batch)
        .map(|_| {
            let obj = &data[rng.random_range(0..data.len())];
            let d = decompose(lib, sched, &obj.components, &obj.coords, rng)?;
            let t = sched.time(rng.random_range(1..=sched.n_steps()))?;
            let params = TransitionParams { global_seed: rng.random(), sigma_prior, point_budget };
            interpolate(lib, sched, &d, t, hyper.sigma, &params, rng)
        })
        .collect()
}

/// Replaces each sample's self-conditioning input with a gradient-free
/// model prediction.
pub fn apply_self_conditioning(
    model: &StateFlowModel,
    lib: &Library,
    sched: &Schedule,
    batch: &mut [NoisySample],
) -> Result<()> {
    let mut tape = Tape::new();
    let queries: Vec<_> = batch.iter().map(|s| (&s.x_t, s.t.step())).collect();
    let y = model.forward(&mut tape, lib, sched, &queries, true)?;
    let out = tape.value(y);
    let mut offset = 0;
    for s in batch.iter_mut() {
        let pred = split_rows(out, &s.x_t, &mut offset);
        s.x_t.set_self_cond(pred)?;
    }
    Ok(())
}

/// Minibatch Adam on the state loss. Never integrates the flow.
#[allow(clippy::too_many_arguments)]
pub fn train_stateflow(
    model: &mut StateFlowModel,
    lib: &Library,
    sched: &Schedule,
    data: &[DatasetObject],
    hyper: &StateFlowHyper,
    sigma_prior: f64,
    point_budget: usize,
    seed: u64,
    mut on_metric: impl FnMut(&StateFlowMetric) -> Result<()>,
) -> Result<f64> {
    hyper.validate()?;
    let start = Instant::now();
    let mut ema = 0.0;
    let mut running = f64::NAN;
    for iter in 0..hyper.iters {
        let mut rng = rng::stream(seed, &[TRAIN_TAG, iter as u64]);
        let mut batch = sample_batch(lib, sched, data, hyper, sigma_prior, point_budget, &mut rng)?;
        if rng.random::<f64>() < hyper.self_cond_prob {
            apply_self_conditioning(model, lib, sched, &mut batch)?;
        }
        let mut tape = Tape::new();
        let loss = state_loss(model, &mut tape, lib, sched, &batch)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { what: format!("state loss at iteration {iter}") });
        }
        let grads = tape.backward(loss)?;
        drop(tape);
        model.store_mut().adam_step(&grads, hyper.lr, AdamConfig::default())?;
        ema = RUNNING_DECAY * ema + (1.0 - RUNNING_DECAY) * value;
        running = ema / (1.0 - RUNNING_DECAY.powi(iter as i32 + 1));
        on_metric(&StateFlowMetric {
            iter,
            loss: value,
            running_loss: running,
            lr: hyper.lr,
            wall_ms: start.elapsed().as_millis() as u64,
        })?;
    }
    Ok(running)
}
