use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compstate::{sequence_key, ActionRef, ComposedObject, TransitionParams};
use crate::domain::{log_reward, Domain, RewardParams};
use crate::error::{Error, Result};
use crate::gflownet::policy::PolicyModel;
use crate::rng;
use crate::schedule::Schedule;
use crate::stateflow::{advance, Predictor};

/// One compositional action with its policy log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: u32,
    pub action: ActionRef,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub terminal: Arc<ComposedObject>,
    pub reward: f64,
    pub log_reward: f64,
    pub log_z_used: f64,
}

impl Trajectory {
    pub fn actions(&self) -> Vec<ActionRef> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum of recorded per-action policy log-probabilities.
    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }
}

type Prefix = Vec<ActionRef>;

/// Deterministic process states keyed by action prefix. Valid while the
/// state-flow predictor and transition parameters stay fixed.
pub struct Rollouts<'a, P: Predictor + Sync + ?Sized> {
    pub domain: &'a Domain,
    pub sched: &'a Schedule,
    pub predictor: &'a P,
    pub params: TransitionParams,
    pub reward: RewardParams,
    cache: RwLock<HashMap<Prefix, Arc<ComposedObject>>>,
}

impl<'a, P: Predictor + Sync + ?Sized> Rollouts<'a, P> {
    pub fn new(
        domain: &'a Domain,
        sched: &'a Schedule,
        predictor: &'a P,
        params: TransitionParams,
        reward: RewardParams,
    ) -> Self {
        Self { domain, sched, predictor, params, reward, cache: RwLock::new(HashMap::new()) }
    }

    /// The object at the decision point after `prefix` (or at the end of
    /// the grid once terminal).
    pub fn state(&self, prefix: &[ActionRef]) -> Result<Arc<ComposedObject>> {
        if prefix.is_empty() {
            return Ok(Arc::new(ComposedObject::empty()));
        }
        if let Some(x) = self.cache.read().expect("rollout cache").get(prefix) {
            return Ok(x.clone());
        }
        let parent = self.state(&prefix[..prefix.len() - 1])?;
        let i = prefix.len() - 1;
        let y = Arc::new(advance(
            &parent,
            &prefix[i],
            i,
            self.predictor,
            self.domain.library(),
            self.sched,
            &self.params,
        )?);
        self.cache.write().expect("rollout cache").entry(prefix.to_vec()).or_insert(y.clone());
        Ok(y)
    }

    pub fn decision_step(&self, prefix_len: usize) -> u32 {
        self.sched.lambda_steps() * prefix_len as u32
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("rollout cache").len()
    }
}

/// Policy log-probabilities memoised by prefix for one parameter snapshot.
pub struct PolicyView<'a> {
    policy: Option<&'a PolicyModel>,
    cache: RwLock<HashMap<Prefix, Arc<(Vec<ActionRef>, Vec<f64>)>>>,
}

impl<'a> PolicyView<'a> {
    /// `None` is the uniform policy.
    pub fn new(policy: Option<&'a PolicyModel>) -> Self {
        Self { policy, cache: RwLock::new(HashMap::new()) }
    }

    pub fn policy(&self) -> Option<&'a PolicyModel> {
        self.policy
    }

    /// Legal actions after `prefix` and their log-probabilities.
    pub fn decision<P: Predictor + Sync + ?Sized>(
        &self,
        rollouts: &Rollouts<'_, P>,
        prefix: &[ActionRef],
    ) -> Result<Arc<(Vec<ActionRef>, Vec<f64>)>> {
        if let Some(d) = self.cache.read().expect("policy cache").get(prefix) {
            return Ok(d.clone());
        }
        let x = rollouts.state(prefix)?;
        let actions = rollouts.domain.action_space(&x)?;
        let step = rollouts.decision_step(prefix.len());
        let (_, log_probs) = crate::gflownet::policy::policy_distribution(
            self.policy,
            rollouts.domain.library(),
            rollouts.sched,
            &x,
            step,
            &actions,
        )?;
        let d = Arc::new((actions, log_probs));
        self.cache.write().expect("policy cache").entry(prefix.to_vec()).or_insert(d.clone());
        Ok(d)
    }
}

fn categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in log_probs.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// Samples one trajectory. With probability `eps_random` per step a
/// uniformly random legal action replaces the policy's choice; the policy
/// log-probability is recorded either way.
pub fn sample_trajectory<P: Predictor + Sync + ?Sized, R: Rng + ?Sized>(
    rollouts: &Rollouts<'_, P>,
    view: &PolicyView<'_>,
    eps_random: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut prefix: Prefix = Vec::new();
    let mut steps = Vec::new();
    loop {
        let x = rollouts.state(&prefix)?;
        if x.is_terminal() {
            let lr = log_reward(&x, &rollouts.reward)?;
            let log_z_used = view.policy().map_or(0.0, PolicyModel::log_z);
            return Ok(Trajectory { steps, terminal: x, reward: lr.exp(), log_reward: lr, log_z_used });
        }
        if prefix.len() >= rollouts.domain.rules().max_len {
            return Err(Error::Invariant(format!(
                "trajectory {} exceeded max_len without terminating",
                sequence_key(rollouts.domain.library(), &prefix)
            )));
        }
        let d = view.decision(rollouts, &prefix)?;
        let (actions, log_probs) = (&d.0, &d.1);
        let pick = if eps_random > 0.0 && rng.random::<f64>() < eps_random {
            rng.random_range(0..actions.len())
        } else {
            categorical(log_probs, rng)
        };
        steps.push(TrajectoryStep {
            step: rollouts.decision_step(prefix.len()),
            action: actions[pick],
            log_prob: log_probs[pick],
        });
        prefix.push(actions[pick]);
    }
}

/// Samples `n` trajectories; trajectory `i` uses its own stream derived
/// from `(seed, tags.., i)`, so results do not depend on `threads`.
pub fn sample_many<P: Predictor + Sync + ?Sized>(
    rollouts: &Rollouts<'_, P>,
    view: &PolicyView<'_>,
    n: usize,
    eps_random: f64,
    seed: u64,
    tags: &[u64],
    threads: usize,
) -> Result<Vec<Trajectory>> {
    let one = |i: usize| {
        let mut t = tags.to_vec();
        t.push(i as u64);
        let mut r = rng::stream(seed, &t);
        sample_trajectory(rollouts, view, eps_random, &mut r)
    };
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(one).collect();
    }
    let chunk = n.div_ceil(threads);
    let parts: Vec<Result<Vec<Trajectory>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let one = &one;
                s.spawn(move || (w * chunk..((w + 1) * chunk).min(n)).map(one).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
