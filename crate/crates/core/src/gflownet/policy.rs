use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compstate::{ActionRef, ComposedObject, Library};
use crate::encode::Featurizer;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, mlp_dims, Matrix, Mlp, ParamId, ParamStore, Tape, Var, DEPTH, HIDDEN};
use crate::schedule::Schedule;

pub const KIND: &str = "policy";
pub const LOG_Z: &str = "log_Z";

/// A state at a decision point together with its legal actions.
#[derive(Debug, Clone, Copy)]
pub struct Decision<'a> {
    pub x: &'a ComposedObject,
    pub step: u32,
    pub actions: &'a [ActionRef],
}

/// Log-softmax rows for a batch of decisions.
#[derive(Debug, Clone, Copy)]
pub struct DecisionLogProbs {
    /// `n_actions x 1` column of log-probabilities.
    pub log_probs: Var,
}

/// Factorised scorer: `logit(s, a) = sum(head(f(s)) * g(a))` with separate
/// heads for first and add actions, plus the scalar `log_Z`.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    store: ParamStore,
    encoder: Mlp,
    head_first: Mlp,
    head_add: Mlp,
    action: Mlp,
    log_z: ParamId,
    featurizer: Featurizer,
}

impl PolicyModel {
    pub fn new(lib: &Library, sched: &Schedule, seed: u64) -> Result<Self> {
        let featurizer = Featurizer::new(lib, sched)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Mlp::new(&mut store, "penc", &mlp_dims(featurizer.point_dim(), HIDDEN), &mut rng)?;
        let head_first = Mlp::new(&mut store, "head_first", &mlp_dims(HIDDEN, HIDDEN), &mut rng)?;
        let head_add = Mlp::new(&mut store, "head_add", &mlp_dims(HIDDEN, HIDDEN), &mut rng)?;
        let action = Mlp::new(&mut store, "act", &mlp_dims(featurizer.action_dim(), HIDDEN), &mut rng)?;
        let log_z = store.add(LOG_Z, Matrix::scalar(0.0))?;
        Ok(Self { store, encoder, head_first, head_add, action, log_z, featurizer })
    }

    pub fn from_store(store: ParamStore, lib: &Library, sched: &Schedule) -> Result<Self> {
        let featurizer = Featurizer::new(lib, sched)?;
        let n = DEPTH + 1;
        let model = Self {
            encoder: Mlp::bind(&store, "penc", n)?,
            head_first: Mlp::bind(&store, "head_first", n)?,
            head_add: Mlp::bind(&store, "head_add", n)?,
            action: Mlp::bind(&store, "act", n)?,
            log_z: store.id(LOG_Z)?,
            store,
            featurizer,
        };
        if model.encoder.input_dim() != featurizer.point_dim() || model.action.input_dim() != featurizer.action_dim() {
            return Err(Error::Format("policy checkpoint does not match the library/schedule".into()));
        }
        Ok(model)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn log_z_id(&self) -> ParamId {
        self.log_z
    }

    pub fn log_z(&self) -> f64 {
        self.store.get(self.log_z).item()
    }

    pub fn set_log_z(&mut self, v: f64) {
        *self.store.get_mut(self.log_z) = Matrix::scalar(v);
    }

    /// Zeroes the output layer of both heads, which makes every logit 0.
    pub fn zero_heads(&mut self) {
        for head in [&self.head_first, &self.head_add] {
            let &(w, b) = head.layers().last().expect("non-empty mlp");
            self.store.get_mut(w).data_mut().fill(0.0);
            self.store.get_mut(b).data_mut().fill(0.0);
        }
    }

    /// Log-probabilities of every action of every decision, concatenated in
    /// order.
    pub fn log_probs_on_tape(
        &self,
        tape: &mut Tape,
        lib: &Library,
        sched: &Schedule,
        decisions: &[Decision<'_>],
        frozen: bool,
    ) -> Result<DecisionLogProbs> {
        if decisions.iter().any(|d| d.actions.is_empty()) {
            return Err(Error::Empty("action list".into()));
        }
        let d = decisions.len();
        let queries: Vec<_> = decisions.iter().map(|dc| (dc.x, dc.step)).collect();
        let (feats, seg) = self.featurizer.points(lib, sched, &queries)?;
        let fx = tape.constant(feats);
        let h = self.encoder.apply_with(tape, &self.store, fx, frozen)?;
        let f = tape.segment_mean(h, &seg, d)?;
        let hf = self.head_first.apply_with(tape, &self.store, f, frozen)?;
        let ha = self.head_add.apply_with(tape, &self.store, f, frozen)?;
        let heads = tape.concat_rows(&[hf, ha])?;

        let mut afeats = Vec::new();
        let mut head_idx = Vec::new();
        let mut aseg = Vec::new();
        for (i, dc) in decisions.iter().enumerate() {
            for a in dc.actions {
                self.featurizer.push_action(lib, dc.x, a, &mut afeats)?;
                head_idx.push(match a {
                    ActionRef::First { .. } => i,
                    ActionRef::Add { .. } => d + i,
                });
                aseg.push(i);
            }
        }
        let ax = tape.constant(Matrix::new(aseg.len(), self.featurizer.action_dim(), afeats)?);
        let g = self.action.apply_with(tape, &self.store, ax, frozen)?;
        let hg = tape.gather(heads, &head_idx)?;
        let prod = tape.mul(hg, g)?;
        let logits = tape.sum_cols(prod);
        let log_probs = tape.segment_log_softmax(logits, &aseg)?;
        Ok(DecisionLogProbs { log_probs })
    }

    /// Log-probabilities over `actions` at `x`.
    pub fn log_probs(
        &self,
        lib: &Library,
        sched: &Schedule,
        x: &ComposedObject,
        step: u32,
        actions: &[ActionRef],
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.log_probs_on_tape(&mut tape, lib, sched, &[Decision { x, step, actions }], true)?;
        let v = tape.value(out.log_probs).data().to_vec();
        if v.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite { what: "policy logits".into() });
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        checkpoint::save(&self.store, &meta, path)
    }

    pub fn load(path: &Path, lib: &Library, sched: &Schedule) -> Result<(Self, serde_json::Value)> {
        let (store, meta) = checkpoint::load(path)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some(KIND) {
            return Err(Error::Format(format!("{} is not a policy checkpoint", path.display())));
        }
        Ok((Self::from_store(store, lib, sched)?, meta))
    }
}

/// Probabilities under `policy`, or uniform when no policy is given.
pub fn policy_distribution(
    policy: Option<&PolicyModel>,
    lib: &Library,
    sched: &Schedule,
    x: &ComposedObject,
    step: u32,
    actions: &[ActionRef],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if actions.is_empty() {
        return Err(Error::Empty("action list".into()));
    }
    let log_probs = match policy {
        Some(p) => p.log_probs(lib, sched, x, step, actions)?,
        None => vec![-(actions.len() as f64).ln(); actions.len()],
    };
    Ok((log_probs.iter().map(|l| l.exp()).collect(), log_probs))
}
