use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compstate::{ComposedObject, Coords, Library};
use crate::encode::Featurizer;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, mlp_dims, Matrix, Mlp, ParamStore, Tape, Var, DEPTH, HIDDEN};
use crate::schedule::Schedule;

/// Anything that maps an object at a grid step to clean-state estimates for
/// each of its components.
pub trait Predictor {
    fn predict(&self, lib: &Library, sched: &Schedule, x: &ComposedObject, step: u32) -> Result<Vec<Coords>>;
}

/// Per-point encoder, mean-pooled context, per-point head.
#[derive(Debug, Clone)]
pub struct StateFlowModel {
    store: ParamStore,
    encoder: Mlp,
    head: Mlp,
    featurizer: Featurizer,
}

pub const KIND: &str = "stateflow";

impl StateFlowModel {
    pub fn new(lib: &Library, sched: &Schedule, seed: u64) -> Result<Self> {
        let featurizer = Featurizer::new(lib, sched)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Mlp::new(&mut store, "enc", &mlp_dims(featurizer.point_dim(), HIDDEN), &mut rng)?;
        let head = Mlp::new(&mut store, "head", &mlp_dims(2 * HIDDEN, 2), &mut rng)?;
        Ok(Self { store, encoder, head, featurizer })
    }

    pub fn from_store(store: ParamStore, lib: &Library, sched: &Schedule) -> Result<Self> {
        let featurizer = Featurizer::new(lib, sched)?;
        let encoder = Mlp::bind(&store, "enc", DEPTH + 1)?;
        let head = Mlp::bind(&store, "head", DEPTH + 1)?;
        if encoder.input_dim() != featurizer.point_dim() || head.output_dim() != 2 {
            return Err(Error::Format("state-flow checkpoint does not match the library/schedule".into()));
        }
        Ok(Self { store, encoder, head, featurizer })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn featurizer(&self) -> Featurizer {
        self.featurizer
    }

    /// Predicted clean coordinates, one row per point, for a batch of queries.
    pub fn forward(
        &self,
        tape: &mut Tape,
        lib: &Library,
        sched: &Schedule,
        queries: &[(&ComposedObject, u32)],
        frozen: bool,
    ) -> Result<Var> {
        let (feats, seg) = self.featurizer.points(lib, sched, queries)?;
        self.forward_features(tape, feats, &seg, queries.len(), frozen)
    }

    pub(crate) fn forward_features(
        &self,
        tape: &mut Tape,
        feats: Matrix,
        seg: &[usize],
        n_seg: usize,
        frozen: bool,
    ) -> Result<Var> {
        let x = tape.constant(feats);
        let h = self.encoder.apply_with(tape, &self.store, x, frozen)?;
        let ctx = tape.segment_mean(h, seg, n_seg)?;
        let back = tape.gather(ctx, seg)?;
        let cat = tape.concat_cols(h, back)?;
        self.head.apply_with(tape, &self.store, cat, frozen)
    }

    pub fn save(&self, path: &std::path::Path, meta: serde_json::Value) -> Result<()> {
        checkpoint::save(&self.store, &meta, path)
    }

    pub fn load(path: &std::path::Path, lib: &Library, sched: &Schedule) -> Result<(Self, serde_json::Value)> {
        let (store, meta) = checkpoint::load(path)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some(KIND) {
            return Err(Error::Format(format!("{} is not a state-flow checkpoint", path.display())));
        }
        Ok((Self::from_store(store, lib, sched)?, meta))
    }
}

/// Splits per-point rows back into per-component coordinates.
pub(crate) fn split_rows(m: &Matrix, x: &ComposedObject, offset: &mut usize) -> Vec<Coords> {
    x.states()
        .iter()
        .map(|c| {
            let out = (0..c.len()).map(|p| [m.get(*offset + p, 0), m.get(*offset + p, 1)]).collect();
            *offset += c.len();
            out
        })
        .collect()
}

impl Predictor for StateFlowModel {
    fn predict(&self, lib: &Library, sched: &Schedule, x: &ComposedObject, step: u32) -> Result<Vec<Coords>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, lib, sched, &[(x, step)], true)?;
        let out = tape.value(y);
        if !out.is_finite() {
            return Err(Error::NonFinite { what: format!("state-flow prediction at step {step}") });
        }
        Ok(split_rows(out, x, &mut 0))
    }
}

/// Predicts the ground-truth layout of the current composition.
#[derive(Debug, Clone, Copy, Default)]
pub struct LayoutOracle;

impl Predictor for LayoutOracle {
    fn predict(&self, lib: &Library, _: &Schedule, x: &ComposedObject, _: u32) -> Result<Vec<Coords>> {
        crate::compstate::ground_truth_layout(lib, x.components())
    }
}

/// Feeds the wrapped predictor a zeroed self-conditioning input.
#[derive(Debug, Clone, Copy)]
pub struct ZeroSelfCond<'a, P: Predictor>(pub &'a P);

impl<P: Predictor> Predictor for ZeroSelfCond<'_, P> {
    fn predict(&self, lib: &Library, sched: &Schedule, x: &ComposedObject, step: u32) -> Result<Vec<Coords>> {
        let mut y = x.clone();
        let zeros = x.states().iter().map(|c| vec![[0.0, 0.0]; c.len()]).collect();
        y.set_self_cond(zeros)?;
        self.0.predict(lib, sched, &y, step)
    }
}
