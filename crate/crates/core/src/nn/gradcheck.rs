use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub coords: usize,
    pub h: f64,
    pub tol: f64,
    /// Floor on the relative-error denominator.
    pub floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { coords: 64, h: 1e-5, tol: 1e-4, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub tol: f64,
    pub worst: Option<CoordCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < self.tol
    }
}

/// Compares tape gradients of `f` with central differences on randomly
/// chosen parameter coordinates.
pub fn gradcheck<F, R>(store: &ParamStore, f: F, cfg: &GradcheckConfig, rng: &mut R) -> Result<GradcheckReport>
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
    R: Rng + ?Sized,
{
    let (tape, loss) = f(store)?;
    let grads = tape.backward(loss)?;
    drop(tape);

    let flat: Vec<(ParamId, usize)> =
        store.ids().flat_map(|id| (0..store.get(id).data().len()).map(move |j| (id, j))).collect();
    let picks: Vec<usize> = if flat.len() <= cfg.coords {
        (0..flat.len()).collect()
    } else {
        let mut p = rand::seq::index::sample(rng, flat.len(), cfg.coords).into_vec();
        p.sort_unstable();
        p
    };

    let eval = |s: &ParamStore| -> Result<f64> {
        let (t, l) = f(s)?;
        Ok(t.value(l).item())
    };
    let mut work = store.clone();
    let mut report = GradcheckReport { checked: 0, max_rel_err: 0.0, tol: cfg.tol, worst: None };
    for k in picks {
        let (id, j) = flat[k];
        let orig = work.get(id).data()[j];
        work.get_mut(id).data_mut()[j] = orig + cfg.h;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[j] = orig - cfg.h;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * cfg.h);
        let analytic = grads.value(id, j);
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.floor);
        report.checked += 1;
        if rel_err >= report.max_rel_err {
            report.max_rel_err = rel_err;
            report.worst =
                Some(CoordCheck { tensor: store.tensor(id).name.clone(), index: j, analytic, numeric, rel_err });
        }
    }
    Ok(report)
}
