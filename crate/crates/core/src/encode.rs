//! Per-point and per-action input features shared by both models.

use crate::compstate::{ActionRef, ComposedObject, Library};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::schedule::Schedule;

/// Number of attachment slots encoded per synthon.
pub const MAX_ATTACHMENTS: usize = 2;

/// Feature layout for a fixed library size and component cap.
///
/// Point features: `[x, y, sc_x, sc_y, t_local, is_attachment,
/// component one-hot, attachment klass one-hot (2), synthon one-hot,
/// local x, local y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    pub max_components: usize,
    pub n_synthons: usize,
}

impl Featurizer {
    pub fn new(lib: &Library, sched: &Schedule) -> Result<Self> {
        if lib.max_attachments() > MAX_ATTACHMENTS {
            return Err(Error::Library(format!(
                "synthons with more than {MAX_ATTACHMENTS} attachments are not supported"
            )));
        }
        Ok(Self { max_components: sched.max_components(), n_synthons: lib.len() })
    }

    pub fn point_dim(&self) -> usize {
        6 + self.max_components + 2 + self.n_synthons + 2
    }

    /// `[synthon one-hot, is_first, klass pair one-hot (4), parent component
    /// one-hot, parent attachment one-hot, child attachment one-hot]`.
    pub fn action_dim(&self) -> usize {
        self.n_synthons + 1 + 4 + self.max_components + 2 * MAX_ATTACHMENTS
    }

    fn check(&self, lib: &Library) -> Result<()> {
        if lib.len() != self.n_synthons {
            return Err(Error::Shape(format!(
                "model built for {} synthons, library has {}",
                self.n_synthons,
                lib.len()
            )));
        }
        Ok(())
    }

    /// Appends one feature row per point of `x` at grid `step`.
    pub fn push_points(
        &self,
        lib: &Library,
        sched: &Schedule,
        x: &ComposedObject,
        step: u32,
        out: &mut Vec<f64>,
    ) -> Result<usize> {
        self.check(lib)?;
        if x.len() > self.max_components {
            return Err(Error::Shape(format!("{} components exceed the model cap", x.len())));
        }
        let mut n = 0;
        for (ci, comp) in x.components().iter().enumerate() {
            let syn = lib.get(comp.synthon);
            let t_local = sched.t_local_steps(step, comp.gen_step);
            for (pi, (&s, &sc)) in x.states()[ci].iter().zip(&x.self_cond()[ci]).enumerate() {
                let start = out.len();
                out.extend_from_slice(&[s[0], s[1], sc[0], sc[1], t_local]);
                out.resize(start + self.point_dim(), 0.0);
                let row = &mut out[start..];
                if let Some(att) = syn.attachments.iter().find(|a| a.point == pi) {
                    row[5] = 1.0;
                    row[6 + self.max_components + att.klass.index()] = 1.0;
                }
                row[6 + ci] = 1.0;
                row[6 + self.max_components + 2 + comp.synthon] = 1.0;
                let local = syn.points[pi];
                row[6 + self.max_components + 2 + self.n_synthons] = local[0];
                row[6 + self.max_components + 2 + self.n_synthons + 1] = local[1];
                n += 1;
            }
        }
        Ok(n)
    }

    /// Point features for a batch of `(object, step)` queries, with the
    /// owning query index of each row.
    pub fn points(
        &self,
        lib: &Library,
        sched: &Schedule,
        queries: &[(&ComposedObject, u32)],
    ) -> Result<(Matrix, Vec<usize>)> {
        let mut data = Vec::new();
        let mut seg = Vec::new();
        for (q, &(x, step)) in queries.iter().enumerate() {
            let n = self.push_points(lib, sched, x, step, &mut data)?;
            seg.extend(std::iter::repeat_n(q, n));
        }
        Ok((Matrix::new(seg.len(), self.point_dim(), data)?, seg))
    }

    pub fn push_action(&self, lib: &Library, x: &ComposedObject, a: &ActionRef, out: &mut Vec<f64>) -> Result<()> {
        self.check(lib)?;
        let start = out.len();
        out.resize(start + self.action_dim(), 0.0);
        let row = &mut out[start..];
        let synthon = a.synthon();
        if synthon >= self.n_synthons {
            return Err(Error::Shape(format!("synthon {synthon} out of range")));
        }
        row[synthon] = 1.0;
        match *a {
            ActionRef::First { .. } => row[self.n_synthons] = 1.0,
            ActionRef::Add { parent, child_attachment, .. } => {
                if parent.component >= self.max_components
                    || parent.attachment >= MAX_ATTACHMENTS
                    || child_attachment >= MAX_ATTACHMENTS
                    || parent.component >= x.len()
                {
                    return Err(Error::Shape("action references out of range".into()));
                }
                let pk = x.klass_of(lib, parent).index();
                let ck = lib.get(synthon).attachments[child_attachment].klass.index();
                let base = self.n_synthons + 1;
                row[base + 2 * pk + ck] = 1.0;
                let base = base + 4;
                row[base + parent.component] = 1.0;
                let base = base + self.max_components;
                row[base + parent.attachment] = 1.0;
                row[base + MAX_ATTACHMENTS + child_attachment] = 1.0;
            }
        }
        Ok(())
    }
}
