use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compstate::{ComposedObject, Coords, Decomposition, Library, TransitionParams};
use crate::error::{Error, Result};
use crate::schedule::{Schedule, StepTime};

/// A training input at grid time `t` with its clean targets.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySample {
    /// Components generated by `t`, states set to the noisy interpolant and
    /// self-conditioning set equal to the states.
    pub x_t: ComposedObject,
    pub t: StepTime,
    pub t_local: Vec<f64>,
    /// Clean states for each component in `x_t`.
    pub targets: Vec<Coords>,
}

impl NoisySample {
    pub fn point_count(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }
}

/// Noisy interpolant between each component's initial state and its clean
/// state. Initial states come from replaying the transitions under `params`.
pub fn interpolate<R: Rng + ?Sized>(
    lib: &Library,
    sched: &Schedule,
    d: &Decomposition,
    t: StepTime,
    sigma: f64,
    params: &TransitionParams,
    rng: &mut R,
) -> Result<NoisySample> {
    if t.n_steps() != sched.n_steps() {
        return Err(Error::Schedule("time is not on this schedule's grid".into()));
    }
    let k = sched.k_of_t(t, d.components.len());
    let x0 = ComposedObject::from_components(lib, &d.components[..k], params)?;
    let mut states = Vec::with_capacity(k);
    let mut t_local = Vec::with_capacity(k);
    for (i, (s0, s1)) in x0.states().iter().zip(&d.coords[..k]).enumerate() {
        if s0.len() != s1.len() {
            return Err(Error::Shape(format!("component {i} target has {} points", s1.len())));
        }
        let tl = sched.t_local_steps(t.step(), d.components[i].gen_step);
        t_local.push(tl);
        states.push(
            s0.iter()
                .zip(s1)
                .map(|(a, b)| {
                    let mut p = [tl * b[0] + (1.0 - tl) * a[0], tl * b[1] + (1.0 - tl) * a[1]];
                    if sigma > 0.0 {
                        for v in &mut p {
                            let z: f64 = StandardNormal.sample(rng);
                            *v += sigma * z;
                        }
                    }
                    p
                })
                .collect(),
        );
    }
    let mut x_t = x0;
    x_t.set_self_cond(states.clone())?;
    x_t.set_states(states)?;
    Ok(NoisySample { x_t, t, t_local, targets: d.coords[..k].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compstate::{ground_truth_layout, reorder, ActionRef};
    use crate::schedule::IntegratorMode;
    use rand::SeedableRng;

    fn four_slot() -> Schedule {
        Schedule::new(0.2, 0.4, 10, 4, IntegratorMode::Paper).unwrap()
    }

    fn fixture(sched: &Schedule) -> (Library, Decomposition, TransitionParams) {
        let lib = Library::default_library();
        let params = TransitionParams { global_seed: 3, sigma_prior: 1.0, point_budget: 12 };
        let id = |s| lib.index_of(s).unwrap();
        let mut x = ComposedObject::empty();
        x = x.transition(&lib, &ActionRef::First { synthon: id("B1") }, 0, &params).unwrap();
        let a = ActionRef::Add { parent: x.open_attachments()[0], synthon: id("L1"), child_attachment: 0 };
        x = x.transition(&lib, &a, sched.lambda_steps(), &params).unwrap();
        let a = ActionRef::Add { parent: x.open_attachments()[0], synthon: id("B4"), child_attachment: 0 };
        x = x.transition(&lib, &a, 2 * sched.lambda_steps(), &params).unwrap();
        let comps = x.components().to_vec();
        let coords = ground_truth_layout(&lib, &comps).unwrap();
        let d = reorder(&lib, sched, &comps, &coords, &[0, 1, 2]).unwrap();
        (lib, d, params)
    }

    #[test]
    fn time_zero_is_empty() {
        let sched = four_slot();
        let (lib, d, p) = fixture(&sched);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let s = interpolate(&lib, &sched, &d, sched.time(0).unwrap(), 0.05, &p, &mut rng).unwrap();
        assert!(s.x_t.is_empty());
        assert!(s.targets.is_empty());
    }

    #[test]
    fn time_one_without_noise_is_clean() {
        let sched = four_slot();
        let (lib, d, p) = fixture(&sched);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let s = interpolate(&lib, &sched, &d, sched.time(10).unwrap(), 0.0, &p, &mut rng).unwrap();
        assert_eq!(s.x_t.states(), &d.coords[..]);
        assert!(s.t_local.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn half_time_second_component_is_three_quarters_clean() {
        let sched = four_slot();
        let (lib, d, p) = fixture(&sched);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let s = interpolate(&lib, &sched, &d, sched.time(5).unwrap(), 0.0, &p, &mut rng).unwrap();
        // components 1..3 are present at t = 0.5 (third generated at 0.4)
        assert_eq!(s.x_t.len(), 3);
        assert_eq!(s.t_local[1], 0.75);
        let s0 = ComposedObject::from_components(&lib, &d.components, &p).unwrap();
        for ((got, s1), s0) in s.x_t.states()[1].iter().zip(&d.coords[1]).zip(&s0.states()[1]) {
            for c in 0..2 {
                assert!((got[c] - (0.75 * s1[c] + 0.25 * s0[c])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn noise_has_requested_scale() {
        let sched = four_slot();
        let (lib, d, p) = fixture(&sched);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let clean = interpolate(&lib, &sched, &d, sched.time(7).unwrap(), 0.0, &p, &mut rng).unwrap();
        let mut sq = 0.0;
        let mut n = 0.0;
        for _ in 0..500 {
            let s = interpolate(&lib, &sched, &d, sched.time(7).unwrap(), 0.1, &p, &mut rng).unwrap();
            for (a, b) in s.x_t.states().iter().flatten().zip(clean.x_t.states().iter().flatten()) {
                sq += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
                n += 2.0;
            }
        }
        let var = sq / n;
        assert!((var - 0.01).abs() < 0.001, "{var}");
    }
}
