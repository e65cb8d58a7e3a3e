use std::cell::Cell;

use crate::compstate::{ActionRef, ComposedObject, Library, TransitionParams};
use crate::error::{Error, Result};
use crate::schedule::{IntegratorMode, Schedule};
use crate::stateflow::model::Predictor;

thread_local! {
    static EULER_STEPS: Cell<u64> = const { Cell::new(0) };
}

/// Euler steps taken on this thread so far.
pub fn euler_step_count() -> u64 {
    EULER_STEPS.with(Cell::get)
}

/// Advances every generated component from grid `step` to `step + 1`.
pub fn euler_step<P: Predictor + ?Sized>(
    x: &mut ComposedObject,
    predictor: &P,
    lib: &Library,
    sched: &Schedule,
    step: u32,
) -> Result<()> {
    euler_step_with(x, predictor, lib, sched, step, true)
}

/// [`euler_step`] with the end-of-window snap optionally disabled.
pub fn euler_step_with<P: Predictor + ?Sized>(
    x: &mut ComposedObject,
    predictor: &P,
    lib: &Library,
    sched: &Schedule,
    step: u32,
    snap: bool,
) -> Result<()> {
    EULER_STEPS.with(|c| c.set(c.get() + 1));
    if x.is_empty() {
        return Ok(());
    }
    let pred = predictor.predict(lib, sched, x, step)?;
    if pred.len() != x.len() || pred.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: format!("state-flow prediction at step {step}") });
    }
    let dt = sched.dt();
    let gen_steps: Vec<u32> = x.components().iter().map(|c| c.gen_step).collect();
    for (i, (s, p)) in x.states_mut().iter_mut().zip(&pred).enumerate() {
        let g = gen_steps[i];
        let rate = match sched.mode() {
            IntegratorMode::Paper => sched.kappa_at(step, g) * dt,
            IntegratorMode::Rectified => {
                let remaining = sched.end_steps(g) - step as f64;
                if remaining <= 1.0 {
                    1.0
                } else {
                    1.0 / remaining
                }
            }
        };
        let snap = snap && sched.reached_end(step + 1, g);
        for (sv, pv) in s.iter_mut().zip(p) {
            if snap {
                *sv = *pv;
            } else {
                sv[0] += (pv[0] - sv[0]) * rate;
                sv[1] += (pv[1] - sv[1]) * rate;
            }
        }
    }
    x.set_self_cond(pred)?;
    Ok(())
}

/// Integrates from grid `from` to grid `to`; no action may fire in between.
pub fn euler_rollout<P: Predictor + ?Sized>(
    x: &ComposedObject,
    predictor: &P,
    lib: &Library,
    sched: &Schedule,
    from: u32,
    to: u32,
) -> Result<ComposedObject> {
    euler_rollout_with(x, predictor, lib, sched, from, to, true)
}

pub fn euler_rollout_with<P: Predictor + ?Sized>(
    x: &ComposedObject,
    predictor: &P,
    lib: &Library,
    sched: &Schedule,
    from: u32,
    to: u32,
    snap: bool,
) -> Result<ComposedObject> {
    if from > to || to > sched.n_steps() {
        return Err(Error::Schedule(format!("invalid rollout interval [{from}, {to}]")));
    }
    let mut y = x.clone();
    for step in from..to {
        euler_step_with(&mut y, predictor, lib, sched, step, snap)?;
    }
    Ok(y)
}

/// Applies `action` as the `index`-th compositional action (at grid step
/// `index * lambda`) and integrates to the next decision point: the next
/// action step, or the end of the grid once the object is terminal.
pub fn advance<P: Predictor + ?Sized>(
    x: &ComposedObject,
    action: &ActionRef,
    index: usize,
    predictor: &P,
    lib: &Library,
    sched: &Schedule,
    params: &TransitionParams,
) -> Result<ComposedObject> {
    let step = sched.lambda_steps() * index as u32;
    if !sched.is_action_step(step) {
        return Err(Error::Schedule(format!("action {index} falls outside the action steps")));
    }
    let y = x.transition(lib, action, step, params)?;
    let next = step + sched.lambda_steps();
    let until = if y.is_terminal() || !sched.is_action_step(next) { sched.n_steps() } else { next };
    euler_rollout(&y, predictor, lib, sched, step, until)
}

/// Runs the full process for a fixed action sequence.
pub fn replay<P: Predictor + ?Sized>(
    actions: &[ActionRef],
    predictor: &P,
    lib: &Library,
    sched: &Schedule,
    params: &TransitionParams,
) -> Result<ComposedObject> {
    let mut x = ComposedObject::empty();
    for (i, a) in actions.iter().enumerate() {
        x = advance(&x, a, i, predictor, lib, sched, params)?;
    }
    if !x.is_terminal() {
        return Err(Error::NotTerminal);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compstate::{ground_truth_layout, Coords};
    use crate::domain::{Domain, RuleSet};
    use crate::stateflow::model::LayoutOracle;

    fn setup(mode: IntegratorMode) -> (Domain, Schedule, TransitionParams) {
        let sched = Schedule::new(0.3, 0.4, 20, 3, mode).unwrap();
        let d = Domain::new(Library::default_library(), RuleSet::default(), &sched).unwrap();
        let p = d.transition_params(7, 1.0);
        (d, sched, p)
    }

    fn dist(a: &[Coords], b: &[Coords]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).fold(0.0, f64::max)
    }

    #[test]
    fn paper_mode_snaps_to_clean_states() {
        let (d, sched, p) = setup(IntegratorMode::Paper);
        for seq in d.compositional_sequences(&sched).unwrap() {
            let x = replay(&seq, &LayoutOracle, d.library(), &sched, &p).unwrap();
            assert_eq!(x.states(), &ground_truth_layout(d.library(), x.components()).unwrap()[..]);
        }
    }

    #[test]
    fn rectified_mode_converges_without_snap() {
        let (d, sched, p) = setup(IntegratorMode::Rectified);
        for seq in d.compositional_sequences(&sched).unwrap() {
            let mut x = ComposedObject::empty();
            for (i, a) in seq.iter().enumerate() {
                let step = sched.lambda_steps() * i as u32;
                x = x.transition(d.library(), a, step, &p).unwrap();
                let until = if x.is_terminal() { sched.n_steps() } else { step + sched.lambda_steps() };
                x = euler_rollout_with(&x, &LayoutOracle, d.library(), &sched, step, until, false).unwrap();
            }
            let truth = ground_truth_layout(d.library(), x.components()).unwrap();
            assert!(dist(x.states(), &truth) <= 1e-9);
        }
    }

    #[test]
    fn oracle_refinement_is_monotone() {
        for mode in [IntegratorMode::Paper, IntegratorMode::Rectified] {
            let (d, sched, p) = setup(mode);
            let seq = &d.compositional_sequences(&sched).unwrap()[5];
            let mut x = ComposedObject::empty();
            let mut prev: Vec<f64> = Vec::new();
            let mut next_action = 0;
            for step in 0..sched.n_steps() {
                if next_action < seq.len() && step == sched.lambda_steps() * next_action as u32 {
                    x = x.transition(d.library(), &seq[next_action], step, &p).unwrap();
                    next_action += 1;
                }
                euler_step(&mut x, &LayoutOracle, d.library(), &sched, step).unwrap();
                let truth = ground_truth_layout(d.library(), x.components()).unwrap();
                let errs: Vec<f64> = x.states().iter().zip(&truth).map(|(a, b)| dist(&[a.clone()], &[b.clone()])).collect();
                for (i, e) in prev.iter().enumerate() {
                    assert!(errs[i] <= e + 1e-12, "{mode:?} component {i} moved away at step {step}");
                }
                prev = errs;
            }
        }
    }

    #[test]
    fn zero_length_interval_is_identity() {
        let (d, sched, p) = setup(IntegratorMode::Paper);
        let x = ComposedObject::empty().transition(d.library(), &ActionRef::First { synthon: 0 }, 0, &p).unwrap();
        let y = euler_rollout(&x, &LayoutOracle, d.library(), &sched, 4, 4).unwrap();
        assert_eq!(x, y);
        assert!(euler_rollout(&x, &LayoutOracle, d.library(), &sched, 5, 4).is_err());
    }

    #[test]
    fn self_cond_is_latest_prediction() {
        let (d, sched, p) = setup(IntegratorMode::Paper);
        let x = ComposedObject::empty().transition(d.library(), &ActionRef::First { synthon: 0 }, 0, &p).unwrap();
        let y = euler_rollout(&x, &LayoutOracle, d.library(), &sched, 0, 2).unwrap();
        assert_eq!(y.self_cond(), &ground_truth_layout(d.library(), y.components()).unwrap()[..]);
    }

    struct Nan;
    impl Predictor for Nan {
        fn predict(&self, _: &Library, _: &Schedule, x: &ComposedObject, _: u32) -> Result<Vec<Coords>> {
            Ok(x.states().iter().map(|c| vec![[f64::NAN, 0.0]; c.len()]).collect())
        }
    }

    #[test]
    fn nan_prediction_aborts() {
        let (d, sched, p) = setup(IntegratorMode::Paper);
        let x = ComposedObject::empty().transition(d.library(), &ActionRef::First { synthon: 0 }, 0, &p).unwrap();
        let err = euler_rollout(&x, &Nan, d.library(), &sched, 0, 3).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert!(err.to_string().contains("step 0"));
    }
}
