//! Time arithmetic for the joint flow.
//!
//! All times live on the grid `t = k / n_steps`. Action times are integer
//! multiples of `lambda_steps = lambda * n_steps`, so "is this an action
//! step" is an integer test. The interpolation window need not be a whole
//! number of steps; it is kept in step units as `window_steps`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorMode {
    /// `S += (S1_hat - S) * kappa * dt`, then snap once `t >= t_end`.
    #[default]
    Paper,
    /// `S += (S1_hat - S) * min(1, dt / (t_end - t))`, tracking the linear interpolant.
    Rectified,
}

/// Serializable schedule block of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub lambda: f64,
    pub t_window: f64,
    pub n_steps: u32,
    pub max_components: usize,
    #[serde(default)]
    pub integrator_mode: IntegratorMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            t_window: 1.0,
            n_steps: 20,
            max_components: 3,
            integrator_mode: IntegratorMode::Paper,
        }
    }
}

/// The three time-scheduling regimes compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePreset {
    /// Each component is denoised only after the previous one finished.
    NoOverlap,
    /// Windows partially overlap (`lambda = 0.3`, `t_window = 0.4`).
    Overlapping,
    /// All components keep refining until `t = 1`.
    TillEnd,
}

impl SchedulePreset {
    pub fn lambda_and_window(self) -> (f64, f64) {
        match self {
            SchedulePreset::NoOverlap => (0.33, 0.33),
            SchedulePreset::Overlapping => (0.3, 0.4),
            SchedulePreset::TillEnd => (0.33, 1.0),
        }
    }
}

/// A grid time `step / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepTime {
    step: u32,
    n_steps: u32,
}

impl StepTime {
    pub fn new(step: u32, n_steps: u32) -> Result<Self> {
        if n_steps == 0 || step > n_steps {
            return Err(Error::Schedule(format!("step {step} outside [0, {n_steps}]")));
        }
        Ok(Self { step, n_steps })
    }

    pub fn step(self) -> u32 {
        self.step
    }

    pub fn n_steps(self) -> u32 {
        self.n_steps
    }

    pub fn value(self) -> f64 {
        self.step as f64 / self.n_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    config: ScheduleConfig,
    lambda_steps: u32,
    window_steps: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self::from_config(&ScheduleConfig::default()).expect("default schedule is valid")
    }
}

fn near_integer(x: f64) -> Option<u64> {
    let r = x.round();
    ((x - r).abs() < GRID_EPS && r >= 0.0).then_some(r as u64)
}

impl Schedule {
    pub fn new(
        lambda: f64,
        t_window: f64,
        n_steps: u32,
        max_components: usize,
        integrator_mode: IntegratorMode,
    ) -> Result<Self> {
        Self::from_config(&ScheduleConfig { lambda, t_window, n_steps, max_components, integrator_mode })
    }

    pub fn preset(preset: SchedulePreset, n_steps: u32, max_components: usize) -> Result<Self> {
        let (lambda, t_window) = preset.lambda_and_window();
        Self::new(lambda, t_window, n_steps, max_components, IntegratorMode::Paper)
    }

    pub fn from_config(config: &ScheduleConfig) -> Result<Self> {
        let ScheduleConfig { lambda, t_window, n_steps, max_components, .. } = *config;
        if n_steps == 0 {
            return Err(Error::Schedule("n_steps must be positive".into()));
        }
        if max_components == 0 {
            return Err(Error::Schedule("max_components must be positive".into()));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Schedule(format!("lambda {lambda} outside (0, 1]")));
        }
        if !(t_window > 0.0 && t_window <= 1.0) {
            return Err(Error::Schedule(format!("t_window {t_window} outside (0, 1]")));
        }
        if lambda > 1.0 / max_components as f64 + 1e-12 {
            return Err(Error::Schedule(format!(
                "lambda {lambda} exceeds 1/max_components = {}",
                1.0 / max_components as f64
            )));
        }
        let lambda_steps = near_integer(lambda * n_steps as f64)
            .filter(|&k| k > 0)
            .ok_or_else(|| {
                Error::Schedule(format!(
                    "lambda * n_steps = {} is not a positive integer",
                    lambda * n_steps as f64
                ))
            })? as u32;
        let raw_window = t_window * n_steps as f64;
        let window_steps = near_integer(raw_window).map_or(raw_window, |k| k as f64);
        Ok(Self { config: config.clone(), lambda_steps, window_steps })
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    pub fn t_window(&self) -> f64 {
        self.config.t_window
    }

    pub fn n_steps(&self) -> u32 {
        self.config.n_steps
    }

    pub fn max_components(&self) -> usize {
        self.config.max_components
    }

    pub fn mode(&self) -> IntegratorMode {
        self.config.integrator_mode
    }

    pub fn with_mode(&self, mode: IntegratorMode) -> Self {
        let mut s = self.clone();
        s.config.integrator_mode = mode;
        s
    }

    pub fn lambda_steps(&self) -> u32 {
        self.lambda_steps
    }

    pub fn window_steps(&self) -> f64 {
        self.window_steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.n_steps as f64
    }

    pub fn time(&self, step: u32) -> Result<StepTime> {
        StepTime::new(step, self.config.n_steps)
    }

    /// Number of components present at `t` for an object of `n` components.
    pub fn k_of_t(&self, t: StepTime, n: usize) -> usize {
        if t.step == 0 {
            return 0;
        }
        ((t.step / self.lambda_steps) as usize + 1).min(n)
    }

    /// Generation step of the 1-based component `i`.
    pub fn gen_step(&self, i: usize) -> Result<u32> {
        if i == 0 || i > self.config.max_components {
            return Err(Error::Schedule(format!(
                "component index {i} outside [1, {}]",
                self.config.max_components
            )));
        }
        Ok(self.lambda_steps * (i as u32 - 1))
    }

    pub fn t_gen(&self, i: usize) -> Result<StepTime> {
        self.time(self.gen_step(i)?)
    }

    /// `clip((t - t_gen) / t_window)` evaluated in step units.
    pub fn t_local(&self, t: StepTime, t_gen: StepTime) -> f64 {
        self.t_local_steps(t.step, t_gen.step)
    }

    pub(crate) fn t_local_steps(&self, step: u32, gen_step: u32) -> f64 {
        if step <= gen_step {
            return 0.0;
        }
        ((step - gen_step) as f64 / self.window_steps).min(1.0)
    }

    /// `t_end = t_gen + t_window`, in step units.
    pub fn end_steps(&self, gen_step: u32) -> f64 {
        gen_step as f64 + self.window_steps
    }

    /// Whether grid step `step` has reached the end of the window opened at `gen_step`.
    pub fn reached_end(&self, step: u32, gen_step: u32) -> bool {
        step as f64 >= self.end_steps(gen_step) - GRID_EPS
    }

    /// `kappa = min(t_end - t, dt) / t_window` for arbitrary real times.
    pub fn kappa(&self, t: f64, t_end: f64) -> f64 {
        (t_end - t).min(self.dt()).max(0.0) / self.config.t_window
    }

    /// `kappa` at grid step `step` for the component generated at `gen_step`.
    pub fn kappa_at(&self, step: u32, gen_step: u32) -> f64 {
        let remaining = self.end_steps(gen_step) - step as f64;
        remaining.clamp(0.0, 1.0) / self.window_steps
    }

    /// Grid steps at which a compositional action may fire.
    pub fn action_steps(&self) -> Vec<u32> {
        (0..self.config.max_components as u32)
            .map(|i| i * self.lambda_steps)
            .take_while(|&s| s < self.config.n_steps)
            .collect()
    }

    pub fn is_action_step(&self, step: u32) -> bool {
        step % self.lambda_steps == 0
            && ((step / self.lambda_steps) as usize) < self.config.max_components
            && step < self.config.n_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_slot() -> Schedule {
        Schedule::new(0.2, 0.4, 10, 4, IntegratorMode::Paper).unwrap()
    }

    #[test]
    fn k_of_t_examples() {
        let s = four_slot();
        assert_eq!(s.k_of_t(s.time(0).unwrap(), 4), 0);
        assert_eq!(s.k_of_t(s.time(5).unwrap(), 4), 3);
        assert_eq!(s.k_of_t(s.time(10).unwrap(), 4), 4);
    }

    #[test]
    fn t_gen_examples() {
        let s = four_slot();
        assert_eq!(s.t_gen(1).unwrap().value(), 0.0);
        assert!((s.t_gen(3).unwrap().value() - 0.4).abs() < 1e-15);
        let s = Schedule::new(0.3, 1.0, 20, 3, IntegratorMode::Paper).unwrap();
        assert!((s.t_gen(3).unwrap().value() - 0.6).abs() < 1e-15);
        assert!(s.t_gen(4).is_err());
        assert!(s.t_gen(0).is_err());
    }

    #[test]
    fn t_local_examples() {
        let s = four_slot();
        let tg = s.time(2).unwrap();
        assert_eq!(s.t_local(s.time(5).unwrap(), tg), 0.75);
        assert_eq!(s.t_local(s.time(1).unwrap(), tg), 0.0);
        assert_eq!(s.t_local(s.time(9).unwrap(), tg), 1.0);
    }

    #[test]
    fn kappa_examples() {
        let s = Schedule::new(0.2, 0.4, 20, 4, IntegratorMode::Paper).unwrap();
        assert!((s.kappa(0.1, 0.4) - 0.125).abs() < 1e-15);
        assert!((s.kappa(0.38, 0.4) - 0.05).abs() < 1e-12);
        assert_eq!(s.kappa(0.4, 0.4), 0.0);
        assert_eq!(s.kappa(0.7, 0.4), 0.0);
        // grid version agrees
        assert!((s.kappa_at(2, 0) - 0.125).abs() < 1e-15);
        assert_eq!(s.kappa_at(8, 0), 0.0);
    }

    #[test]
    fn action_steps_examples() {
        let s = Schedule::new(0.3, 1.0, 20, 3, IntegratorMode::Paper).unwrap();
        assert_eq!(s.action_steps(), vec![0, 6, 12]);
        let s = Schedule::new(0.2, 0.4, 10, 4, IntegratorMode::Paper).unwrap();
        assert_eq!(s.action_steps(), vec![0, 2, 4, 6]);
        assert!(matches!(
            Schedule::new(0.15, 0.4, 10, 4, IntegratorMode::Paper),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn rejects_lambda_above_inverse_capacity() {
        assert!(Schedule::new(0.5, 0.4, 10, 3, IntegratorMode::Paper).is_err());
    }

    #[test]
    fn presets() {
        assert!(Schedule::preset(SchedulePreset::Overlapping, 20, 3).is_ok());
        // 0.33 * 20 is not on the grid; 100 steps is.
        assert!(Schedule::preset(SchedulePreset::NoOverlap, 20, 3).is_err());
        let s = Schedule::preset(SchedulePreset::TillEnd, 100, 3).unwrap();
        assert_eq!(s.action_steps(), vec![0, 33, 66]);
    }

    #[test]
    fn default_hyperparameters() {
        let s = Schedule::default();
        assert_eq!(s.lambda(), 0.3);
        assert_eq!(s.t_window(), 1.0);
        assert_eq!(s.n_steps(), 20);
        assert_eq!(s.mode(), IntegratorMode::Paper);
    }
}
