use serde::{Deserialize, Serialize};

use crate::compstate::{ComposedObject, Coords, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    pub anchors: Vec<Point>,
    pub r_min: f64,
    /// Temperature `T_r`.
    pub temperature: f64,
    /// Reward exponent, folded into the returned reward.
    pub beta: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            anchors: vec![[-2.5, 0.5], [2.0, 0.0], [0.0, 3.5], [2.5, 4.0]],
            r_min: 0.6,
            temperature: 4.0,
            beta: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::Config("reward anchors must be non-empty".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("reward temperature {} must be > 0", self.temperature)));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("reward beta {} must be >= 1", self.beta)));
        }
        if !(self.r_min >= 0.0) || self.anchors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("reward r_min/anchors must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Anchor attraction plus inter-component clash penalty.
pub fn energy(states: &[Coords], params: &RewardParams) -> f64 {
    let mut e = 0.0;
    for &p in states.iter().flatten() {
        e += params.anchors.iter().map(|&a| dist2(p, a)).fold(f64::INFINITY, f64::min);
    }
    for (i, ci) in states.iter().enumerate() {
        for cj in &states[i + 1..] {
            for &p in ci {
                for &q in cj {
                    let d = dist2(p, q).sqrt();
                    if d < params.r_min {
                        e += (params.r_min - d).powi(2);
                    }
                }
            }
        }
    }
    e
}

/// `log R = -beta * E / T_r`, defined on any coordinate set.
pub fn log_reward_of_states(states: &[Coords], params: &RewardParams) -> f64 {
    -params.beta * energy(states, params) / params.temperature
}

pub fn log_reward(x: &ComposedObject, params: &RewardParams) -> Result<f64> {
    if !x.is_terminal() {
        return Err(Error::NotTerminal);
    }
    let lr = log_reward_of_states(x.states(), params);
    if !lr.is_finite() {
        return Err(Error::NonFinite { what: "log reward".into() });
    }
    Ok(lr)
}

pub fn reward(x: &ComposedObject, params: &RewardParams) -> Result<f64> {
    log_reward(x, params).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(anchors: Vec<Point>) -> RewardParams {
        RewardParams { anchors, ..RewardParams::default() }
    }

    #[test]
    fn points_on_anchors_give_unit_reward() {
        let p = params(vec![[0.0, 0.0], [5.0, 0.0]]);
        let states = vec![vec![[0.0, 0.0]], vec![[5.0, 0.0]]];
        assert_eq!(energy(&states, &p), 0.0);
        assert_eq!(log_reward_of_states(&states, &p).exp(), 1.0);
    }

    #[test]
    fn distance_two_gives_exp_minus_one() {
        let p = params(vec![[0.0, 0.0], [10.0, 0.0]]);
        let states = vec![vec![[2.0, 0.0]], vec![[10.0, 0.0]]];
        assert!((energy(&states, &p) - 4.0).abs() < 1e-15);
        assert!((log_reward_of_states(&states, &p).exp() - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn clash_counts_only_across_components() {
        let p = params(vec![[0.0, 0.0]]);
        let same = vec![vec![[0.0, 0.0], [0.0, 0.0]]];
        assert_eq!(energy(&same, &p), 0.0);
        let split = vec![vec![[0.0, 0.0]], vec![[0.0, 0.0]]];
        assert!((energy(&split, &p) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn doubling_beta_squares_reward() {
        let p = params(vec![[0.3, 0.1], [2.0, -1.0]]);
        let states = vec![vec![[0.0, 0.0], [1.0, 0.2]], vec![[1.4, 0.0]]];
        let r1 = log_reward_of_states(&states, &p).exp();
        let r2 = log_reward_of_states(&states, &p.with_beta(2.0)).exp();
        assert!((r2 - r1 * r1).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_terminal() {
        assert!(matches!(log_reward(&ComposedObject::empty(), &RewardParams::default()), Err(Error::NotTerminal)));
    }

    #[test]
    fn validation() {
        assert!(RewardParams::default().validate().is_ok());
        assert!(params(vec![]).validate().is_err());
        assert!(RewardParams { temperature: 0.0, ..RewardParams::default() }.validate().is_err());
        assert!(RewardParams { beta: 0.5, ..RewardParams::default() }.validate().is_err());
    }
}
