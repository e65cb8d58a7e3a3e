use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compstate::Library;
use crate::domain::{Domain, RewardParams, RuleSet};
use crate::error::{Error, Result};
use crate::gflownet::PolicyHyper;
use crate::schedule::{IntegratorMode, Schedule, ScheduleConfig};
use crate::stateflow::StateFlowHyper;

/// Output locations. Unset entries default to fixed names under `out_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    pub stateflow: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("runs/default"), dataset: None, stateflow: None, policy: None, samples: None, oracle: None }
    }
}

impl Paths {
    fn or_default(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn dataset(&self) -> PathBuf {
        self.or_default(&self.dataset, "dataset.jsonl")
    }

    pub fn stateflow(&self) -> PathBuf {
        self.or_default(&self.stateflow, "stateflow.cgfw")
    }

    pub fn policy(&self) -> PathBuf {
        self.or_default(&self.policy, "policy.cgfw")
    }

    pub fn samples(&self) -> PathBuf {
        self.or_default(&self.samples, "samples.jsonl")
    }

    pub fn oracle(&self) -> PathBuf {
        self.or_default(&self.oracle, "oracle.jsonl")
    }

    pub fn stateflow_metrics(&self) -> PathBuf {
        self.out_dir.join("stateflow_metrics.jsonl")
    }

    pub fn policy_metrics(&self) -> PathBuf {
        self.out_dir.join("policy_metrics.jsonl")
    }

    pub fn report(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }

    pub fn gradcheck(&self) -> PathBuf {
        self.out_dir.join("gradcheck.json")
    }
}

/// Everything a run needs. Relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: ScheduleConfig,
    /// Synthon library file; the bundled default library when unset.
    pub library: Option<PathBuf>,
    /// Standard deviation of the initial-state noise.
    pub sigma_prior: f64,
    pub rules: RuleSet,
    pub reward: RewardParams,
    pub stateflow: StateFlowHyper,
    pub policy: PolicyHyper,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            schedule: ScheduleConfig {
                lambda: 0.3,
                t_window: 0.4,
                n_steps: 20,
                max_components: 3,
                integrator_mode: IntegratorMode::Paper,
            },
            library: None,
            sigma_prior: 1.0,
            rules: RuleSet::default(),
            reward: RewardParams::default(),
            stateflow: StateFlowHyper::default(),
            policy: PolicyHyper::default(),
            paths: Paths::default(),
        }
    }
}

/// Validated, ready-to-use pieces of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub sched: Schedule,
    pub domain: Domain,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::MissingFile { path: path.display().to_string(), source })?;
        let cfg = Self::from_json(&text)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn library(&self) -> Result<Library> {
        match &self.library {
            Some(p) => Library::load(p),
            None => Ok(Library::default_library()),
        }
    }

    /// Validates every block and builds the schedule and domain.
    pub fn resolve(&self) -> Result<Resolved> {
        let sched = Schedule::from_config(&self.schedule)?;
        if !(self.sigma_prior >= 0.0 && self.sigma_prior.is_finite()) {
            return Err(Error::Config(format!("sigma_prior {} must be finite and >= 0", self.sigma_prior)));
        }
        self.reward.validate()?;
        self.stateflow.validate()?;
        self.policy.validate()?;
        let domain = Domain::new(self.library()?, self.rules.clone(), &sched)?;
        Ok(Resolved { sched, domain })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(RunConfig::from_json(&back.to_json()).unwrap(), back);
    }

    #[test]
    fn partial_config_fills_defaults_and_unknown_keys_fail() {
        let c = RunConfig::from_json(r#"{"seed": 7, "policy": {"iters": 3}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.policy.iters, 3);
        assert_eq!(c.policy.batch, PolicyHyper::default().batch);
        assert!(matches!(RunConfig::from_json(r#"{"sed": 7}"#), Err(Error::Config(_))));
    }

    #[test]
    fn schedule_is_validated_eagerly() {
        let mut c = RunConfig::default();
        c.schedule.lambda = 0.45;
        assert!(matches!(c.resolve(), Err(Error::Schedule(_))));
        let mut c = RunConfig::default();
        c.library = Some(PathBuf::from("/nonexistent/library.json"));
        assert!(matches!(c.resolve(), Err(Error::MissingFile { .. })));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bundled_default_config_file_matches() {
        let text = include_str!("../../../../configs/default.json");
        assert_eq!(RunConfig::from_json(text).unwrap(), RunConfig::default());
    }
}
