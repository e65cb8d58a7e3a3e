use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::config::{Resolved, RunConfig};
use crate::cli::io::{self, Header, JsonlWriter};
use crate::compstate::{sequence_key, Coords};
use crate::domain::{generate_dataset, generate_weighted_dataset, DatasetObject};
use crate::error::{Error, Result};
use crate::gflownet::{
    ce_batch, ce_loss, sample_many, tb_loss, train_policy_ce, train_policy_tb, Objective, PolicyModel, PolicyView,
    Rollouts, TrajectoryStep,
};
use crate::nn::{gradcheck, CoordCheck, GradcheckConfig, GradcheckReport, ParamStore, Tape};
use crate::oracle::{self, SequenceTable};
use crate::rng::{self, mix_seed};
use crate::stateflow::{self, StateFlowModel};

const DATA_TAG: u64 = 1;
const SF_INIT_TAG: u64 = 2;
const SF_TRAIN_TAG: u64 = 3;
const POLICY_INIT_TAG: u64 = 4;
const POLICY_TRAIN_TAG: u64 = 5;
const SAMPLE_TAG: u64 = 6;
const CE_DATA_TAG: u64 = 7;
const GRADCHECK_TAG: u64 = 8;
const LOG_EVERY: usize = 100;

/// A loaded configuration plus run-wide settings.
pub struct Ctx {
    pub cfg: RunConfig,
    pub res: Resolved,
    pub threads: usize,
    config_hash: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig, threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        let res = cfg.resolve()?;
        let config_hash = cfg.hash();
        Ok(Self { cfg, res, threads, config_hash })
    }

    fn lib_hash(&self) -> &str {
        self.res.domain.library().hash()
    }

    pub fn header(&self, kind: &str, extra: serde_json::Value) -> Header {
        Header {
            kind: kind.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash.clone(),
            library_hash: self.lib_hash().into(),
            seed: self.cfg.seed,
            extra,
        }
    }

    fn meta(&self, kind: &str, extra: serde_json::Value) -> serde_json::Value {
        json!({
            "kind": kind,
            "config_hash": self.config_hash,
            "library_hash": self.lib_hash(),
            "seed": self.cfg.seed,
            "extra": extra,
        })
    }

    fn seed(&self, tag: u64) -> u64 {
        mix_seed(self.cfg.seed, tag)
    }

    fn load_stateflow(&self) -> Result<StateFlowModel> {
        let path = self.cfg.paths.stateflow();
        let (m, meta) = StateFlowModel::load(&path, self.res.domain.library(), &self.res.sched)?;
        check_meta(&meta, &path, self.lib_hash())?;
        Ok(m)
    }

    fn load_policy(&self) -> Result<PolicyModel> {
        let path = self.cfg.paths.policy();
        let (m, meta) = PolicyModel::load(&path, self.res.domain.library(), &self.res.sched)?;
        check_meta(&meta, &path, self.lib_hash())?;
        Ok(m)
    }

    fn rollouts<'a>(&'a self, sf: &'a StateFlowModel) -> Rollouts<'a, StateFlowModel> {
        Rollouts::new(
            &self.res.domain,
            &self.res.sched,
            sf,
            self.res.domain.transition_params(self.cfg.seed, self.cfg.sigma_prior),
            self.cfg.reward.clone(),
        )
    }
}

fn check_meta(meta: &serde_json::Value, path: &Path, lib_hash: &str) -> Result<()> {
    if meta.get("library_hash").and_then(|h| h.as_str()) != Some(lib_hash) {
        return Err(Error::Format(format!("{} was trained with a different synthon library", path.display())));
    }
    Ok(())
}

pub fn gen_data(ctx: &Ctx) -> Result<serde_json::Value> {
    let h = &ctx.cfg.stateflow;
    let data = generate_dataset(&ctx.res.domain, &ctx.res.sched, h.dataset_size, ctx.seed(DATA_TAG), h.sigma_data)?;
    let path = ctx.cfg.paths.dataset();
    let mut w = JsonlWriter::create(&path, &ctx.header("dataset", json!({"n": data.len()})))?;
    for o in &data {
        w.write(o)?;
    }
    w.finish()?;
    log::info!("wrote {} objects to {}", data.len(), path.display());
    Ok(json!({"dataset": path, "n": data.len()}))
}

pub fn train_stateflow(ctx: &Ctx) -> Result<serde_json::Value> {
    let lib = ctx.res.domain.library();
    let (_, data): (Header, Vec<DatasetObject>) = io::read_jsonl(&ctx.cfg.paths.dataset(), "dataset", ctx.lib_hash())?;
    let mut model = StateFlowModel::new(lib, &ctx.res.sched, ctx.seed(SF_INIT_TAG))?;
    let mut metrics = JsonlWriter::create(&ctx.cfg.paths.stateflow_metrics(), &ctx.header("stateflow_metrics", json!(null)))?;
    let running = stateflow::train_stateflow(
        &mut model,
        lib,
        &ctx.res.sched,
        &data,
        &ctx.cfg.stateflow,
        ctx.cfg.sigma_prior,
        ctx.cfg.rules.p_max,
        ctx.seed(SF_TRAIN_TAG),
        |m| {
            if m.iter % LOG_EVERY == 0 {
                log::info!("stateflow iter {} loss {:.5} running {:.5}", m.iter, m.loss, m.running_loss);
            }
            metrics.write(m)
        },
    )?;
    metrics.finish()?;
    let path = ctx.cfg.paths.stateflow();
    model.save(&path, ctx.meta(stateflow::KIND, json!({"running_loss": running})))?;
    log::info!("state-flow checkpoint {}", path.display());
    Ok(json!({"checkpoint": path, "running_loss": running}))
}

pub fn train_policy(ctx: &Ctx) -> Result<serde_json::Value> {
    let lib = ctx.res.domain.library();
    let sched = &ctx.res.sched;
    let hyper = &ctx.cfg.policy;
    let mut policy = PolicyModel::new(lib, sched, ctx.seed(POLICY_INIT_TAG))?;
    let mut metrics = JsonlWriter::create(
        &ctx.cfg.paths.policy_metrics(),
        &ctx.header("policy_metrics", json!({"objective": hyper.objective})),
    )?;
    let summary = match hyper.objective {
        Objective::Tb => {
            let sf = ctx.load_stateflow()?;
            let rollouts = ctx.rollouts(&sf);
            let reference = if hyper.tv_every > 0 {
                let table = oracle::enumerate_sequences(&rollouts, &PolicyView::new(None))?;
                let target = oracle::target_distribution(&table, 1.0);
                Some((table, target))
            } else {
                None
            };
            let tv = |m: &PolicyModel| -> Result<f64> {
                let (table, target) = reference.as_ref().expect("reference table");
                let t = oracle::with_policy(table, &rollouts, &PolicyView::new(Some(m)))?;
                oracle::tv_distance(&oracle::model_distribution(&t)?, target)
            };
            let tv_ref: Option<&dyn Fn(&PolicyModel) -> Result<f64>> = reference.as_ref().map(|_| &tv as _);
            let mut last = None;
            train_policy_tb(&mut policy, &rollouts, hyper, ctx.seed(POLICY_TRAIN_TAG), ctx.threads, tv_ref, |m| {
                if m.iter % LOG_EVERY == 0 || m.tv_vs_oracle.is_some() {
                    log::info!(
                        "policy iter {} tb_loss {:.5} log_Z {:.4} mean_reward {:.4} tv {:?}",
                        m.iter,
                        m.tb_loss,
                        m.log_z,
                        m.mean_reward,
                        m.tv_vs_oracle
                    );
                }
                last = Some(m.clone());
                metrics.write(m)
            })?;
            json!({"objective": "tb", "log_Z": policy.log_z(), "last": last})
        }
        Objective::Ce => {
            let weighting = ctx.cfg.reward.with_beta(ctx.cfg.reward.beta * hyper.ce_reward_beta);
            let data = generate_weighted_dataset(
                &ctx.res.domain,
                sched,
                &weighting,
                hyper.ce_dataset_size,
                ctx.seed(CE_DATA_TAG),
                ctx.cfg.stateflow.sigma_data,
            )?;
            let mut last = None;
            train_policy_ce(
                &mut policy,
                &ctx.res.domain,
                sched,
                &data,
                hyper,
                ctx.cfg.sigma_prior,
                ctx.seed(POLICY_TRAIN_TAG),
                |m| {
                    if m.iter % LOG_EVERY == 0 {
                        log::info!("policy iter {} ce_loss {:.5} baseline {:.5}", m.iter, m.ce_loss, m.uniform_baseline);
                    }
                    last = Some(m.clone());
                    metrics.write(m)
                },
            )?;
            json!({"objective": "ce", "last": last})
        }
    };
    metrics.finish()?;
    let path = ctx.cfg.paths.policy();
    policy.save(&path, ctx.meta(crate::gflownet::KIND, json!({"log_Z": policy.log_z()})))?;
    log::info!("policy checkpoint {}", path.display());
    let mut out = summary;
    out["checkpoint"] = json!(path);
    Ok(out)
}

/// One sampled trajectory as written by `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub key: String,
    pub steps: Vec<TrajectoryStep>,
    pub states: Vec<Coords>,
    pub reward: f64,
    pub log_reward: f64,
    pub log_prob: f64,
}

pub fn sample(ctx: &Ctx, n: usize, uniform: bool) -> Result<serde_json::Value> {
    if n == 0 {
        return Err(Error::Config("-n must be >= 1".into()));
    }
    let sf = ctx.load_stateflow()?;
    let policy = if uniform { None } else { Some(ctx.load_policy()?) };
    let rollouts = ctx.rollouts(&sf);
    let view = PolicyView::new(policy.as_ref());
    let trajs = sample_many(&rollouts, &view, n, 0.0, ctx.seed(SAMPLE_TAG), &[], ctx.threads)?;
    let log_z = policy.as_ref().map(PolicyModel::log_z);
    let path = ctx.cfg.paths.samples();
    let header = ctx.header("samples", json!({"n": n, "policy": policy_name(uniform), "log_Z": log_z}));
    let mut w = JsonlWriter::create(&path, &header)?;
    let lib = ctx.res.domain.library();
    for t in &trajs {
        w.write(&SampleRecord {
            key: sequence_key(lib, &t.actions()),
            steps: t.steps.clone(),
            states: t.terminal.states().to_vec(),
            reward: t.reward,
            log_reward: t.log_reward,
            log_prob: t.log_prob(),
        })?;
    }
    w.finish()?;
    let mean_reward = trajs.iter().map(|t| t.reward).sum::<f64>() / n as f64;
    log::info!("wrote {n} samples to {}", path.display());
    Ok(json!({"samples": path, "n": n, "mean_reward": mean_reward}))
}

fn policy_name(uniform: bool) -> &'static str {
    if uniform {
        "uniform"
    } else {
        "trained"
    }
}

pub fn oracle(ctx: &Ctx, uniform: bool) -> Result<serde_json::Value> {
    let sf = ctx.load_stateflow()?;
    let policy = if uniform { None } else { Some(ctx.load_policy()?) };
    let rollouts = ctx.rollouts(&sf);
    let table = oracle::enumerate_sequences(&rollouts, &PolicyView::new(policy.as_ref()))?;
    oracle::cross_check(&table, &ctx.res.domain, &ctx.res.sched)?;
    oracle::model_distribution(&table)?;
    let path = ctx.cfg.paths.oracle();
    let header = ctx.header(
        "oracle",
        json!({"n_sequences": table.len(), "log_Z_exact": table.log_z_exact(), "policy": policy_name(uniform)}),
    );
    let mut w = JsonlWriter::create(&path, &header)?;
    table.write_jsonl(w.inner())?;
    w.finish()?;
    log::info!("{} sequences, log Z = {:.6}", table.len(), table.log_z_exact());
    Ok(json!({"oracle": path, "n_sequences": table.len(), "log_Z_exact": table.log_z_exact()}))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_samples: usize,
    pub n_sequences: usize,
    pub sample_policy: serde_json::Value,
    /// Empirical sample distribution against the target.
    pub tv_vs_oracle: f64,
    /// Exact distribution of the table's policy against the target.
    pub tv_exact_vs_target: Option<f64>,
    pub mean_reward: f64,
    pub target_mean_reward: f64,
    pub length_histogram: BTreeMap<usize, usize>,
    #[serde(rename = "log_Z")]
    pub log_z: Option<f64>,
    #[serde(rename = "log_Z_exact")]
    pub log_z_exact: f64,
    #[serde(rename = "log_Z_error")]
    pub log_z_error: Option<f64>,
}

pub fn evaluate(ctx: &Ctx, samples: Option<PathBuf>, table: Option<PathBuf>) -> Result<serde_json::Value> {
    let samples_path = samples.unwrap_or_else(|| ctx.cfg.paths.samples());
    let table_path = table.unwrap_or_else(|| ctx.cfg.paths.oracle());
    let (sh, records): (Header, Vec<SampleRecord>) = io::read_jsonl(&samples_path, "samples", ctx.lib_hash())?;
    io::read_header(&table_path, "oracle", ctx.lib_hash())?;
    let table = SequenceTable::read_jsonl(std::io::BufReader::new(
        std::fs::File::open(&table_path)
            .map_err(|source| Error::MissingFile { path: table_path.display().to_string(), source })?,
    ))?;
    let target = oracle::target_distribution(&table, 1.0);
    let freq = oracle::empirical_distribution(&table, records.iter().map(|r| r.key.as_str()))?;
    let mut hist = BTreeMap::new();
    for r in &records {
        *hist.entry(r.steps.len()).or_insert(0) += 1;
    }
    let log_z = sh.extra.get("log_Z").and_then(|v| v.as_f64());
    let report = Report {
        n_samples: records.len(),
        n_sequences: table.len(),
        sample_policy: sh.extra.get("policy").cloned().unwrap_or(serde_json::Value::Null),
        tv_vs_oracle: oracle::tv_distance(&freq, &target)?,
        tv_exact_vs_target: oracle::model_distribution(&table).ok().map(|q| oracle::tv_distance(&q, &target)).transpose()?,
        mean_reward: records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64,
        target_mean_reward: target.iter().zip(&table.entries).map(|(p, e)| p * e.reward).sum(),
        length_histogram: hist,
        log_z,
        log_z_exact: table.log_z_exact(),
        log_z_error: log_z.map(|z| (z - table.log_z_exact()).abs()),
    };
    io::write_json(&ctx.cfg.paths.report(), &report)?;
    log::info!("tv_vs_oracle {:.4}", report.tv_vs_oracle);
    Ok(serde_json::to_value(report)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckEntry {
    pub loss: &'static str,
    pub checked: usize,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
    pub worst: Option<CoordCheck>,
}

impl GradcheckEntry {
    fn new(loss: &'static str, r: &GradcheckReport) -> Self {
        Self { loss, checked: r.checked, max_rel_err: r.max_rel_err, tol: r.tol, passed: r.passed(), worst: r.worst.clone() }
    }
}

/// Central-difference checks of the state-flow, trajectory-balance and
/// cross-entropy losses on freshly initialised models.
pub fn gradcheck_all(ctx: &Ctx) -> Result<serde_json::Value> {
    let lib = ctx.res.domain.library();
    let sched = &ctx.res.sched;
    let domain = &ctx.res.domain;
    let cfg = GradcheckConfig::default();
    let seed = ctx.seed(GRADCHECK_TAG);
    let mut r = rng::stream(seed, &[]);
    let data = generate_dataset(domain, sched, 16, seed, ctx.cfg.stateflow.sigma_data)?;
    let mut entries = Vec::new();

    let sf = StateFlowModel::new(lib, sched, seed)?;
    let hyper = crate::stateflow::StateFlowHyper { batch: 4, ..ctx.cfg.stateflow.clone() };
    let batch = stateflow::sample_batch(lib, sched, &data, &hyper, ctx.cfg.sigma_prior, ctx.cfg.rules.p_max, &mut r)?;
    let f = |s: &ParamStore| {
        let m = StateFlowModel::from_store(s.clone(), lib, sched)?;
        let mut tape = Tape::new();
        let l = stateflow::state_loss(&m, &mut tape, lib, sched, &batch)?;
        Ok((tape, l))
    };
    entries.push(GradcheckEntry::new("state_flow", &gradcheck(sf.store(), f, &cfg, &mut r)?));

    let mut policy = PolicyModel::new(lib, sched, seed)?;
    policy.set_log_z(0.5);
    let rollouts = ctx.rollouts(&sf);
    let trajs = sample_many(&rollouts, &PolicyView::new(Some(&policy)), 4, 0.0, seed, &[], 1)?;
    let f = |s: &ParamStore| {
        let m = PolicyModel::from_store(s.clone(), lib, sched)?;
        let mut tape = Tape::new();
        let l = tb_loss(&m, &mut tape, &rollouts, &trajs)?;
        Ok((tape, l))
    };
    entries.push(GradcheckEntry::new("trajectory_balance", &gradcheck(policy.store(), f, &cfg, &mut r)?));

    let refs: Vec<&DatasetObject> = data.iter().take(4).collect();
    let examples = ce_batch(domain, sched, &refs, ctx.cfg.sigma_prior, &mut r)?;
    let f = |s: &ParamStore| {
        let m = PolicyModel::from_store(s.clone(), lib, sched)?;
        let mut tape = Tape::new();
        let l = ce_loss(&m, &mut tape, lib, sched, &examples)?;
        Ok((tape, l))
    };
    entries.push(GradcheckEntry::new("cross_entropy", &gradcheck(policy.store(), f, &cfg, &mut r)?));

    let passed = entries.iter().all(|e| e.passed);
    let report = json!({"h": cfg.h, "tol": cfg.tol, "checks": entries, "passed": passed});
    io::write_json(&ctx.cfg.paths.gradcheck(), &report)?;
    if !passed {
        return Err(Error::Invariant(format!("gradient check failed: {report}")));
    }
    Ok(report)
}

