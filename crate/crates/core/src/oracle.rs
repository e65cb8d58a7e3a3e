//! Exhaustive reference for the toy domain: every terminal compositional
//! sequence rolled out deterministically, with exact target and model
//! distributions.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::compstate::{sequence_key, ActionRef, ComposedObject, Coords};
use crate::domain::{Domain, MAX_SEQUENCES};
use crate::error::{Error, Result};
use crate::gflownet::{PolicyView, Rollouts, Trajectory};
use crate::schedule::Schedule;
use crate::stateflow::Predictor;

/// Tolerance on the total mass of the exact model distribution.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub key: String,
    pub actions: Vec<ActionRef>,
    pub states: Vec<Coords>,
    pub reward: f64,
    pub log_reward: f64,
    /// Exact log-probability of the sequence under the policy the table was
    /// built with.
    pub log_prob: f64,
}

/// All terminal sequences ordered by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTable {
    pub entries: Vec<SequenceEntry>,
}

impl SequenceTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Z = sum R` with β already folded into the reward.
    pub fn z_exact(&self) -> f64 {
        self.entries.iter().map(|e| e.reward).sum()
    }

    pub fn log_z_exact(&self) -> f64 {
        log_sum_exp(self.entries.iter().map(|e| e.log_reward))
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.entries.iter().enumerate().map(|(i, e)| (e.key.as_str(), i)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads entries, skipping lines that are not sequence records.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut entries: Vec<SequenceEntry> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let v: serde_json::Value = serde_json::from_str(&line)?;
            if v.get("key").is_some() && v.get("actions").is_some() {
                entries.push(serde_json::from_value(v)?);
            }
        }
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        if entries.windows(2).any(|w| w[0].key == w[1].key) {
            return Err(Error::Format("duplicate sequence in oracle table".into()));
        }
        Ok(Self { entries })
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Depth-first enumeration through the deterministic rollouts. Each entry
/// carries the exact log-probability under `view`'s policy.
pub fn enumerate_sequences<P: Predictor + Sync + ?Sized>(
    rollouts: &Rollouts<'_, P>,
    view: &PolicyView<'_>,
) -> Result<SequenceTable> {
    let lib = rollouts.domain.library();
    let mut entries = Vec::new();
    let mut stack: Vec<(Vec<ActionRef>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((prefix, lp)) = stack.pop() {
        let x = rollouts.state(&prefix)?;
        if x.is_terminal() {
            if prefix.len() < rollouts.domain.rules().min_len || prefix.len() > rollouts.domain.rules().max_len {
                return Err(Error::Invariant(format!("sequence {} violates the length bounds", sequence_key(lib, &prefix))));
            }
            let log_reward = crate::domain::log_reward(&x, &rollouts.reward)?;
            entries.push(SequenceEntry {
                key: sequence_key(lib, &prefix),
                actions: prefix,
                states: x.states().to_vec(),
                reward: log_reward.exp(),
                log_reward,
                log_prob: lp,
            });
            if entries.len() > MAX_SEQUENCES {
                return Err(Error::EnumerationLimit { limit: MAX_SEQUENCES });
            }
            continue;
        }
        let d = view.decision(rollouts, &prefix)?;
        for (a, l) in d.0.iter().zip(&d.1) {
            let mut p = prefix.clone();
            p.push(*a);
            stack.push((p, lp + l));
        }
    }
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    if entries.windows(2).any(|w| w[0].key == w[1].key) {
        return Err(Error::Invariant("enumeration produced a duplicate sequence".into()));
    }
    Ok(SequenceTable { entries })
}

/// Keys of every terminal sequence by breadth-first expansion of plain
/// transitions, independent of the rollout cache and the policy.
pub fn bfs_sequence_keys(domain: &Domain, sched: &Schedule) -> Result<BTreeSet<String>> {
    let lib = domain.library();
    let params = domain.transition_params(0, 1.0);
    let mut out = BTreeSet::new();
    let mut queue: VecDeque<(ComposedObject, Vec<ActionRef>)> = VecDeque::from([(ComposedObject::empty(), Vec::new())]);
    while let Some((x, prefix)) = queue.pop_front() {
        if x.is_terminal() {
            if !out.insert(sequence_key(lib, &prefix)) {
                return Err(Error::Invariant("breadth-first enumeration revisited a sequence".into()));
            }
            if out.len() > MAX_SEQUENCES {
                return Err(Error::EnumerationLimit { limit: MAX_SEQUENCES });
            }
            continue;
        }
        let step = sched.lambda_steps() * prefix.len() as u32;
        for a in domain.action_space(&x)? {
            let y = x.transition(lib, &a, step, &params)?;
            let mut p = prefix.clone();
            p.push(a);
            queue.push_back((y, p));
        }
    }
    Ok(out)
}

/// Checks that the rollout enumeration and the breadth-first enumeration
/// list exactly the same sequences.
pub fn cross_check(table: &SequenceTable, domain: &Domain, sched: &Schedule) -> Result<()> {
    let dfs: BTreeSet<String> = table.entries.iter().map(|e| e.key.clone()).collect();
    let bfs = bfs_sequence_keys(domain, sched)?;
    if dfs != bfs {
        let missing: Vec<_> = bfs.difference(&dfs).take(3).collect();
        let extra: Vec<_> = dfs.difference(&bfs).take(3).collect();
        return Err(Error::Invariant(format!(
            "enumerations disagree ({} vs {} sequences; missing {missing:?}, extra {extra:?})",
            dfs.len(),
            bfs.len()
        )));
    }
    Ok(())
}

/// `p_i ∝ R_i^β`, with β applied on top of the table's rewards.
pub fn target_distribution(table: &SequenceTable, beta: f64) -> Vec<f64> {
    let logs: Vec<f64> = table.entries.iter().map(|e| beta * e.log_reward).collect();
    let z = log_sum_exp(logs.iter().copied());
    logs.iter().map(|l| (l - z).exp()).collect()
}

/// Exact sequence probabilities from the table's log-probabilities.
pub fn model_distribution(table: &SequenceTable) -> Result<Vec<f64>> {
    let p: Vec<f64> = table.entries.iter().map(|e| e.log_prob.exp()).collect();
    let mass: f64 = p.iter().sum();
    if !((mass - 1.0).abs() <= MASS_TOLERANCE) {
        return Err(Error::Invariant(format!("model distribution has total mass {mass}")));
    }
    Ok(p)
}

/// Replaces the table's log-probabilities with those under `view`.
pub fn with_policy<P: Predictor + Sync + ?Sized>(
    table: &SequenceTable,
    rollouts: &Rollouts<'_, P>,
    view: &PolicyView<'_>,
) -> Result<SequenceTable> {
    let mut out = table.clone();
    for e in &mut out.entries {
        let mut lp = 0.0;
        for k in 0..e.actions.len() {
            let d = view.decision(rollouts, &e.actions[..k])?;
            let j = d.0.iter().position(|a| *a == e.actions[k]).ok_or_else(|| {
                Error::Invariant(format!("{} is no longer legal", e.key))
            })?;
            lp += d.1[j];
        }
        e.log_prob = lp;
    }
    Ok(out)
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Relative frequencies of each table sequence among sampled keys.
pub fn empirical_distribution<'k>(table: &SequenceTable, keys: impl IntoIterator<Item = &'k str>) -> Result<Vec<f64>> {
    let index = table.index();
    let mut counts = vec![0usize; table.len()];
    let mut n = 0usize;
    for k in keys {
        let i = index.get(k).ok_or_else(|| Error::Invariant(format!("sampled sequence {k} is not in the table")))?;
        counts[*i] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("sample set".into()));
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Frequencies of sampled trajectories.
pub fn trajectory_frequencies(table: &SequenceTable, domain: &Domain, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    let keys: Vec<String> = trajs.iter().map(|t| sequence_key(domain.library(), &t.actions())).collect();
    empirical_distribution(table, keys.iter().map(String::as_str))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compstate::{AttachmentPoint, Klass, Library, Synthon, SynthonKind};
    use crate::domain::{generate_dataset, RewardParams, RuleSet};
    use crate::schedule::IntegratorMode;
    use crate::stateflow::LayoutOracle;

    fn toy() -> (Domain, Schedule) {
        let sched = Schedule::new(0.3, 0.4, 20, 3, IntegratorMode::Paper).unwrap();
        (Domain::new(Library::default_library(), RuleSet::default(), &sched).unwrap(), sched)
    }

    fn table(d: &Domain, sched: &Schedule) -> SequenceTable {
        let rollouts = Rollouts::new(d, sched, &LayoutOracle, d.transition_params(0, 1.0), RewardParams::default());
        enumerate_sequences(&rollouts, &PolicyView::new(None)).unwrap()
    }

    #[test]
    fn tv_distance_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn dfs_and_bfs_agree_on_default_library() {
        let (d, sched) = toy();
        let t = table(&d, &sched);
        cross_check(&t, &d, &sched).unwrap();
        assert_eq!(t.len(), d.compositional_sequences(&sched).unwrap().len());
        assert_eq!(table(&d, &sched), t);
    }

    #[test]
    fn single_brick_pair_library_counts_by_hand() {
        // one A-brick and one B-brick: the only objects are the two
        // orderings of the complementary pair
        let brick = |id: &str, k: Klass| Synthon {
            id: id.into(),
            kind: SynthonKind::Brick,
            points: vec![[0.0, 0.0], [0.5, 0.0]],
            attachments: vec![AttachmentPoint { point: 0, klass: k, direction: [-1.0, 0.0] }],
        };
        let lib = Library::new(1, vec![brick("BA", Klass::Alpha), brick("BB", Klass::Beta)]).unwrap();
        let sched = Schedule::new(0.3, 0.4, 20, 3, IntegratorMode::Paper).unwrap();
        let rules = RuleSet { max_len: 2, ..RuleSet::default() };
        let d = Domain::new(lib, rules, &sched).unwrap();
        let t = table(&d, &sched);
        let keys: Vec<&str> = t.entries.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, vec!["BA|BB@0.0:0", "BB|BA@0.0:0"]);
        cross_check(&t, &d, &sched).unwrap();
    }

    #[test]
    fn uniform_policy_is_product_of_inverse_action_counts() {
        let (d, sched) = toy();
        let t = table(&d, &sched);
        let p = model_distribution(&t).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // trace one sequence by hand
        let e = &t.entries[t.len() / 2];
        let params = d.transition_params(0, 1.0);
        let mut x = ComposedObject::empty();
        let mut expect = 1.0;
        for (i, a) in e.actions.iter().enumerate() {
            expect /= d.action_space(&x).unwrap().len() as f64;
            x = x.transition(d.library(), a, sched.lambda_steps() * i as u32, &params).unwrap();
        }
        assert!((p[t.len() / 2] - expect).abs() < 1e-15);
    }

    #[test]
    fn target_distribution_examples() {
        let (d, sched) = toy();
        let mut t = table(&d, &sched);
        let p = target_distribution(&t, 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z = t.z_exact();
        for (pi, e) in p.iter().zip(&t.entries) {
            assert!((pi - e.reward / z).abs() < 1e-12);
        }
        assert!((t.log_z_exact() - z.ln()).abs() < 1e-12);

        // β = 32 concentrates on the best sequence
        let hot = target_distribution(&t, 32.0);
        let best = (0..t.len()).max_by(|&a, &b| t.entries[a].log_reward.total_cmp(&t.entries[b].log_reward)).unwrap();
        for i in 0..t.len() {
            let gap = t.entries[best].log_reward - t.entries[i].log_reward;
            if i != best {
                assert!((hot[best] / hot[i]).ln() - 32.0 * gap < 1e-9);
                assert!(hot[best] >= hot[i]);
            }
        }
        assert!(hot[best] > p[best]);

        for e in &mut t.entries {
            e.log_reward = -1.0;
        }
        let flat = target_distribution(&t, 1.0);
        assert!(flat.iter().all(|q| (q - 1.0 / t.len() as f64).abs() < 1e-12));
    }

    #[test]
    fn bad_mass_is_an_invariant_violation() {
        let (d, sched) = toy();
        let mut t = table(&d, &sched);
        t.entries.pop();
        assert!(matches!(model_distribution(&t), Err(Error::Invariant(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let (d, sched) = toy();
        let t = table(&d, &sched);
        let mut buf = b"{\"header\":true}\n".to_vec();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(SequenceTable::read_jsonl(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn uniform_dataset_lengths_match_exact_length_distribution() {
        let (d, sched) = toy();
        let t = table(&d, &sched);
        let p = model_distribution(&t).unwrap();
        let mut exact = HashMap::new();
        for (e, q) in t.entries.iter().zip(&p) {
            *exact.entry(e.actions.len()).or_insert(0.0) += q;
        }
        let data = generate_dataset(&d, &sched, 20_000, 3, 0.05).unwrap();
        for (len, q) in exact {
            let f = data.iter().filter(|o| o.len() == len).count() as f64 / data.len() as f64;
            assert!((f - q).abs() < 0.02, "length {len}: {f} vs {q}");
        }
    }
}
