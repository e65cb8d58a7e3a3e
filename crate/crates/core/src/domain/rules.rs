use serde::{Deserialize, Serialize};

use crate::compstate::{ActionRef, ComposedObject, Klass, Library, TransitionParams};
use crate::error::{Error, Result};
use crate::schedule::Schedule;

/// Explosion guard for reachability walks.
pub const MAX_SEQUENCES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleSet {
    /// Bondable klass pairs, read symmetrically.
    pub allowed_pairs: Vec<(Klass, Klass)>,
    /// Maximum total point count of an object.
    pub p_max: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self { allowed_pairs: vec![(Klass::Alpha, Klass::Beta)], p_max: 12, min_len: 2, max_len: 3 }
    }
}

impl RuleSet {
    pub fn compatible(&self, parent: Klass, child: Klass) -> bool {
        child == parent.complement()
            && self
                .allowed_pairs
                .iter()
                .any(|&(a, b)| (a, b) == (parent, child) || (b, a) == (parent, child))
    }

    pub fn validate(&self, sched: &Schedule) -> Result<()> {
        if self.min_len < 2 {
            return Err(Error::Config(format!("min_len {} < 2", self.min_len)));
        }
        if self.max_len < self.min_len {
            return Err(Error::Config(format!("max_len {} < min_len {}", self.max_len, self.min_len)));
        }
        if self.max_len > sched.max_components() {
            return Err(Error::Config(format!(
                "max_len {} exceeds max_components {}",
                self.max_len,
                sched.max_components()
            )));
        }
        if sched.action_steps().len() < self.max_len {
            return Err(Error::Config(format!(
                "schedule has only {} action steps for max_len {}",
                sched.action_steps().len(),
                self.max_len
            )));
        }
        if let Some(&(a, b)) = self.allowed_pairs.iter().find(|(a, b)| a.complement() != *b) {
            return Err(Error::Config(format!("klass pair ({a:?}, {b:?}) is not complementary")));
        }
        if self.allowed_pairs.is_empty() {
            return Err(Error::Config("no allowed klass pairs".into()));
        }
        Ok(())
    }
}

/// Legal actions at `x`. Never empty for a state reachable under a
/// validated [`Domain`]; an empty result is reported as [`Error::DeadEnd`].
pub fn action_space(x: &ComposedObject, lib: &Library, rules: &RuleSet) -> Result<Vec<ActionRef>> {
    if x.is_terminal() {
        return Err(Error::Terminal);
    }
    let next_len = x.len() + 1;
    let budget = rules.p_max.saturating_sub(x.point_count());
    let mut actions = Vec::new();
    if next_len <= rules.max_len {
        if x.is_empty() {
            actions.extend(
                lib.bricks()
                    .filter(|&b| lib.get(b).len() <= budget)
                    // a lone brick still has its attachment open, so it never terminates
                    .map(|synthon| ActionRef::First { synthon }),
            );
        } else {
            let last = next_len == rules.max_len;
            for &parent in x.open_attachments() {
                let parent_klass = x.klass_of(lib, parent);
                for (synthon, s) in lib.synthons().iter().enumerate() {
                    if (last && !s.is_brick()) || s.len() > budget {
                        continue;
                    }
                    let open_after = x.open_attachments().len() - 1 + s.attachments.len() - 1;
                    if open_after == 0 && next_len < rules.min_len {
                        continue;
                    }
                    for (child_attachment, att) in s.attachments.iter().enumerate() {
                        if rules.compatible(parent_klass, att.klass) {
                            actions.push(ActionRef::Add { parent, synthon, child_attachment });
                        }
                    }
                }
            }
        }
    }
    if actions.is_empty() {
        return Err(Error::DeadEnd(format!("no legal action at {x}")));
    }
    Ok(actions)
}

/// A synthon library together with a validated rule set.
#[derive(Debug, Clone)]
pub struct Domain {
    library: Library,
    rules: RuleSet,
}

impl Domain {
    /// Validates the rules and walks every reachable state, rejecting the
    /// pair if any nonterminal state has no legal action.
    pub fn new(library: Library, rules: RuleSet, sched: &Schedule) -> Result<Self> {
        rules.validate(sched)?;
        let domain = Self { library, rules };
        domain.compositional_sequences(sched).map_err(|e| match e {
            Error::DeadEnd(msg) => Error::Library(format!("library/rules admit a dead end: {msg}")),
            other => other,
        })?;
        Ok(domain)
    }

    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn action_space(&self, x: &ComposedObject) -> Result<Vec<ActionRef>> {
        action_space(x, &self.library, &self.rules)
    }

    pub fn transition_params(&self, global_seed: u64, sigma_prior: f64) -> TransitionParams {
        TransitionParams { global_seed, sigma_prior, point_budget: self.rules.p_max }
    }

    /// Every complete action sequence, by depth-first walk in action order.
    pub fn compositional_sequences(&self, sched: &Schedule) -> Result<Vec<Vec<ActionRef>>> {
        let params = self.transition_params(0, 1.0);
        let mut out = Vec::new();
        let mut stack = vec![(ComposedObject::empty(), Vec::new())];
        while let Some((x, prefix)) = stack.pop() {
            let step = sched.lambda_steps() * prefix.len() as u32;
            let actions = self.action_space(&x)?;
            for a in actions.into_iter().rev() {
                let y = x.transition(&self.library, &a, step, &params)?;
                let mut seq: Vec<ActionRef> = prefix.clone();
                seq.push(a);
                if y.is_terminal() {
                    out.push(seq);
                    if out.len() > MAX_SEQUENCES {
                        return Err(Error::EnumerationLimit { limit: MAX_SEQUENCES });
                    }
                } else {
                    stack.push((y, seq));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compstate::{AttachmentRef, SynthonKind};

    fn setup() -> (Library, RuleSet, TransitionParams) {
        let lib = Library::default_library();
        let rules = RuleSet::default();
        let params = TransitionParams { global_seed: 0, sigma_prior: 1.0, point_budget: rules.p_max };
        (lib, rules, params)
    }

    #[test]
    fn empty_object_offers_every_brick() {
        let (lib, rules, _) = setup();
        let a = action_space(&ComposedObject::empty(), &lib, &rules).unwrap();
        assert_eq!(a.len(), lib.bricks().count());
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|a| matches!(a, ActionRef::First { .. })));
    }

    #[test]
    fn max_length_forces_complementary_bricks() {
        let (lib, rules, p) = setup();
        let b1 = lib.index_of("B1").unwrap();
        let l1 = lib.index_of("L1").unwrap();
        let x = ComposedObject::empty().transition(&lib, &ActionRef::First { synthon: b1 }, 0, &p).unwrap();
        let x = x
            .transition(
                &lib,
                &ActionRef::Add { parent: x.open_attachments()[0], synthon: l1, child_attachment: 0 },
                6,
                &p,
            )
            .unwrap();
        // L1's remaining open attachment is alpha
        assert_eq!(x.open_attachments(), &[AttachmentRef { component: 1, attachment: 1 }]);
        let a = action_space(&x, &lib, &rules).unwrap();
        assert!(!a.is_empty());
        for act in &a {
            let s = lib.get(act.synthon());
            assert_eq!(s.kind, SynthonKind::Brick);
            assert_eq!(s.attachments[0].klass, Klass::Beta);
        }
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn point_budget_filters_synthons() {
        let (lib, _, p) = setup();
        // B2 has 3 points, so with p_max = 5 the 3-point B4 no longer fits
        let rules = RuleSet { p_max: 5, ..RuleSet::default() };
        let b2 = lib.index_of("B2").unwrap();
        let x = ComposedObject::empty().transition(&lib, &ActionRef::First { synthon: b2 }, 0, &p).unwrap();
        let got = action_space(&x, &lib, &rules).unwrap();
        // brute-force oracle: every compatible triple whose synthon fits the budget
        let mut want = Vec::new();
        for &parent in x.open_attachments() {
            for (synthon, s) in lib.synthons().iter().enumerate() {
                for (ca, att) in s.attachments.iter().enumerate() {
                    if att.klass == x.klass_of(&lib, parent).complement() && x.point_count() + s.len() <= 5 {
                        want.push(ActionRef::Add { parent, synthon, child_attachment: ca });
                    }
                }
            }
        }
        assert_eq!(got, want);
        let b4 = lib.index_of("B4").unwrap();
        assert!(got.iter().all(|a| a.synthon() != b4));
        assert_eq!(got.len(), 3);
        let tight = RuleSet { p_max: 4, ..RuleSet::default() };
        assert!(matches!(action_space(&x, &lib, &tight), Err(Error::DeadEnd(_))));
    }

    #[test]
    fn min_len_blocks_early_termination() {
        let (lib, _, p) = setup();
        let rules = RuleSet { min_len: 3, ..RuleSet::default() };
        let b1 = lib.index_of("B1").unwrap();
        let x = ComposedObject::empty().transition(&lib, &ActionRef::First { synthon: b1 }, 0, &p).unwrap();
        let a = action_space(&x, &lib, &rules).unwrap();
        assert!(a.iter().all(|a| !lib.get(a.synthon()).is_brick()));
    }

    #[test]
    fn default_domain_validates_and_counts_sequences() {
        let (lib, rules, _) = setup();
        let sched = Schedule::default();
        let d = Domain::new(lib, rules, &sched).unwrap();
        // 4 first bricks x (2 closing bricks + 2 linkers x 2 closing bricks)
        assert_eq!(d.compositional_sequences(&sched).unwrap().len(), 24);
    }

    #[test]
    fn dead_end_rules_are_rejected() {
        let (lib, _, _) = setup();
        let sched = Schedule::default();
        // p_max 5 admits B2 + L1 (5 points) with no room to close.
        let rules = RuleSet { p_max: 5, ..RuleSet::default() };
        assert!(matches!(Domain::new(lib, rules, &sched), Err(Error::Library(_))));
    }

    #[test]
    fn terminal_state_has_no_action_space() {
        let (lib, rules, p) = setup();
        let b1 = lib.index_of("B1").unwrap();
        let b3 = lib.index_of("B3").unwrap();
        let x = ComposedObject::empty().transition(&lib, &ActionRef::First { synthon: b1 }, 0, &p).unwrap();
        let x = x
            .transition(
                &lib,
                &ActionRef::Add { parent: x.open_attachments()[0], synthon: b3, child_attachment: 0 },
                6,
                &p,
            )
            .unwrap();
        assert!(matches!(action_space(&x, &lib, &rules), Err(Error::Terminal)));
    }
}
