use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compstate::library::{Klass, Library, Point};
use crate::error::{Error, Result};
use crate::rng;

/// Per-component coordinate rows, shape `(m_i, 2)`.
pub type Coords = Vec<Point>;

/// An attachment point on a placed component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttachmentRef {
    pub component: usize,
    pub attachment: usize,
}

/// A compositional action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionRef {
    /// Start the object with a brick.
    First { synthon: usize },
    /// Bond `synthon` through its `child_attachment` onto an open attachment.
    Add { parent: AttachmentRef, synthon: usize, child_attachment: usize },
}

impl ActionRef {
    pub fn synthon(&self) -> usize {
        match *self {
            ActionRef::First { synthon } | ActionRef::Add { synthon, .. } => synthon,
        }
    }

    /// Compact human-readable key, e.g. `B1` or `L2@0.0:1`.
    pub fn key(&self, lib: &Library) -> String {
        match *self {
            ActionRef::First { synthon } => lib.get(synthon).id.clone(),
            ActionRef::Add { parent, synthon, child_attachment } => format!(
                "{}@{}.{}:{}",
                lib.get(synthon).id,
                parent.component,
                parent.attachment,
                child_attachment
            ),
        }
    }
}

/// Key of a whole action sequence, `|`-separated.
pub fn sequence_key(lib: &Library, actions: &[ActionRef]) -> String {
    actions.iter().map(|a| a.key(lib)).collect::<Vec<_>>().join("|")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub parent_component: usize,
    pub parent_attachment: usize,
    pub child_attachment: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentInstance {
    pub synthon: usize,
    /// `None` only for the first component.
    pub bond: Option<Bond>,
    pub gen_step: u32,
}

/// Parameters of the seeded transition function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionParams {
    pub global_seed: u64,
    pub sigma_prior: f64,
    pub point_budget: usize,
}

/// The object `(C, S)` together with the self-conditioning estimate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComposedObject {
    components: Vec<ComponentInstance>,
    states: Vec<Coords>,
    self_cond: Vec<Coords>,
    open: Vec<AttachmentRef>,
}

impl ComposedObject {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn components(&self) -> &[ComponentInstance] {
        &self.components
    }

    pub fn states(&self) -> &[Coords] {
        &self.states
    }

    pub fn self_cond(&self) -> &[Coords] {
        &self.self_cond
    }

    pub fn open_attachments(&self) -> &[AttachmentRef] {
        &self.open
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Non-empty with every attachment consumed.
    pub fn is_terminal(&self) -> bool {
        !self.components.is_empty() && self.open.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.states.iter().map(Vec::len).sum()
    }

    pub fn klass_of(&self, lib: &Library, at: AttachmentRef) -> Klass {
        lib.get(self.components[at.component].synthon).attachments[at.attachment].klass
    }

    pub fn is_open(&self, at: AttachmentRef) -> bool {
        self.open.contains(&at)
    }

    pub fn set_states(&mut self, states: Vec<Coords>) -> Result<()> {
        self.check_shapes(&states)?;
        self.states = states;
        Ok(())
    }

    pub fn set_self_cond(&mut self, self_cond: Vec<Coords>) -> Result<()> {
        self.check_shapes(&self_cond)?;
        self.self_cond = self_cond;
        Ok(())
    }

    pub(crate) fn states_mut(&mut self) -> &mut [Coords] {
        &mut self.states
    }

    fn check_shapes(&self, coords: &[Coords]) -> Result<()> {
        let ok = coords.len() == self.states.len()
            && coords.iter().zip(&self.states).all(|(a, b)| a.len() == b.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("coordinate arrays do not match component sizes".into()))
        }
    }

    /// Applies `action`, initialising the new component's state from the
    /// size-keyed noise stream. Returns a new object.
    pub fn transition(
        &self,
        lib: &Library,
        action: &ActionRef,
        gen_step: u32,
        params: &TransitionParams,
    ) -> Result<ComposedObject> {
        if self.is_terminal() {
            return Err(Error::Terminal);
        }
        let synthon_idx = action.synthon();
        if synthon_idx >= lib.len() {
            return Err(Error::Transition(format!("synthon index {synthon_idx} out of range")));
        }
        let synthon = lib.get(synthon_idx);
        let (bond, consumed) = match *action {
            ActionRef::First { .. } => {
                if !self.is_empty() {
                    return Err(Error::Transition("FirstSynthon on a non-empty object".into()));
                }
                if !synthon.is_brick() {
                    return Err(Error::Transition(format!(
                        "FirstSynthon requires a brick, `{}` is a linker",
                        synthon.id
                    )));
                }
                (None, None)
            }
            ActionRef::Add { parent, child_attachment, .. } => {
                if self.is_empty() {
                    return Err(Error::Transition("AddSynthon on the empty object".into()));
                }
                if !self.is_open(parent) {
                    return Err(Error::Transition(format!(
                        "attachment {}.{} is not open",
                        parent.component, parent.attachment
                    )));
                }
                let child = synthon.attachments.get(child_attachment).ok_or_else(|| {
                    Error::Transition(format!("`{}` has no attachment {child_attachment}", synthon.id))
                })?;
                let parent_klass = self.klass_of(lib, parent);
                if child.klass != parent_klass.complement() {
                    return Err(Error::Transition(format!(
                        "incompatible klasses {parent_klass:?} -> {:?}",
                        child.klass
                    )));
                }
                let bond = Bond {
                    parent_component: parent.component,
                    parent_attachment: parent.attachment,
                    child_attachment,
                };
                (Some(bond), Some((parent, child_attachment)))
            }
        };
        let size_before = self.point_count();
        if size_before + synthon.len() > params.point_budget {
            return Err(Error::Transition(format!(
                "point budget {} exceeded ({} + {})",
                params.point_budget,
                size_before,
                synthon.len()
            )));
        }

        let mut next = self.clone();
        let index = next.components.len();
        next.components.push(ComponentInstance { synthon: synthon_idx, bond, gen_step });
        let s0 = rng::initial_state(params.global_seed, size_before, synthon.len(), params.sigma_prior);
        next.self_cond.push(s0.clone());
        next.states.push(s0);
        if let Some((parent, _)) = consumed {
            next.open.retain(|&a| a != parent);
        }
        let skip = consumed.map(|(_, c)| c);
        next.open.extend(
            (0..synthon.attachments.len())
                .filter(|&a| Some(a) != skip)
                .map(|attachment| AttachmentRef { component: index, attachment }),
        );
        Ok(next)
    }

    /// The action that created component `i`.
    pub fn action_for(&self, i: usize) -> ActionRef {
        let c = &self.components[i];
        match c.bond {
            None => ActionRef::First { synthon: c.synthon },
            Some(b) => ActionRef::Add {
                parent: AttachmentRef { component: b.parent_component, attachment: b.parent_attachment },
                synthon: c.synthon,
                child_attachment: b.child_attachment,
            },
        }
    }

    /// Rebuilds an object from a component list by replaying its actions.
    pub fn from_components(
        lib: &Library,
        components: &[ComponentInstance],
        params: &TransitionParams,
    ) -> Result<ComposedObject> {
        let mut obj = ComposedObject::empty();
        for c in components {
            let action = match c.bond {
                None => ActionRef::First { synthon: c.synthon },
                Some(b) => ActionRef::Add {
                    parent: AttachmentRef { component: b.parent_component, attachment: b.parent_attachment },
                    synthon: c.synthon,
                    child_attachment: b.child_attachment,
                },
            };
            obj = obj.transition(lib, &action, c.gen_step, params)?;
        }
        Ok(obj)
    }
}

impl fmt::Display for ComposedObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComposedObject({} components, {} points, {} open)", self.len(), self.point_count(), self.open.len())
    }
}
