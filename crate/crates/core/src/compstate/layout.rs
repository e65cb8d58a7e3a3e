//! Deterministic ground-truth placement of a composition in the plane.
//!
//! Component 1 sits in its own local frame. Every later component is moved
//! rigidly so that its consumed attachment point lands one bond length past
//! the parent's attachment, pointing back at it.

use crate::compstate::library::{Library, Point};
use crate::compstate::object::{ComponentInstance, Coords};
use crate::error::{Error, Result};

pub const BOND_LENGTH: f64 = 1.0;

/// A planar rigid motion `x -> R x + t`, rotation stored as `(cos, sin)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rot: [f64; 2],
    pub trans: Point,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rot: [1.0, 0.0], trans: [0.0, 0.0] };

    pub fn rotate(&self, v: Point) -> Point {
        let [c, s] = self.rot;
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn apply(&self, p: Point) -> Point {
        let r = self.rotate(p);
        [r[0] + self.trans[0], r[1] + self.trans[1]]
    }

    /// `R^T (p - t)`.
    pub fn apply_inverse(&self, p: Point) -> Point {
        let [c, s] = self.rot;
        let d = [p[0] - self.trans[0], p[1] - self.trans[1]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
    }
}

/// Checks bonding structure: first unbonded, later ones bonded to an earlier
/// component through complementary, not-yet-consumed attachments.
pub fn validate_composition(lib: &Library, components: &[ComponentInstance]) -> Result<()> {
    let invalid = |msg: String| Err(Error::Transition(format!("invalid composition: {msg}")));
    let mut used: Vec<Vec<bool>> = Vec::with_capacity(components.len());
    for (i, c) in components.iter().enumerate() {
        if c.synthon >= lib.len() {
            return invalid(format!("component {i} has unknown synthon {}", c.synthon));
        }
        let syn = lib.get(c.synthon);
        used.push(vec![false; syn.attachments.len()]);
        match (i, c.bond) {
            (0, None) => {
                if !syn.is_brick() {
                    return invalid("first component must be a brick".into());
                }
            }
            (0, Some(_)) => return invalid("first component cannot be bonded".into()),
            (_, None) => return invalid(format!("component {i} is not bonded")),
            (_, Some(b)) => {
                if b.parent_component >= i {
                    return invalid(format!("component {i} bonds to later component {}", b.parent_component));
                }
                let parent_syn = lib.get(components[b.parent_component].synthon);
                let (Some(pa), Some(ca)) = (
                    parent_syn.attachments.get(b.parent_attachment),
                    syn.attachments.get(b.child_attachment),
                ) else {
                    return invalid(format!("component {i} references a missing attachment"));
                };
                if pa.klass.complement() != ca.klass {
                    return invalid(format!("component {i} bond klasses are not complementary"));
                }
                for (comp, att) in [(b.parent_component, b.parent_attachment), (i, b.child_attachment)] {
                    if std::mem::replace(&mut used[comp][att], true) {
                        return invalid(format!("attachment {comp}.{att} consumed twice"));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn component_poses(lib: &Library, components: &[ComponentInstance]) -> Result<Vec<Pose>> {
    validate_composition(lib, components)?;
    let mut poses: Vec<Pose> = Vec::with_capacity(components.len());
    for c in components {
        let Some(b) = c.bond else {
            poses.push(Pose::IDENTITY);
            continue;
        };
        let parent_pose = poses[b.parent_component];
        let parent_att = &lib.get(components[b.parent_component].synthon).attachments[b.parent_attachment];
        let parent_syn = lib.get(components[b.parent_component].synthon);
        let anchor = parent_pose.apply(parent_syn.points[parent_att.point]);
        let d = parent_pose.rotate(parent_att.direction);
        let target = [anchor[0] + BOND_LENGTH * d[0], anchor[1] + BOND_LENGTH * d[1]];

        let syn = lib.get(c.synthon);
        let child_att = &syn.attachments[b.child_attachment];
        // R u = -d  =>  R = (-d) * conj(u) as unit complex numbers
        let u = child_att.direction;
        let w = [-d[0], -d[1]];
        let rot = [w[0] * u[0] + w[1] * u[1], w[1] * u[0] - w[0] * u[1]];
        let partial = Pose { rot, trans: [0.0, 0.0] };
        let moved = partial.apply(syn.points[child_att.point]);
        poses.push(Pose { rot, trans: [target[0] - moved[0], target[1] - moved[1]] });
    }
    Ok(poses)
}

/// World coordinates of every point of a valid composition.
pub fn ground_truth_layout(lib: &Library, components: &[ComponentInstance]) -> Result<Vec<Coords>> {
    let poses = component_poses(lib, components)?;
    Ok(components
        .iter()
        .zip(&poses)
        .map(|(c, pose)| lib.get(c.synthon).points.iter().map(|&p| pose.apply(p)).collect())
        .collect())
}
