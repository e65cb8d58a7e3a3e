//! Construction orders of a finished object.
//!
//! A valid order starts with a brick and adds, at each step, a component
//! bonded to one already placed. Coordinates are re-expressed in the frame
//! of the new first component, which is where the layout would put it.

use rand::Rng;

use crate::compstate::layout::component_poses;
use crate::compstate::library::Library;
use crate::compstate::object::{Bond, ComponentInstance, Coords};
use crate::error::{Error, Result};
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Components re-indexed in construction order.
    pub components: Vec<ComponentInstance>,
    /// Clean coordinates per component, re-anchored to the first component.
    pub coords: Vec<Coords>,
    /// `order[j]` is the original index of new component `j`.
    pub order: Vec<usize>,
}

fn neighbours(components: &[ComponentInstance]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); components.len()];
    for (i, c) in components.iter().enumerate() {
        if let Some(b) = c.bond {
            adj[i].push(b.parent_component);
            adj[b.parent_component].push(i);
        }
    }
    adj
}

/// Every valid construction order, in lexicographic order.
pub fn valid_orders(lib: &Library, components: &[ComponentInstance]) -> Vec<Vec<usize>> {
    let adj = neighbours(components);
    let n = components.len();
    let mut out = Vec::new();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];

    fn extend(
        adj: &[Vec<usize>],
        order: &mut Vec<usize>,
        placed: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        if order.len() == placed.len() {
            out.push(order.clone());
            return;
        }
        for c in 0..placed.len() {
            if !placed[c] && adj[c].iter().any(|&p| placed[p]) {
                placed[c] = true;
                order.push(c);
                extend(adj, order, placed, out);
                order.pop();
                placed[c] = false;
            }
        }
    }

    for first in 0..n {
        if lib.get(components[first].synthon).is_brick() {
            placed[first] = true;
            order.push(first);
            extend(&adj, &mut order, &mut placed, &mut out);
            order.pop();
            placed[first] = false;
        }
    }
    out
}

/// Re-indexes `components` along `order` and re-anchors `coords`.
pub fn reorder(
    lib: &Library,
    sched: &Schedule,
    components: &[ComponentInstance],
    coords: &[Coords],
    order: &[usize],
) -> Result<Decomposition> {
    let n = components.len();
    if order.len() != n || coords.len() != n {
        return Err(Error::Shape("order/coords length does not match components".into()));
    }
    let poses = component_poses(lib, components)?;
    let mut new_index = vec![usize::MAX; n];
    for (j, &c) in order.iter().enumerate() {
        new_index[c] = j;
    }
    let mut out = Vec::with_capacity(n);
    for (j, &c) in order.iter().enumerate() {
        let gen_step = sched.lambda_steps() * j as u32;
        if j == 0 {
            out.push(ComponentInstance { synthon: components[c].synthon, bond: None, gen_step });
            continue;
        }
        // the unique earlier neighbour in the new order
        let bond = if let Some(b) = components[c].bond.filter(|b| new_index[b.parent_component] < j) {
            Bond {
                parent_component: new_index[b.parent_component],
                parent_attachment: b.parent_attachment,
                child_attachment: b.child_attachment,
            }
        } else {
            let (p, b) = components
                .iter()
                .enumerate()
                .find_map(|(p, pc)| match pc.bond {
                    Some(b) if b.parent_component == c && new_index[p] < j => Some((p, b)),
                    _ => None,
                })
                .ok_or_else(|| Error::DataPipeline(format!("order places {c} before any neighbour")))?;
            Bond {
                parent_component: new_index[p],
                parent_attachment: b.child_attachment,
                child_attachment: b.parent_attachment,
            }
        };
        out.push(ComponentInstance { synthon: components[c].synthon, bond: Some(bond), gen_step });
    }
    let anchor = poses[order[0]];
    let coords = order
        .iter()
        .map(|&c| coords[c].iter().map(|&p| anchor.apply_inverse(p)).collect())
        .collect();
    Ok(Decomposition { components: out, coords, order: order.to_vec() })
}

/// Samples a construction order uniformly among the valid ones.
pub fn decompose<R: Rng + ?Sized>(
    lib: &Library,
    sched: &Schedule,
    components: &[ComponentInstance],
    coords: &[Coords],
    rng: &mut R,
) -> Result<Decomposition> {
    let orders = valid_orders(lib, components);
    if orders.is_empty() {
        return Err(Error::DataPipeline("object has no valid construction order".into()));
    }
    let pick = rng.random_range(0..orders.len());
    reorder(lib, sched, components, coords, &orders[pick])
}
