//! Object representation `(C, S)`, the seeded transition, the ground-truth
//! layout, and construction-order decomposition.

pub mod decompose;
pub mod layout;
pub mod library;
pub mod object;

pub use decompose::{decompose, reorder, valid_orders, Decomposition};
pub use layout::{component_poses, ground_truth_layout, validate_composition, Pose, BOND_LENGTH};
pub use library::{AttachmentPoint, Klass, Library, Point, Synthon, SynthonKind, DEFAULT_LIBRARY_JSON};
pub use object::{
    sequence_key, ActionRef, AttachmentRef, Bond, ComponentInstance, ComposedObject, Coords,
    TransitionParams,
};
