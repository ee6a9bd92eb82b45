//! System models, derived augmented systems and the built-in registry.

mod augmented;
mod model;
mod registry;

pub use augmented::{
    closed_loop_prolonged, dual_closed_loop, dual_open, prolong, two_copy, two_copy_offset,
    AugmentedField, InputSignal, Slot, VariationalInput,
};
pub use model::{Certificates, ClosedLoop, Drift, Reversed, SystemModel};
pub use registry::{linear_system, registry, REGISTRY_NAMES};
