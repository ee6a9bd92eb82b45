//! Differential and incremental balancing tools for control-affine systems.

pub mod calculus;
pub mod energy;
pub mod error;
pub mod expr;
pub mod gramian;
pub mod integrate;
pub mod linalg;
pub mod plot;
pub mod rank;
pub mod sampling;
pub mod scalar;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
