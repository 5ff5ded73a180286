//! Reverse-mode gradients, forward tangents, and reverse-over-forward derivatives
//! for the primitive set used by the surrogate network.

mod bundle;
pub mod kernels;
mod tape;

pub use bundle::{GradientBundle, ParamSizes};
pub use tape::{Adjoints, NodeId, ParamGroup, Shape, Tape};
