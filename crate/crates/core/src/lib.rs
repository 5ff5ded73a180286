//! Jacobian-weighted uncertainty training of neural surrogates for 1D viscous Burgers.

pub mod autodiff;
pub mod cli;
pub mod container;
pub mod error;
pub mod eval;
pub mod field;
pub mod model;
pub mod objective;
pub mod solver;
pub mod training;

pub use error::{JawsError, Result};
pub use field::Field;
pub use model::{Architecture, HeadKind, ModelParams};
pub use objective::Method;
pub use training::{train, TrainConfig};
