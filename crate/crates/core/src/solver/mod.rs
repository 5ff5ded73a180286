//! Ground-truth Burgers trajectories from a pseudo-spectral solver.

mod burgers;
mod dataset;
mod ic;
mod spectral;

pub use burgers::{BurgersSolver, Trajectory};
pub use dataset::{generate_dataset, Dataset, DatasetConfig, Split};
pub use ic::{modes_field, sample_initial_condition, IcSpec, Mode};
pub use spectral::SpectralGrid;
