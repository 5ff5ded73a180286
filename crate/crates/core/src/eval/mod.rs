//! Rollouts, Jacobian spectra, energy spectra, weight maps and the robustness studies.

pub mod heatmap;
pub mod radius;
pub mod report;
pub mod rollout;
pub mod spectrum;
pub mod stepper;
pub mod studies;
pub mod weights;

pub use heatmap::{error_heatmap, Heatmap};
pub use radius::{dominant_modulus, histogram, median, radius_study, spectral_radius, RadiusEstimate, RadiusOptions, RadiusReport};
pub use rollout::{mean_at, mean_curve, rollout, rollout_dataset, rollout_from, RolloutReport, Snapshot, DIVERGED_REL_L2};
pub use spectrum::{energy_spectrum, SpectrumReport};
pub use stepper::{FnStepper, SolverStepper, Stepper};
pub use studies::{
    ls_slope, noise_slopes, single_step_error, solve_uncertainty, study_init_convergence, study_noise, study_ood,
    uncertainty_targets, ConvexSolution, Entry, InitCurve, InitStudy, NoiseConfig, NoiseRow, OodConfig, OodRow,
    OodScenario,
};
pub use weights::{is_shock_state, pearson, weight_maps, WeightMaps};
