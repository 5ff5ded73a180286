use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::burgers::{BurgersSolver, Trajectory};
use super::ic::{sample_initial_condition, IcSpec};
use crate::error::{JawsError, Result};
use crate::field::check_grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub split: Split,
    pub seed: u64,
    /// Viscosity range the trajectories were drawn from.
    pub nu_range: (f64, f64),
}

impl Dataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        split: Split,
        seed: u64,
        nu_range: (f64, f64),
    ) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| JawsError::InvalidConfig("dataset is empty".into()))?;
        let (n, dt) = (first.grid(), first.dt);
        if trajectories.iter().any(|t| t.grid() != n || t.dt != dt) {
            return Err(JawsError::InvalidConfig(
                "trajectories disagree on grid size or dt".into(),
            ));
        }
        Ok(Self {
            trajectories,
            split,
            seed,
            nu_range,
        })
    }

    pub fn grid(&self) -> usize {
        self.trajectories[0].grid()
    }

    pub fn dt(&self) -> f64 {
        self.trajectories[0].dt
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_trajectories: usize,
    pub grid: usize,
    pub dt: f64,
    pub substeps: usize,
    pub steps: usize,
    pub nu_range: (f64, f64),
    pub ic: IcSpec,
    pub seed: u64,
    pub split: Split,
    pub max_retries: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_trajectories: 200,
            grid: 128,
            dt: 0.01,
            substeps: 10,
            steps: 200,
            nu_range: (0.005, 0.02),
            ic: IcSpec::default(),
            seed: 0,
            split: Split::Train,
            max_retries: 5,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid(self.grid)?;
        self.ic.validate(self.grid)?;
        let (lo, hi) = self.nu_range;
        if self.n_trajectories == 0 {
            return Err(JawsError::InvalidConfig("need at least one trajectory".into()));
        }
        if !(lo > 0.0 && hi >= lo) {
            return Err(JawsError::InvalidConfig(format!("bad nu range [{lo}, {hi}]")));
        }
        if !(self.dt > 0.0) || self.substeps == 0 || self.steps == 0 {
            return Err(JawsError::InvalidConfig(
                "dt, substeps and steps must be positive".into(),
            ));
        }
        if self.steps > 400 {
            return Err(JawsError::InvalidConfig(format!(
                "at most 400 recorded steps per trajectory, got {}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Generates a dataset; trajectory `i` draws from its own ChaCha stream `(seed, i)`.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let solver = BurgersSolver::new(config.grid)?;
    let trajectories = (0..config.n_trajectories)
        .into_par_iter()
        .map(|index| generate_one(&solver, config, index))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(trajectories, config.split, config.seed, config.nu_range)
}

fn generate_one(solver: &BurgersSolver, config: &DatasetConfig, index: usize) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let (lo, hi) = config.nu_range;
    for _ in 0..=config.max_retries {
        let nu = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let u0 = sample_initial_condition(&mut rng, &config.ic, config.grid)?;
        match solver.integrate(&u0, nu, config.dt, config.steps, config.substeps) {
            Ok(t) => return Ok(t),
            Err(JawsError::BlowUp { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(JawsError::DataGeneration {
        index,
        seed: config.seed,
        attempts: config.max_retries + 1,
    })
}
