use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::{rollout_from, RolloutReport};
use super::stepper::Stepper;
use crate::autodiff::Shape;
use crate::error::{JawsError, Result};
use crate::field::rel_l2;
use crate::model::{ModelParams, UncertaintyInit};
use crate::objective::{hutchinson_row_energy, jaws_terms, Probe};
use crate::solver::{generate_dataset, Dataset, DatasetConfig, IcSpec, Split};
use crate::training::{train, TrainConfig};

/// A named stepper entering a comparison table.
pub type Entry<'a> = (&'a str, &'a dyn Stepper);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigmas: Vec<f64>,
    pub horizon: usize,
    /// Noise draws per test trajectory.
    pub draws: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.1, 0.2, 0.3],
            horizon: 50,
            draws: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub method: String,
    pub sigma: f64,
    pub mean_rel_l2: f64,
}

/// Rollout error at a fixed horizon from noisy initial states.
///
/// The unit-variance noise draw for (trajectory, draw) is shared by every σ and every
/// method, so the columns are paired.
pub fn study_noise(models: &[Entry<'_>], test: &Dataset, cfg: &NoiseConfig) -> Result<Vec<NoiseRow>> {
    if cfg.sigmas.iter().any(|s| !(0.0..=0.3).contains(s)) {
        return Err(JawsError::InvalidConfig("noise levels must lie in [0, 0.3]".into()));
    }
    let n = test.grid();
    let draws = cfg.draws.max(1);
    let noise: Vec<Vec<f64>> = (0..test.len() * draws)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    let mut rows = Vec::new();
    for (name, model) in models {
        for &sigma in &cfg.sigmas {
            let errors = (0..noise.len())
                .into_par_iter()
                .map(|i| {
                    let traj = &test.trajectories[i / draws];
                    let u0: Vec<f64> = traj.states[0]
                        .values()
                        .iter()
                        .zip(&noise[i])
                        .map(|(u, z)| u + sigma * z)
                        .collect();
                    let r: RolloutReport = rollout_from(*model, &u0, &traj.states, cfg.horizon, &[])?;
                    Ok(r.capped(cfg.horizon))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(NoiseRow {
                method: name.to_string(),
                sigma,
                mean_rel_l2: errors.iter().sum::<f64>() / errors.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Noise slope per method from a noise table.
pub fn noise_slopes(rows: &[NoiseRow]) -> Vec<(String, f64)> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    names
        .into_iter()
        .map(|m| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.sigma, r.mean_rel_l2))
                .unzip();
            (m.to_string(), ls_slope(&x, &y))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodScenario {
    LowNu,
    HighNu,
    HighFrequency,
    Interpolation,
}

impl OodScenario {
    pub const ALL: [OodScenario; 4] = [
        OodScenario::LowNu,
        OodScenario::HighNu,
        OodScenario::HighFrequency,
        OodScenario::Interpolation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OodScenario::LowNu => "low-nu",
            OodScenario::HighNu => "high-nu",
            OodScenario::HighFrequency => "high-frequency",
            OodScenario::Interpolation => "interpolation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodConfig {
    pub low_nu: f64,
    pub high_nu: f64,
    pub high_band: (usize, usize),
    pub interp_nu: f64,
    pub train_nu_range: (f64, f64),
    pub trajectories: usize,
    pub steps: usize,
    pub grid: usize,
    pub seed: u64,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            low_nu: 0.002,
            high_nu: 0.05,
            high_band: (5, 10),
            interp_nu: 0.01,
            train_nu_range: (0.005, 0.02),
            trajectories: 20,
            steps: 20,
            grid: 128,
            seed: 1000,
        }
    }
}

impl OodConfig {
    pub fn dataset_config(&self, scenario: OodScenario) -> DatasetConfig {
        let base = DatasetConfig {
            n_trajectories: self.trajectories,
            grid: self.grid,
            steps: self.steps,
            seed: self.seed,
            split: Split::Test,
            ..DatasetConfig::default()
        };
        match scenario {
            OodScenario::LowNu => DatasetConfig {
                nu_range: (self.low_nu, self.low_nu),
                ..base
            },
            OodScenario::HighNu => DatasetConfig {
                nu_range: (self.high_nu, self.high_nu),
                ..base
            },
            OodScenario::HighFrequency => DatasetConfig {
                nu_range: self.train_nu_range,
                ic: IcSpec {
                    k_min: self.high_band.0,
                    k_max: self.high_band.1,
                    front_probability: 0.0,
                    ..IcSpec::default()
                },
                ..base
            },
            OodScenario::Interpolation => DatasetConfig {
                nu_range: (self.interp_nu, self.interp_nu),
                ..base
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub method: String,
    pub scenario: OodScenario,
    pub rel_l2: f64,
}

/// Mean single-step rel-L2 over every recorded transition, each step started from truth.
pub fn single_step_error<S: Stepper + ?Sized>(model: &S, data: &Dataset) -> Result<f64> {
    let errors = data
        .trajectories
        .par_iter()
        .map(|t| {
            (0..t.steps())
                .map(|i| Ok(rel_l2(&model.step(t.states[i].values())?, t.states[i + 1].values())))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = errors.into_iter().flatten().collect();
    Ok(all.iter().sum::<f64>() / all.len().max(1) as f64)
}

pub fn study_ood(models: &[Entry<'_>], cfg: &OodConfig) -> Result<Vec<OodRow>> {
    let mut rows = Vec::new();
    for scenario in OodScenario::ALL {
        let data = generate_dataset(&cfg.dataset_config(scenario))?;
        for (name, model) in models {
            rows.push(OodRow {
                method: name.to_string(),
                scenario,
                rel_l2: single_step_error(*model, &data)?,
            });
        }
    }
    Ok(rows)
}

/// Squared residuals and Hutchinson row energies of a fixed model over `(input, target)` pairs,
/// concatenated across pairs.
pub fn uncertainty_targets(
    params: &ModelParams,
    pairs: &[(&[f64], &[f64])],
    probe_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r2 = Vec::new();
    let mut h = Vec::new();
    for (i, (u, target)) in pairs.iter().enumerate() {
        let mut tape = params.new_tape();
        let (_, out) = params.forward(u, &mut tape)?;
        let probe = Probe::rademacher(u.len(), probe_seed.wrapping_add(i as u64));
        let hn = hutchinson_row_energy(&mut tape, &out, &probe)?;
        r2.extend(
            tape.value(out.prediction)
                .iter()
                .zip(*target)
                .map(|(p, t)| (p - t) * (p - t)),
        );
        h.extend_from_slice(tape.value(hn));
    }
    Ok((r2, h))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexSolution {
    pub s1: f64,
    pub s2: f64,
    pub iterations: usize,
}

/// Minimizes the MAP loss over scalar `(s1, s2)` alone with residuals and row energies
/// held fixed, by gradient descent on the recorded loss (unit rate, steps clipped to 1).
/// The optimum is `s1 = log mean r²`, `s2 = log mean h`.
pub fn solve_uncertainty(
    r2: &[f64],
    h: &[f64],
    init: (f64, f64),
    max_iter: usize,
    tol: f64,
) -> Result<ConvexSolution> {
    if r2.is_empty() || r2.len() != h.len() {
        return Err(JawsError::InvalidConfig("need equal-length nonempty r² and h".into()));
    }
    let n = r2.len();
    let resid: Vec<f64> = r2.iter().map(|v| v.sqrt()).collect();
    let (mut s1, mut s2) = init;
    for it in 1..=max_iter {
        let mut tape = crate::autodiff::Tape::new(Default::default());
        let p = tape.input(resid.clone(), Shape::vector(n));
        let t = tape.input(vec![0.0; n], Shape::vector(n));
        let hs = tape.input(h.to_vec(), Shape::vector(n));
        let a = tape.variable(vec![s1], Shape::scalar());
        let b = tape.variable(vec![s2], Shape::scalar());
        let nodes = jaws_terms(&mut tape, p, t, a, b, hs);
        let adj = tape.adjoints(nodes.total)?;
        let g1 = adj.get(a).map_or(0.0, |g| g[0]);
        let g2 = adj.get(b).map_or(0.0, |g| g[0]);
        s1 -= g1.clamp(-1.0, 1.0);
        s2 -= g2.clamp(-1.0, 1.0);
        if g1.abs().max(g2.abs()) < tol {
            return Ok(ConvexSolution { s1, s2, iterations: it });
        }
    }
    Ok(ConvexSolution {
        s1,
        s2,
        iterations: max_iter,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitCurve {
    pub init: UncertaintyInit,
    /// `(step, s1, mean s2)` per optimizer step.
    pub points: Vec<(usize, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitStudy {
    pub curves: Vec<InitCurve>,
    pub final_s1_spread: f64,
}

/// Trains from each uncertainty initialization with otherwise identical settings.
pub fn study_init_convergence(config: &TrainConfig, data: &Dataset, inits: &[UncertaintyInit]) -> Result<InitStudy> {
    if inits.is_empty() {
        return Err(JawsError::InvalidConfig("need at least one initialization".into()));
    }
    let mut curves = Vec::new();
    for &init in inits {
        let cfg = TrainConfig {
            init,
            ..config.clone()
        };
        let out = train(&cfg, data, None)?;
        curves.push(InitCurve {
            init,
            points: out.log.iter().map(|r| (r.step, r.s1, r.s2_mean)).collect(),
        });
    }
    let finals: Vec<f64> = curves
        .iter()
        .map(|c| c.points.last().map_or(c.init.s1, |p| p.1))
        .collect();
    let spread = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - finals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(InitStudy {
        curves,
        final_s1_spread: spread,
    })
}
