//! Minibatch Adam training for every method, with pushforward windows and
//! spectral-norm projection for the constrained baseline.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientBundle, Tape};
use crate::container::{save_checkpoint, CheckpointMeta};
use crate::error::{JawsError, Result};
use crate::model::{project_spectral, Architecture, ModelParams, SpectralNormState, UncertaintyInit};
use crate::objective::{composite_loss, LossBreakdown, Method, PhysicsContext, Probe, Window};
use crate::solver::{Dataset, SpectralGrid, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    /// Pushforward window; 1 disables unrolling.
    pub k: usize,
    pub lambda: f64,
    /// Learning rate of the backbone weights.
    pub lr: f64,
    /// Learning rate of the uncertainty parameters (`phi`, `s1`).
    pub uncertainty_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Windows drawn per epoch; defaults to the number of training trajectories.
    pub windows_per_epoch: Option<usize>,
    pub seed: u64,
    pub channels: usize,
    pub kernel: usize,
    pub depth: usize,
    pub pinn_beta: f64,
    pub specnorm_iters: usize,
    pub init: UncertaintyInit,
    /// Draw one probe per step shared by the batch instead of one per sample.
    pub shared_probe: bool,
    /// Write a checkpoint every this many optimizer steps.
    pub checkpoint_every: Option<usize>,
    /// Abort after this many consecutive steps without a finite sample.
    pub max_nonfinite: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::JawsS,
            k: 1,
            lambda: 1.0,
            lr: 3e-4,
            uncertainty_lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_size: 16,
            windows_per_epoch: None,
            seed: 0,
            channels: 32,
            kernel: 5,
            depth: 4,
            pinn_beta: 0.1,
            specnorm_iters: 1,
            init: UncertaintyInit::default(),
            shared_probe: false,
            checkpoint_every: None,
            max_nonfinite: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(JawsError::InvalidConfig("K must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.uncertainty_lr > 0.0) {
            return Err(JawsError::InvalidConfig("learning rates must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(JawsError::InvalidConfig("batch size and epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(JawsError::InvalidConfig("bad Adam hyperparameters".into()));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(JawsError::InvalidConfig("lambda must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, grid: usize) -> Architecture {
        Architecture {
            grid,
            channels: self.channels,
            kernel: self.kernel,
            depth: self.depth,
            head: self.method.head(),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            uncertainty_lr: self.uncertainty_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub uncertainty_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment estimates over the flat `[theta, phi, s1]` vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.theta.len() + params.phi.len() + 1;
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam update of θ, φ and s1 jointly. Non-finite gradients are rejected
/// without touching parameters or moments.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientBundle,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.sizes() != params.sizes() {
        return Err(JawsError::Contract("gradient layout does not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(JawsError::NonFinite {
            step: state.t as usize,
            detail: "gradient".into(),
        });
    }
    let n_theta = params.theta.len();
    let mut flat = params.flat();
    let g = grads
        .d_theta
        .iter()
        .chain(&grads.d_phi)
        .chain(std::iter::once(&grads.d_s1));
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, (&gi, p)) in g.zip(flat.iter_mut()).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
        let lr = if i < n_theta { cfg.lr } else { cfg.uncertainty_lr };
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
    }
    params.set_flat(&flat);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss: LossBreakdown,
    pub grad_norm_theta: f64,
    pub grad_norm_phi: f64,
    pub grad_s1: f64,
    pub s1: f64,
    pub s2_min: f64,
    pub s2_mean: f64,
    pub s2_max: f64,
    pub skipped: usize,
    pub wall_seconds: f64,
}

pub const LOG_HEADER: &str = "step,recon,jac,complexity,pushforward,total,s1,s2_mean,s2_min,s2_max,grad_norm_theta,grad_norm_phi,grad_s1,skipped,wall_seconds";

impl TrainLogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:.3}",
            self.step,
            self.loss.recon,
            self.loss.jac,
            self.loss.complexity,
            self.loss.pushforward,
            self.loss.total,
            self.s1,
            self.s2_mean,
            self.s2_min,
            self.s2_max,
            self.grad_norm_theta,
            self.grad_norm_phi,
            self.grad_s1,
            self.skipped,
            self.wall_seconds
        )
    }
}

pub fn write_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<TrainLogRow>,
}

/// Result of one sample's loss and gradient evaluation.
#[derive(Clone, Debug)]
pub struct SampleResult {
    pub loss: LossBreakdown,
    pub grads: GradientBundle,
    pub s2: Option<(f64, f64, f64)>,
    pub tape_nodes: usize,
    pub tape_values: usize,
    /// Stored values other than parameter leaves.
    pub tape_activations: usize,
}

/// Position of a training window inside the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowIndex {
    pub trajectory: usize,
    pub start: usize,
}

/// Evaluates the composite loss of one window and backpropagates it.
pub fn sample_gradient(
    config: &TrainConfig,
    params: &ModelParams,
    dataset: &Dataset,
    grid: &SpectralGrid,
    at: WindowIndex,
    probe_seed: u64,
) -> Result<SampleResult> {
    let traj = &dataset.trajectories[at.trajectory];
    let input = traj.states[at.start].values();
    let targets: Vec<&[f64]> = (1..=config.k)
        .map(|k| traj.states[at.start + k].values())
        .collect();
    let probe = config
        .method
        .uses_jacobian_penalty()
        .then(|| Probe::rademacher(dataset.grid(), probe_seed));
    let physics = PhysicsContext {
        grid,
        nu: traj.nu,
        dt: traj.dt,
        beta: config.pinn_beta,
    };
    let mut tape: Tape = params.new_tape();
    let bound = params.bind(&mut tape)?;
    let (out, nodes) = composite_loss(
        config.method,
        &mut tape,
        &bound,
        Window {
            input,
            targets: &targets,
        },
        config.lambda,
        probe.as_ref(),
        Some(&physics),
    )?;
    let loss = nodes.breakdown(&tape);
    if !loss.is_finite() {
        return Err(JawsError::NonFinite {
            step: 0,
            detail: format!("{loss:?}"),
        });
    }
    let grads = tape.backward(nodes.total)?;
    let s2 = out.s2.map(|s| {
        let v = tape.value(s);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, v.iter().sum::<f64>() / v.len() as f64, max)
    });
    Ok(SampleResult {
        loss,
        grads,
        s2,
        tape_nodes: tape.len(),
        tape_values: tape.buffer_len(),
        tape_activations: tape.activation_len(),
    })
}

/// Uniform sampler over valid `(trajectory, start)` pairs for a window of `k` steps.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    cumulative: Vec<usize>,
}

impl WindowSampler {
    pub fn new(dataset: &Dataset, k: usize) -> Result<Self> {
        let mut total = 0;
        let cumulative = dataset
            .trajectories
            .iter()
            .map(|t| {
                total += t.steps().saturating_sub(k - 1);
                total
            })
            .collect::<Vec<_>>();
        if total == 0 {
            return Err(JawsError::InvalidConfig(format!(
                "no trajectory is long enough for a window of K = {k}"
            )));
        }
        Ok(Self { cumulative })
    }

    pub fn count(&self) -> usize {
        *self.cumulative.last().expect("nonempty")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WindowIndex {
        let r = rng.gen_range(0..self.count());
        let trajectory = self.cumulative.partition_point(|&c| c <= r);
        let before = if trajectory == 0 { 0 } else { self.cumulative[trajectory - 1] };
        WindowIndex {
            trajectory,
            start: r - before,
        }
    }
}

pub fn train(config: &TrainConfig, dataset: &Dataset, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.split != Split::Train {
        return Err(JawsError::InvalidConfig("training needs a train-split dataset".into()));
    }
    let arch = config.architecture(dataset.grid());
    let mut params = ModelParams::init_with(arch, config.seed, config.init)?;
    let grid = SpectralGrid::new(dataset.grid())?;
    let sampler = WindowSampler::new(dataset, config.k)?;
    let adam = config.adam();
    let mut state = AdamState::new(&params);
    let mut sn_state = SpectralNormState::new(&arch, config.seed ^ 0x5151);
    if config.method == Method::SpecNorm {
        project_spectral(&mut params, &mut sn_state, config.specnorm_iters.max(10));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let windows = config.windows_per_epoch.unwrap_or(dataset.len()).max(1);
    let steps_per_epoch = windows.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let start = Instant::now();
    let mut log = Vec::with_capacity(total_steps);
    let mut failures = 0;

    for step in 0..total_steps {
        let shared = rng.gen::<u64>();
        let draws: Vec<(WindowIndex, u64)> = (0..config.batch_size)
            .map(|_| {
                let w = sampler.sample(&mut rng);
                let s = rng.gen::<u64>();
                (w, if config.shared_probe { shared } else { s })
            })
            .collect();
        let results: Vec<Result<SampleResult>> = draws
            .par_iter()
            .map(|&(w, seed)| sample_gradient(config, &params, dataset, &grid, w, seed))
            .collect();

        let mut grads = GradientBundle::zeros(params.sizes());
        let mut loss = LossBreakdown::default();
        let mut s2_stats = (f64::INFINITY, 0.0, f64::NEG_INFINITY);
        let mut ok = 0usize;
        let mut skipped = 0usize;
        for r in results {
            match r {
                Ok(s) if s.grads.is_finite() => {
                    grads.add_assign(&s.grads);
                    loss.add_assign(&s.loss);
                    if let Some((lo, mean, hi)) = s.s2 {
                        s2_stats.0 = s2_stats.0.min(lo);
                        s2_stats.1 += mean;
                        s2_stats.2 = s2_stats.2.max(hi);
                    }
                    ok += 1;
                }
                Ok(_) | Err(JawsError::NonFinite { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if ok == 0 {
            failures += 1;
            if failures > config.max_nonfinite {
                return Err(JawsError::TrainingAborted(format!(
                    "{failures} consecutive steps without a finite sample (last at step {step})"
                )));
            }
            continue;
        }
        failures = 0;
        let inv = 1.0 / ok as f64;
        grads.scale(inv);
        let loss = loss.scaled(inv);
        if adam_step(&mut params, &grads, &mut state, &adam).is_err() {
            skipped += ok;
        }
        if config.method == Method::SpecNorm {
            project_spectral(&mut params, &mut sn_state, config.specnorm_iters);
        }
        let (s2_min, s2_mean, s2_max) = if params.phi.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            (s2_stats.0, s2_stats.1 * inv, s2_stats.2)
        };
        log.push(TrainLogRow {
            step,
            loss,
            grad_norm_theta: grads.theta_norm(),
            grad_norm_phi: grads.phi_norm(),
            grad_s1: grads.d_s1,
            s1: params.s1,
            s2_min,
            s2_mean,
            s2_max,
            skipped,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if let (Some(dir), Some(every)) = (checkpoint_dir, config.checkpoint_every) {
            if every > 0 && (step + 1) % every == 0 {
                let meta = CheckpointMeta {
                    method: Some(config.method),
                    seed: Some(config.seed),
                    dataset_digest: None,
                };
                save_checkpoint(&dir.join(format!("checkpoint_{:06}.jaws", step + 1)), &params, &meta)?;
            }
        }
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadKind;

    #[test]
    fn zero_gradient_leaves_params() {
        let arch = Architecture {
            grid: 8,
            channels: 2,
            kernel: 3,
            depth: 2,
            head: HeadKind::Global,
        };
        let mut p = ModelParams::init(arch, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = GradientBundle::zeros(p.sizes());
        adam_step(&mut p, &g, &mut st, &TrainConfig::default().adam()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let arch = Architecture {
            grid: 8,
            channels: 2,
            kernel: 3,
            depth: 2,
            head: HeadKind::None,
        };
        let mut p = ModelParams::init(arch, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = GradientBundle::zeros(p.sizes());
        g.d_theta[0] = f64::NAN;
        assert!(adam_step(&mut p, &g, &mut st, &TrainConfig::default().adam()).is_err());
        assert_eq!(p, before);
        assert_eq!(st.steps(), 0);
    }
}
