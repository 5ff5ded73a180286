//! `jaws` command line: `gen-data`, `train`, `eval`, `report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, load_checkpoint, load_dataset, save_checkpoint, save_dataset, CheckpointMeta};
use crate::error::{JawsError, Result};
use crate::eval::report::{num, svg_histogram, svg_lines, svg_raster, write_csv};
use crate::eval::{self, Entry, NoiseConfig, OodConfig, RadiusOptions, Stepper};
use crate::field::Field;
use crate::model::{ModelParams, UncertaintyInit};
use crate::objective::Method;
use crate::solver::{generate_dataset, BurgersSolver, Dataset, DatasetConfig, SpectralGrid, Split, Trajectory};
use crate::training::{train, write_log, TrainConfig};

pub const CODE_VERSION: &str = concat!("jaws-core ", env!("CARGO_PKG_VERSION"));

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const DATA_GEN: i32 = 3;
    pub const TRAINING: i32 = 4;
    pub const EVAL: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "jaws", version, about = "Jacobian-adaptive surrogate training for 1D viscous Burgers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train (and test) trajectory datasets with the spectral solver.
    GenData(GenDataArgs),
    /// Train one surrogate.
    Train(TrainArgs),
    /// Run one evaluation study on one checkpoint.
    Eval(EvalArgs),
    /// Compare several checkpoints in Table-style CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    /// Test trajectories written to `<stem>_test.jaws`; 0 skips the test split.
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 10)]
    pub substeps: usize,
    #[arg(long, default_value_t = 0.005)]
    pub nu_min: f64,
    #[arg(long, default_value_t = 0.02)]
    pub nu_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the test split (default: seed + 1).
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "jaws-s")]
    pub method: Method,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub uncertainty_lr: f64,
    #[arg(long)]
    pub windows_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[arg(long, default_value_t = 5)]
    pub kernel: usize,
    #[arg(long, default_value_t = 0.0)]
    pub init_s1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub init_s2: f64,
    /// Write `checkpoint_<step>.jaws` every this many optimizer steps.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            method: self.method,
            k: self.k,
            lambda: self.lambda,
            lr: self.lr,
            uncertainty_lr: self.uncertainty_lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            windows_per_epoch: self.windows_per_epoch,
            seed: self.seed,
            channels: self.channels,
            kernel: self.kernel,
            depth: self.depth,
            init: UncertaintyInit {
                s1: self.init_s1,
                s2_bias: self.init_s2,
            },
            checkpoint_every: self.checkpoint_every,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Rollout,
    Spectrum,
    Radius,
    Weights,
    Heatmap,
    Noise,
    Ood,
    Init,
}

impl Study {
    fn name(self) -> &'static str {
        match self {
            Study::Rollout => "rollout",
            Study::Spectrum => "spectrum",
            Study::Radius => "radius",
            Study::Weights => "weights",
            Study::Heatmap => "heatmap",
            Study::Noise => "noise",
            Study::Ood => "ood",
            Study::Init => "init",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test dataset.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub study: Study,
    /// Rollout steps reported in tables (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub steps: Vec<usize>,
    /// Random test states for the spectral-radius study.
    #[arg(long, default_value_t = 100)]
    pub states: usize,
    /// Test trajectory for the heatmap; default is the canonical shock trajectory.
    #[arg(long)]
    pub trajectory: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
    /// Training dataset, required by the init study.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub init_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub steps: Vec<usize>,
    /// Also emit the OOD table.
    #[arg(long)]
    pub ood: bool,
    /// Also emit the noise table and slopes.
    #[arg(long)]
    pub noise: bool,
    /// Rollout horizon of the noise study.
    #[arg(long, default_value_t = 50)]
    pub noise_horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Provenance of one command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config: serde_json::Value,
    /// `parent/file` name of each input to its SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256 digest.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            code_version: CODE_VERSION.into(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let parent = path.parent().map(file_name).unwrap_or_default();
        let key = if parent.is_empty() {
            file_name(path)
        } else {
            format!("{parent}/{}", file_name(path))
        };
        self.inputs.insert(key, container::file_digest(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(file_name(path), container::file_digest(path)?);
        Ok(())
    }

    fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    GenData,
    Train,
    Eval,
}

fn exit_code(phase: Phase, err: &JawsError) -> i32 {
    use JawsError::*;
    match err {
        InvalidConfig(_) | InvalidSpec(_) | InvalidField(_) => exit::USAGE,
        Io(_) => exit::IO,
        BlowUp { .. } | DataGeneration { .. } => exit::DATA_GEN,
        TrainingAborted(_) | NonFinite { .. } => exit::TRAINING,
        ArchMismatch(_) | Unsupported(_) | ShapeMismatch { .. } => exit::EVAL,
        Format(_) | BadMagic | Json(_) | Contract(_) => match phase {
            Phase::Eval => exit::EVAL,
            Phase::Train if matches!(err, Contract(_)) => exit::TRAINING,
            _ => exit::IO,
        },
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let (phase, result) = match &cli.command {
        Command::GenData(a) => (Phase::GenData, cmd_gen_data(a)),
        Command::Train(a) => (Phase::Train, cmd_train(a)),
        Command::Eval(a) => (Phase::Eval, cmd_eval(a)),
        Command::Report(a) => (Phase::Eval, cmd_report(a)),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(phase, &e)
        }
    }
}

fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// Path of the test split written next to a train dataset.
pub fn test_split_path(train_path: &Path) -> PathBuf {
    with_suffix(train_path, "_test", "jaws")
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let base = DatasetConfig {
        n_trajectories: a.n_train,
        grid: a.grid,
        dt: a.dt,
        substeps: a.substeps,
        steps: a.steps,
        nu_range: (a.nu_min, a.nu_max),
        seed: a.seed,
        split: Split::Train,
        ..DatasetConfig::default()
    };
    base.validate()?;
    let mut manifest = RunManifest::new("gen-data", serde_json::to_value(&base)?);
    let mut splits = vec![(base.clone(), a.output.clone())];
    if a.n_test > 0 {
        let test = DatasetConfig {
            n_trajectories: a.n_test,
            seed: a.test_seed.unwrap_or(a.seed.wrapping_add(1)),
            split: Split::Test,
            ..base
        };
        splits.push((test, test_split_path(&a.output)));
    }
    for (cfg, path) in &splits {
        let ds = generate_dataset(cfg)?;
        let digest = save_dataset(path, &ds)?;
        manifest.output(path)?;
        println!(
            "{} split: {} trajectories x {} steps, N = {}, nu in [{}, {}], sha256 {digest} -> {}",
            cfg.split,
            ds.len(),
            cfg.steps,
            cfg.grid,
            cfg.nu_range.0,
            cfg.nu_range.1,
            path.display()
        );
    }
    manifest.write(&with_suffix(&a.output, ".manifest", "json"))
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let config = a.config();
    config.validate()?;
    let data = load_dataset(&a.data)?;
    let digest = container::file_digest(&a.data)?;
    fs::create_dir_all(&a.output)?;
    let outcome = train(&config, &data, Some(&a.output))?;
    let ckpt = a.output.join("checkpoint.jaws");
    let meta = CheckpointMeta {
        method: Some(config.method),
        seed: Some(config.seed),
        dataset_digest: Some(digest),
    };
    save_checkpoint(&ckpt, &outcome.params, &meta)?;
    let log = a.output.join("train_log.csv");
    write_log(&log, &outcome.log)?;
    let mut manifest = RunManifest::new("train", serde_json::to_value(&config)?);
    manifest.input(&a.data)?;
    manifest.output(&ckpt)?;
    manifest.output(&log)?;
    manifest.write(&a.output.join("manifest.json"))?;
    if let Some(last) = outcome.log.last() {
        println!(
            "{} K={} seed={}: {} steps, final loss {:.4e}, s1 {:.3} -> {}",
            config.method,
            config.k,
            config.seed,
            outcome.log.len(),
            last.loss.total,
            last.s1,
            ckpt.display()
        );
    }
    Ok(())
}

struct Loaded {
    params: ModelParams,
    name: String,
}

fn load_model(path: &Path, data: &Dataset) -> Result<Loaded> {
    let (params, meta) = load_checkpoint(path)?;
    if params.arch.grid != data.grid() {
        return Err(JawsError::ArchMismatch(format!(
            "checkpoint grid {} vs dataset grid {}",
            params.arch.grid,
            data.grid()
        )));
    }
    let name = meta.method.map_or_else(|| "model".to_string(), |m| m.as_str().to_string());
    Ok(Loaded { params, name })
}

fn check_steps(steps: &[usize], data: &Dataset) -> Result<usize> {
    let available = data.trajectories.iter().map(Trajectory::steps).min().unwrap_or(0);
    let max = steps.iter().copied().max().unwrap_or(0);
    if steps.is_empty() || steps.contains(&0) || max > available {
        return Err(JawsError::InvalidConfig(format!(
            "--steps must be in 1..={available}"
        )));
    }
    Ok(max)
}

/// Canonical shock case: `0.8 sin(2πx)` at ν = 0.01 for 200 steps.
pub fn canonical_shock_trajectory(grid: usize) -> Result<Trajectory> {
    let u0 = Field::from_fn(grid, |x| 0.8 * (2.0 * std::f64::consts::PI * x).sin())?;
    BurgersSolver::new(grid)?.integrate(&u0, 0.01, 0.01, 200, 10)
}

/// `count` test states drawn uniformly over (trajectory, step) pairs.
pub fn random_states(data: &Dataset, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0..data.len());
            let s = rng.gen_range(0..=data.trajectories[t].steps());
            (t, s)
        })
        .collect()
}

fn write_text(path: &Path, text: &str, manifest: &mut RunManifest) -> Result<()> {
    fs::write(path, text)?;
    manifest.output(path)
}

fn csv(path: &Path, header: &[&str], rows: &[Vec<String>], manifest: &mut RunManifest) -> Result<()> {
    write_csv(path, header, rows)?;
    manifest.output(path)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let model = load_model(&a.checkpoint, &data)?;
    fs::create_dir_all(&a.output)?;
    let study = a.study.name();
    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({ "study": study, "steps": a.steps, "seed": a.seed }),
    );
    manifest.input(&a.checkpoint)?;
    manifest.input(&a.data)?;
    let m = &model.name;
    let out = |name: &str| a.output.join(name);
    let p = &model.params;
    match a.study {
        Study::Rollout => {
            let horizon = check_steps(&a.steps, &data)?;
            let reports = eval::rollout_dataset(p, &data, horizon, &a.steps)?;
            let curve = eval::mean_curve(&reports, horizon);
            let rows: Vec<Vec<String>> = curve
                .iter()
                .enumerate()
                .map(|(i, e)| vec![(i + 1).to_string(), num(*e)])
                .collect();
            csv(&out(&format!("rollout_{m}.csv")), &["step", "mean_rel_l2"], &rows, &mut manifest)?;
            let table: Vec<Vec<String>> = a
                .steps
                .iter()
                .map(|&s| vec![s.to_string(), format!("{:.2}", 100.0 * eval::mean_at(&reports, s))])
                .collect();
            csv(&out(&format!("table1_{m}.csv")), &["step", m], &table, &mut manifest)?;
            let diverged = reports.iter().filter(|r| r.diverged_at.is_some()).count();
            let series = vec![(m.clone(), curve.iter().enumerate().map(|(i, e)| ((i + 1) as f64, *e)).collect())];
            write_text(
                &out(&format!("rollout_{m}.svg")),
                &svg_lines("Rollout rel-L2", "step", "rel-L2", &series, true),
                &mut manifest,
            )?;
            for r in &table {
                println!("{m} step {}: {}%", r[0], r[1]);
            }
            println!("{m}: {diverged} of {} rollouts diverged", reports.len());
        }
        Study::Spectrum => {
            let step = check_steps(&a.steps, &data)?;
            let reports = eval::rollout_dataset(p, &data, step, &[step])?;
            let preds: Vec<&[f64]> = reports
                .iter()
                .filter_map(|r| r.snapshots.first().map(|s| s.prediction.as_slice()))
                .collect();
            let truth: Vec<&[f64]> = data.trajectories.iter().map(|t| t.states[step].values()).collect();
            let st = eval::energy_spectrum(&truth)?;
            let diverged = preds.len() < truth.len();
            let sm = if preds.is_empty() { None } else { Some(eval::energy_spectrum(&preds)?) };
            let rows: Vec<Vec<String>> = st
                .wavenumbers
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    vec![
                        k.to_string(),
                        num(st.energy[i]),
                        sm.as_ref().map_or("nan".into(), |s| num(s.energy[i])),
                    ]
                })
                .collect();
            csv(&out(&format!("spectrum_{m}.csv")), &["k", "truth", m], &rows, &mut manifest)?;
            let mut series = vec![("truth".to_string(), pts(&st.wavenumbers, &st.energy))];
            if let Some(s) = &sm {
                series.push((m.clone(), pts(&s.wavenumbers, &s.energy)));
                println!("{m}: mean energy above k = N/3 at step {step}: {:.4e}", s.mean_above(data.grid() / 3));
            }
            write_text(
                &out(&format!("spectrum_{m}.svg")),
                &svg_lines("Energy spectrum", "k", "E(k)", &series, true),
                &mut manifest,
            )?;
            if diverged {
                println!("{m}: some rollouts diverged before step {step}; spectrum uses the rest");
            }
        }
        Study::Radius => {
            let picks = random_states(&data, a.states, a.seed);
            let states: Vec<&[f64]> = picks
                .iter()
                .map(|&(t, s)| data.trajectories[t].states[s].values())
                .collect();
            let opts = RadiusOptions {
                seed: a.seed,
                ..RadiusOptions::default()
            };
            let rep = eval::radius_study(p, &states, &opts)?;
            let rows: Vec<Vec<String>> = picks
                .iter()
                .zip(&rep.estimates)
                .map(|(&(t, s), e)| {
                    vec![t.to_string(), s.to_string(), num(e.value), e.converged.to_string()]
                })
                .collect();
            csv(
                &out(&format!("radius_{m}.csv")),
                &["trajectory", "step", "radius", "converged"],
                &rows,
                &mut manifest,
            )?;
            let values: Vec<f64> = rep.estimates.iter().map(|e| e.value).collect();
            let hi = values.iter().copied().fold(1.5f64, f64::max);
            let bins = eval::histogram(&values, 30, 0.0, hi);
            let brows: Vec<Vec<String>> = bins
                .iter()
                .map(|(lo, hi, c)| vec![num(*lo), num(*hi), c.to_string()])
                .collect();
            csv(&out(&format!("radius_hist_{m}.csv")), &["lo", "hi", "count"], &brows, &mut manifest)?;
            write_text(
                &out(&format!("radius_{m}.svg")),
                &svg_histogram("Jacobian spectral radius", "rho(J)", &bins),
                &mut manifest,
            )?;
            println!(
                "{m}: median spectral radius {:.4} over {} states ({:.0}% converged)",
                rep.median,
                values.len(),
                100.0 * rep.converged_fraction
            );
        }
        Study::Weights => {
            let grid = SpectralGrid::new(data.grid())?;
            let mut rows = Vec::new();
            let mut pass = 0;
            for (ti, t) in data.trajectories.iter().enumerate() {
                for (si, s) in t.states.iter().enumerate().step_by(10) {
                    if !eval::is_shock_state(&grid, s.values()) {
                        continue;
                    }
                    let w = eval::weight_maps(p, s.values())?;
                    let (c, off) = (w.correlation(), w.shock_offset());
                    if c < 0.0 && off <= 5 {
                        pass += 1;
                    }
                    rows.push(vec![ti.to_string(), si.to_string(), num(c), off.to_string()]);
                }
            }
            csv(
                &out(&format!("weights_states_{m}.csv")),
                &["trajectory", "step", "correlation", "offset_cells"],
                &rows,
                &mut manifest,
            )?;
            let shock = canonical_shock_trajectory(data.grid())?;
            let u = shock.states[50].values();
            let w = eval::weight_maps(p, u)?;
            let n = u.len();
            let maps: Vec<Vec<String>> = (0..n)
                .map(|i| {
                    vec![
                        num(i as f64 / n as f64),
                        num(u[i]),
                        num(w.grad_abs[i]),
                        num(w.precision_s2[i]),
                    ]
                })
                .collect();
            csv(
                &out(&format!("weights_{m}.csv")),
                &["x", "u", "abs_ux", "precision_s2"],
                &maps,
                &mut manifest,
            )?;
            let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let gmax = w.grad_abs.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
            let series = vec![
                ("exp(-s2)".to_string(), xs.iter().copied().zip(w.precision_s2.iter().copied()).collect()),
                ("|u_x| / max".to_string(), xs.iter().copied().zip(w.grad_abs.iter().map(|g| g / gmax)).collect()),
            ];
            write_text(
                &out(&format!("weights_{m}.svg")),
                &svg_lines("Learned spatial weights", "x", "weight", &series, false),
                &mut manifest,
            )?;
            println!(
                "{m}: e^-s1 = {:.4e}; {pass} of {} shock states localized (corr < 0, offset <= 5)",
                w.precision_s1,
                rows.len()
            );
        }
        Study::Heatmap => {
            let traj = match a.trajectory {
                Some(i) => data
                    .trajectories
                    .get(i)
                    .cloned()
                    .ok_or_else(|| JawsError::InvalidConfig(format!("no test trajectory {i}")))?,
                None => canonical_shock_trajectory(data.grid())?,
            };
            let horizon = check_steps(&a.steps, &Dataset::new(vec![traj.clone()], Split::Test, 0, (traj.nu, traj.nu))?)?;
            let hm = eval::error_heatmap(p, &traj, horizon)?;
            let n = data.grid();
            let mut header = vec!["step".to_string()];
            header.extend((0..n).map(|i| format!("x{i}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = hm
                .rows
                .iter()
                .enumerate()
                .map(|(t, r)| std::iter::once((t + 1).to_string()).chain(r.iter().map(|v| num(*v))).collect())
                .collect();
            csv(&out(&format!("heatmap_{m}.csv")), &header, &rows, &mut manifest)?;
            write_text(
                &out(&format!("heatmap_{m}.svg")),
                &svg_raster("Absolute error", "x index", "step", &hm.rows),
                &mut manifest,
            )?;
            println!("{m}: max abs error {:.4e} over {} steps", hm.max(), hm.rows.len());
        }
        Study::Noise => {
            let cfg = NoiseConfig {
                sigmas: a.sigmas.clone(),
                horizon: a.horizon,
                draws: 1,
                seed: a.seed,
            };
            let entries: Vec<Entry<'_>> = vec![(m.as_str(), p as &dyn Stepper)];
            let rows = eval::study_noise(&entries, &data, &cfg)?;
            noise_outputs(&a.output, m, &rows, &mut manifest)?;
        }
        Study::Ood => {
            let cfg = OodConfig {
                grid: data.grid(),
                seed: a.seed.wrapping_add(1000),
                ..OodConfig::default()
            };
            let entries: Vec<Entry<'_>> = vec![(m.as_str(), p as &dyn Stepper)];
            let rows = eval::study_ood(&entries, &cfg)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.scenario.as_str().to_string(), format!("{:.3}", 100.0 * r.rel_l2)])
                .collect();
            csv(&out(&format!("ood_{m}.csv")), &["scenario", m], &table, &mut manifest)?;
            for r in &table {
                println!("{m} {}: {}%", r[0], r[1]);
            }
        }
        Study::Init => {
            let train_path = a
                .train_data
                .as_ref()
                .ok_or_else(|| JawsError::InvalidConfig("--train-data is required for the init study".into()))?;
            let train_data = load_dataset(train_path)?;
            manifest.input(train_path)?;
            let pairs: Vec<(&[f64], &[f64])> = random_states(&data, 16, a.seed)
                .into_iter()
                .map(|(t, s)| {
                    let tr = &data.trajectories[t];
                    let s = s.min(tr.steps() - 1);
                    (tr.states[s].values(), tr.states[s + 1].values())
                })
                .collect();
            let (r2, h) = eval::uncertainty_targets(p, &pairs, a.seed)?;
            let mut convex = Vec::new();
            for s0 in [-2.0, 0.0, 2.0] {
                let sol = eval::solve_uncertainty(&r2, &h, (s0, s0), 10_000, 1e-12)?;
                convex.push(vec![num(s0), num(sol.s1), num(sol.s2), sol.iterations.to_string()]);
            }
            csv(
                &out(&format!("init_convex_{m}.csv")),
                &["init", "s1", "s2", "iterations"],
                &convex,
                &mut manifest,
            )?;
            let config = TrainConfig {
                method: Method::JawsS,
                epochs: a.init_epochs,
                seed: a.seed,
                channels: p.arch.channels,
                kernel: p.arch.kernel,
                depth: p.arch.depth,
                ..TrainConfig::default()
            };
            let inits: Vec<UncertaintyInit> = [-2.0, 0.0, 2.0]
                .iter()
                .map(|&s| UncertaintyInit { s1: s, s2_bias: s })
                .collect();
            let st = eval::study_init_convergence(&config, &train_data, &inits)?;
            let mut rows = Vec::new();
            let mut series = Vec::new();
            for c in &st.curves {
                for &(step, s1, s2) in &c.points {
                    rows.push(vec![num(c.init.s1), step.to_string(), num(s1), num(s2)]);
                }
                series.push((
                    format!("s1 from {}", c.init.s1),
                    c.points.iter().map(|q| (q.0 as f64, q.1)).collect(),
                ));
                series.push((
                    format!("mean s2 from {}", c.init.s2_bias),
                    c.points.iter().map(|q| (q.0 as f64, q.2)).collect(),
                ));
            }
            csv(&out("init_jaws-s.csv"), &["init", "step", "s1", "s2_mean"], &rows, &mut manifest)?;
            write_text(
                &out("init_jaws-s.svg"),
                &svg_lines("Uncertainty parameter convergence", "step", "value", &series, false),
                &mut manifest,
            )?;
            println!("final s1 spread over inits: {:.4}", st.final_s1_spread);
        }
    }
    manifest.write(&a.output.join(format!("manifest_{study}_{m}.json")))
}

fn pts(k: &[usize], e: &[f64]) -> Vec<(f64, f64)> {
    k.iter().zip(e).map(|(&k, &e)| (k as f64, e)).collect()
}

fn noise_outputs(dir: &Path, tag: &str, rows: &[eval::NoiseRow], manifest: &mut RunManifest) -> Result<()> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.method.clone(), num(r.sigma), num(r.mean_rel_l2)])
        .collect();
    csv(&dir.join(format!("noise_{tag}.csv")), &["method", "sigma", "mean_rel_l2"], &table, manifest)?;
    let slopes = eval::noise_slopes(rows);
    let srows: Vec<Vec<String>> = slopes.iter().map(|(m, s)| vec![m.clone(), num(*s)]).collect();
    csv(&dir.join(format!("noise_slopes_{tag}.csv")), &["method", "slope"], &srows, manifest)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = slopes
        .iter()
        .map(|(m, _)| {
            (
                m.clone(),
                rows.iter().filter(|r| &r.method == m).map(|r| (r.sigma, r.mean_rel_l2)).collect(),
            )
        })
        .collect();
    write_text(
        &dir.join(format!("noise_{tag}.svg")),
        &svg_lines("Rollout error vs input noise", "sigma", "rel-L2", &series, false),
        manifest,
    )?;
    for (m, s) in &slopes {
        println!("{m}: noise slope {s:.4}");
    }
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let horizon = check_steps(&a.steps, &data)?;
    let models = a
        .checkpoints
        .iter()
        .map(|c| load_model(c, &data))
        .collect::<Result<Vec<_>>>()?;
    let names = unique_names(&models);
    fs::create_dir_all(&a.output)?;
    let mut manifest = RunManifest::new(
        "report",
        serde_json::json!({
            "steps": a.steps,
            "ood": a.ood,
            "noise": a.noise,
            "noise_horizon": a.noise_horizon,
            "seed": a.seed,
        }),
    );
    manifest.input(&a.data)?;
    for c in &a.checkpoints {
        manifest.input(c)?;
    }
    let mut header = vec!["step"];
    header.extend(names.iter().map(String::as_str));
    let mut cols = Vec::new();
    for model in &models {
        let reports = eval::rollout_dataset(&model.params, &data, horizon, &[])?;
        cols.push(a.steps.iter().map(|&s| 100.0 * eval::mean_at(&reports, s)).collect::<Vec<_>>());
    }
    let rows: Vec<Vec<String>> = a
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            std::iter::once(s.to_string())
                .chain(cols.iter().map(|c| format!("{:.2}", c[i])))
                .collect()
        })
        .collect();
    csv(&a.output.join("table1.csv"), &header, &rows, &mut manifest)?;
    for r in &rows {
        println!("step {}: {}", r[0], r[1..].join("  "));
    }
    let entries: Vec<Entry<'_>> = names
        .iter()
        .zip(&models)
        .map(|(n, m)| (n.as_str(), &m.params as &dyn Stepper))
        .collect();
    if a.ood {
        let cfg = OodConfig {
            grid: data.grid(),
            seed: a.seed.wrapping_add(1000),
            ..OodConfig::default()
        };
        let ood = eval::study_ood(&entries, &cfg)?;
        let mut header = vec!["scenario"];
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = eval::OodScenario::ALL
            .iter()
            .map(|sc| {
                std::iter::once(sc.as_str().to_string())
                    .chain(
                        ood.iter()
                            .filter(|r| r.scenario == *sc)
                            .map(|r| format!("{:.3}", 100.0 * r.rel_l2)),
                    )
                    .collect()
            })
            .collect();
        csv(&a.output.join("table3.csv"), &header, &rows, &mut manifest)?;
    }
    if a.noise {
        let cfg = NoiseConfig {
            horizon: a.noise_horizon,
            seed: a.seed,
            ..NoiseConfig::default()
        };
        let rows = eval::study_noise(&entries, &data, &cfg)?;
        noise_outputs(&a.output, "report", &rows, &mut manifest)?;
    }
    manifest.write(&a.output.join("manifest.json"))
}

fn unique_names(models: &[Loaded]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    models
        .iter()
        .map(|m| {
            let c = seen.entry(m.name.as_str()).or_default();
            *c += 1;
            if *c == 1 {
                m.name.clone()
            } else {
                format!("{}-{}", m.name, c)
            }
        })
        .collect()
}

/// Caps the rayon pool at `JAWS_THREADS` when set.
pub fn init_threads() {
    if let Some(n) = std::env::var("JAWS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
