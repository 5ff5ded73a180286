//! Training objectives: the heteroscedastic MAP loss with a spatial Hutchinson
//! Jacobian penalty, the short-window pushforward composite, and the baselines.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Shape, Tape};
use crate::error::{JawsError, Result};
use crate::model::{BoundParams, HeadKind, ModelOutput};
use crate::solver::SpectralGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "pinn")]
    Pinn,
    #[serde(rename = "specnorm")]
    SpecNorm,
    #[serde(rename = "jaws-g")]
    JawsG,
    #[serde(rename = "jaws-s")]
    JawsS,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::Pinn,
        Method::SpecNorm,
        Method::JawsG,
        Method::JawsS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Pinn => "pinn",
            Method::SpecNorm => "specnorm",
            Method::JawsG => "jaws-g",
            Method::JawsS => "jaws-s",
        }
    }

    /// Uncertainty head the method trains.
    pub fn head(self) -> HeadKind {
        match self {
            Method::Baseline | Method::Pinn | Method::SpecNorm => HeadKind::None,
            Method::JawsG => HeadKind::Global,
            Method::JawsS => HeadKind::Spatial {
                channels: 16,
                kernel: 5,
            },
        }
    }

    pub fn uses_jacobian_penalty(self) -> bool {
        matches!(self, Method::JawsG | Method::JawsS)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = JawsError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                JawsError::InvalidConfig(format!(
                    "unknown method '{s}' (valid: baseline, pinn, specnorm, jaws-g, jaws-s)"
                ))
            })
    }
}

/// Rademacher probe vector with entries in `{−1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    v: Vec<f64>,
    seed: u64,
}

impl Probe {
    pub fn rademacher(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        Self { v, seed }
    }

    pub fn from_signs(v: Vec<f64>, seed: u64) -> Result<Self> {
        if v.iter().any(|x| *x != 1.0 && *x != -1.0) {
            return Err(JawsError::Contract("probe entries must be ±1".into()));
        }
        Ok(Self { v, seed })
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Per-term loss values for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub jac: f64,
    pub complexity: f64,
    pub pushforward: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.recon, self.jac, self.complexity, self.pushforward, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, o: &LossBreakdown) {
        self.recon += o.recon;
        self.jac += o.jac;
        self.complexity += o.complexity;
        self.pushforward += o.pushforward;
        self.total += o.total;
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.recon *= c;
        self.jac *= c;
        self.complexity *= c;
        self.pushforward *= c;
        self.total *= c;
        self
    }
}

/// Tape nodes of each loss term; `total = recon + jac + complexity + pushforward`.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub recon: NodeId,
    pub jac: NodeId,
    pub complexity: NodeId,
    pub pushforward: NodeId,
    pub total: NodeId,
}

impl LossNodes {
    fn assemble(
        tape: &mut Tape,
        recon: NodeId,
        jac: NodeId,
        complexity: NodeId,
        pushforward: NodeId,
    ) -> Self {
        let a = tape.add(recon, jac);
        let b = tape.add(a, complexity);
        let total = tape.add(b, pushforward);
        Self {
            recon,
            jac,
            complexity,
            pushforward,
            total,
        }
    }

    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            recon: tape.scalar(self.recon),
            jac: tape.scalar(self.jac),
            complexity: tape.scalar(self.complexity),
            pushforward: tape.scalar(self.pushforward),
            total: tape.scalar(self.total),
        }
    }
}

fn zero(tape: &mut Tape) -> NodeId {
    tape.input(vec![0.0], Shape::scalar())
}

/// `h(x) = ((J v)(x))²`, differentiable with respect to the parameters.
///
/// For a Rademacher `v`, `E[h(x)] = Σ_j J(x, j)²`, the squared norm of row `x`.
pub fn hutchinson_row_energy(tape: &mut Tape, out: &ModelOutput, probe: &Probe) -> Result<NodeId> {
    let jv = tape.jvp(out.input, out.prediction, probe.values())?;
    Ok(tape.square(jv))
}

/// The three MAP terms, averaged over the grid:
///
/// * recon      = mean ½ e^{−s1} (target − prediction)²
/// * jac        = mean ½ e^{−s2(x)} h(x)
/// * complexity = ½ s1 + mean ½ s2(x)
///
/// `s2` may be a `[1, N]` map or a scalar (global variant).
pub fn jaws_terms(
    tape: &mut Tape,
    prediction: NodeId,
    target: NodeId,
    s1: NodeId,
    s2: NodeId,
    h: NodeId,
) -> LossNodes {
    let resid = tape.sub(target, prediction);
    let sq = tape.square(resid);
    let neg_s1 = tape.scale(s1, -1.0);
    let w1 = tape.exp(neg_s1);
    let weighted = tape.mul_scalar(sq, w1);
    let recon_mean = tape.mean(weighted);
    let recon = tape.scale(recon_mean, 0.5);

    let neg_s2 = tape.scale(s2, -1.0);
    let w2 = tape.exp(neg_s2);
    let penal = if tape.shape(s2).is_scalar() {
        tape.mul_scalar(h, w2)
    } else {
        tape.mul(w2, h)
    };
    let jac_mean = tape.mean(penal);
    let jac = tape.scale(jac_mean, 0.5);

    let half_s1 = tape.scale(s1, 0.5);
    let s2_mean = tape.mean(s2);
    let half_s2 = tape.scale(s2_mean, 0.5);
    let complexity = tape.add(half_s1, half_s2);

    let pushforward = zero(tape);
    LossNodes::assemble(tape, recon, jac, complexity, pushforward)
}

pub fn jaws_loss(
    tape: &mut Tape,
    out: &ModelOutput,
    target: &[f64],
    s1: NodeId,
    probe: &Probe,
) -> Result<LossNodes> {
    let s2 = out.s2.ok_or_else(|| {
        JawsError::Unsupported("JAWS loss needs a model with an uncertainty head".into())
    })?;
    let target = target_node(tape, out.prediction, target)?;
    let h = hutchinson_row_energy(tape, out, probe)?;
    Ok(jaws_terms(tape, out.prediction, target, s1, s2, h))
}

fn target_node(tape: &mut Tape, prediction: NodeId, target: &[f64]) -> Result<NodeId> {
    let shape = tape.shape(prediction);
    if target.len() != shape.len() {
        return Err(JawsError::ShapeMismatch {
            expected: shape.len(),
            got: target.len(),
        });
    }
    Ok(tape.input(target.to_vec(), shape))
}

fn mean_sq_error(tape: &mut Tape, prediction: NodeId, target: NodeId) -> NodeId {
    let r = tape.sub(target, prediction);
    let sq = tape.square(r);
    tape.mean(sq)
}

/// Unconstrained single-step MSE.
pub fn mse_loss(tape: &mut Tape, out: &ModelOutput, target: &[f64]) -> Result<LossNodes> {
    let t = target_node(tape, out.prediction, target)?;
    let recon = mean_sq_error(tape, out.prediction, t);
    let (j, c, p) = (zero(tape), zero(tape), zero(tape));
    Ok(LossNodes::assemble(tape, recon, j, c, p))
}

/// MSE plus `β · mean[(û − u)/Δt + u u_x − ν u_xx]²`, spatial derivatives spectral on `u`.
/// The physics penalty is folded into `recon`.
pub fn pinn_loss(
    tape: &mut Tape,
    out: &ModelOutput,
    target: &[f64],
    physics: &PhysicsContext<'_>,
) -> Result<LossNodes> {
    let t = target_node(tape, out.prediction, target)?;
    let mse = mean_sq_error(tape, out.prediction, t);
    let u = tape.value(out.input).to_vec();
    let c = pde_forcing(physics.grid, &u, physics.nu);
    let shape = tape.shape(out.prediction);
    let c = tape.input(c, shape);
    let d = tape.sub(out.prediction, out.input);
    let rate = tape.scale(d, 1.0 / physics.dt);
    let r = tape.add(rate, c);
    let sq = tape.square(r);
    let pen = tape.mean(sq);
    let pen = tape.scale(pen, physics.beta);
    let recon = tape.add(mse, pen);
    let (j, cz, p) = (zero(tape), zero(tape), zero(tape));
    Ok(LossNodes::assemble(tape, recon, j, cz, p))
}

/// `u u_x − ν u_xx`, so that the Burgers residual is `u_t + pde_forcing(u)`.
pub fn pde_forcing(grid: &SpectralGrid, u: &[f64], nu: f64) -> Vec<f64> {
    let ux = grid.derivative(u, 1);
    let uxx = grid.derivative(u, 2);
    u.iter()
        .zip(ux.iter().zip(&uxx))
        .map(|(v, (d1, d2))| v * d1 - nu * d2)
        .collect()
}

/// Mean squared PINN residual of a transition pair, outside any tape.
pub fn pinn_residual(grid: &SpectralGrid, u_t: &[f64], u_next: &[f64], nu: f64, dt: f64) -> f64 {
    let c = pde_forcing(grid, u_t, nu);
    u_t.iter()
        .zip(u_next)
        .zip(&c)
        .map(|((a, b), f)| {
            let r = (b - a) / dt + f;
            r * r
        })
        .sum::<f64>()
        / u_t.len() as f64
}

/// Physical metadata the PINN residual needs.
#[derive(Clone, Copy, Debug)]
pub struct PhysicsContext<'a> {
    pub grid: &'a SpectralGrid,
    pub nu: f64,
    pub dt: f64,
    pub beta: f64,
}

/// Loss of the first transition for `method` (no pushforward).
pub fn baseline_losses(
    method: Method,
    tape: &mut Tape,
    bound: &BoundParams,
    out: &ModelOutput,
    target: &[f64],
    probe: Option<&Probe>,
    physics: Option<&PhysicsContext<'_>>,
) -> Result<LossNodes> {
    match method {
        Method::Baseline | Method::SpecNorm => mse_loss(tape, out, target),
        Method::Pinn => {
            let physics = physics.ok_or_else(|| {
                JawsError::InvalidConfig("PINN loss needs nu and dt".into())
            })?;
            pinn_loss(tape, out, target, physics)
        }
        Method::JawsG | Method::JawsS => {
            let probe = probe
                .ok_or_else(|| JawsError::InvalidConfig("JAWS loss needs a probe".into()))?;
            jaws_loss(tape, out, target, bound.s1, probe)
        }
    }
}

/// Inputs of one composite training sample.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub input: &'a [f64],
    /// `targets[k − 1]` is the state `k` steps ahead.
    pub targets: &'a [&'a [f64]],
}

/// Step-1 loss of `method`, plus `λ Σ_{k=2..K} mean (u_{t+k} − û_{t+k})²` unrolled from the
/// detached step-1 prediction. Later steps carry no Jacobian or uncertainty terms.
pub fn composite_loss(
    method: Method,
    tape: &mut Tape,
    bound: &BoundParams,
    window: Window<'_>,
    lambda: f64,
    probe: Option<&Probe>,
    physics: Option<&PhysicsContext<'_>>,
) -> Result<(ModelOutput, LossNodes)> {
    let k = window.targets.len();
    if k == 0 {
        return Err(JawsError::InvalidConfig("pushforward window K must be >= 1".into()));
    }
    let out = bound.forward_values(tape, window.input)?;
    let base = baseline_losses(method, tape, bound, &out, window.targets[0], probe, physics)?;
    if k == 1 || lambda == 0.0 {
        return Ok((out, base));
    }
    let mut state = tape.detach(out.prediction);
    let mut acc: Option<NodeId> = None;
    for target in &window.targets[1..] {
        let pred = bound.predict_node(tape, state)?;
        let t = target_node(tape, pred, target)?;
        let err = mean_sq_error(tape, pred, t);
        acc = Some(match acc {
            Some(a) => tape.add(a, err),
            None => err,
        });
        state = pred;
    }
    let sum = acc.expect("k >= 2");
    let pushforward = tape.scale(sum, lambda);
    let nodes = LossNodes::assemble(tape, base.recon, base.jac, base.complexity, pushforward);
    Ok((out, nodes))
}
