//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use jaws_core::autodiff::{GradientBundle, Tape};
use jaws_core::model::{Architecture, HeadKind, ModelParams};

/// Cole–Hopf solution of `u_t + u u_x = ν u_xx` on the unit periodic domain for
/// `u0 = sin(2πx)`, evaluated on `n` grid points at time `t`.
///
/// With `φ0 ∝ exp(cos(2πx) / (4πν))` the solution is
/// `u(x,t) = ∫ u0(x−η) φ0(x−η) G(η) dη / ∫ φ0(x−η) G(η) dη`, `G = exp(−η²/(4νt))`,
/// integrated by the trapezoid rule with log-sum-exp weights.
pub fn cole_hopf_sine(n: usize, nu: f64, t: f64) -> Vec<f64> {
    let width = (4.0 * nu * t).sqrt();
    let half = 14.0 * width;
    let m = 40_000;
    let d = 2.0 * half / m as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let logs: Vec<f64> = (0..=m)
                .map(|j| {
                    let eta = -half + j as f64 * d;
                    (2.0 * PI * (x - eta)).cos() / (4.0 * PI * nu) - eta * eta / (4.0 * nu * t)
                })
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (j, l) in logs.iter().enumerate() {
                let eta = -half + j as f64 * d;
                let w = if j == 0 || j == m { 0.5 } else { 1.0 } * (l - top).exp();
                num += w * (2.0 * PI * (x - eta)).sin();
                den += w;
            }
            num / den
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Component-wise relative error with an absolute floor for tiny entries.
pub fn max_rel(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn flat_grad(g: &GradientBundle) -> Vec<f64> {
    g.d_theta
        .iter()
        .chain(&g.d_phi)
        .chain(std::iter::once(&g.d_s1))
        .copied()
        .collect()
}

/// Central differences of `f` with respect to every flat parameter entry.
pub fn fd_gradient(params: &ModelParams, h: f64, f: impl Fn(&ModelParams) -> f64) -> Vec<f64> {
    let flat = params.flat();
    (0..flat.len())
        .map(|i| {
            let mut p = params.clone();
            let mut v = flat.clone();
            v[i] = flat[i] + h;
            p.set_flat(&v);
            let up = f(&p);
            v[i] = flat[i] - h;
            p.set_flat(&v);
            let down = f(&p);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Small net with every parameter perturbed away from the identity initialization,
/// so that no gradient vanishes structurally.
pub fn random_net(grid: usize, depth: usize, head: HeadKind, seed: u64) -> ModelParams {
    let arch = Architecture {
        grid,
        channels: 3,
        kernel: 3,
        depth,
        head,
    };
    let mut p = ModelParams::init(arch, seed).unwrap();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for t in p.theta.iter_mut() {
        *t += 0.3 * next();
    }
    for t in p.phi.iter_mut() {
        *t += 0.3 * next();
    }
    p.s1 = 0.2;
    p
}

pub fn smooth_state(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            0.6 * (2.0 * PI * x + phase).sin() + 0.2 * (4.0 * PI * x).cos()
        })
        .collect()
}

/// Dense Jacobian of the model's one-step map by central differences (column j = ∂M/∂u_j).
pub fn fd_jacobian(params: &ModelParams, u: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut up = u.to_vec();
        up[j] += h;
        let mut dn = u.to_vec();
        dn[j] -= h;
        let a = params.predict(&up).unwrap();
        let b = params.predict(&dn).unwrap();
        cols.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<f64>>());
    }
    // transpose to rows
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Dense Jacobian by tangent passes on basis vectors.
pub fn jvp_jacobian(params: &ModelParams, u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut tape: Tape = params.new_tape();
    let (_, out) = params.forward(u, &mut tape).unwrap();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            tape.jvp_values(out.input, out.prediction, &e).unwrap()
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Exact operator 2-norm of a bias-free periodic conv layer: the largest singular value
/// over the per-wavenumber symbol matrices `Ŵ(k)[o, c] = Σ_t w[o, c, t] e^{2πik(t − half)/n}`.
pub fn conv_norm_exact(w: &[f64], cout: usize, cin: usize, kernel: usize, n: usize) -> f64 {
    use nalgebra::{Complex, DMatrix};
    let half = kernel as f64 / 2.0;
    let half = half.floor();
    (0..n)
        .map(|k| {
            let m = DMatrix::from_fn(cout, cin, |o, c| {
                (0..kernel).fold(Complex::new(0.0, 0.0), |acc, t| {
                    let ang = 2.0 * PI * k as f64 * (t as f64 - half) / n as f64;
                    acc + Complex::from_polar(w[(o * cin + c) * kernel + t], ang)
                })
            });
            m.singular_values().max()
        })
        .fold(0.0, f64::max)
}
