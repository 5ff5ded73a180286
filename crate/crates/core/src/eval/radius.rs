use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::l2_norm;
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusOptions {
    pub iters: usize,
    /// Relative residual `‖JQ − QH‖ / |λ|` below which the estimate counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self {
            iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Largest eigenvalue modulus of a matrix-free operator by two-vector subspace iteration.
///
/// The 2×2 Rayleigh–Ritz projection resolves complex-conjugate pairs, which make
/// single-vector power iteration oscillate.
pub fn dominant_modulus<F>(mut op: F, n: usize, opts: &RadiusOptions) -> Result<RadiusEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    };
    let iters = opts.iters.max(1);
    if n == 1 {
        let v = op(&[1.0])?[0].abs();
        return Ok(RadiusEstimate {
            value: v,
            converged: true,
            iterations: 1,
            residual: 0.0,
        });
    }
    let mut q = [random(&mut rng), random(&mut rng)];
    orthonormalize(&mut q, &mut || random(&mut rng));
    let mut est = RadiusEstimate {
        value: 0.0,
        converged: false,
        iterations: 0,
        residual: f64::INFINITY,
    };
    for it in 1..=iters {
        let mut z = [op(&q[0])?, op(&q[1])?];
        // Rayleigh quotients divide by ‖q‖² so an exact identity gives exactly 1
        let (n0, n1) = (dot(&q[0], &q[0]), dot(&q[1], &q[1]));
        let h = [
            [dot(&q[0], &z[0]) / n0, dot(&q[0], &z[1]) / n0],
            [dot(&q[1], &z[0]) / n1, dot(&q[1], &z[1]) / n1],
        ];
        let mut res = 0.0;
        for b in 0..2 {
            for i in 0..n {
                let r = z[b][i] - q[0][i] * h[0][b] - q[1][i] * h[1][b];
                res += r * r;
            }
        }
        let value = modulus_2x2(h);
        let residual = res.sqrt() / value.max(f64::MIN_POSITIVE);
        est = RadiusEstimate {
            value,
            converged: res == 0.0 || residual < opts.tol,
            iterations: it,
            residual,
        };
        if est.converged || !value.is_finite() {
            break;
        }
        if l2_norm(&z[0]) == 0.0 && l2_norm(&z[1]) == 0.0 {
            est.converged = true;
            break;
        }
        orthonormalize(&mut z, &mut || random(&mut rng));
        q = z;
    }
    Ok(est)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram–Schmidt (twice) with random replacement of collapsed columns.
fn orthonormalize(q: &mut [Vec<f64>; 2], fresh: &mut dyn FnMut() -> Vec<f64>) {
    for j in 0..2 {
        for _attempt in 0..4 {
            for _ in 0..2 {
                for i in 0..j {
                    let (head, tail) = q.split_at_mut(j);
                    let c = dot(&head[i], &tail[0]);
                    for (t, h) in tail[0].iter_mut().zip(&head[i]) {
                        *t -= c * h;
                    }
                }
            }
            let norm = l2_norm(&q[j]);
            if norm > 1e-150 {
                q[j].iter_mut().for_each(|x| *x /= norm);
                break;
            }
            q[j] = fresh();
        }
    }
}

fn modulus_2x2(h: [[f64; 2]; 2]) -> f64 {
    let mid = 0.5 * (h[0][0] + h[1][1]);
    let half_gap = 0.5 * (h[0][0] - h[1][1]);
    // ((a - d)/2)² + bc avoids the cancellation in tr²/4 - det near repeated eigenvalues
    let disc = half_gap * half_gap + h[0][1] * h[1][0];
    if disc >= 0.0 {
        let s = disc.sqrt();
        (mid + s).abs().max((mid - s).abs())
    } else {
        (mid * mid - disc).sqrt()
    }
}

/// Dominant `|λ|` of the model Jacobian at `u`, using tangent passes only.
pub fn spectral_radius(params: &ModelParams, u: &[f64], opts: &RadiusOptions) -> Result<RadiusEstimate> {
    let mut tape = params.new_tape();
    let (_, out) = params.forward(u, &mut tape)?;
    dominant_modulus(|v| tape.jvp_values(out.input, out.prediction, v), u.len(), opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub estimates: Vec<RadiusEstimate>,
    pub median: f64,
    pub converged_fraction: f64,
}

/// Spectral radius at every state; state `i` uses start-vector seed `opts.seed + i`.
pub fn radius_study(params: &ModelParams, states: &[&[f64]], opts: &RadiusOptions) -> Result<RadiusReport> {
    let estimates = states
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let o = RadiusOptions {
                seed: opts.seed.wrapping_add(i as u64),
                ..*opts
            };
            spectral_radius(params, u, &o)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let converged = estimates.iter().filter(|e| e.converged).count();
    Ok(RadiusReport {
        median: median(&values),
        converged_fraction: converged as f64 / estimates.len().max(1) as f64,
        estimates,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Equal-width bin counts over `[lo, hi]`; out-of-range values land in the edge bins.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let b = (((v - lo) / w).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * w, lo + (i + 1) as f64 * w, c))
        .collect()
}
