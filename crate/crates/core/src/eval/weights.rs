use serde::{Deserialize, Serialize};

use crate::error::{JawsError, Result};
use crate::model::{HeadKind, ModelParams};
use crate::solver::SpectralGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMaps {
    /// Global reconstruction precision `e^{-s1}`.
    pub precision_s1: f64,
    /// Local Jacobian precision `e^{-s2(x)}`.
    pub precision_s2: Vec<f64>,
    /// `|∂u/∂x|` by spectral differentiation.
    pub grad_abs: Vec<f64>,
}

impl WeightMaps {
    pub fn correlation(&self) -> f64 {
        pearson(&self.precision_s2, &self.grad_abs)
    }

    /// Circular distance between the weakest Jacobian weight and the steepest gradient.
    pub fn shock_offset(&self) -> usize {
        let n = self.grad_abs.len();
        let a = argmin(&self.precision_s2);
        let b = argmax(&self.grad_abs);
        let d = a.abs_diff(b);
        d.min(n - d)
    }
}

pub fn weight_maps(params: &ModelParams, u: &[f64]) -> Result<WeightMaps> {
    if !matches!(params.arch.head, HeadKind::Spatial { .. }) {
        return Err(JawsError::Unsupported(
            "weight maps need a model with a spatial uncertainty head".into(),
        ));
    }
    let s2 = params.s2_map(u)?.expect("spatial head yields s2");
    let grid = SpectralGrid::new(u.len())?;
    Ok(WeightMaps {
        precision_s1: (-params.s1).exp(),
        precision_s2: s2.iter().map(|s| (-s).exp()).collect(),
        grad_abs: grid.derivative(u, 1).iter().map(|d| d.abs()).collect(),
    })
}

/// A state is shock-bearing when its steepest slope is at least three times the RMS slope.
pub fn is_shock_state(grid: &SpectralGrid, u: &[f64]) -> bool {
    let ux = grid.derivative(u, 1);
    let max = ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rms = (ux.iter().map(|v| v * v).sum::<f64>() / ux.len() as f64).sqrt();
    rms > 0.0 && max >= 3.0 * rms
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}
