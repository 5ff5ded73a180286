use serde::{Deserialize, Serialize};

use crate::error::{JawsError, Result};
use crate::solver::SpectralGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub wavenumbers: Vec<usize>,
    /// Band energy per wavenumber, averaged over the input fields; sums to mean `u²`.
    pub energy: Vec<f64>,
}

impl SpectrumReport {
    /// Mean band energy over wavenumbers strictly above `cutoff`.
    pub fn mean_above(&self, cutoff: usize) -> f64 {
        let tail: Vec<f64> = self
            .wavenumbers
            .iter()
            .zip(&self.energy)
            .filter(|(&k, _)| k > cutoff)
            .map(|(_, &e)| e)
            .collect();
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn total(&self) -> f64 {
        self.energy.iter().sum()
    }
}

/// `E(0) = |û₀/N|²`, `E(k) = 2|û_k/N|²` for `0 < k < N/2`, `E(N/2) = |û_{N/2}/N|²`.
pub fn energy_spectrum<F: AsRef<[f64]>>(fields: &[F]) -> Result<SpectrumReport> {
    let Some(first) = fields.first() else {
        return Err(JawsError::InvalidConfig("spectrum needs at least one field".into()));
    };
    let n = first.as_ref().len();
    let grid = SpectralGrid::new(n)?;
    let half = n / 2;
    let mut energy = vec![0.0; half + 1];
    for f in fields {
        let u = f.as_ref();
        if u.len() != n {
            return Err(JawsError::ShapeMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let hat = grid.fft(u);
        let scale = 1.0 / (n as f64 * n as f64);
        for (k, e) in energy.iter_mut().enumerate() {
            let p = hat[k].norm_sqr() * scale;
            *e += if k == 0 || k == half { p } else { 2.0 * p };
        }
    }
    let m = fields.len() as f64;
    energy.iter_mut().for_each(|e| *e /= m);
    Ok(SpectrumReport {
        wavenumbers: (0..=half).collect(),
        energy,
    })
}
