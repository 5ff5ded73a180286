use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::field::check_grid;

/// FFT plans and wavenumber tables for a periodic grid on `[0, 1)`.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Integer wavenumbers in FFT order: 0, 1, .., N/2, -(N/2 - 1), .., -1.
    modes: Vec<i64>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize) -> Result<Self> {
        check_grid(n)?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let half = (n / 2) as i64;
        let modes = (0..n as i64)
            .map(|i| if i <= half { i } else { i - n as i64 })
            .collect();
        Ok(Self {
            n,
            forward,
            inverse,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    /// Angular wavenumber `2πk` of FFT bin `i`.
    pub fn angular(&self, i: usize) -> f64 {
        2.0 * PI * self.modes[i] as f64
    }

    /// Unnormalized forward transform of a real signal.
    pub fn fft(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform (normalized by 1/N), keeping the real part.
    pub fn ifft_real(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut buf = hat.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// 2/3-rule mask: keeps `|k| <= N/3`.
    pub fn dealias_keep(&self, i: usize) -> bool {
        (self.modes[i].unsigned_abs() as usize) * 3 <= self.n
    }

    /// Spectral derivative of the given order. The Nyquist mode is dropped for odd orders.
    pub fn derivative(&self, u: &[f64], order: u32) -> Vec<f64> {
        let mut hat = self.fft(u);
        let nyquist = self.n / 2;
        for (i, c) in hat.iter_mut().enumerate() {
            if order % 2 == 1 && i == nyquist {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, self.angular(i));
            *c *= ik.powu(order);
        }
        self.ifft_real(&hat)
    }
}
