use rustfft::num_complex::Complex64;

use super::spectral::SpectralGrid;
use crate::error::{JawsError, Result};
use crate::field::Field;

/// Time-ordered states of one Burgers solution with its physical metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Field>,
    pub nu: f64,
    pub dt: f64,
    pub solver_substeps: usize,
}

impl Trajectory {
    pub fn new(states: Vec<Field>, nu: f64, dt: f64, solver_substeps: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(JawsError::InvalidConfig("trajectory has no states".into()));
        }
        let n = states[0].len();
        if states.iter().any(|s| s.len() != n) {
            return Err(JawsError::InvalidConfig(
                "trajectory states disagree on grid size".into(),
            ));
        }
        if !(nu > 0.0 && dt > 0.0 && solver_substeps >= 1) {
            return Err(JawsError::InvalidConfig(format!(
                "need nu > 0, dt > 0, substeps >= 1 (nu={nu}, dt={dt}, substeps={solver_substeps})"
            )));
        }
        Ok(Self {
            states,
            nu,
            dt,
            solver_substeps,
        })
    }

    pub fn grid(&self) -> usize {
        self.states[0].len()
    }

    /// Number of recorded transitions (`states.len() - 1`).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Pseudo-spectral solver for `u_t + u u_x = ν u_xx` on the periodic unit interval.
///
/// The nonlinear term is evaluated in conservative form `½ (u²)_x` with the 2/3 rule;
/// diffusion is integrated exactly by an integrating factor inside classical RK4.
#[derive(Clone, Debug)]
pub struct BurgersSolver {
    grid: SpectralGrid,
}

impl BurgersSolver {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            grid: SpectralGrid::new(n)?,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `-½ i k · FFT(u²)` with modes `|k| > N/3` zeroed.
    pub fn nonlinear_hat(&self, u_hat: &[Complex64]) -> Vec<Complex64> {
        let u = self.grid.ifft_real(u_hat);
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let mut hat = self.grid.fft(&sq);
        for (i, c) in hat.iter_mut().enumerate() {
            if self.grid.dealias_keep(i) {
                *c *= Complex64::new(0.0, -0.5 * self.grid.angular(i));
            } else {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        hat
    }

    fn advance_hat(&self, v: &[Complex64], nu: f64, dt: f64) -> Vec<Complex64> {
        let n = self.grid.len();
        let mut e_half = Vec::with_capacity(n);
        let mut e_full = Vec::with_capacity(n);
        for i in 0..n {
            let k = self.grid.angular(i);
            let l = -nu * k * k;
            e_half.push((l * dt * 0.5).exp());
            e_full.push((l * dt).exp());
        }
        let scale = |a: &[Complex64], s: f64| -> Vec<Complex64> { a.iter().map(|c| c * s).collect() };

        let a = scale(&self.nonlinear_hat(v), dt);
        let arg: Vec<Complex64> = (0..n).map(|i| e_half[i] * (v[i] + a[i] * 0.5)).collect();
        let b = scale(&self.nonlinear_hat(&arg), dt);
        let arg: Vec<Complex64> = (0..n).map(|i| e_half[i] * v[i] + b[i] * 0.5).collect();
        let c = scale(&self.nonlinear_hat(&arg), dt);
        let arg: Vec<Complex64> = (0..n).map(|i| e_full[i] * v[i] + e_half[i] * c[i]).collect();
        let d = scale(&self.nonlinear_hat(&arg), dt);
        (0..n)
            .map(|i| {
                e_full[i] * v[i] + (e_full[i] * a[i] + (b[i] + c[i]) * (2.0 * e_half[i]) + d[i]) / 6.0
            })
            .collect()
    }

    /// One integrating-factor RK4 step of size `dt_inner`.
    pub fn step(&self, u: &Field, nu: f64, dt_inner: f64) -> Result<Field> {
        self.check(u)?;
        let hat = self.advance_hat(&self.grid.fft(u.values()), nu, dt_inner);
        let out = self.grid.ifft_real(&hat);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(JawsError::BlowUp { step: 0 });
        }
        Field::new(out)
    }

    /// Advances `substeps` inner steps of `dt / substeps`, staying in Fourier space.
    pub fn advance(&self, u: &Field, nu: f64, dt: f64, substeps: usize) -> Result<Field> {
        self.check(u)?;
        let h = dt / substeps as f64;
        let mut hat = self.grid.fft(u.values());
        for _ in 0..substeps {
            hat = self.advance_hat(&hat, nu, h);
        }
        let out = self.grid.ifft_real(&hat);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(JawsError::BlowUp { step: 0 });
        }
        Field::new(out)
    }

    /// Records `n_steps + 1` states spaced `dt` apart, starting with `u0`.
    pub fn integrate(
        &self,
        u0: &Field,
        nu: f64,
        dt: f64,
        n_steps: usize,
        substeps: usize,
    ) -> Result<Trajectory> {
        if n_steps == 0 {
            return Err(JawsError::InvalidConfig("n_steps must be >= 1".into()));
        }
        if !(nu > 0.0 && dt > 0.0 && substeps >= 1) {
            return Err(JawsError::InvalidConfig(format!(
                "need nu > 0, dt > 0, substeps >= 1 (nu={nu}, dt={dt}, substeps={substeps})"
            )));
        }
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(u0.clone());
        let mut current = u0.clone();
        for step in 1..=n_steps {
            current = self
                .advance(&current, nu, dt, substeps)
                .map_err(|e| match e {
                    JawsError::BlowUp { .. } => JawsError::BlowUp { step },
                    other => other,
                })?;
            states.push(current.clone());
        }
        Trajectory::new(states, nu, dt, substeps)
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.grid.len() {
            return Err(JawsError::ShapeMismatch {
                expected: self.grid.len(),
                got: u.len(),
            });
        }
        Ok(())
    }
}
