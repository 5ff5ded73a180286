use crate::error::{JawsError, Result};
use crate::field::Field;
use crate::model::ModelParams;
use crate::solver::BurgersSolver;

/// A one-step map `u_t ↦ u_{t+1}` that can be rolled out.
pub trait Stepper: Sync {
    fn step(&self, u: &[f64]) -> Result<Vec<f64>>;
}

impl Stepper for ModelParams {
    fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.predict(u)
    }
}

/// The reference solver wrapped as a one-step map at fixed viscosity.
#[derive(Debug)]
pub struct SolverStepper {
    pub solver: BurgersSolver,
    pub nu: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl SolverStepper {
    pub fn new(n: usize, nu: f64, dt: f64, substeps: usize) -> Result<Self> {
        Ok(Self {
            solver: BurgersSolver::new(n)?,
            nu,
            dt,
            substeps,
        })
    }
}

impl Stepper for SolverStepper {
    fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        let f = Field::new(u.to_vec())?;
        Ok(self
            .solver
            .advance(&f, self.nu, self.dt, self.substeps)?
            .into_values())
    }
}

/// Any closure as a stepper.
pub struct FnStepper<F>(pub F);

impl<F> Stepper for FnStepper<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        let out = (self.0)(u);
        if out.len() != u.len() {
            return Err(JawsError::ShapeMismatch {
                expected: u.len(),
                got: out.len(),
            });
        }
        Ok(out)
    }
}
