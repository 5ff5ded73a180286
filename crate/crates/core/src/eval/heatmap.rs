use serde::{Deserialize, Serialize};

use super::stepper::Stepper;
use crate::error::{JawsError, Result};
use crate::solver::Trajectory;

/// Absolute rollout error; `rows[t]` holds `|û_{t+1}(x) − u_{t+1}(x)|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn max(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .fold(0.0f64, |m, &v| if v.is_nan() { m } else { m.max(v) })
    }

    /// Spatial index of the largest error at each step.
    pub fn argmax_trace(&self) -> Vec<usize> {
        self.rows.iter().map(|r| super::weights::argmax(r)).collect()
    }
}

pub fn error_heatmap<S: Stepper + ?Sized>(model: &S, truth: &Trajectory, horizon: usize) -> Result<Heatmap> {
    if horizon == 0 || horizon > truth.steps() {
        return Err(JawsError::InvalidConfig(format!(
            "heatmap horizon must be in 1..={}",
            truth.steps()
        )));
    }
    let mut u = truth.states[0].values().to_vec();
    let mut rows = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        u = model.step(&u)?;
        if u.iter().any(|v| !v.is_finite()) {
            break;
        }
        rows.push(
            u.iter()
                .zip(truth.states[t].values())
                .map(|(p, q)| (p - q).abs())
                .collect(),
        );
    }
    Ok(Heatmap { rows })
}
