use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stepper::Stepper;
use crate::error::{JawsError, Result};
use crate::field::{rel_l2, Field};
use crate::solver::{Dataset, Trajectory};

/// Error assigned to steps at or after a divergence when averaging over trajectories.
pub const DIVERGED_REL_L2: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub prediction: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    /// `rel_l2[t - 1]` is the error after `t` model steps.
    pub rel_l2: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// First step whose state was non-finite.
    pub diverged_at: Option<usize>,
}

impl RolloutReport {
    /// Error at `step`, capped, with diverged or missing steps at the cap.
    pub fn capped(&self, step: usize) -> f64 {
        match self.rel_l2.get(step.wrapping_sub(1)) {
            Some(&e) if e.is_finite() => e.min(DIVERGED_REL_L2),
            _ => DIVERGED_REL_L2,
        }
    }
}

/// Closed-loop rollout from the trajectory's first state.
pub fn rollout<S: Stepper + ?Sized>(
    model: &S,
    truth: &Trajectory,
    horizon: usize,
    snapshot_steps: &[usize],
) -> Result<RolloutReport> {
    rollout_from(model, truth.states[0].values(), &truth.states, horizon, snapshot_steps)
}

/// Closed-loop rollout from `u0`, scored against `truth[t]` at step `t`.
pub fn rollout_from<S: Stepper + ?Sized>(
    model: &S,
    u0: &[f64],
    truth: &[Field],
    horizon: usize,
    snapshot_steps: &[usize],
) -> Result<RolloutReport> {
    if horizon == 0 {
        return Err(JawsError::InvalidConfig("rollout horizon must be >= 1".into()));
    }
    if horizon >= truth.len() {
        return Err(JawsError::InvalidConfig(format!(
            "horizon {horizon} exceeds the {} recorded steps",
            truth.len() - 1
        )));
    }
    let mut u = u0.to_vec();
    let mut rel = Vec::with_capacity(horizon);
    let mut snapshots = Vec::new();
    let mut diverged_at = None;
    for t in 1..=horizon {
        u = match model.step(&u) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => next,
            Ok(_) | Err(JawsError::InvalidField(_)) | Err(JawsError::BlowUp { .. }) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        let target = truth[t].values();
        rel.push(rel_l2(&u, target));
        if snapshot_steps.contains(&t) {
            snapshots.push(Snapshot {
                step: t,
                prediction: u.clone(),
                truth: target.to_vec(),
            });
        }
    }
    Ok(RolloutReport {
        rel_l2: rel,
        snapshots,
        diverged_at,
    })
}

/// Rolls out every trajectory of `data` in parallel; order follows the dataset.
pub fn rollout_dataset<S: Stepper + ?Sized>(
    model: &S,
    data: &Dataset,
    horizon: usize,
    snapshot_steps: &[usize],
) -> Result<Vec<RolloutReport>> {
    data.trajectories
        .par_iter()
        .map(|t| rollout(model, t, horizon, snapshot_steps))
        .collect()
}

/// Mean capped rel-L2 per step over a set of rollouts.
pub fn mean_curve(reports: &[RolloutReport], horizon: usize) -> Vec<f64> {
    (1..=horizon)
        .map(|t| reports.iter().map(|r| r.capped(t)).sum::<f64>() / reports.len().max(1) as f64)
        .collect()
}

pub fn mean_at(reports: &[RolloutReport], step: usize) -> f64 {
    reports.iter().map(|r| r.capped(step)).sum::<f64>() / reports.len().max(1) as f64
}
