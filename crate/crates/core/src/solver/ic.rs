use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{JawsError, Result};
use crate::field::{check_grid, Field};

/// One Fourier component `amplitude · sin(2πk x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: usize,
    pub amplitude: f64,
    pub phase: f64,
}

/// Distribution of random initial conditions.
///
/// A draw superposes `1..=max_modes` sines with wavenumbers in `[k_min, k_max]`
/// (the first at `k_min` when `include_fundamental` is set, so no draw decays away quickly),
/// optionally adds a steep periodic front `tanh(cos(2π(x − x0)) / front_sharpness⁻¹)`,
/// then rescales so the peak magnitude does not exceed the upper amplitude bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcSpec {
    pub k_min: usize,
    pub k_max: usize,
    pub max_modes: usize,
    pub include_fundamental: bool,
    pub amplitude: (f64, f64),
    pub zero_mean: bool,
    pub front_probability: f64,
    /// Width parameter of the tanh front in phase units; spatial width is `front_width / 2π`.
    pub front_width: f64,
}

impl Default for IcSpec {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 3,
            max_modes: 3,
            include_fundamental: true,
            amplitude: (0.3, 0.8),
            zero_mean: true,
            front_probability: 0.25,
            front_width: 0.4,
        }
    }
}

impl IcSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_grid(n)?;
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(JawsError::InvalidSpec(format!(
                "wavenumber band [{}, {}] is empty or contains 0",
                self.k_min, self.k_max
            )));
        }
        if self.k_max >= n / 2 {
            return Err(JawsError::InvalidSpec(format!(
                "k_max = {} is unresolvable on a grid of {n} (needs k_max < N/2)",
                self.k_max
            )));
        }
        if self.max_modes == 0 {
            return Err(JawsError::InvalidSpec("max_modes must be >= 1".into()));
        }
        let (lo, hi) = self.amplitude;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(JawsError::InvalidSpec(format!(
                "bad amplitude range [{lo}, {hi}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.front_probability) || self.front_width <= 0.0 {
            return Err(JawsError::InvalidSpec("bad front parameters".into()));
        }
        Ok(())
    }
}

/// Evaluates a superposition of sine modes on the grid.
pub fn modes_field(n: usize, modes: &[Mode]) -> Result<Field> {
    Field::from_fn(n, |x| {
        modes
            .iter()
            .map(|m| m.amplitude * (2.0 * PI * m.k as f64 * x + m.phase).sin())
            .sum()
    })
}

pub fn sample_initial_condition<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &IcSpec,
    n: usize,
) -> Result<Field> {
    spec.validate(n)?;
    let (amp_lo, amp_hi) = spec.amplitude;
    let n_modes = rng.gen_range(1..=spec.max_modes);
    let modes: Vec<Mode> = (0..n_modes)
        .map(|i| Mode {
            k: if i == 0 && spec.include_fundamental {
                spec.k_min
            } else {
                rng.gen_range(spec.k_min..=spec.k_max)
            },
            amplitude: sample_range(rng, amp_lo, amp_hi),
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect();
    let mut values = modes_field(n, &modes)?.into_values();

    if rng.gen_bool(spec.front_probability) {
        let a = sample_range(rng, amp_lo, amp_hi);
        let x0: f64 = rng.gen_range(0.0..1.0);
        for (i, v) in values.iter_mut().enumerate() {
            let x = i as f64 / n as f64;
            *v += a * ((2.0 * PI * (x - x0)).cos() / spec.front_width).tanh();
        }
    }

    if spec.zero_mean {
        let mean = values.iter().sum::<f64>() / n as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }

    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > amp_hi && peak > 0.0 {
        let s = amp_hi / peak;
        values.iter_mut().for_each(|v| *v *= s);
    }
    Field::new(values)
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}
