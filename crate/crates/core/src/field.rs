use crate::error::{JawsError, Result};

/// A real-valued function sampled on the periodic grid `x_i = i / N`, `i = 0..N`.
///
/// `N` is always a power of two and every sample is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

pub fn check_grid(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(JawsError::InvalidField(format!(
            "grid size must be a power of two >= 2, got {n}"
        )));
    }
    Ok(())
}

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_grid(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(JawsError::InvalidField(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| f(i as f64 / n as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Discrete kinetic energy `½ Σ u² / N`.
    pub fn energy(&self) -> f64 {
        0.5 * self.values.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Circular shift: `out[i] = self[(i - m) mod N]`.
    pub fn roll(&self, m: usize) -> Self {
        Self {
            values: roll(&self.values, m),
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative L2 distance `‖a − b‖ / ‖b‖`.
pub fn rel_l2(prediction: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = prediction
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        .sqrt();
    let den = l2_norm(truth);
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn roll(v: &[f64], m: usize) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| v[(i + n - m % n) % n]).collect()
}

impl AsRef<[f64]> for Field {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Field::new(vec![0.0; 100]).is_err());
        assert!(Field::new(vec![0.0; 128]).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Field::new(v).is_err());
    }

    #[test]
    fn roll_shifts_right() {
        let f = Field::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.roll(1).values(), &[3.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn rel_l2_of_zero_truth() {
        assert_eq!(rel_l2(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(rel_l2(&[1.0, 0.0], &[0.0, 0.0]).is_infinite());
    }
}
