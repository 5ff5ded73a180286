use serde::{Deserialize, Serialize};

/// Flat lengths of the backbone (`theta`) and uncertainty-head (`phi`) parameter arrays.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSizes {
    pub theta: usize,
    pub phi: usize,
}

/// Gradients aligned with the parameter layout: `∂/∂θ`, `∂/∂φ`, `∂/∂s1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub d_theta: Vec<f64>,
    pub d_phi: Vec<f64>,
    pub d_s1: f64,
}

impl GradientBundle {
    pub fn zeros(sizes: ParamSizes) -> Self {
        Self {
            d_theta: vec![0.0; sizes.theta],
            d_phi: vec![0.0; sizes.phi],
            d_s1: 0.0,
        }
    }

    pub fn sizes(&self) -> ParamSizes {
        ParamSizes {
            theta: self.d_theta.len(),
            phi: self.d_phi.len(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        assert_eq!(self.sizes(), other.sizes(), "gradient layouts differ");
        for (a, b) in self.d_theta.iter_mut().zip(&other.d_theta) {
            *a += b;
        }
        for (a, b) in self.d_phi.iter_mut().zip(&other.d_phi) {
            *a += b;
        }
        self.d_s1 += other.d_s1;
    }

    pub fn scale(&mut self, c: f64) {
        self.d_theta.iter_mut().for_each(|v| *v *= c);
        self.d_phi.iter_mut().for_each(|v| *v *= c);
        self.d_s1 *= c;
    }

    pub fn is_finite(&self) -> bool {
        self.d_theta.iter().chain(&self.d_phi).all(|v| v.is_finite()) && self.d_s1.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.d_theta.iter().chain(&self.d_phi).all(|v| *v == 0.0) && self.d_s1 == 0.0
    }

    pub fn theta_norm(&self) -> f64 {
        self.d_theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn phi_norm(&self) -> f64 {
        self.d_phi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
