use serde::{Deserialize, Serialize};

use super::EigenBasis;
use crate::C64;

/// Mode weights `wⱼ = (1 + λⱼ)^{s(ℓ+1)/(2ℓ)}` of the scale generated by
/// `H₀^{(ℓ+1)/(2ℓ)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevWeights {
    pub s: f64,
    pub weights: Vec<f64>,
}

impl SobolevWeights {
    pub fn new(eigenvalues: &[f64], ell: f64, s: f64) -> Self {
        let p = s * (ell + 1.0) / (2.0 * ell);
        let weights = eigenvalues.iter().map(|l| (1.0 + l).powf(p)).collect();
        SobolevWeights { s, weights }
    }

    pub fn for_basis(basis: &EigenBasis, s: f64) -> Self {
        Self::new(&basis.eigenvalues, basis.ell, s)
    }

    pub fn norm(&self, coeffs: &[C64]) -> f64 {
        coeffs
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * w * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

pub fn sobolev_norm(coeffs: &[C64], s: f64, basis: &EigenBasis) -> f64 {
    SobolevWeights::for_basis(basis, s).norm(coeffs)
}
