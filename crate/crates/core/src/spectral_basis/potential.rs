use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::{Error, Result};

/// One term `coefficient · |x|^degree` of the expansion tail below `|x|^{2ℓ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerTerm {
    pub degree: f64,
    pub coefficient: f64,
}

/// `V(x) = |x|^{2ℓ} + Σ cⱼ |x|^{aⱼ}` with `aⱼ = 2(ℓ − j)`, `j ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub ell: f64,
    #[serde(default)]
    pub lower_terms: Vec<LowerTerm>,
    pub domain_halfwidth: f64,
}

impl PotentialSpec {
    pub fn pure(ell: f64, domain_halfwidth: f64) -> Self {
        PotentialSpec {
            ell,
            lower_terms: Vec::new(),
            domain_halfwidth,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let ax = x.abs();
        let mut v = ax.powf(2.0 * self.ell);
        for t in &self.lower_terms {
            v += t.coefficient * ax.powf(t.degree);
        }
        v
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax == 0.0 {
            return 0.0;
        }
        let mut dv = 2.0 * self.ell * ax.powf(2.0 * self.ell - 1.0);
        for t in &self.lower_terms {
            if t.degree != 0.0 {
                dv += t.coefficient * t.degree * ax.powf(t.degree - 1.0);
            }
        }
        dv * x.signum()
    }

    /// Structural checks that do not need a grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.ell >= 1.0) || !self.ell.is_finite() {
            return Err(Error::InvalidPotential(format!("ell must be >= 1, got {}", self.ell)));
        }
        if !(self.domain_halfwidth > 0.0) || !self.domain_halfwidth.is_finite() {
            return Err(Error::InvalidPotential("domain halfwidth must be positive".into()));
        }
        if self.ell == 1.0 && !self.lower_terms.is_empty() {
            return Err(Error::InvalidPotential(
                "ell = 1 requires V(x) = x^2 exactly (no lower-order terms)".into(),
            ));
        }
        for t in &self.lower_terms {
            let j = self.ell - t.degree / 2.0;
            if t.degree < 0.0 || j < 1.0 - 1e-12 || (j - j.round()).abs() > 1e-12 {
                return Err(Error::InvalidPotential(format!(
                    "lower term degree {} is not of the form 2(ell - j) with integer j >= 1",
                    t.degree
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::InvalidPotential("non-finite lower-term coefficient".into()));
            }
        }
        Ok(())
    }

    /// Potential values on the grid, after checking evenness and monotonicity
    /// on `x > 0` away from the origin.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        let v: Vec<f64> = grid.points.iter().map(|&x| self.value(x)).collect();
        let n = v.len();
        for i in 0..n / 2 {
            let (a, b) = (v[i], v[n - 1 - i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::InvariantViolation(format!(
                    "potential not even at x = {}",
                    grid.points[n - 1 - i]
                )));
            }
        }
        let c = grid.center();
        for i in (c + 2)..n {
            if v[i] - v[i - 1] <= 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "potential not increasing at x = {} (V' changes sign away from 0)",
                    grid.points[i]
                )));
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPotential("potential not finite on grid".into()));
        }
        Ok(v)
    }

    /// All exponents are even integers, so `V` is a polynomial.
    pub fn is_polynomial(&self) -> bool {
        let even_int = |a: f64| (a / 2.0 - (a / 2.0).round()).abs() < 1e-12;
        even_int(2.0 * self.ell) && self.lower_terms.iter().all(|t| even_int(t.degree))
    }

    pub fn min_value(&self) -> f64 {
        self.value(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rule_is_strict() {
        let mut p = PotentialSpec::pure(1.0, 5.0);
        assert!(p.validate().is_ok());
        p.lower_terms.push(LowerTerm { degree: 0.0, coefficient: 1.0 });
        assert!(matches!(p.validate(), Err(Error::InvalidPotential(_))));
    }

    #[test]
    fn lower_degrees_must_step_by_two() {
        let mut p = PotentialSpec::pure(2.0, 5.0);
        p.lower_terms.push(LowerTerm { degree: 2.0, coefficient: 0.5 });
        assert!(p.validate().is_ok());
        p.lower_terms.push(LowerTerm { degree: 3.0, coefficient: 0.5 });
        assert!(p.validate().is_err());
    }

    #[test]
    fn double_well_rejected() {
        let mut p = PotentialSpec::pure(2.0, 4.0);
        p.lower_terms.push(LowerTerm { degree: 2.0, coefficient: -4.0 });
        let g = Grid::symmetric(101, 4.0).unwrap();
        assert!(matches!(p.sample(&g), Err(Error::InvariantViolation(_))));
    }
}
