//! Orbits of `h₀(x, ξ) = ξ² + V(x)`, so `ẋ = 2ξ`.
//!
//! Integrals over `[-x_t, x_t]` use `x = x_t sin θ`, which absorbs the
//! inverse square root at the turning points.

use super::PotentialSpec;
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

const NODES: usize = 256;

/// Positive root of `V(x) = E`.
pub fn turning_point(energy: f64, spec: &PotentialSpec) -> Result<f64> {
    if !(energy > spec.min_value()) || !energy.is_finite() {
        return Err(Error::TurningPoint { energy });
    }
    let mut hi = 1.0;
    let mut tries = 0;
    while spec.value(hi) < energy {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::TurningPoint { energy });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.value(mid) < energy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Period of the orbit at energy `E`: `T = 2∫₀^{x_t} dx/√(E − V)`.
pub fn classical_period(energy: f64, spec: &PotentialSpec) -> Result<f64> {
    let xt = turning_point(energy, spec)?;
    let (nodes, weights) = gauss_legendre(NODES);
    let half = std::f64::consts::FRAC_PI_2;
    let mut t = 0.0;
    for (u, w) in nodes.iter().zip(&weights) {
        let th = half * u;
        let x = xt * th.sin();
        let gap = (energy - spec.value(x)).max(0.0);
        if gap > 0.0 {
            t += w * xt * th.cos() / gap.sqrt();
        }
    }
    Ok(t * half)
}

/// Time average of `g(x, ξ, φ)` along the orbit of `h₀` at energy `E`.
pub fn flow_average(
    g: impl Fn(f64, f64, &[f64]) -> f64,
    energy: f64,
    phase: &[f64],
    spec: &PotentialSpec,
) -> Result<f64> {
    let xt = turning_point(energy, spec)?;
    let (nodes, weights) = gauss_legendre(NODES);
    let half = std::f64::consts::FRAC_PI_2;
    let (mut num, mut den) = (0.0, 0.0);
    for (u, w) in nodes.iter().zip(&weights) {
        let th = half * u;
        let x = xt * th.sin();
        let p = (energy - spec.value(x)).max(0.0).sqrt();
        if p > 0.0 {
            let jac = w * xt * th.cos() / p;
            num += jac * 0.5 * (g(x, p, phase) + g(x, -p, phase));
            den += jac;
        }
    }
    Ok(num / den)
}
