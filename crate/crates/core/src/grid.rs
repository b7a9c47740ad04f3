//! Uniform symmetric grids and translation-invariant (Toeplitz) difference
//! operators on them.
//!
//! Dense application is used for eigensolves; column batches go through an
//! FFT circulant embedding.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<f64>,
    pub spacing: f64,
    pub halfwidth: f64,
}

impl Grid {
    /// `n` points spanning `[-halfwidth, halfwidth]`; `n` must be odd so that
    /// `x = 0` is a node.
    pub fn symmetric(n: usize, halfwidth: f64) -> Result<Self> {
        if n < 5 || n.is_multiple_of(2) {
            return Err(Error::InvalidDiscretization(format!(
                "grid size must be odd and at least 5, got {n}"
            )));
        }
        if !(halfwidth > 0.0) || !halfwidth.is_finite() {
            return Err(Error::InvalidDiscretization(format!(
                "halfwidth must be positive, got {halfwidth}"
            )));
        }
        let h = 2.0 * halfwidth / (n as f64 - 1.0);
        let c = (n / 2) as f64;
        let points = (0..n).map(|i| (i as f64 - c) * h).collect();
        Ok(Grid {
            points,
            spacing: h,
            halfwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center(&self) -> usize {
        self.points.len() / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Second-order central differences.
    FiniteDifference,
    /// Band-limited (sinc) collocation.
    Sinc,
}

impl Stencil {
    /// Kernel of `-d²/dx²` at offset `m`.
    pub fn kinetic(self, m: i64, h: f64) -> f64 {
        match self {
            Stencil::FiniteDifference => match m.abs() {
                0 => 2.0 / (h * h),
                1 => -1.0 / (h * h),
                _ => 0.0,
            },
            Stencil::Sinc => {
                if m == 0 {
                    std::f64::consts::PI.powi(2) / (3.0 * h * h)
                } else {
                    let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                    2.0 * s / ((m * m) as f64 * h * h)
                }
            }
        }
    }

    /// Kernel of `d/dx` at offset `m = a - b` (row minus column).
    pub fn derivative(self, m: i64, h: f64) -> f64 {
        match self {
            Stencil::FiniteDifference => match m {
                -1 => 1.0 / (2.0 * h),
                1 => -1.0 / (2.0 * h),
                _ => 0.0,
            },
            Stencil::Sinc => {
                if m == 0 {
                    0.0
                } else {
                    let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                    s / (m as f64 * h)
                }
            }
        }
    }
}

/// A Toeplitz matrix `A[a][b] = k(a - b)` on `n` points.
#[derive(Clone)]
pub struct Toeplitz {
    n: usize,
    kernel: Vec<f64>,
    size: usize,
    symbol: Vec<C64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Toeplitz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Toeplitz").field("n", &self.n).field("size", &self.size).finish()
    }
}

impl Toeplitz {
    pub fn new(n: usize, k: impl Fn(i64) -> f64) -> Self {
        let kernel: Vec<f64> = (0..2 * n - 1).map(|i| k(i as i64 - (n as i64 - 1))).collect();
        let size = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        // first column of the circulant: c[m] = k(m) for m >= 0, c[size-m] = k(-m)
        let mut col = vec![C64::new(0.0, 0.0); size];
        for m in 0..n {
            col[m] = C64::new(kernel[m + n - 1], 0.0);
            if m > 0 {
                col[size - m] = C64::new(kernel[n - 1 - m], 0.0);
            }
        }
        fwd.process(&mut col);
        Toeplitz {
            n,
            kernel,
            size,
            symbol: col,
            fwd,
            inv,
        }
    }

    pub fn kinetic(grid: &Grid, stencil: Stencil) -> Self {
        let h = grid.spacing;
        Self::new(grid.len(), |m| stencil.kinetic(m, h))
    }

    pub fn derivative(grid: &Grid, stencil: Stencil) -> Self {
        let h = grid.spacing;
        Self::new(grid.len(), |m| stencil.derivative(m, h))
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.kernel[a + self.n - 1 - b]
    }

    pub fn dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(a, b)| self.entry(a, b))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Apply to every column of `y`.
    pub fn apply(&self, y: ArrayView2<C64>) -> Array2<C64> {
        assert_eq!(y.nrows(), self.n);
        let mut out = Array2::zeros(y.raw_dim());
        let mut buf = vec![C64::new(0.0, 0.0); self.size];
        let scale = 1.0 / self.size as f64;
        for (c, col) in y.columns().into_iter().enumerate() {
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for (i, v) in col.iter().enumerate() {
                buf[i] = *v;
            }
            self.fwd.process(&mut buf);
            for (z, s) in buf.iter_mut().zip(&self.symbol) {
                *z *= s;
            }
            self.inv.process(&mut buf);
            for i in 0..self.n {
                out[[i, c]] = buf[i] * scale;
            }
        }
        out
    }

    pub fn apply_real(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let yc = y.mapv(|v| C64::new(v, 0.0));
        self.apply(yc.view()).mapv(|z| z.re)
    }
}
