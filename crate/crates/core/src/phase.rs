//! Uniform sampling of the torus `𝕋ⁿ` and the matching discrete Fourier
//! synthesis/analysis of matrix families.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::{Fft, FftPlanner};

use crate::linalg::CMat;
use crate::qp::QPOperator;
use crate::{Error, Result, C64};

#[derive(Clone)]
pub struct PhaseGrid {
    pub n_freq: usize,
    pub points_per_dim: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PhaseGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseGrid")
            .field("n_freq", &self.n_freq)
            .field("points_per_dim", &self.points_per_dim)
            .finish()
    }
}

impl PhaseGrid {
    pub fn new(n_freq: usize, points_per_dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        PhaseGrid {
            n_freq,
            points_per_dim,
            fwd: planner.plan_fft_forward(points_per_dim),
            inv: planner.plan_fft_inverse(points_per_dim),
        }
    }

    /// Default sampling for a cutoff: `max(4K, 2K + 1)` points per dimension.
    pub fn for_cutoff(n_freq: usize, k_cutoff: usize) -> Self {
        Self::new(n_freq, (4 * k_cutoff).max(2 * k_cutoff + 1).max(4))
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.n_freq as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Phase of sample `p` (row-major, last dimension fastest).
    pub fn phase(&self, mut p: usize) -> Vec<f64> {
        let m = self.points_per_dim;
        let mut out = vec![0.0; self.n_freq];
        for d in (0..self.n_freq).rev() {
            out[d] = 2.0 * std::f64::consts::PI * (p % m) as f64 / m as f64;
            p /= m;
        }
        out
    }

    fn bin_of(&self, k: i64) -> usize {
        k.rem_euclid(self.points_per_dim as i64) as usize
    }

    fn freq_of(&self, bin: usize) -> i64 {
        let m = self.points_per_dim as i64;
        let b = bin as i64;
        if b > m / 2 {
            b - m
        } else {
            b
        }
    }

    /// Transform along every torus axis of `data` (`samples × entries`).
    fn transform(&self, data: &mut Array2<C64>, inverse: bool) {
        let m = self.points_per_dim;
        let plan = if inverse { &self.inv } else { &self.fwd };
        let entries = data.ncols();
        let mut buf = vec![C64::new(0.0, 0.0); m];
        for d in 0..self.n_freq {
            let stride = m.pow((self.n_freq - 1 - d) as u32);
            let total = self.len();
            for base in 0..total {
                if !(base / stride).is_multiple_of(m) {
                    continue;
                }
                for e in 0..entries {
                    for (t, slot) in buf.iter_mut().enumerate() {
                        *slot = data[[base + t * stride, e]];
                    }
                    plan.process(&mut buf);
                    for (t, v) in buf.iter().enumerate() {
                        data[[base + t * stride, e]] = *v;
                    }
                }
            }
        }
    }

    /// Samples `A(φ_p)` for every grid phase.
    pub fn synthesize(&self, op: &QPOperator) -> Result<Vec<CMat>> {
        if op.n_freq != self.n_freq {
            return Err(Error::DimensionMismatch("phase grid and family disagree on n".into()));
        }
        if self.points_per_dim < 2 * op.k_cutoff + 1 {
            return Err(Error::InvalidDiscretization(format!(
                "{} phase points cannot resolve cutoff {}",
                self.points_per_dim, op.k_cutoff
            )));
        }
        let n = op.dim;
        let mut data = Array2::<C64>::zeros((self.len(), n * n));
        for i in op.support() {
            let k = op.mode_at(i);
            let mut p = 0usize;
            for v in &k.0 {
                p = p * self.points_per_dim + self.bin_of(*v);
            }
            let c = op.coeff_at(i);
            for (e, z) in c.iter().enumerate() {
                data[[p, e]] += *z;
            }
        }
        self.transform(&mut data, true);
        Ok(data
            .axis_iter(Axis(0))
            .map(|row| row.to_owned().into_shape_with_order((n, n)).expect("square"))
            .collect())
    }

    /// Fourier coefficients with `|k|∞ ≤ k_cutoff` and the Frobenius mass of
    /// the discarded bins.
    pub fn analyze(&self, samples: &[CMat], k_cutoff: usize) -> Result<(QPOperator, f64)> {
        if samples.len() != self.len() {
            return Err(Error::DimensionMismatch("sample count differs from phase grid size".into()));
        }
        if self.points_per_dim < 2 * k_cutoff + 1 {
            return Err(Error::CutoffOverflow {
                required: k_cutoff,
                allowed: (self.points_per_dim - 1) / 2,
            });
        }
        let n = samples[0].nrows();
        let mut data = Array2::<C64>::zeros((self.len(), n * n));
        for (p, s) in samples.iter().enumerate() {
            for (e, z) in s.iter().enumerate() {
                data[[p, e]] = *z;
            }
        }
        self.transform(&mut data, false);
        let norm = 1.0 / self.len() as f64;
        let mut out = QPOperator::zeros(self.n_freq, k_cutoff, n);
        let mut tail = 0.0;
        let m = self.points_per_dim;
        for p in 0..self.len() {
            let mut rem = p;
            let mut k = vec![0i64; self.n_freq];
            for d in (0..self.n_freq).rev() {
                k[d] = self.freq_of(rem % m);
                rem /= m;
            }
            let mode = crate::qp::Mode(k);
            match out.index_of(&mode) {
                Some(i) => {
                    let mut slot = out.coeff_at_mut(i);
                    for (e, z) in slot.iter_mut().enumerate() {
                        *z = data[[p, e]] * norm;
                    }
                }
                None => {
                    tail += data.row(p).iter().map(|z| (z * norm).norm_sqr()).sum::<f64>();
                }
            }
        }
        Ok((out, tail.sqrt()))
    }

    /// Map a pointwise function over the samples of several families.
    pub fn map_pointwise<F>(&self, inputs: &[&QPOperator], mut f: F) -> Result<Vec<CMat>>
    where
        F: FnMut(usize, &[CMat]) -> Result<CMat>,
    {
        let sampled: Vec<Vec<CMat>> = inputs.iter().map(|op| self.synthesize(op)).collect::<Result<_>>()?;
        (0..self.len())
            .map(|p| {
                let at: Vec<CMat> = sampled.iter().map(|s| s[p].clone()).collect();
                f(p, &at)
            })
            .collect()
    }
}

/// Scalar families stored as `1 × 1` operators.
pub fn scalar_samples(values: &[C64]) -> Vec<CMat> {
    values.iter().map(|v| Array2::from_elem((1, 1), *v)).collect()
}
