//! Precomputed pairwise Raman coupling for a comb over a span.
//!
//! Both solvers spend their inner loops on Σ_ch′ g_R(f_ch, f_ch′)·x_ch′, so
//! the N×N pair-gain matrix is built once per (comb, span) and the sum runs
//! as a plain dot product over a contiguous row.

use crate::error::Result;
use crate::fiber::{raman_gain, FiberSpan, GainConvention};
use crate::spectrum::WdmComb;

/// Row-major N×N matrix of pair gains in 1/(W·m); `row(ch)[ch′]` is the
/// effect of interferer ch′ on channel ch. Diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    g: Vec<f64>,
}

impl CouplingMatrix {
    /// Evaluate the span's Raman data over all channel pairs.
    pub fn from_span(comb: &WdmComb, span: &FiberSpan, convention: GainConvention) -> Result<Self> {
        let freqs = comb.frequencies_hz();
        let n = freqs.len();
        let mut g = vec![0.0; n * n];
        for (i, &fi) in freqs.iter().enumerate() {
            for (j, &fj) in freqs.iter().enumerate() {
                if i != j {
                    g[i * n + j] = raman_gain(&span.raman, &span.geometry, fi, fj, convention)?;
                }
            }
        }
        Ok(CouplingMatrix { n, g })
    }

    /// Explicit row-major entries; for synthetic gain shapes.
    pub fn from_rows(n: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != n * n {
            return Err(crate::error::Error::InvalidInput(format!(
                "coupling matrix needs {} entries for {n} channels, got {}",
                n * n,
                g.len()
            )));
        }
        for (i, v) in g.iter().enumerate() {
            if !v.is_finite() {
                return Err(crate::error::Error::InvalidInput(format!(
                    "non-finite coupling entry at ({}, {})",
                    i / n,
                    i % n
                )));
            }
        }
        for ch in 0..n {
            if g[ch * n + ch] != 0.0 {
                return Err(crate::error::Error::InvalidInput(format!(
                    "coupling diagonal must be zero (channel {ch})"
                )));
            }
        }
        Ok(CouplingMatrix { n, g })
    }

    /// Idealized triangular gain g(f, f′) = (f′ − f)·k_r, the shape with a
    /// known closed-form solution under flat loss. `k_r` is in 1/(W·m·Hz).
    pub fn triangular(comb: &WdmComb, k_r: f64) -> Self {
        let freqs = comb.frequencies_hz();
        let n = freqs.len();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g[i * n + j] = (freqs[j] - freqs[i]) * k_r;
                }
            }
        }
        CouplingMatrix { n, g }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, ch: usize) -> &[f64] {
        &self.g[ch * self.n..(ch + 1) * self.n]
    }

    /// out[ch] = Σ_ch′ g[ch][ch′]·x[ch′], in a fixed (deterministic)
    /// accumulation order.
    pub fn accumulate(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for ch in 0..self.n {
            out[ch] = dot(self.row(ch), x);
        }
    }

    /// Largest |g[i][j] + g[j][i]| — zero iff the matrix is antisymmetric.
    pub fn max_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.g[i * self.n + j] + self.g[j * self.n + i]).abs());
            }
        }
        worst
    }
}

/// Unrolled dot product; four independent accumulators keep the FMA units
/// busy while the summation order stays fixed.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = 4 * i;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for j in (4 * chunks)..n {
        s += a[j] * b[j];
    }
    s
}
