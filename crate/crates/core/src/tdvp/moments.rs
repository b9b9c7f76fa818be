//! Monte Carlo moments of the log-derivative and local estimator.
//!
//! Samples are buffered in blocks and folded into the `P x P` sums with a
//! complex GEMM, so a batch costs `O(n P²)` in cache-friendly form instead of
//! `n` rank-one updates.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};

const BLOCK_ROWS: usize = 256;

/// Running sums `Σ Δ†Δ`, `Σ Δ* L`, `Σ |L|² Δ†Δ`, `Σ |L|²`, `Σ L` and the
/// sample count.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    n_params: usize,
    sum_sd: Vec<C64>,
    sum_f: Vec<C64>,
    sum_ff: Vec<C64>,
    sum_l2: f64,
    sum_l: C64,
    count: usize,
    rows: Vec<C64>,
    weighted: Vec<C64>,
}

/// Sample averages produced by [`MomentAccumulator::assemble`].
#[derive(Clone, Debug)]
pub struct Moments {
    /// `E[Δ_i* Δ_j]`, symmetrized.
    pub s: DMatrix<C64>,
    /// `E[Δ_i* L_loc]`
    pub f: Vec<C64>,
    /// `E[(Δ* L)(Δ* L)†] - f f†`
    pub force_cov: DMatrix<C64>,
    /// `E[|L_loc|²]`
    pub l2: f64,
    /// `E[L_loc]`
    pub mean_l: C64,
    pub count: usize,
}

impl MomentAccumulator {
    pub fn new(n_params: usize) -> Self {
        MomentAccumulator {
            n_params,
            sum_sd: vec![ZERO; n_params * n_params],
            sum_f: vec![ZERO; n_params],
            sum_ff: vec![ZERO; n_params * n_params],
            sum_l2: 0.0,
            sum_l: ZERO,
            count: 0,
            rows: Vec::new(),
            weighted: Vec::new(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn accumulate(&mut self, delta: &[C64], lloc: C64) {
        assert_eq!(delta.len(), self.n_params, "log-derivative length mismatch");
        for (f, d) in self.sum_f.iter_mut().zip(delta) {
            *f += d.conj() * lloc;
        }
        self.sum_l2 += lloc.norm_sqr();
        self.sum_l += lloc;
        self.count += 1;
        let w = lloc.norm();
        self.rows.extend_from_slice(delta);
        self.weighted.extend(delta.iter().map(|d| d * w));
        if self.rows.len() >= BLOCK_ROWS * self.n_params {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let p = self.n_params;
        if self.rows.is_empty() || p == 0 {
            self.rows.clear();
            self.weighted.clear();
            return;
        }
        let r = self.rows.len() / p;
        linalg::gram_accumulate(&self.rows, r, p, &mut self.sum_sd);
        linalg::gram_accumulate(&self.weighted, r, p, &mut self.sum_ff);
        self.rows.clear();
        self.weighted.clear();
    }

    /// Adds another accumulator's sums into this one.
    pub fn merge(&mut self, mut other: MomentAccumulator) {
        assert_eq!(self.n_params, other.n_params, "merging accumulators of different sizes");
        self.flush();
        other.flush();
        linalg::axpy(C64::new(1.0, 0.0), &other.sum_sd, &mut self.sum_sd);
        linalg::axpy(C64::new(1.0, 0.0), &other.sum_ff, &mut self.sum_ff);
        linalg::axpy(C64::new(1.0, 0.0), &other.sum_f, &mut self.sum_f);
        self.sum_l2 += other.sum_l2;
        self.sum_l += other.sum_l;
        self.count += other.count;
    }

    pub fn assemble(&mut self) -> Result<Moments> {
        if self.count == 0 {
            return Err(Error::EmptyBatch);
        }
        self.flush();
        let p = self.n_params;
        let inv = 1.0 / self.count as f64;
        let raw = DMatrix::from_row_slice(p, p, &self.sum_sd);
        let s = (&raw + raw.adjoint()) * C64::new(0.5 * inv, 0.0);
        let f: Vec<C64> = self.sum_f.iter().map(|z| z * inv).collect();
        let ff = DMatrix::from_row_slice(p, p, &self.sum_ff);
        let ff = (&ff + ff.adjoint()) * C64::new(0.5 * inv, 0.0);
        let force_cov = DMatrix::from_fn(p, p, |i, j| ff[(i, j)] - f[i] * f[j].conj());
        Ok(Moments {
            s,
            f,
            force_cov,
            l2: self.sum_l2 * inv,
            mean_l: self.sum_l * inv,
            count: self.count,
        })
    }
}
