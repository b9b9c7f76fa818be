//! Regularized solution of `S ȧ = f`: a diagonal shift plus a per-mode
//! signal-to-noise soft cutoff in the eigenbasis of the shifted metric.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};

/// Added under the square root of the mode noise estimate.
pub const NOISE_FLOOR: f64 = 1e-30;

fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    #[serde(default = "default_eps")]
    pub eps_shift: f64,
    #[serde(default = "default_eps")]
    pub eps_snr: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            eps_shift: default_eps(),
            eps_snr: default_eps(),
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("regularization.eps_shift", self.eps_shift), ("regularization.eps_snr", self.eps_snr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub adot: Vec<C64>,
    /// Smallest eigenvalue of the unshifted metric.
    pub min_eig_s: f64,
    pub max_eig_s: f64,
    /// Modes with a non-positive shifted eigenvalue, dropped from the solve.
    pub dropped_modes: usize,
    /// `Σ_k` of the soft-cutoff factors, an effective retained rank.
    pub effective_rank: f64,
}

/// `ȧ = Σ_k v_k (ρ_k / λ_k) / (1 + (ε_snr / SNR_k)⁶)` with `λ_k, v_k` the
/// eigenpairs of `S + ε_shift·I`, `ρ_k = v_k† f` and
/// `SNR_k = |ρ_k| / sqrt(max(v_k† C v_k, 0) / n + ε_floor)`.
pub fn regularized_solve(
    s: &DMatrix<C64>,
    f: &[C64],
    force_cov: &DMatrix<C64>,
    cfg: &RegularizationConfig,
    n_samples: usize,
) -> Result<Solution> {
    let p = f.len();
    if s.nrows() != p || s.ncols() != p || force_cov.nrows() != p || force_cov.ncols() != p {
        return Err(Error::invalid("metric, force and covariance dimensions disagree"));
    }
    if n_samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut shifted = s.clone();
    for i in 0..p {
        shifted[(i, i)] += cfg.eps_shift;
    }
    let eig = linalg::hermitian_eigen(&shifted).map_err(|e| {
        let diag_max = (0..p).map(|i| s[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
        Error::Numerical(format!("{e}; metric diagonal max {diag_max:e}, dimension {p}"))
    })?;
    let v = &eig.vectors;
    let cv = force_cov * v;
    let mut adot = vec![ZERO; p];
    let mut dropped = 0;
    let mut effective_rank = 0.0;
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda <= 0.0 {
            dropped += 1;
            continue;
        }
        let col = v.column(k);
        let rho: C64 = col.iter().zip(f).map(|(vi, fi)| vi.conj() * fi).sum();
        let var: f64 = col.iter().zip(cv.column(k).iter()).map(|(vi, ci)| (vi.conj() * ci).re).sum();
        let noise = (var.max(0.0) / n_samples as f64 + NOISE_FLOOR).sqrt();
        let snr = rho.norm() / noise;
        let damp = if cfg.eps_snr == 0.0 {
            1.0
        } else {
            1.0 / (1.0 + (cfg.eps_snr / snr).powi(6))
        };
        effective_rank += damp;
        if damp == 0.0 {
            continue;
        }
        let coef = rho / lambda * damp;
        for (a, vi) in adot.iter_mut().zip(col.iter()) {
            *a += vi * coef;
        }
    }
    let first = eig.values.first().copied().unwrap_or(0.0);
    let last = eig.values.last().copied().unwrap_or(0.0);
    Ok(Solution {
        adot,
        min_eig_s: first - cfg.eps_shift,
        max_eig_s: last - cfg.eps_shift,
        dropped_modes: dropped,
        effective_rank,
    })
}
