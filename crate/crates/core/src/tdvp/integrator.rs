//! Explicit integrators for `ȧ = F(a)`, generic over the velocity so they can
//! be exercised on scalar surrogates as well as on the stochastic TDVP flow.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest step the adaptive integrator will attempt.
pub const TAU_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Heun,
}

fn default_scheme() -> Scheme {
    Scheme::Heun
}
fn default_tol() -> f64 {
    0.01
}
fn default_tau() -> f64 {
    0.01
}
fn default_tau_init() -> f64 {
    1e-8
}
fn default_tau_max() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Error tolerance of the adaptive scheme.
    #[serde(default = "default_tol")]
    pub eps_tol: f64,
    /// Fixed step of the Euler scheme.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_tau_init")]
    pub tau_init: f64,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            scheme: default_scheme(),
            eps_tol: default_tol(),
            tau: default_tau(),
            tau_init: default_tau_init(),
            tau_max: default_tau_max(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("integrator.eps_tol", self.eps_tol),
            ("integrator.tau", self.tau),
            ("integrator.tau_init", self.tau_init),
            ("integrator.tau_max", self.tau_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive and finite"));
            }
        }
        if self.tau_init > self.tau_max {
            return Err(Error::config("integrator.tau_init", "exceeds tau_max"));
        }
        Ok(())
    }

    /// Step size the integration starts with.
    pub fn first_step(&self) -> f64 {
        match self.scheme {
            Scheme::Euler => self.tau,
            Scheme::Heun => self.tau_init,
        }
    }
}

/// `a + τ·ȧ`
pub fn euler_step(a: &[C64], adot: &[C64], tau: f64) -> Vec<C64> {
    a.iter().zip(adot).map(|(x, v)| x + v * tau).collect()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct HeunStep {
    pub params: Vec<C64>,
    pub tau_used: f64,
    pub tau_next: f64,
    /// Error estimate of the accepted attempt.
    pub err: f64,
    pub rejected: usize,
}

/// Growth factor `clamp(0.9·sqrt(tol/err), 0.2, 2)`; an exact zero error
/// doubles the step.
pub fn step_factor(err: f64, eps_tol: f64) -> f64 {
    if err == 0.0 {
        2.0
    } else {
        (0.9 * (eps_tol / err).sqrt()).clamp(0.2, 2.0)
    }
}

/// One accepted adaptive Heun step from `a` with velocity `adot = F(a)`.
///
/// Each attempt evaluates `F` once at the predictor. The error estimate is
/// `‖a_H - a_E‖ / max(‖a‖, 1)`; rejected attempts retry with the reduced step.
/// `t` is only used to report a stall.
pub fn heun_adaptive_step<F>(
    a: &[C64],
    adot: &[C64],
    tau: f64,
    cfg: &IntegratorConfig,
    t: f64,
    mut velocity: F,
) -> Result<HeunStep>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    let scale = norm(a).max(1.0);
    let mut tau = tau.min(cfg.tau_max);
    let mut rejected = 0;
    loop {
        if !(tau >= TAU_FLOOR) {
            return Err(Error::StalledIntegration { t, tau });
        }
        let predictor = euler_step(a, adot, tau);
        let adot_pred = velocity(&predictor)?;
        let corrector: Vec<C64> = a
            .iter()
            .zip(adot.iter().zip(&adot_pred))
            .map(|(x, (v0, v1))| x + (v0 + v1) * (0.5 * tau))
            .collect();
        let diff: f64 = corrector
            .iter()
            .zip(&predictor)
            .map(|(h, e)| (h - e).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let err = diff / scale;
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite step error at t = {t}")));
        }
        let tau_next = (tau * step_factor(err, cfg.eps_tol)).min(cfg.tau_max);
        if err <= cfg.eps_tol {
            return Ok(HeunStep {
                params: corrector,
                tau_used: tau,
                tau_next,
                err,
                rejected,
            });
        }
        rejected += 1;
        tau = tau_next;
    }
}
