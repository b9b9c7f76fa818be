//! Stochastic time-dependent variational principle: local estimators, Monte
//! Carlo moments, the regularized linear solve and the integrators.

pub mod engine;
pub mod estimator;
pub mod integrator;
pub mod moments;
pub mod solve;

pub use engine::{evaluate_at, ChainSnapshot, Diagnostics, Engine, EngineConfig, EngineState, Evaluation, Observer};
pub use estimator::{local_estimator, ContractionCache, LocalEstimator};
pub use integrator::{euler_step, heun_adaptive_step, HeunStep, IntegratorConfig, Scheme};
pub use moments::{MomentAccumulator, Moments};
pub use solve::{regularized_solve, RegularizationConfig, Solution};
