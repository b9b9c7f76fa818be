//! The t-VMC loop: sample, accumulate, solve, step, renormalize, observe.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::LindbladianSpec;
use crate::linalg::ZERO;
use crate::mpo::{MpoAnsatz, SpinConfiguration};
use crate::sampler::{MarkovChain, RngState, SamplerConfig};

use super::estimator::{ContractionCache, LocalEstimator};
use super::integrator::{euler_step, heun_adaptive_step, IntegratorConfig, Scheme};
use super::moments::MomentAccumulator;
use super::solve::{regularized_solve, RegularizationConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub sampler: SamplerConfig,
    pub regularization: RegularizationConfig,
    pub integrator: IntegratorConfig,
    pub workers: usize,
    pub seed: u64,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.regularization.validate()?;
        self.integrator.validate()?;
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }
}

/// One gradient evaluation: the regularized velocity and its statistics.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub adot: Vec<C64>,
    /// `E[|L_loc|²]`
    pub l2: f64,
    pub mean_l: C64,
    pub n_samples: usize,
    /// Samples dropped because their amplitude underflowed.
    pub skipped: usize,
    pub min_eig_s: f64,
    pub effective_rank: f64,
    pub acceptance: f64,
}

/// Per-row diagnostics handed to observers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub step: usize,
    pub t: f64,
    /// Size of the step that led here (0 at the start).
    pub tau: f64,
    pub tau_next: f64,
    pub err: f64,
    pub rejected: usize,
    pub l2: f64,
    pub l2_per_site: f64,
    pub min_eig_s: f64,
    pub effective_rank: f64,
    pub acceptance: f64,
    pub trace_error: f64,
    pub n_samples: usize,
}

pub trait Observer {
    /// Called once per accepted state (including the initial one).
    fn observe(&mut self, t: f64, ansatz: &MpoAnsatz, diag: &Diagnostics) -> Result<()>;

    /// Called after each accepted step, before the next evaluation; the
    /// engine state at this point is what a checkpoint must capture.
    fn accepted(&mut self, _engine: &Engine) -> Result<()> {
        Ok(())
    }
}

impl<F> Observer for F
where
    F: FnMut(f64, &MpoAnsatz, &Diagnostics) -> Result<()>,
{
    fn observe(&mut self, t: f64, ansatz: &MpoAnsatz, diag: &Diagnostics) -> Result<()> {
        self(t, ansatz, diag)
    }
}

/// Scalar integration state carried across steps and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub t: f64,
    pub tau: f64,
    pub step: usize,
    pub last_tau: f64,
    pub last_err: f64,
    pub last_rejected: usize,
    /// Smallest metric eigenvalue seen in any assembly so far.
    pub worst_min_eig_s: f64,
    /// Largest `|tr ρ - 1|` after any accepted step so far.
    pub worst_trace_error: f64,
}

/// Configuration and generator position of one worker chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub x: Vec<usize>,
    pub rng: RngState,
}

pub struct Engine {
    spec: LindbladianSpec,
    ansatz: MpoAnsatz,
    chains: Vec<MarkovChain>,
    cfg: EngineConfig,
    state: EngineState,
}

impl Engine {
    pub fn new(spec: LindbladianSpec, ansatz: MpoAnsatz, cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let ansatz = ansatz.renormalized()?;
        let chains = (0..cfg.workers)
            .map(|w| MarkovChain::new(&ansatz, cfg.seed, w as u64))
            .collect::<Result<Vec<_>>>()?;
        let state = EngineState {
            t: 0.0,
            tau: cfg.integrator.first_step(),
            step: 0,
            last_tau: 0.0,
            last_err: 0.0,
            last_rejected: 0,
            worst_min_eig_s: f64::INFINITY,
            worst_trace_error: (ansatz.trace() - C64::new(1.0, 0.0)).norm(),
        };
        Self::check_sizes(&spec, &ansatz)?;
        Ok(Engine {
            spec,
            ansatz,
            chains,
            cfg,
            state,
        })
    }

    /// Rebuilds an engine from checkpointed parts.
    pub fn restore(
        spec: LindbladianSpec,
        ansatz: MpoAnsatz,
        cfg: EngineConfig,
        state: EngineState,
        chains: &[ChainSnapshot],
    ) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        Self::check_sizes(&spec, &ansatz)?;
        if chains.len() != cfg.workers {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} chains, config asks for {} workers",
                chains.len(),
                cfg.workers
            )));
        }
        let chains = chains
            .iter()
            .map(|c| MarkovChain::restore(&ansatz, SpinConfiguration(c.x.clone()), &c.rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            spec,
            ansatz,
            chains,
            cfg,
            state,
        })
    }

    fn check_sizes(spec: &LindbladianSpec, ansatz: &MpoAnsatz) -> Result<()> {
        if spec.n_sites != ansatz.n_sites() || spec.phys_dim != ansatz.phys_dim() {
            return Err(Error::invalid("Lindbladian and ansatz sizes disagree"));
        }
        Ok(())
    }

    pub fn ansatz(&self) -> &MpoAnsatz {
        &self.ansatz
    }

    pub fn spec(&self) -> &LindbladianSpec {
        &self.spec
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn chain_snapshots(&self) -> Vec<ChainSnapshot> {
        self.chains
            .iter()
            .map(|c| ChainSnapshot {
                x: c.configuration().0.clone(),
                rng: c.rng_state(),
            })
            .collect()
    }

    /// Gradient evaluation at the current parameters.
    pub fn evaluate(&mut self) -> Result<Evaluation> {
        let eval = evaluate_at(&self.spec, &self.ansatz, &mut self.chains, &self.cfg)?;
        self.state.worst_min_eig_s = self.state.worst_min_eig_s.min(eval.min_eig_s);
        Ok(eval)
    }

    fn diagnostics(&self, eval: &Evaluation) -> Diagnostics {
        Diagnostics {
            step: self.state.step,
            t: self.state.t,
            tau: self.state.last_tau,
            tau_next: self.state.tau,
            err: self.state.last_err,
            rejected: self.state.last_rejected,
            l2: eval.l2,
            l2_per_site: eval.l2 / self.ansatz.n_sites() as f64,
            min_eig_s: eval.min_eig_s,
            effective_rank: eval.effective_rank,
            acceptance: eval.acceptance,
            trace_error: (self.ansatz.trace() - C64::new(1.0, 0.0)).norm(),
            n_samples: eval.n_samples,
        }
    }

    /// Advances by one accepted step, at most to `t_end`.
    pub fn advance(&mut self, eval: &Evaluation, t_end: f64) -> Result<()> {
        let remaining = t_end - self.state.t;
        let a0 = self.ansatz.params().to_vec();
        let (params, tau_used, tau_next, err, rejected) = match self.cfg.integrator.scheme {
            Scheme::Euler => {
                let tau = self.cfg.integrator.tau.min(remaining);
                let p = euler_step(&a0, &eval.adot, tau);
                (p, tau, self.cfg.integrator.tau, 0.0, 0)
            }
            Scheme::Heun => {
                let tau = self.state.tau.min(remaining);
                let (spec, ansatz, chains, cfg) = (&self.spec, &self.ansatz, &mut self.chains, &self.cfg);
                let mut worst = self.state.worst_min_eig_s;
                let step = heun_adaptive_step(&a0, &eval.adot, tau, &cfg.integrator, self.state.t, |p| {
                    let trial = ansatz.with_params(p)?;
                    let e = evaluate_at(spec, &trial, chains, cfg)?;
                    worst = worst.min(e.min_eig_s);
                    Ok(e.adot)
                })?;
                self.state.worst_min_eig_s = worst;
                (step.params, step.tau_used, step.tau_next, step.err, step.rejected)
            }
        };
        self.ansatz.set_params(&params)?;
        self.ansatz.renormalize_trace()?;
        let trace_error = (self.ansatz.trace() - C64::new(1.0, 0.0)).norm();
        self.state.worst_trace_error = self.state.worst_trace_error.max(trace_error);
        self.state.t = if tau_used >= remaining { t_end } else { self.state.t + tau_used };
        self.state.tau = tau_next;
        self.state.step += 1;
        self.state.last_tau = tau_used;
        self.state.last_err = err;
        self.state.last_rejected = rejected;
        Ok(())
    }

    /// Integrates to `t_end`, observing the initial state and every accepted
    /// step. On failure the observer has already seen the partial trajectory.
    pub fn run_to_time<O: Observer + ?Sized>(&mut self, t_end: f64, observer: &mut O) -> Result<()> {
        if !(t_end >= self.state.t) {
            return Err(Error::invalid(format!(
                "end time {t_end} precedes the current time {}",
                self.state.t
            )));
        }
        let mut eval = self.evaluate()?;
        loop {
            let diag = self.diagnostics(&eval);
            observer.observe(self.state.t, &self.ansatz, &diag)?;
            if self.state.t >= t_end {
                return Ok(());
            }
            self.advance(&eval, t_end)?;
            observer.accepted(self)?;
            eval = self.evaluate()?;
        }
    }
}

/// Samples every worker chain against `ansatz`, merges the moments in worker
/// order and solves for the velocity.
pub fn evaluate_at(
    spec: &LindbladianSpec,
    ansatz: &MpoAnsatz,
    chains: &mut [MarkovChain],
    cfg: &EngineConfig,
) -> Result<Evaluation> {
    let cache = ContractionCache::new(spec, ansatz)?;
    let worker = |chain: &mut MarkovChain| -> Result<(MomentAccumulator, usize)> {
        let mut acc = MomentAccumulator::new(ansatz.n_params());
        let mut est = LocalEstimator::new(spec, ansatz, &cache)?;
        let mut delta = vec![ZERO; ansatz.n_params()];
        let mut skipped = 0;
        chain.stats = Default::default();
        for sample in chain.draw_batch(ansatz, &cfg.sampler) {
            let sample = sample?;
            match est.evaluate(&sample, Some(&mut delta)) {
                Ok(l) => acc.accumulate(&delta, l),
                Err(Error::DegenerateAmplitude { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((acc, skipped))
    };
    let results: Vec<Result<(MomentAccumulator, usize)>> = if chains.len() == 1 {
        vec![worker(&mut chains[0])]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = chains.iter_mut().map(|c| s.spawn(|| worker(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("worker thread panicked".into()))))
                .collect()
        })
    };
    let mut total = MomentAccumulator::new(ansatz.n_params());
    let mut skipped = 0;
    for r in results {
        let (acc, s) = r?;
        total.merge(acc);
        skipped += s;
    }
    let moments = total.assemble()?;
    let sol = regularized_solve(&moments.s, &moments.f, &moments.force_cov, &cfg.regularization, moments.count)?;
    let (prop, acc): (usize, usize) = chains
        .iter()
        .fold((0, 0), |(p, a), c| (p + c.stats.proposals, a + c.stats.accepted));
    Ok(Evaluation {
        adot: sol.adot,
        l2: moments.l2,
        mean_l: moments.mean_l,
        n_samples: moments.count,
        skipped,
        min_eig_s: sol.min_eig_s,
        effective_rank: sol.effective_rank,
        acceptance: if prop == 0 { 0.0 } else { acc as f64 / prop as f64 },
    })
}
