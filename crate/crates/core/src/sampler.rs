//! Sequential single-site Metropolis sampling of `p(x) ∝ |⟨x|ρ⟩|²`.
//!
//! A sweep visits every site once. At site `j` the environment
//! `right(j+1)·left(j)` turns each candidate amplitude into a `χ²` trace, and
//! the accepted tensor extends the product cache in the sweep direction, so a
//! sweep costs `2Nχ³`. Directions alternate, so each sweep starts with the
//! product side the previous one left valid.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::mpo::{MpoAnsatz, PartialProducts, SpinConfiguration, UNDERFLOW};

/// Initial configurations with zero amplitude are redrawn this many times.
const MAX_INIT_DRAWS: usize = 100;

fn default_n_samples() -> usize {
    5000
}
fn default_sweeps() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Samples per gradient evaluation and worker.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps_between: usize,
    #[serde(default = "default_sweeps")]
    pub burn_in: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: default_n_samples(),
            sweeps_between: default_sweeps(),
            burn_in: default_sweeps(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::config("sampler.n_samples", "must be at least 1"));
        }
        if self.sweeps_between < 1 {
            return Err(Error::config("sampler.sweeps_between", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepDirection {
    LeftToRight,
    RightToLeft,
}

impl SweepDirection {
    pub fn reversed(self) -> Self {
        match self {
            SweepDirection::LeftToRight => SweepDirection::RightToLeft,
            SweepDirection::RightToLeft => SweepDirection::LeftToRight,
        }
    }
}

/// A configuration with its amplitude and partial products.
#[derive(Clone, Debug)]
pub struct Sample {
    pub x: SpinConfiguration,
    pub amp: C64,
    pub pp: PartialProducts,
}

impl Sample {
    /// Computes amplitude and both product sets from scratch.
    pub fn new(ansatz: &MpoAnsatz, x: SpinConfiguration) -> Result<Self> {
        let pp = ansatz.partial_products(&x)?;
        let amp = linalg::trace(pp.left(ansatz.n_sites()), ansatz.chi());
        Ok(Sample { x, amp, pp })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub proposals: usize,
    pub accepted: usize,
}

/// One sweep in `direction`. Left-to-right needs valid right products and
/// leaves valid left products (and the reverse). `zero_streak` counts
/// consecutive rejections from a zero-amplitude state across calls.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    ansatz: &MpoAnsatz,
    state: &mut Sample,
    direction: SweepDirection,
    rng: &mut R,
    zero_streak: &mut usize,
) -> Result<SweepStats> {
    let n = ansatz.n_sites();
    let chi = ansatz.chi();
    let q_dim = ansatz.local_dim();
    let mut env = vec![ZERO; chi * chi];
    let mut stats = SweepStats::default();
    let sites: Box<dyn Iterator<Item = usize>> = match direction {
        SweepDirection::LeftToRight => Box::new(0..n),
        SweepDirection::RightToLeft => Box::new((0..n).rev()),
    };
    for j in sites {
        state.pp.environment(j, &mut env);
        let current = state.x.0[j];
        let q = linalg::trace_of_product(ansatz.site_tensor(j, current), &env, chi);
        let proposal = rng.random_range(0..q_dim);
        let q_new = linalg::trace_of_product(ansatz.site_tensor(j, proposal), &env, chi);
        stats.proposals += 1;
        let accept = if q.norm() < UNDERFLOW {
            if q_new.norm() >= UNDERFLOW {
                true
            } else {
                *zero_streak += 1;
                if *zero_streak > 10 * n {
                    return Err(Error::DegenerateDistribution(format!(
                        "{} consecutive proposals from a zero-amplitude state",
                        *zero_streak
                    )));
                }
                false
            }
        } else {
            let ratio = (q_new / q).norm_sqr();
            ratio >= 1.0 || rng.random::<f64>() < ratio
        };
        if accept {
            if q_new.norm() >= UNDERFLOW {
                *zero_streak = 0;
            }
            if proposal != current {
                stats.accepted += 1;
            }
            state.x.0[j] = proposal;
        }
        match direction {
            SweepDirection::LeftToRight => state.pp.rebuild_left_step(ansatz, &state.x.0, j),
            SweepDirection::RightToLeft => state.pp.rebuild_right_step(ansatz, &state.x.0, j),
        }
    }
    state.amp = match direction {
        SweepDirection::LeftToRight => linalg::trace(state.pp.left(n), chi),
        SweepDirection::RightToLeft => linalg::trace(state.pp.right(0), chi),
    };
    Ok(stats)
}

fn frobenius(m: &[C64]) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Serializable generator position of a chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

/// A persistent Markov chain owned by one worker. The configuration carries
/// over between gradient evaluations; products are rebuilt whenever the
/// ansatz changes.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    rng: ChaCha8Rng,
    state: Sample,
    /// Direction of the next sweep; the opposite side of the products is the
    /// one currently valid.
    next: SweepDirection,
    zero_streak: usize,
    pub stats: SweepStats,
    pub sweeps: usize,
}

impl MarkovChain {
    /// Chain for worker `worker` of a run seeded with `seed`: an independent
    /// ChaCha stream per worker. The starting configuration is uniform,
    /// redrawn while its amplitude vanishes.
    pub fn new(ansatz: &MpoAnsatz, seed: u64, worker: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(worker);
        let n = ansatz.n_sites();
        let q = ansatz.local_dim();
        for _ in 0..MAX_INIT_DRAWS {
            let x = SpinConfiguration((0..n).map(|_| rng.random_range(0..q)).collect());
            let state = Sample::new(ansatz, x)?;
            if state.amp.norm() >= UNDERFLOW {
                return Ok(Self::from_parts(rng, state));
            }
        }
        // Sparse states (pure products) can defeat uniform draws; try the
        // locally dominant index at every site before giving up.
        let x = SpinConfiguration(
            (0..n)
                .map(|j| {
                    (0..q)
                        .max_by(|&s, &t| frobenius(ansatz.site_tensor(j, s)).total_cmp(&frobenius(ansatz.site_tensor(j, t))))
                        .unwrap_or(0)
                })
                .collect(),
        );
        let state = Sample::new(ansatz, x)?;
        if state.amp.norm() >= UNDERFLOW {
            return Ok(Self::from_parts(rng, state));
        }
        Err(Error::DegenerateDistribution(format!(
            "no nonzero-amplitude configuration in {MAX_INIT_DRAWS} uniform draws"
        )))
    }

    /// Chain starting from a given configuration, which may have zero
    /// amplitude.
    pub fn from_configuration(ansatz: &MpoAnsatz, x: SpinConfiguration, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self::from_parts(rng, Sample::new(ansatz, x)?))
    }

    fn from_parts(rng: ChaCha8Rng, state: Sample) -> Self {
        MarkovChain {
            rng,
            state,
            next: SweepDirection::LeftToRight,
            zero_streak: 0,
            stats: SweepStats::default(),
            sweeps: 0,
        }
    }

    pub fn configuration(&self) -> &SpinConfiguration {
        &self.state.x
    }

    pub fn rng_state(&self) -> RngState {
        RngState {
            seed: self.rng.get_seed(),
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    /// Restores a chain from its configuration and generator position.
    pub fn restore(ansatz: &MpoAnsatz, x: SpinConfiguration, rng: &RngState) -> Result<Self> {
        let mut g = ChaCha8Rng::from_seed(rng.seed);
        g.set_stream(rng.stream);
        g.set_word_pos(rng.word_pos);
        Self::from_configuration(ansatz, x, g)
    }

    /// Rebuilds both product sets against a (possibly updated) ansatz.
    pub fn reset(&mut self, ansatz: &MpoAnsatz) -> Result<()> {
        self.state = Sample::new(ansatz, self.state.x.clone())?;
        self.next = SweepDirection::LeftToRight;
        Ok(())
    }

    pub fn sweep(&mut self, ansatz: &MpoAnsatz) -> Result<()> {
        let s = metropolis_sweep(ansatz, &mut self.state, self.next, &mut self.rng, &mut self.zero_streak)?;
        self.stats.proposals += s.proposals;
        self.stats.accepted += s.accepted;
        self.sweeps += 1;
        self.next = self.next.reversed();
        Ok(())
    }

    /// The current state with both product sets valid.
    pub fn current(&mut self, ansatz: &MpoAnsatz) -> Sample {
        let n = ansatz.n_sites();
        let x = &self.state.x.0;
        match self.next {
            // last sweep went right-to-left: right products are fresh
            SweepDirection::LeftToRight => self.state.pp.rebuild_left(ansatz, x, 0),
            SweepDirection::RightToLeft => self.state.pp.rebuild_right(ansatz, x, n),
        }
        self.state.clone()
    }

    /// Rebuilds products for `ansatz`, runs `burn_in` sweeps, then yields
    /// `n_samples` states each preceded by `sweeps_between` sweeps.
    pub fn draw_batch<'a>(
        &'a mut self,
        ansatz: &'a MpoAnsatz,
        cfg: &'a SamplerConfig,
    ) -> impl Iterator<Item = Result<Sample>> + 'a {
        let mut started = false;
        let mut failed = false;
        let mut remaining = cfg.n_samples;
        std::iter::from_fn(move || {
            if failed || remaining == 0 {
                return None;
            }
            let mut step = || -> Result<Sample> {
                if !started {
                    started = true;
                    self.reset(ansatz)?;
                    for _ in 0..cfg.burn_in {
                        self.sweep(ansatz)?;
                    }
                }
                for _ in 0..cfg.sweeps_between {
                    self.sweep(ansatz)?;
                }
                Ok(self.current(ansatz))
            };
            let out = step();
            failed = out.is_err();
            remaining -= 1;
            Some(out)
        })
    }
}
