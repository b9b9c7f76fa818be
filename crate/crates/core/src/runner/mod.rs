//! Run orchestration: config in, CSV/JSON trajectories and checkpoints out.

mod compare;
mod config;
mod output;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian;
use crate::mpo::MpoAnsatz;
use crate::observables::{self, Measurable, Measurement, ObservableRequest};
use crate::oracle::{self, DenseLindbladian, DenseState, MeanFieldState};
use crate::tdvp::{ChainSnapshot, Diagnostics, Engine, EngineState, Observer};

pub use compare::{compare, compare_dirs, CompareReport, StreamDeviation};
pub use config::{AnsatzConfig, Backend, BlochInit, InitState, NamedState, OracleConfig, OutputConfig, RunConfig};
pub use output::{
    read_stream, Recorder, RunMetadata, RunStatus, CHECKPOINT_BIN, CHECKPOINT_JSON, CONFIG_FILE, DIAGNOSTICS_FILE,
    METADATA_FILE,
};

/// Stream of the generator that seeds the initial bond-channel noise, kept
/// apart from the worker streams `0..W`.
const NOISE_STREAM: u64 = u64::MAX;

/// Initial ansatz described by the `[ansatz]` section.
pub fn initial_ansatz(cfg: &RunConfig) -> Result<MpoAnsatz> {
    let mut a = MpoAnsatz::init_product(cfg.n_sites(), cfg.period(), cfg.ansatz.chi, &cfg.ansatz.init.density())?;
    if cfg.ansatz.init_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(NOISE_STREAM);
        a.seed_bond_channels(cfg.ansatz.init_noise, &mut rng);
    }
    Ok(a)
}

/// Everything besides the ansatz that a resume needs.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    config_hash: String,
    engine: EngineState,
    chains: Vec<ChainSnapshot>,
    file_lengths: BTreeMap<String, u64>,
    max_im_residual: BTreeMap<String, f64>,
    progress: Progress,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Progress {
    wall_time_s: f64,
    iterations: usize,
    rejected_steps: usize,
    resumes: usize,
    observable_errors: BTreeMap<String, String>,
}

struct RunContext<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    hash: String,
    recorder: Recorder,
    progress: Progress,
    started: Instant,
    wall_offset: f64,
}

impl<'a> RunContext<'a> {
    fn wall_time(&self) -> f64 {
        self.wall_offset + self.started.elapsed().as_secs_f64()
    }

    fn due(&self, step: usize, t: f64) -> bool {
        step % self.cfg.output.every == 0 || t >= self.cfg.t_end
    }

    fn measure_all<M: Measurable>(&mut self, target: &M, l2: Option<f64>) -> Vec<Measurement> {
        let mut out = Vec::with_capacity(self.cfg.output.observables.len());
        for req in &self.cfg.output.observables {
            out.push(match observables::measure(target, req, l2) {
                Ok(m) => m,
                Err(e) => {
                    self.progress.observable_errors.entry(req.name()).or_insert_with(|| e.to_string());
                    Measurement {
                        value: f64::NAN,
                        im_residual: f64::NAN,
                    }
                }
            });
        }
        out
    }

    fn metadata(&self, status: RunStatus, error: Option<String>, t_final: f64, engine: Option<&EngineState>) -> RunMetadata {
        let wall = self.wall_time();
        RunMetadata {
            status,
            error,
            backend: format!("{:?}", self.cfg.backend).to_lowercase(),
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            workers: self.cfg.workers,
            version: env!("CARGO_PKG_VERSION").to_string(),
            streams: self.recorder.names(),
            t_final,
            iterations: self.progress.iterations,
            rejected_steps: self.progress.rejected_steps,
            wall_time_s: wall,
            mean_iteration_s: if self.progress.iterations > 0 {
                wall / self.progress.iterations as f64
            } else {
                0.0
            },
            resumes: self.progress.resumes,
            worst_trace_error: engine.map(|s| s.worst_trace_error),
            worst_min_eig_s: engine.map(|s| s.worst_min_eig_s).filter(|v| v.is_finite()),
            max_im_residual: self.recorder.max_im_residuals(),
            observable_errors: self.progress.observable_errors.clone(),
            config: self.cfg.to_toml().unwrap_or_default(),
        }
    }

    fn checkpoint(&mut self, engine: &Engine) -> Result<()> {
        let meta = CheckpointMeta {
            config_hash: self.hash.clone(),
            engine: engine.state().clone(),
            chains: engine.chain_snapshots(),
            file_lengths: self.recorder.lengths()?,
            max_im_residual: self.recorder.max_im_residuals(),
            progress: Progress {
                wall_time_s: self.wall_time(),
                ..self.progress.clone()
            },
        };
        let mut bin = Vec::new();
        engine.ansatz().write_checkpoint(&mut bin)?;
        output::write_atomic(&self.dir.join(CHECKPOINT_BIN), &bin)?;
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        output::write_atomic(&self.dir.join(CHECKPOINT_JSON), json.as_bytes())
    }
}

impl Observer for RunContext<'_> {
    fn observe(&mut self, t: f64, ansatz: &MpoAnsatz, diag: &Diagnostics) -> Result<()> {
        self.progress.iterations = diag.step;
        if self.due(diag.step, t) {
            let values = self.measure_all(ansatz, Some(diag.l2));
            self.recorder.record(t, &values)?;
            self.recorder.record_diagnostics(diag)?;
        }
        Ok(())
    }

    fn accepted(&mut self, engine: &Engine) -> Result<()> {
        self.progress.rejected_steps += engine.state().last_rejected;
        let every = self.cfg.checkpoint_every;
        if every > 0 && engine.state().step % every == 0 {
            self.checkpoint(engine)?;
        }
        Ok(())
    }
}

/// Executes the configured backend, writing into `dir`. On failure the
/// partial outputs are flushed and the metadata carries the error.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunMetadata> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    for stale in [CHECKPOINT_BIN, CHECKPOINT_JSON] {
        if dir.join(stale).exists() {
            std::fs::remove_file(dir.join(stale))?;
        }
    }
    let names: Vec<String> = cfg.output.observables.iter().map(ObservableRequest::name).collect();
    let recorder = Recorder::create(dir, &names, cfg.backend == Backend::Vmc)?;
    let mut ctx = RunContext {
        cfg,
        dir,
        hash: cfg.hash()?,
        recorder,
        progress: Progress::default(),
        started: Instant::now(),
        wall_offset: 0.0,
    };
    ctx.metadata(RunStatus::Running, None, 0.0, None).write(dir)?;
    match cfg.backend {
        Backend::Vmc => {
            let spec = liouvillian::build(&cfg.model)?;
            let engine = Engine::new(spec, initial_ansatz(cfg)?, cfg.engine_config())?;
            drive(ctx, engine)
        }
        Backend::Exact => {
            let rho0 = DenseState::product(cfg.n_sites(), &cfg.ansatz.init.density())?;
            let spec = liouvillian::build(&cfg.model);
            let mut step = 0;
            let mut t_last = 0.0;
            let wants_cost = cfg
                .output
                .observables
                .iter()
                .any(|o| matches!(o, ObservableRequest::RhoDotCost {}));
            let res = spec.and_then(|spec| {
                let lind = DenseLindbladian::new(&spec)?;
                let mut scratch = [vec![], vec![]];
                oracle::rk4_evolve(&spec, &rho0, cfg.t_end, cfg.oracle.dt, |t, s| {
                    if ctx.due(step, t) {
                        let l2 = wants_cost.then(|| exact_l2(&lind, s, &mut scratch));
                        let values = ctx.measure_all(s, l2);
                        ctx.recorder.record(t, &values)?;
                    }
                    ctx.progress.iterations = step;
                    t_last = t;
                    step += 1;
                    Ok(())
                })
            });
            finish(ctx, res.map(|_| ()), t_last, None)
        }
        Backend::Meanfield => {
            let (jsum, h, gamma) = oracle::meanfield_parameters(&cfg.model)?;
            let [x, y, z] = cfg.ansatz.init.bloch_vector();
            let mut step = 0;
            let mut t_last = 0.0;
            let res = oracle::meanfield_evolve(
                MeanFieldState::new(x, y, z),
                jsum,
                h,
                gamma,
                cfg.t_end,
                cfg.oracle.dt,
                |t, s| {
                    if ctx.due(step, t) {
                        let values: Vec<Measurement> = cfg
                            .output
                            .observables
                            .iter()
                            .map(|req| match req {
                                ObservableRequest::Magnetization { axis } => {
                                    let v = match axis {
                                        liouvillian::Axis::X => s.x,
                                        liouvillian::Axis::Y => s.y,
                                        liouvillian::Axis::Z => s.z,
                                    };
                                    Measurement { value: v, im_residual: 0.0 }
                                }
                                _ => unreachable!("rejected by validation"),
                            })
                            .collect();
                        ctx.recorder.record(t, &values)?;
                    }
                    ctx.progress.iterations = step;
                    t_last = t;
                    step += 1;
                    Ok(())
                },
            );
            finish(ctx, res.map(|_| ()), t_last, None)
        }
    }
}

/// `‖Lρ‖² / ‖ρ‖²`, the exact value of the sampled `E[|L_loc|²]`.
pub fn exact_l2(lind: &DenseLindbladian, state: &DenseState, scratch: &mut [Vec<crate::Complex64>; 2]) -> f64 {
    for s in scratch.iter_mut() {
        s.resize(state.vec.len(), crate::linalg::ZERO);
    }
    let mut out = vec![crate::linalg::ZERO; state.vec.len()];
    lind.apply_into(&state.vec, &mut out, scratch);
    let num: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    let den: f64 = state.vec.iter().map(|z| z.norm_sqr()).sum();
    num / den
}

fn drive(mut ctx: RunContext<'_>, mut engine: Engine) -> Result<RunMetadata> {
    let res = engine.run_to_time(ctx.cfg.t_end, &mut ctx);
    let t = engine.state().t;
    let state = engine.state().clone();
    finish(ctx, res, t, Some(&state))
}

fn finish(mut ctx: RunContext<'_>, res: Result<()>, t_final: f64, engine: Option<&EngineState>) -> Result<RunMetadata> {
    let flushed = ctx.recorder.flush();
    match res.and(flushed) {
        Ok(()) => {
            let meta = ctx.metadata(RunStatus::Ok, None, t_final, engine);
            meta.write(ctx.dir)?;
            Ok(meta)
        }
        Err(e) => {
            ctx.metadata(RunStatus::Error, Some(e.to_string()), t_final, engine)
                .write(ctx.dir)?;
            Err(e)
        }
    }
}

/// Continues a variational run from the last checkpoint in `dir`. Output
/// files are cut back to their checkpointed lengths first, so the result is
/// identical to an uninterrupted run.
pub fn resume(dir: &Path) -> Result<RunMetadata> {
    let cfg = RunConfig::from_path(&dir.join(CONFIG_FILE))?;
    if cfg.backend != Backend::Vmc {
        return Err(Error::invalid("only variational runs can be resumed"));
    }
    let json = std::fs::read_to_string(dir.join(CHECKPOINT_JSON))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join(CHECKPOINT_JSON).display())))?;
    let meta: CheckpointMeta = serde_json::from_str(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let hash = cfg.hash()?;
    if meta.config_hash != hash {
        return Err(Error::Checkpoint("config.toml changed since the checkpoint was written".into()));
    }
    let ansatz = MpoAnsatz::read_checkpoint(std::fs::File::open(dir.join(CHECKPOINT_BIN))?)?;
    let spec = liouvillian::build(&cfg.model)?;
    let engine = Engine::restore(spec, ansatz, cfg.engine_config(), meta.engine, &meta.chains)?;
    let names: Vec<String> = cfg.output.observables.iter().map(ObservableRequest::name).collect();
    let recorder = Recorder::reopen(dir, &names, true, &meta.file_lengths, &meta.max_im_residual)?;
    let mut progress = meta.progress;
    progress.resumes += 1;
    let ctx = RunContext {
        cfg: &cfg,
        dir,
        hash,
        recorder,
        wall_offset: progress.wall_time_s,
        progress,
        started: Instant::now(),
    };
    drive(ctx, engine)
}
