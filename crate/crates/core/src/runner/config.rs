//! Run configuration: TOML schema, defaults, validation.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::liouvillian::{bloch_density, Axis, ModelParams};
use crate::mpo::MAX_DENSE_SITES;
use crate::observables::ObservableRequest;
use crate::oracle::MAX_ORACLE_SITES;
use crate::sampler::SamplerConfig;
use crate::tdvp::{EngineConfig, IntegratorConfig, RegularizationConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Vmc,
    Exact,
    Meanfield,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vmc" => Ok(Backend::Vmc),
            "exact" => Ok(Backend::Exact),
            "meanfield" => Ok(Backend::Meanfield),
            _ => Err(Error::config("backend", format!("unknown backend `{s}` (vmc, exact, meanfield)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    XUp,
    XDown,
    YUp,
    YDown,
    ZUp,
    ZDown,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochInit {
    pub bloch: [f64; 3],
}

/// Single-site state replicated over the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitState {
    Named(NamedState),
    Bloch(BlochInit),
}

impl InitState {
    pub fn bloch_vector(&self) -> [f64; 3] {
        match *self {
            InitState::Named(n) => match n {
                NamedState::XUp => [1.0, 0.0, 0.0],
                NamedState::XDown => [-1.0, 0.0, 0.0],
                NamedState::YUp => [0.0, 1.0, 0.0],
                NamedState::YDown => [0.0, -1.0, 0.0],
                NamedState::ZUp => [0.0, 0.0, 1.0],
                NamedState::ZDown => [0.0, 0.0, -1.0],
                NamedState::Mixed => [0.0, 0.0, 0.0],
            },
            InitState::Bloch(b) => b.bloch,
        }
    }

    pub fn density(&self) -> DMatrix<C64> {
        let [x, y, z] = self.bloch_vector();
        bloch_density(x, y, z)
    }
}

fn default_init() -> InitState {
    InitState::Named(NamedState::YDown)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    pub chi: usize,
    /// Unit-cell period; defaults to the lattice's natural period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    #[serde(default = "default_init")]
    pub init: InitState,
    /// Scale of the random entries seeded into the unused bond channels.
    #[serde(default)]
    pub init_noise: f64,
}

fn default_every() -> usize {
    1
}

fn default_observables() -> Vec<ObservableRequest> {
    [Axis::X, Axis::Y, Axis::Z]
        .into_iter()
        .map(|axis| ObservableRequest::Magnetization { axis })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write a row every `every` accepted steps (and always at `t_end`).
    #[serde(default = "default_every")]
    pub every: usize,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableRequest>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            every: default_every(),
            observables: default_observables(),
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}

/// Fixed-step settings of the exact and mean-field backends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { dt: default_dt() }
    }
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backend: Backend,
    pub t_end: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    /// Checkpoint every this many accepted steps; 0 disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelParams,
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl RunConfig {
    /// Parses, fills derived defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn resolve(&mut self) {
        if self.ansatz.period.is_none() {
            self.ansatz.period = Some(self.model.lattice.period());
        }
    }

    pub fn n_sites(&self) -> usize {
        self.model.lattice.n_sites()
    }

    pub fn period(&self) -> usize {
        self.ansatz.period.unwrap_or_else(|| self.model.lattice.period())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let n = self.n_sites();
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "must be finite and non-negative"));
        }
        if self.ansatz.chi == 0 {
            return Err(Error::config("ansatz.chi", "must be at least 1"));
        }
        let period = self.period();
        if period == 0 || n % period != 0 {
            return Err(Error::config("ansatz.period", format!("must divide the site count {n}")));
        }
        let [x, y, z] = self.ansatz.init.bloch_vector();
        if !((x * x + y * y + z * z).sqrt() <= 1.0 + 1e-12) {
            return Err(Error::config("ansatz.init", "Bloch vector must have length <= 1"));
        }
        if !(self.ansatz.init_noise >= 0.0 && self.ansatz.init_noise.is_finite()) {
            return Err(Error::config("ansatz.init_noise", "must be finite and non-negative"));
        }
        if self.output.every == 0 {
            return Err(Error::config("output.every", "must be at least 1"));
        }
        if !(self.oracle.dt > 0.0 && self.oracle.dt.is_finite()) {
            return Err(Error::config("oracle.dt", "must be positive"));
        }
        self.engine_config().validate()?;
        let mut names = Vec::new();
        for obs in &self.output.observables {
            obs.validate(n)?;
            let name = obs.name();
            if names.contains(&name) {
                return Err(Error::config("output.observables", format!("`{name}` requested twice")));
            }
            names.push(name);
            let supported = match (self.backend, obs) {
                (Backend::Meanfield, ObservableRequest::Magnetization { .. }) => true,
                (Backend::Meanfield, _) => false,
                _ => true,
            };
            if !supported {
                return Err(Error::config(
                    "output.observables",
                    format!("`{}` is not available with the {:?} backend", obs.name(), self.backend),
                ));
            }
            if matches!(obs, ObservableRequest::MinEigenvalue {}) && n > MAX_DENSE_SITES {
                return Err(Error::config(
                    "output.observables",
                    format!("min_eigenvalue needs at most {MAX_DENSE_SITES} sites"),
                ));
            }
        }
        match self.backend {
            Backend::Exact if n > MAX_ORACLE_SITES => Err(Error::config(
                "backend",
                format!("the exact backend supports at most {MAX_ORACLE_SITES} sites"),
            )),
            Backend::Meanfield => crate::oracle::meanfield_parameters(&self.model).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            sampler: self.sampler.clone(),
            regularization: self.regularization.clone(),
            integrator: self.integrator.clone(),
            workers: self.workers,
            seed: self.seed,
        }
    }

    /// Fully resolved config as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    /// Hex SHA-256 of the resolved config.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
