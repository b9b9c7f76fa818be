use std::path::Path;

use proptest::prelude::*;
use tempfile::tempdir;
use tvmc_core::runner::{self, read_stream, RunConfig, RunMetadata, DIAGNOSTICS_FILE};

fn config(text: &str) -> RunConfig {
    RunConfig::parse(text).unwrap()
}

fn vmc_config(extra: &str) -> RunConfig {
    config(&format!(
        r#"
t_end = 0.3
seed = 11
{extra}

[model]
kind = "tfi"
lattice = {{ ring = 4 }}
couplings = [{{ j = 0.5, alpha = inf }}]
h = 1.0
gamma = 1.0

[ansatz]
chi = 2
init_noise = 0.05

[sampler]
n_samples = 200

[integrator]
tau_init = 0.02
"#
    ))
}

fn stream(dir: &Path, name: &str) -> Vec<(f64, f64)> {
    read_stream(&dir.join(format!("{name}.csv"))).unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn exact_single_spin_decay_column() {
    let dir = tempdir().unwrap();
    let cfg = config(
        r#"
backend = "exact"
t_end = 3.0
[model]
kind = "tfi"
lattice = { ring = 1 }
couplings = []
h = 0.0
gamma = 0.5
[ansatz]
chi = 1
init = "z_up"
[oracle]
dt = 0.001
[output]
every = 100
observables = [{ kind = "magnetization", axis = "z" }]
"#,
    );
    runner::run(&cfg, dir.path()).unwrap();
    let rows = stream(dir.path(), "magnetization_z");
    assert_eq!(rows.len(), 31);
    for (t, z) in rows {
        assert!((z - (2.0 * (-0.5 * t).exp() - 1.0)).abs() < 1e-8, "t = {t}");
    }
}

#[test]
fn meanfield_fixed_point_columns_are_constant() {
    let dir = tempdir().unwrap();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/meanfield_n8.toml")).unwrap();
    let mut cfg = config(&text);
    cfg.t_end = 2.0;
    runner::run(&cfg, dir.path()).unwrap();
    for (name, want) in [("magnetization_x", 1.0), ("magnetization_y", 0.0), ("magnetization_z", 0.0)] {
        let rows = stream(dir.path(), name);
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|&(_, v)| v == want), "{name}");
    }
}

#[test]
fn single_worker_runs_are_bitwise_reproducible() {
    let cfg = vmc_config("");
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    runner::run(&cfg, a.path()).unwrap();
    runner::run(&cfg, b.path()).unwrap();
    for name in ["magnetization_x.csv", "magnetization_y.csv", "magnetization_z.csv", DIAGNOSTICS_FILE] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let cfg = vmc_config("checkpoint_every = 3");
    let full = tempdir().unwrap();
    let meta = runner::run(&cfg, full.path()).unwrap();
    assert!(meta.iterations >= 4, "too few steps to checkpoint mid-run");
    let copy = tempdir().unwrap();
    for entry in std::fs::read_dir(full.path()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), copy.path().join(entry.file_name())).unwrap();
    }
    let resumed = runner::resume(copy.path()).unwrap();
    assert_eq!(resumed.resumes, 1);
    for name in ["magnetization_x.csv", "magnetization_y.csv", "magnetization_z.csv", DIAGNOSTICS_FILE] {
        assert_eq!(read(full.path(), name), read(copy.path(), name), "{name}");
    }
}

#[test]
fn compare_against_itself_and_against_nothing() {
    let cfg = vmc_config("");
    let a = tempdir().unwrap();
    runner::run(&cfg, a.path()).unwrap();
    let report = runner::compare_dirs(a.path(), a.path(), 0.0).unwrap();
    assert!(report.pass());
    assert!(report.streams.iter().all(|s| s.max_abs == 0.0));

    let b = tempdir().unwrap();
    let mut other = cfg.clone();
    other.output.observables = vec![tvmc_core::observables::ObservableRequest::Purity {}];
    runner::run(&other, b.path()).unwrap();
    assert!(runner::compare_dirs(a.path(), b.path(), 1.0).is_err());
}

#[test]
fn metadata_records_the_resolved_config() {
    let cfg = vmc_config("");
    let dir = tempdir().unwrap();
    runner::run(&cfg, dir.path()).unwrap();
    let meta = RunMetadata::read(dir.path()).unwrap();
    assert_eq!(RunConfig::parse(&meta.config).unwrap(), cfg);
    assert!(meta.worst_trace_error.unwrap() <= 1e-12);
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips_through_toml(
        chi in 1usize..6,
        seed in any::<u64>(),
        h in -2.0f64..2.0,
        every in 1usize..10,
        n in prop::sample::select(vec![2usize, 4, 6, 8]),
    ) {
        let mut cfg = vmc_config("");
        cfg.ansatz.chi = chi;
        cfg.seed = seed;
        cfg.model.h = h;
        cfg.output.every = every;
        cfg.model.lattice = tvmc_core::Lattice::Ring(n);
        cfg.ansatz.period = Some(1);
        let back = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        prop_assert_eq!(back, cfg);
    }
}
