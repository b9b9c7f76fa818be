use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvmc_core::runner::{self, Backend, RunConfig};

#[derive(Parser)]
#[command(name = "tvmc", version, about = "Variational dynamics of open spin lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_parser = ["vmc", "exact", "meanfield"])]
        backend: Option<String>,
    },
    /// Continue a variational run from its last checkpoint.
    Resume {
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Compare the common observables of two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            seed,
            workers,
            backend,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(b) = backend {
                cfg.backend = b.parse::<Backend>()?;
            }
            let dir = output_dir
                .or_else(|| cfg.output_dir.clone())
                .ok_or("no output directory: pass --output-dir or set output_dir")?;
            cfg.output_dir = Some(dir.clone());
            let meta = runner::run(&cfg, &dir)?;
            eprintln!(
                "{}: t = {} after {} steps in {:.2} s",
                dir.display(),
                meta.t_final,
                meta.iterations,
                meta.wall_time_s
            );
            Ok(true)
        }
        Command::Resume { output_dir } => {
            let meta = runner::resume(&output_dir)?;
            eprintln!(
                "{}: resumed to t = {} ({} steps total)",
                output_dir.display(),
                meta.t_final,
                meta.iterations
            );
            Ok(true)
        }
        Command::Compare {
            run_a,
            run_b,
            tolerance,
            json,
        } => {
            let report = runner::compare_dirs(&run_a, &run_b, tolerance)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("overlap t in [{}, {}], tolerance {}", report.t_start, report.t_end, tolerance);
                for s in &report.streams {
                    println!(
                        "{:<32} points {:>6}  max {:.3e}  mean {:.3e}  {}",
                        s.name,
                        s.points,
                        s.max_abs,
                        s.mean_abs,
                        if s.pass { "pass" } else { "FAIL" }
                    );
                }
            }
            Ok(report.pass())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
