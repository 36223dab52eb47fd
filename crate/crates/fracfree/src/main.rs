use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fracfree::{exit, run_experiment, validate_config, ConfigError, Experiment};

/// Run one named experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "fracfree", version)]
struct Cli {
    /// Experiment name; must match the config's `experiment` field.
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Caps worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiment = match cli.experiment.parse::<Experiment>() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return code(exit::INVALID_CONFIG);
        }
    };
    let mut cfg = match validate_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return code(exit::INVALID_CONFIG);
        }
    };
    if cfg.experiment != experiment {
        let e = ConfigError::Invalid {
            path: "experiment".into(),
            message: format!("config names {}, command line names {experiment}", cfg.experiment),
        };
        eprintln!("error: {e}");
        return code(exit::INVALID_CONFIG);
    }
    if let Some(d) = cli.outdir {
        cfg.outdir = d;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return code(exit::INVALID_CONFIG);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return code(exit::ASSERTION);
        }
    };
    match pool.install(|| run_experiment(&cfg)) {
        Ok(report) => {
            println!("{}", report.dir.display());
            for v in &report.verdicts {
                println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            code(if report.passed() { exit::SUCCESS } else { exit::ASSERTION })
        }
        Err(e) => {
            eprintln!("error: {e}");
            code(if e.is_non_convergence() { exit::NON_CONVERGENCE } else { exit::ASSERTION })
        }
    }
}
