use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bsdelab::config::{ExperimentConfig, ExperimentKind};
use bsdelab::runner::{execute, replay, replay_dir};
use bsdelab::Error;

#[derive(Parser)]
#[command(name = "bsdelab", version, about = "Scenario-tree BSDE and reflected BSDE experiments")]
struct Cli {
    /// Experiment configuration (JSON); the shipped default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the Picard stopping tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment named in the configuration.
    Run,
    /// Solves plain BSDEs.
    Solve,
    /// Solves reflected BSDEs.
    Reflect,
    /// Picard iteration against the direct solver.
    Picard,
    /// Runs inequality suites.
    Verify {
        /// A suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// The Brownian ladder simulation.
    Counterexample,
    /// Optimal-stopping and complementarity checks.
    SnellCheck,
    /// Re-runs a manifest and compares artifact hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Schema(_)
            | Error::Json(_)
            | Error::VersionMismatch { .. }
            | Error::Grid(_)
            | Error::OffGridReveal { .. }
            | Error::NodeCap { .. }
    )
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default_config(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.picard.tol = t;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(label: &str, passed: bool, failures: &[String], artifacts: usize, dir: &std::path::Path) {
    println!(
        "{label}: {} ({artifacts} artifacts, {} failures) -> {}",
        if passed { "PASS" } else { "FAIL" },
        failures.len(),
        dir.display()
    );
    for f in failures.iter().take(20) {
        eprintln!("  {f}");
    }
    if failures.len() > 20 {
        eprintln!("  ... {} more, see manifest.json", failures.len() - 20);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
    }

    if let Command::Replay { manifest } = &cli.command {
        let dir = cli.out.clone().unwrap_or_else(|| replay_dir(manifest));
        return match replay(manifest, &dir) {
            Ok(r) => {
                let mut failures = r.manifest.failures.clone();
                failures.extend(r.mismatches.iter().cloned());
                report("replay", r.passed(), &failures, r.manifest.artifacts.len(), &dir);
                ExitCode::from(if r.passed() { 0 } else { EXIT_FAIL })
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(if config_error(&e) { EXIT_CONFIG } else { EXIT_FAIL })
            }
        };
    }

    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (kind, suite) = match &cli.command {
        Command::Run => (cfg.experiment, None),
        Command::Solve => (ExperimentKind::Solve, None),
        Command::Reflect => (ExperimentKind::Reflect, None),
        Command::Picard => (ExperimentKind::Picard, None),
        Command::Verify { suite } => (ExperimentKind::Verify, Some(suite.as_str())),
        Command::Counterexample => (ExperimentKind::Counterexample, None),
        Command::SnellCheck => (ExperimentKind::SnellCheck, None),
        Command::Replay { .. } => unreachable!("handled above"),
    };
    match execute(&cfg, kind, suite, &cfg.output) {
        Ok(m) => {
            report(kind.name(), m.passed, &m.failures, m.artifacts.len(), &cfg.output);
            ExitCode::from(if m.passed { 0 } else { EXIT_FAIL })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if config_error(&e) { EXIT_CONFIG } else { EXIT_FAIL })
        }
    }
}
