//! Command-line front end: configure a run, dispatch a verifier suite, and
//! report written files, fitted constants, and hard failures. Exit status is
//! nonzero exactly when a hard invariant fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ncvf::harness::{run_bau_probe, run_suite, RunConfig, Suite, SuiteOutcome};
use ncvf::vilenkin::validate_system;

#[derive(Parser)]
#[command(
    name = "ncvf",
    about = "Verifier suites for Vilenkin-Fourier averaging operators on matrix fields and hyperfinite factor truncations"
)]
struct Cli {
    /// Flat key=value config file; flags below override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Shorthand for an all-2 radix of this length.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Comma-separated radix sequence, e.g. 2,3,2.
    #[arg(long, global = true)]
    radix: Option<String>,
    /// Matrix fiber dimension.
    #[arg(long = "fiber-dim", global = true)]
    fiber_dim: Option<usize>,
    /// Character system: vilenkin-characters, m-adic, or corrupted.
    #[arg(long, global = true)]
    system: Option<String>,
    /// Random trials per claim.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Master seed; per-trial streams are derived, never shared.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Refuse runs whose point count times fiber dimension exceeds this.
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Exhaustively check the admissibility assumptions of the configured system.
    ValidateSystem,
    /// Kernel-bound sweeps with depth-stability of the fitted constants.
    Kernels,
    /// Stopping-time recursion sweep (threshold projections and escape mass).
    Cuculescu,
    /// Good/bad splitting sweep.
    Cz,
    /// Weak-type (1,1) certificate construction and fitted constants.
    Weak11,
    /// Embedding into the factor product: homomorphism, isometry, intertwining.
    Transference,
    /// Lacunary maximal bounds and full-range domination.
    Sunouchi,
    /// Almost-uniform convergence decay tables on both sides.
    BauProbe,
    /// Every suite plus the convergence probe.
    All,
}

fn build_config(cli: &Cli) -> ncvf::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_kv(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.radix {
        cfg.set("radix", v)?;
    }
    if let Some(v) = cli.depth {
        cfg.set("depth", &v.to_string())?;
    }
    if let Some(v) = cli.fiber_dim {
        cfg.set("fiber_dim", &v.to_string())?;
    }
    if let Some(v) = &cli.system {
        cfg.set("system", v)?;
    }
    if let Some(v) = cli.trials {
        cfg.set("trials", &v.to_string())?;
    }
    if let Some(v) = cli.seed {
        cfg.set("seed", &v.to_string())?;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = cli.budget {
        cfg.set("budget", &v.to_string())?;
    }
    Ok(cfg)
}

fn merge(into: &mut SuiteOutcome, other: SuiteOutcome) {
    into.files.extend(other.files);
    into.failures.extend(other.failures);
    for row in other.constants.rows {
        into.constants.rows.push(row);
    }
}

fn run(cli: &Cli) -> ncvf::Result<SuiteOutcome> {
    let cfg = build_config(cli)?;
    match cli.cmd {
        Cmd::ValidateSystem => {
            let radix = cfg.radix_sequence()?;
            let system = cfg.system_impl()?;
            let report = validate_system(&*system, &radix)?;
            println!(
                "system {} depth {}: {} checks passed, delta_max = {:.6}",
                report.system, report.depth, report.checks_run, report.delta_max
            );
            Ok(SuiteOutcome::default())
        }
        Cmd::Kernels => run_suite(&cfg, Suite::Kernels),
        Cmd::Cuculescu => run_suite(&cfg, Suite::Cuculescu),
        Cmd::Cz => run_suite(&cfg, Suite::Cz),
        Cmd::Weak11 => run_suite(&cfg, Suite::Weak11),
        Cmd::Transference => run_suite(&cfg, Suite::Transference),
        Cmd::Sunouchi => run_suite(&cfg, Suite::Sunouchi),
        Cmd::BauProbe => run_bau_probe(&cfg),
        Cmd::All => {
            let mut outcome = run_suite(&cfg, Suite::All)?;
            merge(&mut outcome, run_bau_probe(&cfg)?);
            Ok(outcome)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
            if !outcome.constants.rows.is_empty() {
                print!("{}", outcome.constants.csv());
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("FAIL {f}");
                }
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
