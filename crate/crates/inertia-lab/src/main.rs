use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use inertia_lab::harness::{
    builtin_scenarios, is_builtin_suite, load_suite_paths, parse_config, run_oracle_checks,
    run_scenario, run_suite, SuiteEntry, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(
    name = "inertia-lab",
    about = "Simulation lab for inertial gradient dynamics with vanishing damping",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario config (TOML or JSON, auto-detected).
    Run {
        config: PathBuf,
        /// Output directory (default: $INERTIA_LAB_OUT, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario horizon.
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Override the relative solver tolerance (abs_tol follows as tol/1000).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a builtin suite (theorems | oracles | boundary) or a list of
    /// config paths, in parallel.
    Suite {
        /// Builtin suite name or one-or-more config paths.
        #[arg(required = true)]
        targets: Vec<String>,
        /// Worker pool size (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed-form oracle cross-checks only.
    Oracle,
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, t_end, tol } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = parse_config(&text)?;
            if let Some(te) = t_end {
                cfg.t_end = te;
            }
            if let Some(tol) = tol {
                cfg.solver.rel_tol = Some(tol);
                cfg.solver.abs_tol = Some(tol * 1e-3);
            }
            let dir = out_dir(out);
            let outcome = run_scenario(&cfg, &dir)?;
            println!("scenario {}: {}", outcome.name, outcome.report.status);
            for v in &outcome.report.verdicts {
                println!("  [{}] {:?}", v.theorem, v.outcome);
                for c in &v.checks {
                    let stat = c.statistic.map_or("-".into(), |s| format!("{s:.6e}"));
                    println!("      {:<28} {:?}  statistic {}", c.name, c.outcome, stat);
                }
            }
            println!("trace:  {}", outcome.trace_path.display());
            println!("report: {}", outcome.report_path.display());
            Ok(if outcome.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Suite { targets, workers, out } => {
            let (suite_name, entries) = if targets.len() == 1 && is_builtin_suite(&targets[0]) {
                let configs = builtin_scenarios(&targets[0])?;
                (
                    targets[0].clone(),
                    configs.into_iter().map(|c| SuiteEntry::Config(Box::new(c))).collect(),
                )
            } else {
                let paths: Vec<PathBuf> = targets.iter().map(PathBuf::from).collect();
                ("paths".to_string(), load_suite_paths(&paths))
            };
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let dir = out_dir(out);
            let result = run_suite(&suite_name, entries, workers, &dir)?;
            if let Some(w) = &result.warning {
                eprintln!("warning: {w}");
            }
            for row in &result.scenarios {
                println!(
                    "{:<28} {:<12} {:>8.2}s  {}",
                    row.name,
                    if row.passed { "pass" } else { "FAIL" },
                    row.wall_seconds,
                    row.status
                );
            }
            println!(
                "suite {}: {} passed, {} failed, {} aborted, {} errored",
                result.suite,
                result.counts.passed,
                result.counts.failed,
                result.counts.aborted,
                result.counts.errored
            );
            println!("summary: {}", dir.join("suite.summary.json").display());
            Ok(if result.exit_nonzero { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Oracle => {
            let checks = run_oracle_checks()?;
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!(
                    "{:<36} {}  statistic {:.3e} (tol {:.1e})  {}",
                    c.name,
                    if c.passed { "pass" } else { "FAIL" },
                    c.statistic,
                    c.tolerance,
                    c.detail
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
