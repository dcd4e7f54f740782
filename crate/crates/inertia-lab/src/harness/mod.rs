//! Scenario runner: parses configurations, executes runs (in parallel for
//! suites), evaluates the declared diagnostics, and writes traces, reports,
//! and the suite summary.

pub mod builtin;
pub mod config;
pub mod oracle;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::damping::{build_h_table, recommended_nodes, HTable};
use crate::diagnostics::DiagnosticsReport;
use crate::integrate::{integrate, RunContext, Trajectory};
use crate::{Error, Result};

pub use builtin::{builtin_scenarios, is_builtin_suite};
pub use config::{compile_scenario, parse_config, CompiledScenario, ScenarioConfig, TheoremTag};
pub use oracle::{run_oracle_checks, OracleCheck};
pub use report::{build_report, trace_csv, write_atomic};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "INERTIA_LAB_OUT";

/// Result of one executed scenario.
pub struct ScenarioOutcome {
    pub name: String,
    pub report: DiagnosticsReport,
    pub trace_path: PathBuf,
    pub report_path: PathBuf,
    pub wall_seconds: f64,
    /// Completed with no failed verdict.
    pub passed: bool,
    pub aborted: bool,
}

/// Runs one validated scenario end to end: h-table, integration, diagnostics,
/// atomic trace + report writes.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome> {
    let started = Instant::now();
    let scenario = compile_scenario(cfg)?;
    let (report, trajectory, _table) = execute(&scenario)?;

    let trace_path = out_dir.join(format!("{}.trace.csv", cfg.name));
    let report_path = out_dir.join(format!("{}.report.json", cfg.name));
    write_atomic(&trace_path, trace_csv(&scenario, &trajectory.samples).as_bytes())?;
    let json = serde_json::to_vec_pretty(&report)
        .map_err(|e| Error::Numeric(format!("report serialization: {e}")))?;
    write_atomic(&report_path, &json)?;

    let aborted = !trajectory.status.is_completed();
    let passed = !aborted && !report.any_failed();
    Ok(ScenarioOutcome {
        name: cfg.name.clone(),
        report,
        trace_path,
        report_path,
        wall_seconds: started.elapsed().as_secs_f64(),
        passed,
        aborted,
    })
}

/// In-memory scenario execution (no filesystem): integrate and diagnose.
pub fn execute(scenario: &CompiledScenario) -> Result<(DiagnosticsReport, Trajectory, HTable)> {
    let t_end = scenario.config.t_end;
    let table = build_h_table(
        &scenario.schedule,
        t_end,
        recommended_nodes(&scenario.schedule, t_end),
    )?;
    let settings = scenario.solver_settings()?;
    let anchor = scenario.potential.canonical_minimizer().clone();
    let ctx = RunContext {
        schedule: &scenario.schedule,
        potential: &scenario.potential,
        source: &scenario.source,
        h_table: &table,
        anchor: &anchor,
        nu: scenario.nu,
    };
    let trajectory = integrate(&ctx, &scenario.x0, &scenario.v0, &settings)?;
    let report = build_report(scenario, &trajectory, &table);
    Ok((report, trajectory, table))
}

/// One row of the suite summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRow {
    pub name: String,
    pub status: String,
    pub passed: bool,
    pub wall_seconds: f64,
    pub report_path: Option<String>,
    pub trace_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteSummaryCounts {
    pub passed: usize,
    pub failed: usize,
    pub aborted: usize,
    pub errored: usize,
}

/// Aggregated suite result, serialized as `suite.summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: String,
    pub scenarios: Vec<SuiteRow>,
    pub counts: SuiteSummaryCounts,
    pub exit_nonzero: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// A scenario source for a suite: an already-loaded config or a load error
/// to be reported alongside the runs.
pub enum SuiteEntry {
    Config(Box<ScenarioConfig>),
    LoadError { name: String, message: String },
}

/// Loads suite entries from config file paths; parse failures become
/// `LoadError` entries so a malformed config does not sink the suite.
pub fn load_suite_paths(paths: &[PathBuf]) -> Vec<SuiteEntry> {
    paths
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            match std::fs::read_to_string(p) {
                Err(e) => SuiteEntry::LoadError { name, message: e.to_string() },
                Ok(text) => match parse_config(&text) {
                    Err(e) => SuiteEntry::LoadError { name, message: e.to_string() },
                    Ok(cfg) => SuiteEntry::Config(Box::new(cfg)),
                },
            }
        })
        .collect()
}

/// Runs a suite with a bounded worker pool. Scenarios execute independently;
/// partial failures are reported per scenario and the suite continues. Rows
/// are aggregated in deterministic (name-sorted) order; the exit flag is set
/// iff any declared verdict failed, any run aborted, or any config errored.
pub fn run_suite(
    suite_name: &str,
    entries: Vec<SuiteEntry>,
    workers: usize,
    out_dir: &Path,
) -> Result<SuiteResult> {
    let warning = entries.is_empty().then(|| "suite is empty; nothing was run".to_string());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1).min(entries.len().max(1)))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut rows: Vec<SuiteRow> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| match entry {
                SuiteEntry::LoadError { name, message } => SuiteRow {
                    name: name.clone(),
                    status: format!("error: {message}"),
                    passed: false,
                    wall_seconds: 0.0,
                    report_path: None,
                    trace_path: None,
                },
                SuiteEntry::Config(cfg) => match run_scenario(cfg, out_dir) {
                    Err(e) => SuiteRow {
                        name: cfg.name.clone(),
                        status: format!("error: {e}"),
                        passed: false,
                        wall_seconds: 0.0,
                        report_path: None,
                        trace_path: None,
                    },
                    Ok(outcome) => SuiteRow {
                        name: outcome.name.clone(),
                        status: outcome.report.status.clone(),
                        passed: outcome.passed,
                        wall_seconds: outcome.wall_seconds,
                        report_path: Some(outcome.report_path.display().to_string()),
                        trace_path: Some(outcome.trace_path.display().to_string()),
                    },
                },
            })
            .collect()
    });
    rows.sort_by(|a, b| a.name.cmp(&b.name));

    let counts = SuiteSummaryCounts {
        passed: rows.iter().filter(|r| r.passed).count(),
        failed: rows
            .iter()
            .filter(|r| !r.passed && r.status == "completed")
            .count(),
        aborted: rows.iter().filter(|r| r.status.starts_with("aborted")).count(),
        errored: rows.iter().filter(|r| r.status.starts_with("error")).count(),
    };
    let exit_nonzero = rows.iter().any(|r| !r.passed);

    let result = SuiteResult {
        suite: suite_name.to_string(),
        scenarios: rows,
        counts,
        exit_nonzero,
        warning,
    };
    let json = serde_json::to_vec_pretty(&result)
        .map_err(|e| Error::Numeric(format!("summary serialization: {e}")))?;
    write_atomic(&out_dir.join("suite.summary.json"), &json)?;
    Ok(result)
}
