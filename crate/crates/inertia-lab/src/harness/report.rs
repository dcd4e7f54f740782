//! Report assembly and on-disk formats: per-scenario JSON report and CSV
//! trace, both written atomically (temp file in the target directory, then
//! rename) so interrupted suites never leave truncated outputs.

use std::io::Write;
use std::path::Path;

use crate::damping::HTable;
use crate::diagnostics::{
    accumulator_flatness, cauchy_tail, decay_to_zero_check, energy_balance_check,
    energy_monotonicity_check, envelope_bound_check, fit_power_law, lyapunov_descent_check,
    opial_distance_check, perturbation_inequality_check, running_sup_stabilization,
    AccumulatorBank, AccumulatorReport, CauchyTailReport, CheckResult, DiagnosticsReport,
    ExponentFitReport, Flatness, OscillationReport, RateCheck, TheoremVerdict, VerdictOutcome,
    ACCUMULATOR_COUNT, ACC_GRAD_OVER_GAMMA, ACC_SPEED_L1, ACC_WEIGHTED_VEL2, ACC_WEIGHTED_W,
    DESCENT_T1_THRESHOLD, FLATNESS_MAX,
};
use crate::harness::config::{CompiledScenario, TheoremTag};
use crate::integrate::{Trajectory, TrajectorySample};
use crate::potentials::minimizer_samples;
use crate::Result;

/// Strong-convergence tail threshold for the T3/T4 verdicts.
pub const CAUCHY_TAIL_MAX: f64 = 1e-3;
/// Final-decade oscillation allowed for the limit of ||x(t)|| (T4).
pub const NORM_OSC_MAX: f64 = 1e-3;

fn check_from_rate(name: &str, rc: &RateCheck) -> CheckResult {
    CheckResult {
        name: name.into(),
        outcome: rc.outcome,
        statistic: rc.statistic,
        threshold: Some(rc.threshold),
        detail: rc.detail.clone(),
    }
}

fn check_from_flatness(name: &str, f: &Flatness) -> CheckResult {
    CheckResult {
        name: name.into(),
        outcome: VerdictOutcome::from_bool(f.finite),
        statistic: Some(f.ratio),
        threshold: Some(FLATNESS_MAX),
        detail: format!("value(T)={:.6e}, value(T/10)={:.6e}", f.value_end, f.value_tenth),
    }
}

fn accumulator_history(samples: &[TrajectorySample], idx: usize) -> Vec<(f64, f64)> {
    samples.iter().map(|s| (s.t, s.accumulators.0[idx])).collect()
}

fn verdict_outcome(checks: &[CheckResult]) -> VerdictOutcome {
    if checks.iter().any(|c| c.outcome.is_fail()) {
        VerdictOutcome::Fail
    } else if checks.iter().all(|c| c.outcome == VerdictOutcome::NotApplicable) {
        VerdictOutcome::NotApplicable
    } else {
        VerdictOutcome::Pass
    }
}

/// Builds the full diagnostics report for a finished (or aborted) run.
pub fn build_report(scenario: &CompiledScenario, traj: &Trajectory, table: &HTable) -> DiagnosticsReport {
    let samples = &traj.samples;
    let completed = traj.status.is_completed();
    let alpha = scenario.schedule.alpha();
    let t_end = scenario.config.t_end;

    let mut verdicts = Vec::new();
    let mut oscillations = Vec::new();

    for tag in &scenario.tags {
        let mut checks = Vec::new();
        if !completed {
            verdicts.push(TheoremVerdict {
                theorem: tag.label(),
                outcome: VerdictOutcome::NotApplicable,
                checks: vec![CheckResult {
                    name: "run_completed".into(),
                    outcome: VerdictOutcome::NotApplicable,
                    statistic: None,
                    threshold: None,
                    detail: traj.status.describe(),
                }],
            });
            continue;
        }
        match tag {
            TheoremTag::T1 => {
                checks.push(check_from_rate("envelope_t2a_W", &envelope_bound_check(samples, 2.0 * alpha)));
                if let Ok(f) = accumulator_flatness(&accumulator_history(samples, ACC_WEIGHTED_W)) {
                    checks.push(check_from_flatness("finiteness_I_alphaW", &f));
                }
                let m1 = running_sup_stabilization(samples, |s| s.anchor_norm);
                checks.push(CheckResult {
                    name: "m1_sup_stabilized".into(),
                    outcome: VerdictOutcome::from_bool(m1.stabilized),
                    statistic: Some(m1.sup_all),
                    threshold: None,
                    detail: format!("sup before final decade {:.6e}", m1.sup_before_final_decade),
                });
                let hw = running_sup_stabilization(samples, |s| {
                    let h = table.value(s.t.min(table.t_end()));
                    h * h * s.w
                });
                checks.push(CheckResult {
                    name: "h2w_sup_stabilized".into(),
                    outcome: VerdictOutcome::from_bool(hw.stabilized),
                    statistic: Some(hw.sup_all),
                    threshold: None,
                    detail: format!("sup before final decade {:.6e}", hw.sup_before_final_decade),
                });

                let descent = lyapunov_descent_check(samples, table, DESCENT_T1_THRESHOLD);
                checks.push(CheckResult {
                    name: "lyapunov_descent".into(),
                    outcome: descent.outcome,
                    statistic: Some(descent.worst_margin),
                    threshold: Some(0.0),
                    detail: format!("t1 = {:?}, {} intervals", descent.t1, descent.intervals),
                });

                match minimizer_samples(&scenario.potential, 3) {
                    Ok(mins) => {
                        let opial = opial_distance_check(samples, &mins.points);
                        checks.push(CheckResult {
                            name: "opial_distances".into(),
                            outcome: opial.outcome,
                            statistic: opial.oscillations.iter().map(|o| o.oscillation).fold(None, |a: Option<f64>, v| {
                                Some(a.map_or(v, |x| x.max(v)))
                            }),
                            threshold: opial.oscillations.first().map(|o| o.threshold),
                            detail: format!("{} minimizers, singleton={}", opial.oscillations.len(), mins.singleton),
                        });
                        oscillations.extend(opial.oscillations.iter().map(|o| OscillationReport {
                            minimizer_index: o.minimizer_index,
                            initial_distance: o.initial_distance,
                            oscillation: o.oscillation,
                            threshold: o.threshold,
                            within: o.within,
                        }));
                    }
                    Err(e) => checks.push(CheckResult {
                        name: "opial_distances".into(),
                        outcome: VerdictOutcome::NotApplicable,
                        statistic: None,
                        threshold: None,
                        detail: format!("minimizer sampling failed: {e}"),
                    }),
                }
            }
            TheoremTag::T2 { nu } => {
                checks.push(check_from_rate("decay_rho_2nu", &decay_to_zero_check(samples, 2.0 * nu)));
                if let Ok(f) = accumulator_flatness(&accumulator_history(samples, ACC_WEIGHTED_VEL2)) {
                    checks.push(check_from_flatness("finiteness_I_vel2", &f));
                }
            }
            TheoremTag::T3 => {
                checks.push(cauchy_check(samples, t_end));
                if let Ok(f) = accumulator_flatness(&accumulator_history(samples, ACC_GRAD_OVER_GAMMA)) {
                    checks.push(check_from_flatness("finiteness_I_gradgamma", &f));
                }
                if let Ok(f) = accumulator_flatness(&accumulator_history(samples, ACC_SPEED_L1)) {
                    checks.push(check_from_flatness("finiteness_I_vL1", &f));
                }
            }
            TheoremTag::T4 => {
                checks.push(cauchy_check(samples, t_end));
                checks.push(norm_limit_check(samples));
            }
        }
        verdicts.push(TheoremVerdict { theorem: tag.label(), outcome: verdict_outcome(&checks), checks });
    }

    // builtin sanity verdicts, independent of the declared tags
    if samples.len() >= 2 {
        if scenario.source.is_zero() {
            let mono = energy_monotonicity_check(samples);
            verdicts.push(TheoremVerdict {
                theorem: "energy_monotonicity".into(),
                outcome: mono.outcome,
                checks: vec![CheckResult {
                    name: "W_nonincreasing".into(),
                    outcome: mono.outcome,
                    statistic: Some(mono.worst_rate),
                    threshold: Some(mono.tolerance_rate),
                    detail: "max (dW/dt)+ across checkpoint intervals".into(),
                }],
            });
        }
        let bal = energy_balance_check(samples);
        let kb = perturbation_inequality_check(samples);
        let checks = vec![
            CheckResult {
                name: "integral_identity".into(),
                outcome: bal.outcome,
                statistic: Some(bal.worst_rate),
                threshold: Some(bal.tolerance_rate),
                detail: "max |dW + dQ_dissipation - dQ_work| / dt".into(),
            },
            CheckResult {
                name: "perturbation_bound".into(),
                outcome: kb.outcome,
                statistic: Some(kb.worst_rate),
                threshold: Some(kb.tolerance_rate),
                detail: "dW <= ∫||g||sqrt(2W) + tol per interval".into(),
            },
        ];
        verdicts.push(TheoremVerdict {
            theorem: "energy_balance".into(),
            outcome: verdict_outcome(&checks),
            checks,
        });
    }

    let fit = fit_power_law(samples, |s| s.w);
    let exponent_fits = vec![ExponentFitReport {
        field: "W".into(),
        exponent: fit.exponent,
        residual: fit.residual,
        power_law: fit.power_law,
        detail: fit.detail.clone(),
    }];

    let names = AccumulatorBank::names();
    let accumulators = (0..ACCUMULATOR_COUNT)
        .filter_map(|idx| {
            accumulator_flatness(&accumulator_history(samples, idx)).ok().map(|f| AccumulatorReport {
                name: names[idx].into(),
                final_value: f.value_end,
                value_at_tenth: f.value_tenth,
                flatness_ratio: f.ratio,
                finite: f.finite,
            })
        })
        .collect();

    let cauchy = cauchy_tail(samples, t_end / 10.0)
        .ok()
        .map(|value| CauchyTailReport { from_t: t_end / 10.0, value });

    DiagnosticsReport {
        scenario: scenario.config.name.clone(),
        status: traj.status.describe(),
        verdicts,
        exponent_fits,
        accumulators,
        oscillations,
        cauchy_tail: cauchy,
    }
}

fn cauchy_check(samples: &[TrajectorySample], t_end: f64) -> CheckResult {
    match cauchy_tail(samples, t_end / 10.0) {
        Ok(v) => CheckResult {
            name: "cauchy_tail".into(),
            outcome: VerdictOutcome::from_bool(v < CAUCHY_TAIL_MAX),
            statistic: Some(v),
            threshold: Some(CAUCHY_TAIL_MAX),
            detail: format!("pairs with t >= {:.3e}", t_end / 10.0),
        },
        Err(e) => CheckResult {
            name: "cauchy_tail".into(),
            outcome: VerdictOutcome::NotApplicable,
            statistic: None,
            threshold: Some(CAUCHY_TAIL_MAX),
            detail: e.to_string(),
        },
    }
}

/// Oscillation of ||x(t)|| over the final decade (existence of the limit).
fn norm_limit_check(samples: &[TrajectorySample]) -> CheckResult {
    let Some(last) = samples.last() else {
        return CheckResult {
            name: "norm_limit".into(),
            outcome: VerdictOutcome::NotApplicable,
            statistic: None,
            threshold: Some(NORM_OSC_MAX),
            detail: "empty trajectory".into(),
        };
    };
    let t_lo = last.t / 10.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in samples.iter().filter(|s| s.t >= t_lo) {
        let n = s.x.norm();
        lo = lo.min(n);
        hi = hi.max(n);
    }
    let osc = hi - lo;
    CheckResult {
        name: "norm_limit".into(),
        outcome: VerdictOutcome::from_bool(osc < NORM_OSC_MAX),
        statistic: Some(osc),
        threshold: Some(NORM_OSC_MAX),
        detail: format!("oscillation of ||x|| over [{t_lo:.3e}, {:.3e}]", last.t),
    }
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| crate::Error::Io(e.error))?;
    Ok(())
}

/// CSV trace: one row per checkpoint, full float precision (shortest
/// round-trip formatting).
pub fn trace_csv(scenario: &CompiledScenario, samples: &[TrajectorySample]) -> String {
    let alpha = scenario.schedule.alpha();
    let x_star = scenario.potential.canonical_minimizer();
    let mut out = String::with_capacity(samples.len() * 128);
    out.push_str("t,W,t2a_W,E,M1_anchor,I_alphaW,I_vel2,I_gradgamma,I_vL1,dist_xstar\n");
    for s in samples {
        let t2a_w = s.t.powf(2.0 * alpha) * s.w;
        let dist = (&s.x - x_star).norm();
        let a = &s.accumulators.0;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.t, s.w, t2a_w, s.e_lyap, s.anchor_norm, a[0], a[1], a[ACC_GRAD_OVER_GAMMA], a[ACC_SPEED_L1], dist
        ));
    }
    out
}
