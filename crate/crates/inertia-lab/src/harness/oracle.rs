//! Closed-form cross-checks for the integrators.
//!
//! Constant damping (`alpha = 0`) makes the linear test problems solvable in
//! closed form; these checks pin the adaptive solver, the fixed-step
//! reference, and their agreement against those solutions.

use nalgebra::DVector;

use crate::damping::{build_h_table, recommended_nodes, DampingSchedule};
use crate::forcing::SourceTerm;
use crate::integrate::{
    integrate, integrate_reference, log_checkpoint_grid, RunContext, SolverSettings,
};
use crate::potentials::Potential;
use crate::Result;

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

/// `x'' + c x' + x = 0` with distinct real roots, `x(0)=x0`, `x'(0)=v0`.
fn linear_solution(c: f64, x0: f64, v0: f64, t: f64) -> (f64, f64) {
    let disc = (c * c - 4.0).sqrt();
    let r1 = (-c + disc) / 2.0;
    let r2 = (-c - disc) / 2.0;
    let a = (v0 - r2 * x0) / (r1 - r2);
    let b = (r1 * x0 - v0) / (r1 - r2);
    (a * (r1 * t).exp() + b * (r2 * t).exp(), a * r1 * (r1 * t).exp() + b * r2 * (r2 * t).exp())
}

/// Runs every closed-form cross-check; all are expected to pass on a healthy
/// build.
pub fn run_oracle_checks() -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::new();

    // --- damped linear oscillator, c = 3, lambda = 1 -----------------------
    {
        let sched = DampingSchedule::new(3.0, 0.0)?;
        let pot = Potential::quadratic(nalgebra::DMatrix::identity(1, 1), DVector::zeros(1))?;
        let src = SourceTerm::zero(1)?;
        let table = build_h_table(&sched, 40.0, recommended_nodes(&sched, 40.0))?;
        let anchor = pot.canonical_minimizer().clone();
        let ctx = RunContext {
            schedule: &sched,
            potential: &pot,
            source: &src,
            h_table: &table,
            anchor: &anchor,
            nu: 0.0,
        };
        let mut grid = log_checkpoint_grid(0.1, 60, 10.0)?;
        grid.extend_from_slice(&[1.0, 5.0]);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let settings = SolverSettings::new(1e-12, 1e-15, f64::INFINITY, grid)?;
        let x0 = DVector::from_vec(vec![1.0]);
        let v0 = DVector::zeros(1);
        let traj = integrate(&ctx, &x0, &v0, &settings)?;

        let mut worst = 0.0f64;
        for &t in &[1.0, 5.0, 10.0] {
            let s = traj
                .samples
                .iter()
                .find(|s| s.t == t)
                .ok_or_else(|| crate::Error::Numeric(format!("missing checkpoint t={t}")))?;
            let (xe, _) = linear_solution(3.0, 1.0, 0.0, t);
            worst = worst.max(((s.x[0] - xe) / xe).abs());
        }
        checks.push(OracleCheck {
            name: "adaptive_vs_linear_closed_form".into(),
            statistic: worst,
            tolerance: 1e-8,
            passed: worst < 1e-8,
            detail: "x'' + 3x' + x = 0, roots (-3 ± sqrt5)/2, t in {1, 5, 10}".into(),
        });

        // fixed-step reference against the same closed form, plus Richardson
        let a = integrate_reference(&sched, &pot, &src, &x0, &v0, 10.0, 50_000)?;
        let (xe, ve) = linear_solution(3.0, 1.0, 0.0, 10.0);
        let err = ((a.x[0] - xe).powi(2) + (a.v[0] - ve).powi(2)).sqrt() / (xe.abs() + ve.abs());
        checks.push(OracleCheck {
            name: "reference_vs_linear_closed_form".into(),
            statistic: err,
            tolerance: 1e-10,
            passed: err < 1e-10,
            detail: "classical 4th-order, 5e4 steps to t = 10".into(),
        });

        let b = integrate_reference(&sched, &pot, &src, &x0, &v0, 10.0, 100_000)?;
        let diff = ((&a.x - &b.x).norm() + (&a.v - &b.v).norm()) / (1.0 + b.x.norm() + b.v.norm());
        checks.push(OracleCheck {
            name: "reference_step_doubling".into(),
            statistic: diff,
            tolerance: 1e-10,
            passed: diff < 1e-10,
            detail: "final state shift under n_steps doubling".into(),
        });

        let last = traj.samples.iter().find(|s| s.t == 10.0).unwrap();
        let cross = ((last.x[0] - b.x[0]).abs() + (last.v[0] - b.v[0]).abs())
            / (1.0 + b.x.norm() + b.v.norm());
        let tol = 10.0 * settings.rel_tol;
        checks.push(OracleCheck {
            name: "adaptive_vs_reference".into(),
            statistic: cross,
            tolerance: tol,
            passed: cross < tol,
            detail: "solver cross-validation at t = 10".into(),
        });
    }

    // --- pure friction ------------------------------------------------------
    {
        let sched = DampingSchedule::new(1.0, 0.0)?;
        let pot = Potential::zero(1)?;
        let src = SourceTerm::zero(1)?;
        let table = build_h_table(&sched, 40.0, recommended_nodes(&sched, 40.0))?;
        let anchor = DVector::zeros(1);
        let ctx = RunContext {
            schedule: &sched,
            potential: &pot,
            source: &src,
            h_table: &table,
            anchor: &anchor,
            nu: 0.0,
        };
        let settings = SolverSettings::new(1e-13, 1e-16, f64::INFINITY, log_checkpoint_grid(0.1, 60, 10.0)?)?;
        let traj = integrate(&ctx, &DVector::zeros(1), &DVector::from_vec(vec![1.0]), &settings)?;
        let s = traj.final_sample().unwrap();
        let xe = 1.0 - (-10.0f64).exp();
        let ve = (-10.0f64).exp();
        let worst = ((s.x[0] - xe) / xe).abs().max(((s.v[0] - ve) / ve).abs());
        checks.push(OracleCheck {
            name: "pure_friction_closed_form".into(),
            statistic: worst,
            tolerance: 1e-8,
            passed: worst < 1e-8,
            detail: "v = e^{-t}, x = 1 - e^{-t} at t = 10".into(),
        });
    }

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_oracle_checks_pass() {
        for check in run_oracle_checks().unwrap() {
            assert!(check.passed, "{}: {:.3e} (tol {:.1e})", check.name, check.statistic, check.tolerance);
        }
    }
}
