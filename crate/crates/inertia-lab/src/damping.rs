//! Vanishing damping schedule `gamma(t) = c/(1+t)^alpha` and the auxiliary
//! function `h`.
//!
//! `h` is defined by
//!
//! ```text
//!     h(t) = e^{Gamma(t)} ∫_t^∞ e^{-Gamma(s)} ds,   Gamma(t) = ∫_0^t gamma(s) ds,
//! ```
//!
//! and satisfies the linear ODE `h'(t) - gamma(t) h(t) + 1 = 0` together with
//! `h(t) ~ 1/gamma(t)` as `t -> ∞`. Integrating that ODE forward amplifies
//! errors by `e^{Gamma(t)}` (the unstable homogeneous mode), so the table is
//! built by integrating *backward* from a seed far beyond the horizon, where
//! the asymptotic expansion of `h` is accurate; backward integration is
//! contractive and wipes out the seed error exponentially.

use crate::{Error, Result};

/// Ratio between the backward-integration start `T*` and the table horizon.
const SEED_FACTOR: f64 = 4.0;

/// Relative/absolute tolerances for the backward RK4 pass.
const BACKWARD_REL_TOL: f64 = 1e-12;
const BACKWARD_ABS_TOL: f64 = 1e-14;

/// Maximum allowed ODE residual of the tabulated h at interior grid nodes.
const RESIDUAL_TOL: f64 = 1e-6;

/// Damping schedule `gamma(t) = c/(1+t)^alpha` with `c > 0`, `alpha in [0,1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingSchedule {
    c: f64,
    alpha: f64,
}

impl DampingSchedule {
    pub fn new(c: f64, alpha: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("damping magnitude c must be positive and finite, got {c}")));
        }
        if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
            return Err(Error::Config(format!("decay exponent alpha must lie in [0,1), got {alpha}")));
        }
        Ok(Self { c, alpha })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `gamma(t) = c/(1+t)^alpha`, unchecked (callers guarantee `t >= 0`).
    #[inline]
    pub(crate) fn gamma(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        self.c / (1.0 + t).powf(self.alpha)
    }

    /// `gamma'(t) = -alpha*c/(1+t)^(alpha+1)`.
    #[inline]
    pub(crate) fn gamma_prime(&self, t: f64) -> f64 {
        -self.alpha * self.c / (1.0 + t).powf(self.alpha + 1.0)
    }

    /// Closed-form antiderivative `Gamma(t) = c((1+t)^(1-alpha) - 1)/(1-alpha)`.
    ///
    /// The formula also covers `alpha = 0`, where it reduces to `c*t`.
    #[inline]
    pub(crate) fn gamma_integral(&self, t: f64) -> f64 {
        let e = 1.0 - self.alpha;
        self.c * ((1.0 + t).powf(e) - 1.0) / e
    }
}

/// Damping coefficient at time `t`.
pub fn gamma_at(sched: &DampingSchedule, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("gamma is defined for t >= 0, got {t}")));
    }
    Ok(sched.gamma(t))
}

/// Exact antiderivative `Gamma(t)` of the damping coefficient; no quadrature.
pub fn big_gamma_at(sched: &DampingSchedule, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("Gamma is defined for t >= 0, got {t}")));
    }
    Ok(sched.gamma_integral(t))
}

/// Tabulated auxiliary function `h` on a log-spaced grid over `[0, t_end]`.
#[derive(Debug, Clone)]
pub struct HTable {
    schedule: DampingSchedule,
    grid: Vec<f64>,
    values: Vec<f64>,
    t_end: f64,
    /// Log-spacing of the grid in `ln(1+t)`, cached for O(1) node lookup.
    log_step: f64,
}

impl HTable {
    pub fn schedule(&self) -> &DampingSchedule {
        &self.schedule
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Builds a table from explicit nodes and values.
    ///
    /// Intended for synthetic tables in tests and calibration; only shape and
    /// positivity are checked, not the ODE residual.
    pub fn from_tabulated(schedule: DampingSchedule, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 4 {
            return Err(Error::Config(format!(
                "table needs matching grid/values with at least 4 nodes, got {}/{}",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] != 0.0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid must start at 0 and be strictly increasing".into()));
        }
        if values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::Numeric("h table values must be positive and finite".into()));
        }
        let t_end = *grid.last().unwrap();
        let log_step = (1.0 + t_end).ln() / (grid.len() - 1) as f64;
        Ok(Self { schedule, grid, values, t_end, log_step })
    }

    /// Interpolated `h(t)`, unchecked fast path (callers guarantee range).
    #[inline]
    pub(crate) fn value(&self, t: f64) -> f64 {
        debug_assert!((0.0..=self.t_end * (1.0 + 1e-12)).contains(&t));
        let n = self.grid.len();
        // Nodes are log-spaced in ln(1+t); invert to locate the interval,
        // then nudge to be safe against rounding.
        let mut i = (((1.0 + t).ln() / self.log_step) as usize).min(n - 2);
        while i > 0 && t < self.grid[i] {
            i -= 1;
        }
        while i + 2 < n && t >= self.grid[i + 1] {
            i += 1;
        }
        // Cubic Lagrange through the four nodes surrounding [t_i, t_{i+1}];
        // exact at nodes and reproduces any cubic (hence linear) data.
        let lo = i.saturating_sub(1).min(n - 4);
        let ts = &self.grid[lo..lo + 4];
        let ys = &self.values[lo..lo + 4];
        let mut acc = 0.0;
        for j in 0..4 {
            let mut w = ys[j];
            for m in 0..4 {
                if m != j {
                    w *= (t - ts[m]) / (ts[j] - ts[m]);
                }
            }
            acc += w;
        }
        acc
    }

    /// Maximum of `|h' - gamma*h + 1|` over interior nodes, with `h'` taken
    /// from the second-order finite difference on the (nonuniform) grid.
    pub fn ode_residual_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 1..self.grid.len() - 1 {
            let dm = self.grid[i] - self.grid[i - 1];
            let dp = self.grid[i + 1] - self.grid[i];
            let fd = (dm * dm * self.values[i + 1] + (dp * dp - dm * dm) * self.values[i]
                - dp * dp * self.values[i - 1])
                / (dm * dp * (dm + dp));
            let residual = fd - self.schedule.gamma(self.grid[i]) * self.values[i] + 1.0;
            worst = worst.max(residual.abs());
        }
        worst
    }
}

/// Interpolated `h(t)` for `t` in `[0, t_end]`; exact at grid nodes.
pub fn h_at(table: &HTable, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0 && t <= table.t_end * (1.0 + 1e-12)) {
        return Err(Error::Range { t, t_end: table.t_end });
    }
    Ok(table.value(t.min(table.t_end)))
}

/// `h'(t)` through the defining ODE, `h' = gamma*h - 1`, not finite differences.
pub fn h_prime_at(table: &HTable, t: f64) -> Result<f64> {
    let h = h_at(table, t)?;
    Ok(table.schedule.gamma(t.min(table.t_end)) * h - 1.0)
}

/// Node count for which the finite-difference ODE residual stays safely
/// below the table tolerance on `[0, t_end]`.
///
/// The residual of the second-order difference on the log grid is
/// `~ alpha(1-alpha)(2-alpha)/(6c) * du^2` at its worst (near t = 0); this
/// solves for `du` with an 8x safety margin.
pub fn recommended_nodes(sched: &DampingSchedule, t_end: f64) -> usize {
    let a = sched.alpha * (1.0 - sched.alpha) * (2.0 - sched.alpha) / (6.0 * sched.c);
    let span = (1.0 + t_end.max(10.0)).ln();
    if a < 1e-12 {
        return 256;
    }
    let du = (RESIDUAL_TOL / (8.0 * a)).sqrt();
    ((span / du).ceil() as usize + 2).clamp(256, 200_000)
}

/// Tabulates `h` on `[0, t_end]` by backward integration of `h' = gamma*h - 1`.
///
/// The pass starts at `T* = 4*t_end` from the first-order asymptotic seed
/// `h(T*) = (1 + gamma'(T*)/gamma(T*)^2)/gamma(T*)` and steps down to 0 with
/// an adaptive classical fourth-order method (step-doubling control), landing
/// exactly on the log-spaced grid nodes.
pub fn build_h_table(sched: &DampingSchedule, t_end: f64, n_nodes: usize) -> Result<HTable> {
    build_h_table_with_seed_factor(sched, t_end, n_nodes, SEED_FACTOR)
}

pub(crate) fn build_h_table_with_seed_factor(
    sched: &DampingSchedule,
    t_end: f64,
    n_nodes: usize,
    seed_factor: f64,
) -> Result<HTable> {
    if !(t_end.is_finite() && t_end >= 10.0) {
        return Err(Error::Config(format!("h table horizon must satisfy t_end >= 10, got {t_end}")));
    }
    if n_nodes < 100 {
        return Err(Error::Config(format!("h table needs at least 100 nodes, got {n_nodes}")));
    }

    // Log-spaced nodes in (1+t): dense near 0 where h varies fastest.
    let span = (1.0 + t_end).ln();
    let log_step = span / (n_nodes - 1) as f64;
    let grid: Vec<f64> = (0..n_nodes)
        .map(|i| {
            if i == n_nodes - 1 {
                t_end
            } else {
                (log_step * i as f64).exp_m1()
            }
        })
        .collect();

    // First-order asymptotic seed. Integration by parts of the defining
    // integral gives h = (1/gamma)(1 - gamma'/gamma^2) + O((gamma'/gamma^2)^2),
    // and gamma' < 0, so h approaches 1/gamma from above. Backward
    // contraction wipes out the remaining seed error exponentially.
    let t_star = seed_factor * t_end;
    let g = sched.gamma(t_star);
    let seed = (1.0 - sched.gamma_prime(t_star) / (g * g)) / g;

    let mut values = vec![0.0; n_nodes];
    let mut t = t_star;
    let mut h = seed;
    // Suggested (positive) step magnitude, adapted as we go.
    let mut dt = 0.05 * (1.0 + t_star);

    let rhs = |t: f64, h: f64| sched.gamma(t) * h - 1.0;
    let rk4 = |t: f64, h: f64, step: f64| {
        let k1 = rhs(t, h);
        let k2 = rhs(t + 0.5 * step, h + 0.5 * step * k1);
        let k3 = rhs(t + 0.5 * step, h + 0.5 * step * k2);
        let k4 = rhs(t + step, h + step * k3);
        h + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };

    let mut next_node = n_nodes; // index of the next node to record, counting down
    let mut guard = 0usize;
    while next_node > 0 {
        guard += 1;
        if guard > 50_000_000 {
            return Err(Error::Numeric("backward h integration failed to advance".into()));
        }
        let target = grid[next_node - 1];
        let mut step = dt.min(t - target);
        let clamped = step >= t - target - 1e-300;
        loop {
            let s = -step;
            let full = rk4(t, h, s);
            let half = rk4(t + 0.5 * s, rk4(t, h, 0.5 * s), 0.5 * s);
            let err = (half - full).abs() / 15.0;
            let tol = BACKWARD_ABS_TOL + BACKWARD_REL_TOL * half.abs();
            if err <= tol || step <= 1e-13 * (1.0 + t) {
                t -= step;
                // Fifth-order local extrapolation comes free with step doubling.
                h = half + (half - full) / 15.0;
                if !h.is_finite() {
                    return Err(Error::Numeric(format!("h became nonfinite during backward pass at t={t}")));
                }
                if !clamped {
                    dt = step * (0.9 * (tol / err.max(1e-300)).powf(0.2)).clamp(0.3, 4.0);
                }
                break;
            }
            step *= 0.5 * (tol / err).powf(0.2).max(0.1);
        }
        if clamped {
            t = target;
            values[next_node - 1] = h;
            next_node -= 1;
        }
    }

    let table = HTable {
        schedule: *sched,
        grid,
        values,
        t_end,
        log_step,
    };

    if table.values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::Numeric("h table produced nonpositive values".into()));
    }
    let residual = table.ode_residual_max();
    if residual > RESIDUAL_TOL {
        return Err(Error::Config(format!(
            "h table residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}; \
             use at least {} nodes for this schedule and horizon",
            recommended_nodes(sched, t_end)
        )));
    }
    // gamma*h -> 1 at the far end of the table, within twice the first-order
    // asymptotic correction |gamma'|/gamma^2.
    let ge = sched.gamma(t_end);
    let drift = (ge * table.values[n_nodes - 1] - 1.0).abs();
    let allowance = 2.0 * sched.gamma_prime(t_end).abs() / (ge * ge) + 1e-12;
    if drift > allowance {
        return Err(Error::Numeric(format!(
            "gamma*h at t_end drifted from 1 by {drift:.3e} (allowance {allowance:.3e})"
        )));
    }
    Ok(table)
}
