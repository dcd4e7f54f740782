//! Theorem-facing quantities and verdicts.
//!
//! Everything the convergence theory predicts about a trajectory is computed
//! here: the energy
//!
//! ```text
//!     W(t) = 1/2 ||v||^2 + Phi(x) - Phi*,
//! ```
//!
//! the anchored Lyapunov function
//!
//! ```text
//!     E(t) = 2 h(t)^2 (Phi(x) - Phi*) + ||x - x* + h(t) v||^2
//!            - 2 ∫_0^t h <g, x - x* + h v> ds,
//! ```
//!
//! the weighted running integrals whose finiteness the theorems assert, decay
//! rate fits on log-log grids, Opial distance oscillations, and Cauchy tails.
//!
//! Asymptotic statements (`O(.)`, `o(.)`, "the limit exists") are
//! operationalised as desk-scale checks over the checkpoint grid: bounded
//! running-max ratios across decades for `O`, shrinking decade medians for
//! `o`, and final-decade oscillations for limits. Every verdict carries the
//! raw statistic and threshold it was derived from.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::damping::{DampingSchedule, HTable};
use crate::forcing::SourceTerm;
use crate::integrate::{State, TrajectorySample};
use crate::potentials::Potential;
use crate::{Error, Result};

/// Number of named running integrals carried by every run.
pub const ACCUMULATOR_COUNT: usize = 7;

/// Trajectory burn-in before any rate statistic: transients from the initial
/// data dominate earlier, and the theorems are asymptotic.
pub const RATE_BURN_IN: f64 = 10.0;

/// Running-max ratio allowed across decades by the envelope (`O(.)`) check.
pub const ENVELOPE_RATIO_MAX: f64 = 1.2;

/// Final/reference decade median ratio required by the `o(.)` check.
pub const DECAY_MEDIAN_RATIO_MAX: f64 = 0.25;

/// Tail-to-head ratio below which a running integral counts as finite.
pub const FLATNESS_MAX: f64 = 0.05;

/// Threshold on `2h'(t) - 1` that fixes the Lyapunov descent start `t1`.
/// The exact statement only gives `2h' - 1 -> -1`; the midpoint makes `t1`
/// finite and small for every catalog schedule.
pub const DESCENT_T1_THRESHOLD: f64 = -0.5;

/// Per-interval quadrature allowance (times interval length) in the descent
/// and perturbation-inequality checks.
pub const QUAD_TOL_RATE: f64 = 1e-6;

/// Allowed upward drift rate of W between checkpoints when g = 0.
pub const MONOTONE_RATE_TOL: f64 = 1e-9;

/// Allowed residual rate of the integral energy-balance identity.
pub const BALANCE_RATE_TOL: f64 = 1e-7;

/// RMS log-residual above which a fitted slope is flagged non-power-law.
pub const POWER_LAW_RESIDUAL_MAX: f64 = 0.1;

// ---------------------------------------------------------------------------
// Pointwise quantities
// ---------------------------------------------------------------------------

/// Energy `W = 1/2 ||v||^2 + Phi(x) - Phi*` (nonnegative by construction).
pub fn energy_w(pot: &Potential, state: &State) -> f64 {
    0.5 * state.v.norm_squared() + pot.phi_gap(&state.x)
}

/// Anchored Lyapunov value
/// `E = 2 h^2 (Phi(x)-Phi*) + ||x - x* + h v||^2 - 2 * integral_term`.
pub fn lyapunov_e(
    h_val: f64,
    pot: &Potential,
    state: &State,
    x_star: &DVector<f64>,
    integral_term: f64,
) -> f64 {
    let anchor = anchored_momentum(h_val, state, x_star);
    2.0 * h_val * h_val * pot.phi_gap(&state.x) + anchor * anchor - 2.0 * integral_term
}

/// `||x - x* + h v||`; its running supremum is the constant `M1`.
pub fn anchored_momentum(h_val: f64, state: &State, x_star: &DVector<f64>) -> f64 {
    (&state.x - x_star + &state.v * h_val).norm()
}

// ---------------------------------------------------------------------------
// Accumulators
// ---------------------------------------------------------------------------

/// Weight applied to an accumulator integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `(1+t)^nu`.
    PowerOfOnePlusT(f64),
    /// The auxiliary function `h(t)`.
    AuxH,
    /// `1/gamma(t)`.
    InvGamma,
}

/// Integrand of an accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    EnergyW,
    SpeedSquared,
    GradNorm,
    PhiGap,
    Speed,
    /// `<g, x - x* + h v>` (the Lyapunov forcing correction).
    ForcingAnchor,
}

/// One running integral, advanced by trapezoid on accepted solver steps.
#[derive(Debug, Clone)]
pub struct Accumulator {
    pub name: &'static str,
    pub weight: Weight,
    pub integrand: Integrand,
    pub value: f64,
}

/// Scalar snapshot of a trajectory point, precomputed once per solver step so
/// each accumulator evaluation is a couple of flops.
#[derive(Debug, Clone, Copy)]
pub struct SampleContext {
    pub t: f64,
    pub w: f64,
    pub phi_gap: f64,
    pub grad_norm: f64,
    pub speed: f64,
    pub speed_sq: f64,
    pub gamma: f64,
    pub h: f64,
    /// `<g(t), x - x* + h v>`.
    pub forcing_anchor: f64,
    /// `||g(t)||`.
    pub g_norm: f64,
}

impl SampleContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sched: &DampingSchedule,
        table: &HTable,
        pot: &Potential,
        src: &SourceTerm,
        x_star: &DVector<f64>,
        t: f64,
        x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Self {
        let phi_gap = pot.phi_gap(x);
        let speed_sq = v.norm_squared();
        let h = table.value(t.min(table.t_end()));
        let g_profile = src.profile(t);
        let (forcing_anchor, g_norm) = match src.direction() {
            None => (0.0, 0.0),
            Some(d) => {
                let anchor = x - x_star + v * h;
                (g_profile * d.dot(&anchor), g_profile.abs())
            }
        };
        Self {
            t,
            w: 0.5 * speed_sq + phi_gap,
            phi_gap,
            grad_norm: pot.grad(x).norm(),
            speed: speed_sq.sqrt(),
            speed_sq,
            gamma: sched.gamma(t),
            h,
            forcing_anchor,
            g_norm,
        }
    }
}

impl Accumulator {
    fn rate(&self, ctx: &SampleContext) -> f64 {
        let w = match self.weight {
            Weight::PowerOfOnePlusT(nu) => (1.0 + ctx.t).powf(nu),
            Weight::AuxH => ctx.h,
            Weight::InvGamma => 1.0 / ctx.gamma,
        };
        let f = match self.integrand {
            Integrand::EnergyW => ctx.w,
            Integrand::SpeedSquared => ctx.speed_sq,
            Integrand::GradNorm => ctx.grad_norm,
            Integrand::PhiGap => ctx.phi_gap,
            Integrand::Speed => ctx.speed,
            Integrand::ForcingAnchor => ctx.forcing_anchor,
        };
        w * f
    }

    /// Trapezoid advance over one accepted step.
    pub fn advance(&mut self, prev: &SampleContext, next: &SampleContext) {
        self.value += 0.5 * (next.t - prev.t) * (self.rate(prev) + self.rate(next));
    }
}

/// Index layout of [`AccumulatorBank`] and [`AccumulatorValues`].
pub const ACC_WEIGHTED_W: usize = 0;
pub const ACC_WEIGHTED_VEL2: usize = 1;
pub const ACC_H_PHI_GAP: usize = 2;
pub const ACC_H_VEL2: usize = 3;
pub const ACC_GRAD_OVER_GAMMA: usize = 4;
pub const ACC_SPEED_L1: usize = 5;
pub const ACC_LYAP_FORCING: usize = 6;

/// The seven named running integrals every run carries:
/// `∫(1+t)^alpha W`, `∫(1+t)^(2nu-alpha) ||v||^2`, `∫h (Phi-Phi*)`,
/// `∫h ||v||^2`, `∫(1/gamma)||grad Phi||`, `∫||v||`, and the Lyapunov
/// forcing correction `∫h <g, x-x*+hv>`.
#[derive(Debug, Clone)]
pub struct AccumulatorBank {
    accs: [Accumulator; ACCUMULATOR_COUNT],
}

/// Per-checkpoint snapshot of the bank.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AccumulatorValues(pub [f64; ACCUMULATOR_COUNT]);

impl AccumulatorBank {
    /// Standard bank for a schedule with exponent `alpha` and a declared
    /// energy-decay exponent `nu` (defaults to `alpha` when no rate theorem
    /// is under test).
    pub fn standard(alpha: f64, nu: f64) -> Self {
        let acc = |name, weight, integrand| Accumulator { name, weight, integrand, value: 0.0 };
        Self {
            accs: [
                acc("I_alphaW", Weight::PowerOfOnePlusT(alpha), Integrand::EnergyW),
                acc("I_vel2", Weight::PowerOfOnePlusT(2.0 * nu - alpha), Integrand::SpeedSquared),
                acc("I_hPhi", Weight::AuxH, Integrand::PhiGap),
                acc("I_hvel2", Weight::AuxH, Integrand::SpeedSquared),
                acc("I_gradgamma", Weight::InvGamma, Integrand::GradNorm),
                acc("I_vL1", Weight::PowerOfOnePlusT(0.0), Integrand::Speed),
                acc("I_lyapforce", Weight::AuxH, Integrand::ForcingAnchor),
            ],
        }
    }

    pub fn advance(&mut self, prev: &SampleContext, next: &SampleContext) {
        for a in &mut self.accs {
            a.advance(prev, next);
        }
    }

    pub fn values(&self) -> AccumulatorValues {
        let mut v = [0.0; ACCUMULATOR_COUNT];
        for (slot, acc) in v.iter_mut().zip(&self.accs) {
            *slot = acc.value;
        }
        AccumulatorValues(v)
    }

    pub fn names() -> [&'static str; ACCUMULATOR_COUNT] {
        ["I_alphaW", "I_vel2", "I_hPhi", "I_hvel2", "I_gradgamma", "I_vL1", "I_lyapforce"]
    }
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictOutcome {
    Pass,
    Fail,
    NotApplicable,
}

impl VerdictOutcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    pub fn is_fail(self) -> bool {
        self == Self::Fail
    }
}

/// Result of the Lyapunov descent check (`E' + h (Phi - Phi*) <= 0` past t1).
#[derive(Debug, Clone, Serialize)]
pub struct DescentCheck {
    pub outcome: VerdictOutcome,
    pub t1: Option<f64>,
    /// Worst value of `dE + ∫h(Phi-Phi*) - tol` over checked intervals
    /// (nonpositive means descent held everywhere).
    pub worst_margin: f64,
    pub intervals: usize,
}

/// Determines `t1` as the first checkpoint where `2h'(t) - 1 < threshold`,
/// then verifies `E(t_{k+1}) - E(t_k) <= -∫ h (Phi - Phi*) + tol` on every
/// later interval, with the integral taken from the `I_hPhi` accumulator.
pub fn lyapunov_descent_check(
    samples: &[TrajectorySample],
    table: &HTable,
    t1_threshold: f64,
) -> DescentCheck {
    let t1 = samples.iter().map(|s| s.t).find(|&t| {
        let h = table.value(t.min(table.t_end()));
        2.0 * (table.schedule().gamma(t) * h - 1.0) - 1.0 < t1_threshold
    });
    let Some(t1) = t1 else {
        return DescentCheck { outcome: VerdictOutcome::NotApplicable, t1: None, worst_margin: 0.0, intervals: 0 };
    };

    let mut worst = f64::NEG_INFINITY;
    let mut intervals = 0;
    for pair in samples.windows(2) {
        if pair[0].t < t1 {
            continue;
        }
        let dt = pair[1].t - pair[0].t;
        let de = pair[1].e_lyap - pair[0].e_lyap;
        let dint = pair[1].accumulators.0[ACC_H_PHI_GAP] - pair[0].accumulators.0[ACC_H_PHI_GAP];
        worst = worst.max(de + dint - QUAD_TOL_RATE * dt);
        intervals += 1;
    }
    if intervals == 0 {
        return DescentCheck { outcome: VerdictOutcome::NotApplicable, t1: Some(t1), worst_margin: 0.0, intervals };
    }
    DescentCheck { outcome: VerdictOutcome::from_bool(worst <= 0.0), t1: Some(t1), worst_margin: worst, intervals }
}

/// Result of an envelope (`O`) or decay (`o`) rate check.
#[derive(Debug, Clone, Serialize)]
pub struct RateCheck {
    pub outcome: VerdictOutcome,
    pub statistic: Option<f64>,
    pub threshold: f64,
    pub detail: String,
}

fn rate_check_na(threshold: f64, why: &str) -> RateCheck {
    RateCheck { outcome: VerdictOutcome::NotApplicable, statistic: None, threshold, detail: why.to_string() }
}

fn positive_time_span(samples: &[TrajectorySample]) -> Option<(f64, f64)> {
    let first = samples.iter().map(|s| s.t).find(|&t| t > 0.0)?;
    let last = samples.last()?.t;
    (last > first).then_some((first, last))
}

/// `W(t) = O(1/t^exponent)` as a bounded running-max ratio: the maximum of
/// `t^exponent * W` over the final two decades must not exceed 1.2x its
/// maximum over the first two post-burn-in decades.
pub fn envelope_bound_check(samples: &[TrajectorySample], exponent: f64) -> RateCheck {
    let Some((t_first, t_last)) = positive_time_span(samples) else {
        return rate_check_na(ENVELOPE_RATIO_MAX, "no positive-time samples");
    };
    if (t_last / t_first).log10() < 4.0 - 1e-9 {
        return rate_check_na(ENVELOPE_RATIO_MAX, "fewer than 4 decades of data");
    }
    let t_burn = RATE_BURN_IN.max(t_first);
    let early_hi = (100.0 * t_burn).min(t_last);
    let late_lo = t_last / 100.0;
    let value = |s: &TrajectorySample| s.t.powf(exponent) * s.w;

    let early_max = samples
        .iter()
        .filter(|s| s.t >= t_burn && s.t <= early_hi)
        .map(value)
        .fold(f64::NEG_INFINITY, f64::max);
    let late_max = samples
        .iter()
        .filter(|s| s.t >= late_lo)
        .map(value)
        .fold(f64::NEG_INFINITY, f64::max);
    if !early_max.is_finite() || !late_max.is_finite() {
        return rate_check_na(ENVELOPE_RATIO_MAX, "empty comparison window");
    }
    if early_max <= 0.0 {
        let pass = late_max <= 0.0;
        return RateCheck {
            outcome: VerdictOutcome::from_bool(pass),
            statistic: Some(0.0),
            threshold: ENVELOPE_RATIO_MAX,
            detail: "degenerate zero-energy envelope".into(),
        };
    }
    let ratio = late_max / early_max;
    RateCheck {
        outcome: VerdictOutcome::from_bool(ratio < ENVELOPE_RATIO_MAX),
        statistic: Some(ratio),
        threshold: ENVELOPE_RATIO_MAX,
        detail: format!("early max {early_max:.6e} over [{t_burn:.1},{early_hi:.1}], late max {late_max:.6e} over [{late_lo:.1},{t_last:.1}]"),
    }
}

/// `W(t) = o(1/t^exponent)`: the median of `(1+t)^exponent * W` over the
/// final decade must fall below 1/4 of its median over the decade starting
/// at t = 100.
pub fn decay_to_zero_check(samples: &[TrajectorySample], exponent: f64) -> RateCheck {
    let Some((t_first, t_last)) = positive_time_span(samples) else {
        return rate_check_na(DECAY_MEDIAN_RATIO_MAX, "no positive-time samples");
    };
    if (t_last / t_first).log10() < 4.0 - 1e-9 {
        return rate_check_na(DECAY_MEDIAN_RATIO_MAX, "fewer than 4 decades of data");
    }
    let rho = |s: &TrajectorySample| (1.0 + s.t).powf(exponent) * s.w;
    let reference: Vec<f64> =
        samples.iter().filter(|s| s.t >= 1e2 && s.t <= 1e3).map(rho).collect();
    let final_decade: Vec<f64> =
        samples.iter().filter(|s| s.t >= t_last / 10.0).map(rho).collect();
    let (Some(med_ref), Some(med_fin)) = (median(reference), median(final_decade)) else {
        return rate_check_na(DECAY_MEDIAN_RATIO_MAX, "empty comparison decade");
    };
    if med_ref <= 0.0 {
        return RateCheck {
            outcome: VerdictOutcome::from_bool(med_fin <= 0.0),
            statistic: Some(0.0),
            threshold: DECAY_MEDIAN_RATIO_MAX,
            detail: "degenerate zero-energy reference decade".into(),
        };
    }
    let ratio = med_fin / med_ref;
    RateCheck {
        outcome: VerdictOutcome::from_bool(ratio < DECAY_MEDIAN_RATIO_MAX),
        statistic: Some(ratio),
        threshold: DECAY_MEDIAN_RATIO_MAX,
        detail: format!("reference median {med_ref:.6e} on [100,1000], final-decade median {med_fin:.6e}"),
    }
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    Some(0.5 * (values[(n - 1) / 2] + values[n / 2]))
}

/// Least-squares power-law fit of a sample field over the final two decades.
#[derive(Debug, Clone, Serialize)]
pub struct PowerLawFit {
    pub exponent: Option<f64>,
    pub residual: Option<f64>,
    pub n_used: usize,
    pub power_law: Option<bool>,
    pub applicable: bool,
    pub detail: String,
}

fn fit_na(why: &str) -> PowerLawFit {
    PowerLawFit { exponent: None, residual: None, n_used: 0, power_law: None, applicable: false, detail: why.into() }
}

/// Log-log slope of `field` vs `t` over the final two decades; the residual
/// is the RMS deviation of the fit in log space. Nonpositive values are
/// filtered out; if more than half the window is filtered the fit is
/// not applicable.
pub fn fit_power_law<F: Fn(&TrajectorySample) -> f64>(
    samples: &[TrajectorySample],
    field: F,
) -> PowerLawFit {
    let Some((_, t_last)) = positive_time_span(samples) else {
        return fit_na("no positive-time samples");
    };
    let window: Vec<&TrajectorySample> =
        samples.iter().filter(|s| s.t >= t_last / 100.0 && s.t > 0.0).collect();
    if window.len() < 4 {
        return fit_na("window too small");
    }
    let points: Vec<(f64, f64)> = window
        .iter()
        .filter_map(|s| {
            let y = field(s);
            (y > 0.0).then(|| (s.t.ln(), y.ln()))
        })
        .collect();
    if points.len() * 2 < window.len() {
        return fit_na("more than half the window is nonpositive");
    }
    let span = points.last().unwrap().0 - points[0].0;
    if span < 100.0f64.ln() * 0.9 {
        return fit_na("fewer than 2 decades of positive samples");
    }

    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rms = (points
        .iter()
        .map(|p| {
            let e = p.1 - (my + slope * (p.0 - mx));
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    PowerLawFit {
        exponent: Some(slope),
        residual: Some(rms),
        n_used: points.len(),
        power_law: Some(rms <= POWER_LAW_RESIDUAL_MAX),
        applicable: true,
        detail: format!("fit over [{:.3e}, {:.3e}]", t_last / 100.0, t_last),
    }
}

/// Per-minimizer oscillation of `||x(t) - z||` over the final decade.
#[derive(Debug, Clone, Serialize)]
pub struct OpialOscillation {
    pub minimizer_index: usize,
    pub initial_distance: f64,
    pub oscillation: f64,
    pub threshold: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpialCheck {
    pub outcome: VerdictOutcome,
    pub oscillations: Vec<OpialOscillation>,
}

/// Distance convergence toward every sampled minimizer: the oscillation of
/// `||x(t) - z||` over the final decade must stay below
/// `1e-2 * (1 + ||x(0) - z||)`.
pub fn opial_distance_check(samples: &[TrajectorySample], minimizers: &[DVector<f64>]) -> OpialCheck {
    let Some(last) = samples.last() else {
        return OpialCheck { outcome: VerdictOutcome::NotApplicable, oscillations: Vec::new() };
    };
    let t_lo = last.t / 10.0;
    let window: Vec<&TrajectorySample> = samples.iter().filter(|s| s.t >= t_lo).collect();
    if window.len() < 2 || minimizers.is_empty() {
        return OpialCheck { outcome: VerdictOutcome::NotApplicable, oscillations: Vec::new() };
    }
    let x0 = &samples[0].x;
    let mut all_within = true;
    let oscillations = minimizers
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for s in &window {
                let d = (&s.x - z).norm();
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let initial = (x0 - z).norm();
            let threshold = 1e-2 * (1.0 + initial);
            let osc = hi - lo;
            let within = osc < threshold;
            all_within &= within;
            OpialOscillation { minimizer_index: i, initial_distance: initial, oscillation: osc, threshold, within }
        })
        .collect();
    OpialCheck { outcome: VerdictOutcome::from_bool(all_within), oscillations }
}

/// `max ||x(s) - x(t)||` over checkpoint pairs with `s, t >= t_from`; a
/// vanishing tail certifies strong convergence.
pub fn cauchy_tail(samples: &[TrajectorySample], t_from: f64) -> Result<f64> {
    let Some(last) = samples.last() else {
        return Err(Error::Domain("cauchy tail needs a nonempty trajectory".into()));
    };
    if t_from > 0.5 * last.t {
        return Err(Error::Domain(format!(
            "cauchy tail start {t_from} beyond half the horizon {}",
            last.t
        )));
    }
    let tail: Vec<&TrajectorySample> = samples.iter().filter(|s| s.t >= t_from).collect();
    let mut worst = 0.0f64;
    for i in 0..tail.len() {
        for j in i + 1..tail.len() {
            worst = worst.max((&tail[i].x - &tail[j].x).norm());
        }
    }
    Ok(worst)
}

/// Tail-flatness of a running integral: relative growth over the final
/// 10x of the horizon.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Flatness {
    pub ratio: f64,
    pub finite: bool,
    pub value_end: f64,
    pub value_tenth: f64,
}

/// `(value(T) - value(T/10)) / max(value(T/10), eps)`, "finite" iff < 0.05.
pub fn accumulator_flatness(history: &[(f64, f64)]) -> Result<Flatness> {
    let Some(&(t_end, value_end)) = history.last() else {
        return Err(Error::Domain("flatness needs a nonempty history".into()));
    };
    let t_tenth = t_end / 10.0;
    let value_tenth = history
        .iter()
        .take_while(|(t, _)| *t <= t_tenth)
        .last()
        .map(|&(_, v)| v)
        .unwrap_or(history[0].1);
    let ratio = (value_end - value_tenth) / value_tenth.max(1e-30);
    Ok(Flatness { ratio, finite: ratio < FLATNESS_MAX, value_end, value_tenth })
}

/// Interval-check result with the worst observed rate.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalCheck {
    pub outcome: VerdictOutcome,
    pub worst_rate: f64,
    pub tolerance_rate: f64,
}

/// With `g = 0`, W must be nonincreasing across checkpoints up to
/// `MONOTONE_RATE_TOL` per unit time.
pub fn energy_monotonicity_check(samples: &[TrajectorySample]) -> IntervalCheck {
    let mut worst = f64::NEG_INFINITY;
    for pair in samples.windows(2) {
        let dt = pair[1].t - pair[0].t;
        worst = worst.max((pair[1].w - pair[0].w) / dt);
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    IntervalCheck {
        outcome: VerdictOutcome::from_bool(worst <= MONOTONE_RATE_TOL),
        worst_rate: worst,
        tolerance_rate: MONOTONE_RATE_TOL,
    }
}

/// Integral energy balance `W(t2) - W(t1) + ∫gamma||v||^2 - ∫<g,v> = 0`
/// per checkpoint interval, within `BALANCE_RATE_TOL` per unit time. The two
/// integrals ride along inside the solver state, so this checks the solver
/// and the dynamics together.
pub fn energy_balance_check(samples: &[TrajectorySample]) -> IntervalCheck {
    let mut worst = 0.0f64;
    for pair in samples.windows(2) {
        let dt = pair[1].t - pair[0].t;
        let residual = (pair[1].w - pair[0].w) + (pair[1].dissipation - pair[0].dissipation)
            - (pair[1].forcing_work - pair[0].forcing_work);
        worst = worst.max(residual.abs() / dt);
    }
    IntervalCheck {
        outcome: VerdictOutcome::from_bool(worst <= BALANCE_RATE_TOL),
        worst_rate: worst,
        tolerance_rate: BALANCE_RATE_TOL,
    }
}

/// Perturbation inequality: per-interval increase of W is bounded by
/// `∫ ||g|| sqrt(2W)` plus the quadrature allowance.
pub fn perturbation_inequality_check(samples: &[TrajectorySample]) -> IntervalCheck {
    let mut worst = f64::NEG_INFINITY;
    for pair in samples.windows(2) {
        let dt = pair[1].t - pair[0].t;
        let dw = pair[1].w - pair[0].w;
        let bound = pair[1].kb_bound - pair[0].kb_bound;
        worst = worst.max((dw - bound - QUAD_TOL_RATE * dt) / dt);
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    IntervalCheck {
        outcome: VerdictOutcome::from_bool(worst <= 0.0),
        worst_rate: worst,
        tolerance_rate: QUAD_TOL_RATE,
    }
}

/// Whether a running supremum stabilizes before the final decade.
#[derive(Debug, Clone, Serialize)]
pub struct SupStabilization {
    pub sup_all: f64,
    pub sup_before_final_decade: f64,
    pub stabilized: bool,
}

pub fn running_sup_stabilization<F: Fn(&TrajectorySample) -> f64>(
    samples: &[TrajectorySample],
    value: F,
) -> SupStabilization {
    let t_split = samples.last().map(|s| s.t / 10.0).unwrap_or(0.0);
    let mut sup_all = f64::NEG_INFINITY;
    let mut sup_early = f64::NEG_INFINITY;
    for s in samples {
        let v = value(s);
        sup_all = sup_all.max(v);
        if s.t <= t_split {
            sup_early = sup_early.max(v);
        }
    }
    SupStabilization {
        sup_all,
        sup_before_final_decade: sup_early,
        stabilized: sup_all <= sup_early * (1.0 + 1e-12) + 1e-300,
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// One named check inside a theorem verdict, with its raw numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub outcome: VerdictOutcome,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

/// Combined verdict for one declared theorem tag (or builtin sanity check).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub theorem: String,
    pub outcome: VerdictOutcome,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFitReport {
    pub field: String,
    pub exponent: Option<f64>,
    pub residual: Option<f64>,
    pub power_law: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccumulatorReport {
    pub name: String,
    pub final_value: f64,
    pub value_at_tenth: f64,
    pub flatness_ratio: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationReport {
    pub minimizer_index: usize,
    pub initial_distance: f64,
    pub oscillation: f64,
    pub threshold: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyTailReport {
    pub from_t: f64,
    pub value: f64,
}

/// Per-scenario verdicts and statistics, serialized as the `.report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub scenario: String,
    pub status: String,
    pub verdicts: Vec<TheoremVerdict>,
    pub exponent_fits: Vec<ExponentFitReport>,
    pub accumulators: Vec<AccumulatorReport>,
    pub oscillations: Vec<OscillationReport>,
    pub cauchy_tail: Option<CauchyTailReport>,
}

impl DiagnosticsReport {
    pub fn any_failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.outcome.is_fail())
    }
}
