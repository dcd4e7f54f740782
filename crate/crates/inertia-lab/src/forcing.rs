//! Source-term families `g(t)` with analytically known weighted integrability.
//!
//! Every member is norm-separable, `g(t) = profile(t) * direction`, so the
//! weighted integrals `∫ (1+t)^nu ||g(t)|| dt` have closed forms (or cheap
//! quadrature for the oscillating family). Scenarios use these to sit exactly
//! inside or outside a theorem's hypothesis.

use nalgebra::DVector;

use crate::quad::adaptive_simpson;
use crate::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-12;
const QUAD_ABS_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum SourceKind {
    /// `g = 0`.
    Zero,
    /// `g(t) = amplitude * (1+t)^{-beta} * direction`.
    PowerDecay { direction: DVector<f64>, amplitude: f64, beta: f64 },
    /// `g(t) = amplitude * (1+t)^{-beta} * cos(omega t) * direction`.
    OscillatingPowerDecay { direction: DVector<f64>, amplitude: f64, beta: f64, omega: f64 },
}

/// A perturbation term with unit direction and a power-decay envelope.
#[derive(Debug, Clone)]
pub struct SourceTerm {
    kind: SourceKind,
    dim: usize,
}

/// Outcome of the weighted-integrability predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedIntegrability {
    /// Whether `∫_0^∞ (1+t)^nu ||g(t)|| dt` converges.
    pub holds: bool,
    /// Analytic value of the integral when convergent — exact for the
    /// power-decay family, an upper bound for the oscillating one.
    pub bound: Option<f64>,
}

impl SourceTerm {
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("source dimension must be positive".into()));
        }
        Ok(Self { kind: SourceKind::Zero, dim })
    }

    pub fn power_decay(direction: DVector<f64>, amplitude: f64, beta: f64) -> Result<Self> {
        let direction = normalize(direction)?;
        check_profile(amplitude, beta)?;
        let dim = direction.len();
        Ok(Self { kind: SourceKind::PowerDecay { direction, amplitude, beta }, dim })
    }

    pub fn oscillating_power_decay(
        direction: DVector<f64>,
        amplitude: f64,
        beta: f64,
        omega: f64,
    ) -> Result<Self> {
        let direction = normalize(direction)?;
        check_profile(amplitude, beta)?;
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::Config(format!("oscillation frequency must be nonnegative, got {omega}")));
        }
        let dim = direction.len();
        Ok(Self { kind: SourceKind::OscillatingPowerDecay { direction, amplitude, beta, omega }, dim })
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, SourceKind::Zero)
    }

    /// Signed scalar profile so that `g(t) = profile(t) * direction`.
    #[inline]
    pub(crate) fn profile(&self, t: f64) -> f64 {
        match &self.kind {
            SourceKind::Zero => 0.0,
            SourceKind::PowerDecay { amplitude, beta, .. } => amplitude * (1.0 + t).powf(-beta),
            SourceKind::OscillatingPowerDecay { amplitude, beta, omega, .. } => {
                amplitude * (1.0 + t).powf(-beta) * (omega * t).cos()
            }
        }
    }

    pub(crate) fn direction(&self) -> Option<&DVector<f64>> {
        match &self.kind {
            SourceKind::Zero => None,
            SourceKind::PowerDecay { direction, .. }
            | SourceKind::OscillatingPowerDecay { direction, .. } => Some(direction),
        }
    }

    /// Evaluates `g(t)` into a caller-provided buffer (solver fast path).
    pub(crate) fn eval_into(&self, t: f64, out: &mut DVector<f64>) {
        match self.direction() {
            None => out.fill(0.0),
            Some(d) => {
                let p = self.profile(t);
                out.copy_from(d);
                *out *= p;
            }
        }
    }
}

/// Evaluates the source term at `t >= 0`.
pub fn g_at(src: &SourceTerm, t: f64) -> Result<DVector<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("source term is defined for t >= 0, got {t}")));
    }
    let mut out = DVector::zeros(src.dim);
    src.eval_into(t, &mut out);
    Ok(out)
}

/// Whether `∫_0^∞ (1+t)^nu ||g(t)|| dt < ∞`, with the analytic value when it
/// converges. For the power family this is `amplitude/(beta - nu - 1)`,
/// convergent iff `beta - nu > 1` (the integrand exponent `nu - beta < -1`).
pub fn satisfies_weighted_condition(src: &SourceTerm, nu: f64) -> Result<WeightedIntegrability> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::Domain(format!("weight exponent must be nonnegative, got {nu}")));
    }
    Ok(match &src.kind {
        SourceKind::Zero => WeightedIntegrability { holds: true, bound: Some(0.0) },
        SourceKind::PowerDecay { amplitude, beta, .. }
        | SourceKind::OscillatingPowerDecay { amplitude, beta, .. } => {
            let holds = beta - nu > 1.0;
            let bound = holds.then(|| amplitude / (beta - nu - 1.0));
            WeightedIntegrability { holds, bound }
        }
    })
}

/// `∫_0^T (1+t)^nu ||g(t)|| dt`: closed form for the power family, adaptive
/// quadrature (split at the kinks of |cos|) for the oscillating one.
pub fn weighted_norm_partial_integral(src: &SourceTerm, nu: f64, t_upper: f64) -> Result<f64> {
    if !(t_upper.is_finite() && t_upper > 0.0) {
        return Err(Error::Domain(format!("integration horizon must be positive, got {t_upper}")));
    }
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::Domain(format!("weight exponent must be nonnegative, got {nu}")));
    }
    match &src.kind {
        SourceKind::Zero => Ok(0.0),
        SourceKind::PowerDecay { amplitude, beta, .. } => {
            Ok(amplitude * power_primitive(nu - beta, t_upper))
        }
        SourceKind::OscillatingPowerDecay { amplitude, beta, omega, .. } => {
            let f = |t: f64| amplitude * (1.0 + t).powf(nu - beta) * (omega * t).cos().abs();
            if *omega == 0.0 {
                return adaptive_simpson(&f, 0.0, t_upper, QUAD_ABS_TOL);
            }
            // |cos| has kinks at omega*t = pi/2 + k*pi; integrate smooth panels
            let half_period = std::f64::consts::PI / omega;
            let mut total = 0.0;
            let mut a = 0.0;
            let mut next_kink = 0.5 * half_period;
            while a < t_upper {
                let b = next_kink.min(t_upper);
                total += adaptive_simpson(&f, a, b, QUAD_ABS_TOL * ((b - a) / t_upper).max(1e-6))?;
                a = b;
                next_kink += half_period;
            }
            Ok(total)
        }
    }
}

/// `∫_0^T (1+t)^e dt` for a real exponent `e`.
fn power_primitive(e: f64, t_upper: f64) -> f64 {
    if (e + 1.0).abs() < 1e-14 {
        (1.0 + t_upper).ln()
    } else {
        ((1.0 + t_upper).powf(e + 1.0) - 1.0) / (e + 1.0)
    }
}

fn normalize(direction: DVector<f64>) -> Result<DVector<f64>> {
    let n = direction.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Config("source direction must be a nonzero finite vector".into()));
    }
    let d = direction / n;
    debug_assert!((d.norm() - 1.0).abs() < UNIT_NORM_TOL);
    Ok(d)
}

fn check_profile(amplitude: f64, beta: f64) -> Result<()> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::Config(format!("source amplitude must be positive, got {amplitude}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!("source decay exponent must be positive, got {beta}")));
    }
    Ok(())
}
