//! Small adaptive-quadrature helper for the source-term integrals.

use crate::{Error, Result};

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::Domain(format!("bad integration interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    recurse(f, a, b, fa, fm, fb, tol, 52)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if !err.is_finite() {
        return Err(Error::Numeric("nonfinite value during quadrature".into()));
    }
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "quadrature failed to converge on [{a}, {b}] (residual {err:.3e})"
        )));
    }
    Ok(recurse(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_smooth_functions_tightly() {
        let got = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((got - 2.0).abs() < 1e-11);
        let got = adaptive_simpson(&|x: f64| (1.0 + x).powf(-2.0), 0.0, 9.0, 1e-12).unwrap();
        assert!((got - 0.9).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(adaptive_simpson(&|x| x, 1.0, 0.0, 1e-9).is_err());
        assert!(adaptive_simpson(&|x| x, 0.0, f64::INFINITY, 1e-9).is_err());
    }
}
