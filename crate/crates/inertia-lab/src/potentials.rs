//! Catalog of C^1 convex test potentials with analytic gradients.
//!
//! Every member exposes its exact minimum value, a canonical minimizer, and
//! the structural flags the convergence theory cares about: evenness
//! (`Phi(-x) = Phi(x)`) and nonempty interior of the minimizer set. Gradients
//! are Lipschitz on bounded sets for the whole catalog.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Gradient residual allowed at a canonical minimizer.
const MINIMIZER_GRAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// `Phi = 0`; every point minimizes.
    Zero,
    /// `Phi(x) = 1/2 <Ax,x> - <b,x>` with `A` symmetric PSD and `b` in range(A).
    Quadratic { a: DMatrix<f64>, b: DVector<f64> },
    /// `Phi(x) = 1/2 ||Mx - y||^2`; `M` may be rank-deficient.
    LeastSquares { m: DMatrix<f64>, y: DVector<f64> },
    /// `Phi(x) = scale * sum_i |x_i|^p / p` with even `p >= 4`.
    ///
    /// Degenerate at the minimizer (no strong convexity), so energy decay is
    /// genuinely polynomial.
    EvenPower { p: u32, scale: f64 },
    /// `Phi(x) = 1/2 dist(x, B)^2` for the closed ball `B(center, radius)`.
    ///
    /// Exactly C^1 (not C^2); argmin is the ball, with nonempty interior.
    DistBallSq { center: DVector<f64>, radius: f64 },
}

/// A convex test potential with cached analytic structure.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    dim: usize,
    phi_star: f64,
    canonical_minimizer: DVector<f64>,
    is_even: bool,
    has_interior_argmin: bool,
    /// Orthonormal basis of the argmin's direction space (null space of the
    /// quadratic form) for the flat catalog members; empty when the minimizer
    /// is unique.
    null_basis: Vec<DVector<f64>>,
}

/// Minimizers returned by [`minimizer_samples`].
#[derive(Debug, Clone)]
pub struct MinimizerSamples {
    pub points: Vec<DVector<f64>>,
    /// True when argmin is a single point (the canonical minimizer repeated).
    pub singleton: bool,
}

impl Potential {
    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            kind: PotentialKind::Zero,
            dim,
            phi_star: 0.0,
            canonical_minimizer: DVector::zeros(dim),
            is_even: true,
            has_interior_argmin: true,
            null_basis: (0..dim).map(|i| unit_vector(dim, i)).collect(),
        })
    }

    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let dim = b.len();
        check_dim(dim)?;
        if a.nrows() != dim || a.ncols() != dim {
            return Err(Error::Shape { expected: dim, got: a.nrows().max(a.ncols()) });
        }
        let scale = a.amax().max(1.0);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Config("quadratic potential needs a symmetric matrix".into()));
        }
        let eigen = a.clone().symmetric_eigen();
        if eigen.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(Error::Config("quadratic potential needs a positive semidefinite matrix".into()));
        }
        let (minimizer, null_basis) = min_norm_solve(&a, &b)?;
        let residual = (&a * &minimizer - &b).norm();
        if residual > 1e-10 * (1.0 + b.norm()) {
            return Err(Error::Config(
                "quadratic potential is unbounded below: b has a component outside range(A)".into(),
            ));
        }
        let phi_star = 0.5 * (&a * &minimizer).dot(&minimizer) - b.dot(&minimizer);
        let is_even = b.iter().all(|&v| v == 0.0);
        let has_interior_argmin = null_basis.len() == dim;
        let pot = Self { kind: PotentialKind::Quadratic { a, b }, dim, phi_star, canonical_minimizer: minimizer, is_even, has_interior_argmin, null_basis };
        pot.check_minimizer()?;
        Ok(pot)
    }

    pub fn least_squares(m: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let dim = m.ncols();
        check_dim(dim)?;
        if y.len() != m.nrows() {
            return Err(Error::Shape { expected: m.nrows(), got: y.len() });
        }
        let gram = m.transpose() * &m;
        let rhs = m.transpose() * &y;
        let (minimizer, null_basis) = min_norm_solve(&gram, &rhs)?;
        let phi_star = 0.5 * (&m * &minimizer - &y).norm_squared();
        let is_even = y.iter().all(|&v| v == 0.0);
        let has_interior_argmin = null_basis.len() == dim;
        let pot = Self { kind: PotentialKind::LeastSquares { m, y }, dim, phi_star, canonical_minimizer: minimizer, is_even, has_interior_argmin, null_basis };
        pot.check_minimizer()?;
        Ok(pot)
    }

    pub fn even_power(dim: usize, p: u32, scale: f64) -> Result<Self> {
        check_dim(dim)?;
        if p < 4 || !p.is_multiple_of(2) {
            return Err(Error::Config(format!("even-power exponent must be an even integer >= 4, got {p}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("even-power scale must be positive, got {scale}")));
        }
        Ok(Self {
            kind: PotentialKind::EvenPower { p, scale },
            dim,
            phi_star: 0.0,
            canonical_minimizer: DVector::zeros(dim),
            is_even: true,
            has_interior_argmin: false,
            null_basis: Vec::new(),
        })
    }

    pub fn dist_ball_sq(center: DVector<f64>, radius: f64) -> Result<Self> {
        let dim = center.len();
        check_dim(dim)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        let is_even = center.iter().all(|&v| v == 0.0);
        Ok(Self {
            kind: PotentialKind::DistBallSq { center: center.clone(), radius },
            dim,
            phi_star: 0.0,
            canonical_minimizer: center,
            is_even,
            has_interior_argmin: true,
            null_basis: Vec::new(),
        })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phi_star(&self) -> f64 {
        self.phi_star
    }

    pub fn canonical_minimizer(&self) -> &DVector<f64> {
        &self.canonical_minimizer
    }

    pub fn is_even(&self) -> bool {
        self.is_even
    }

    pub fn has_interior_argmin(&self) -> bool {
        self.has_interior_argmin
    }

    fn check_minimizer(&self) -> Result<()> {
        let scale = 1.0 + self.canonical_minimizer.norm();
        let g = self.grad(&self.canonical_minimizer).norm();
        if g > MINIMIZER_GRAD_TOL * scale {
            return Err(Error::Numeric(format!("canonical minimizer has gradient norm {g:.3e}")));
        }
        Ok(())
    }

    /// Analytic value of `Phi(x)`, unchecked.
    pub(crate) fn phi(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Quadratic { a, b } => 0.5 * (a * x).dot(x) - b.dot(x),
            PotentialKind::LeastSquares { m, y } => 0.5 * (m * x - y).norm_squared(),
            PotentialKind::EvenPower { p, scale } => {
                let p = *p as i32;
                scale / f64::from(p) * x.iter().map(|&xi| xi.powi(p)).sum::<f64>()
            }
            PotentialKind::DistBallSq { center, radius } => {
                let d = (x - center).norm() - radius;
                if d > 0.0 { 0.5 * d * d } else { 0.0 }
            }
        }
    }

    /// `Phi(x) - Phi*` in a cancellation-free form, so it is nonnegative to
    /// the last bit. This is what the energy and the accumulators use.
    pub(crate) fn phi_gap(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Quadratic { a, .. } => {
                let d = x - &self.canonical_minimizer;
                0.5 * (a * &d).dot(&d)
            }
            PotentialKind::LeastSquares { m, .. } => {
                // ||Mx-y||^2 = ||M(x-x*)||^2 + ||Mx*-y||^2 by normal equations
                0.5 * (m * (x - &self.canonical_minimizer)).norm_squared()
            }
            _ => self.phi(x),
        }
    }

    /// Analytic gradient, unchecked.
    pub(crate) fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            PotentialKind::Zero => DVector::zeros(self.dim),
            PotentialKind::Quadratic { a, b } => a * x - b,
            PotentialKind::LeastSquares { m, y } => m.transpose() * (m * x - y),
            PotentialKind::EvenPower { p, scale } => {
                let pm1 = (*p - 1) as i32;
                DVector::from_iterator(self.dim, x.iter().map(|&xi| scale * xi.powi(pm1)))
            }
            PotentialKind::DistBallSq { center, radius } => {
                let r = x - center;
                let d = r.norm();
                if d <= *radius {
                    DVector::zeros(self.dim)
                } else {
                    // x - proj_ball(x); C^1 across the boundary
                    r * ((d - radius) / d)
                }
            }
        }
    }
}

/// Exact analytic value of `Phi(x)`.
pub fn phi_eval(pot: &Potential, x: &DVector<f64>) -> Result<f64> {
    check_shape(pot, x)?;
    Ok(pot.phi(x))
}

/// Analytic gradient of `Phi` at `x`.
pub fn grad_eval(pot: &Potential, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_shape(pot, x)?;
    Ok(pot.grad(x))
}

/// Worst componentwise deviation between the analytic gradient and central
/// finite differences of `phi_eval` with the given step.
pub fn gradient_check(pot: &Potential, x: &DVector<f64>, step: f64) -> Result<f64> {
    check_shape(pot, x)?;
    if !(1e-8..=1e-3).contains(&step) {
        return Err(Error::Domain(format!("finite-difference step must lie in [1e-8, 1e-3], got {step}")));
    }
    let grad = pot.grad(x);
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..pot.dim {
        probe[i] = x[i] + step;
        let fp = pot.phi(&probe);
        probe[i] = x[i] - step;
        let fm = pot.phi(&probe);
        probe[i] = x[i];
        worst = worst.max(((fp - fm) / (2.0 * step) - grad[i]).abs());
    }
    Ok(worst)
}

/// Returns `k` elements of argmin Phi: the canonical minimizer plus, when the
/// argmin is non-singleton, `k-1` distinct others (null-space translates for
/// flat quadratics, interior points for the ball). Singleton argmins repeat
/// the canonical minimizer and set the flag.
pub fn minimizer_samples(pot: &Potential, k: usize) -> Result<MinimizerSamples> {
    if k == 0 {
        return Err(Error::Domain("minimizer sample count must be at least 1".into()));
    }
    let mut points = vec![pot.canonical_minimizer.clone()];
    let scalars = [1.0, -0.5, 0.75, -0.25, 0.6, -0.85, 0.4, -0.15];

    let singleton = match &pot.kind {
        PotentialKind::EvenPower { .. } => true,
        PotentialKind::DistBallSq { center, radius } => {
            // strictly interior points: |s| < 1
            let interior = [0.5, -0.3, 0.25, -0.6, 0.4, -0.15, 0.7, -0.45];
            let mut idx = 0;
            while points.len() < k {
                let axis = idx % pot.dim;
                let s = interior[idx % interior.len()] / (1.0 + (idx / interior.len()) as f64);
                points.push(center + unit_vector(pot.dim, axis) * (s * radius));
                idx += 1;
            }
            false
        }
        _ => {
            if pot.null_basis.is_empty() {
                true
            } else {
                let mut idx = 0;
                while points.len() < k {
                    let dir = &pot.null_basis[idx % pot.null_basis.len()];
                    let s = scalars[idx % scalars.len()] * (1.0 + (idx / scalars.len()) as f64);
                    points.push(&pot.canonical_minimizer + dir * s);
                    idx += 1;
                }
                false
            }
        }
    };

    if singleton {
        while points.len() < k {
            points.push(pot.canonical_minimizer.clone());
        }
    }
    Ok(MinimizerSamples { points, singleton })
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Config("potential dimension must be positive".into()));
    }
    Ok(())
}

fn check_shape(pot: &Potential, x: &DVector<f64>) -> Result<()> {
    if x.len() != pot.dim {
        return Err(Error::Shape { expected: pot.dim, got: x.len() });
    }
    Ok(())
}

fn unit_vector(dim: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    v
}

/// Minimum-norm solution of the (symmetric PSD or normal-equation) system
/// `a x = b` via SVD, plus an orthonormal basis of the null space of `a`.
fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let n = a.ncols();
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numeric("SVD did not produce U".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numeric("SVD did not produce V^T".into()))?;
    let smax = svd.singular_values.max();
    let tol = smax * (n as f64) * f64::EPSILON * 16.0;

    let mut x = DVector::zeros(n);
    let mut null_basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let v_i: DVector<f64> = v_t.row(i).transpose();
        if s > tol {
            let coeff = u.column(i).dot(b) / s;
            x += v_i * coeff;
        } else {
            null_basis.push(v_i);
        }
    }
    Ok((x, null_basis))
}
