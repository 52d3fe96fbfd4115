//! Projections in the metric induced by an inverse covariance.
//!
//! `Π_U^Σ(p) = argmin_{u ∈ U} (u - p)ᵀ Σ⁻¹ (u - p)`. For the ball the problem
//! reduces to a scalar Lagrange root in the eigenbasis of `Σ`; for the box it
//! is separable under a diagonal `Σ` and a small QP otherwise.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Domain, Shape, Vector};

/// Target accuracy of the norm constraint in the ball root-find.
pub const BALL_NORM_TOL: f64 = 1e-10;
const BALL_MAX_ITER: usize = 100;
/// Stopping threshold on successive iterates in box coordinate descent.
pub const BOX_STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Symmetric `d × d` matrix.
    Full(DMatrix<f64>),
    /// Diagonal entries only.
    Diag(Vector),
}

impl Covariance {
    pub fn scaled_identity(variant: crate::geometry::Variant, dim: usize, scale: f64) -> Self {
        match variant {
            crate::geometry::Variant::Full => {
                Covariance::Full(DMatrix::from_diagonal_element(dim, dim, scale))
            }
            crate::geometry::Variant::Diag => Covariance::Diag(Vector::from_element(dim, scale)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Full(m) => m.nrows(),
            Covariance::Diag(v) => v.len(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diag(v) => DMatrix::from_diagonal(v),
        }
    }

    /// `Σ x`.
    pub fn apply(&self, x: &Vector) -> Vector {
        match self {
            Covariance::Full(m) => m * x,
            Covariance::Diag(v) => v.component_mul(x),
        }
    }

    fn check_positive_definite(&self) -> Result<()> {
        match self {
            Covariance::Full(m) => {
                if m.iter().all(|x| x.is_finite()) && m.clone().cholesky().is_some() {
                    Ok(())
                } else {
                    Err(Error::NotPositiveDefinite)
                }
            }
            Covariance::Diag(v) => {
                if v.iter().all(|&x| x > 0.0 && x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NotPositiveDefinite)
                }
            }
        }
    }
}

/// `(u - p)ᵀ Σ⁻¹ (u - p)`.
pub fn mahalanobis_objective(cov: &Covariance, u: &Vector, p: &Vector) -> Result<f64> {
    let diff = u - p;
    match cov {
        Covariance::Diag(s) => Ok(diff.iter().zip(s.iter()).map(|(x, s)| x * x / s).sum()),
        Covariance::Full(m) => {
            let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
            Ok(diff.dot(&chol.solve(&diff)))
        }
    }
}

pub fn mahalanobis_project(domain: &Domain, cov: &Covariance, p: &Vector) -> Result<Vector> {
    check_dim(domain.dim(), p.len())?;
    check_dim(domain.dim(), cov.dim())?;
    cov.check_positive_definite()?;
    if domain.contains(p, 0.0) {
        return Ok(p.clone());
    }
    match (domain.shape(), cov) {
        (Shape::Ball { radius }, Covariance::Diag(s)) => {
            let u = ball_in_eigenbasis(s, p, *radius);
            domain.euclidean_project(&u)
        }
        (Shape::Ball { radius }, Covariance::Full(m)) => {
            let eig = SymmetricEigen::new(m.clone());
            if eig.eigenvalues.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::NotPositiveDefinite);
            }
            let q = eig.eigenvectors.transpose() * p;
            let u = &eig.eigenvectors * ball_in_eigenbasis(&eig.eigenvalues, &q, *radius);
            domain.euclidean_project(&u)
        }
        (Shape::Box { .. }, Covariance::Diag(_)) => domain.euclidean_project(p),
        (Shape::Box { lower, upper }, Covariance::Full(m)) => {
            let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
            let precision = chol.inverse();
            Ok(box_coordinate_descent(&precision, p, lower, upper))
        }
    }
}

/// Solves `Σ_i q_i² / (1 + λ s_i)² = r²` for `λ >= 0` and returns
/// `u_i = q_i / (1 + λ s_i)`. Assumes `‖q‖ > r`.
fn ball_in_eigenbasis(s: &Vector, q: &Vector, radius: f64) -> Vector {
    let point = |lambda: f64| q.zip_map(s, |qi, si| qi / (1.0 + lambda * si));
    let tol = BALL_NORM_TOL * radius.max(1.0);

    // φ(λ) = ‖u(λ)‖ - r is convex and decreasing, so Newton from λ = 0 stays
    // left of the root; the bracket only guards against stalls.
    let s_min = s.min();
    let mut lo = 0.0;
    let mut hi = (q.norm() / radius - 1.0) / s_min;
    let mut lambda = 0.0;
    for _ in 0..BALL_MAX_ITER {
        let u = point(lambda);
        let norm = u.norm();
        let phi = norm - radius;
        if phi.abs() <= tol {
            break;
        }
        if phi > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let dphi = -q
            .iter()
            .zip(s.iter())
            .map(|(qi, si)| qi * qi * si / (1.0 + lambda * si).powi(3))
            .sum::<f64>()
            / norm;
        let newton = lambda - phi / dphi;
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    point(lambda)
}

/// Projected Gauss–Seidel on `min (u-p)ᵀ A (u-p)` over the box.
fn box_coordinate_descent(a: &DMatrix<f64>, p: &Vector, lower: &Vector, upper: &Vector) -> Vector {
    let d = p.len();
    let mut u = Vector::from_fn(d, |i, _| p[i].clamp(lower[i], upper[i]));
    let max_sweeps = 10 * d * d;
    for _ in 0..max_sweeps {
        let mut largest_step = 0.0f64;
        for i in 0..d {
            let coupling: f64 = (0..d)
                .filter(|&j| j != i)
                .map(|j| a[(i, j)] * (u[j] - p[j]))
                .sum();
            let next = (p[i] - coupling / a[(i, i)]).clamp(lower[i], upper[i]);
            largest_step = largest_step.max((next - u[i]).abs());
            u[i] = next;
        }
        if largest_step <= BOX_STEP_TOL {
            break;
        }
    }
    u
}
