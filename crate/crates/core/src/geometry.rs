//! Feasible sets, boundedness constants and the loss-function abstraction.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;

/// Absolute tolerance for exact geometric comparisons.
pub const GEOMETRY_TOL: f64 = 1e-12;
/// Tolerance for sampled convexity checks.
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Full second-order information or its diagonal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Diag,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Diag => "diag",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "diag" => Ok(Variant::Diag),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Euclidean ball centred at the origin.
    Ball { radius: f64 },
    /// Axis-aligned box `lower <= u <= upper`.
    Box { lower: Vector, upper: Vector },
}

/// A closed convex feasible set containing the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: Shape,
    dim: usize,
}

impl Domain {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "radius {radius} must be positive"
            )));
        }
        Ok(Domain {
            shape: Shape::Ball { radius },
            dim,
        })
    }

    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= 0.0 && 0.0 <= hi && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "coordinate {i}: bounds [{lo}, {hi}] must be finite, non-degenerate and contain 0"
                )));
            }
        }
        let dim = lower.len();
        Ok(Domain {
            shape: Shape::Box { lower, upper },
            dim,
        })
    }

    /// The cube `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::boxed(
            Vector::from_element(dim, -half_width),
            Vector::from_element(dim, half_width),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Membership with an absolute slack.
    pub fn contains(&self, p: &Vector, slack: f64) -> bool {
        if p.len() != self.dim {
            return false;
        }
        match &self.shape {
            Shape::Ball { radius } => p.norm() <= radius + slack,
            Shape::Box { lower, upper } => p
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(&x, (&lo, &hi))| x >= lo - slack && x <= hi + slack),
        }
    }

    /// Nearest point of the set in the Euclidean norm.
    pub fn euclidean_project(&self, p: &Vector) -> Result<Vector> {
        check_dim(self.dim, p.len())?;
        Ok(match &self.shape {
            Shape::Ball { radius } => {
                let n = p.norm();
                if n <= *radius {
                    p.clone()
                } else {
                    let mut q = p * (*radius / n);
                    // rounding can leave the scaled point one ulp outside
                    while q.norm() > *radius {
                        q *= 1.0 - f64::EPSILON;
                    }
                    q
                }
            }
            Shape::Box { lower, upper } => {
                Vector::from_fn(self.dim, |i, _| p[i].clamp(lower[i], upper[i]))
            }
        })
    }

    /// Uniform sample from the set.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match &self.shape {
            Shape::Ball { radius } => {
                let dir = sample_sphere(self.dim, rng);
                let r = radius * rng.random::<f64>().powf(1.0 / self.dim as f64);
                dir * r
            }
            Shape::Box { lower, upper } => Vector::from_fn(self.dim, |i, _| {
                lower[i] + (upper[i] - lower[i]) * rng.random::<f64>()
            }),
        }
    }
}

/// Uniform sample on the unit sphere via normalised standard Gaussians.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Diameter bound `D` and gradient bound `G` for one variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub diameter: f64,
    pub gradient: f64,
    pub variant: Variant,
}

impl Bounds {
    pub fn new(diameter: f64, gradient: f64, variant: Variant) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite() && gradient > 0.0 && gradient.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bounds must be positive and finite (D={diameter}, G={gradient})"
            )));
        }
        Ok(Bounds {
            diameter,
            gradient,
            variant,
        })
    }

    /// Largest learning rate any slave may use, `1/(5DG)`.
    pub fn max_learning_rate(&self) -> f64 {
        1.0 / (5.0 * self.diameter * self.gradient)
    }
}

/// Derives `D` from the domain geometry; `G` is supplied by the caller.
pub fn bounds_for(domain: &Domain, gradient: f64, variant: Variant) -> Result<Bounds> {
    let diameter = match (domain.shape(), variant) {
        (Shape::Ball { radius }, _) => 2.0 * radius,
        (Shape::Box { lower, upper }, Variant::Full) => (upper - lower).norm(),
        (Shape::Box { lower, upper }, Variant::Diag) => (upper - lower).max(),
    };
    Bounds::new(diameter, gradient, variant)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundViolation {
    /// `‖g‖₂ > G` (full variant).
    Norm { norm: f64, bound: f64 },
    /// `|g_i| > G` at a zero-based coordinate (diag variant).
    Coordinate {
        index: usize,
        magnitude: f64,
        bound: f64,
    },
}

impl fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundViolation::Norm { norm, bound } => {
                write!(f, "gradient norm {norm} exceeds G = {bound}")
            }
            BoundViolation::Coordinate {
                index,
                magnitude,
                bound,
            } => write!(
                f,
                "|g_{index}| = {magnitude} exceeds G = {bound} (coordinate {index}, zero-based)"
            ),
        }
    }
}

/// `‖g‖₂ <= G` (full) or `max_i |g_i| <= G` (diag), up to a relative
/// [`GEOMETRY_TOL`] so unit vectors built by normalisation pass.
pub fn check_gradient_bound(
    g: &Vector,
    bounds: &Bounds,
) -> std::result::Result<(), BoundViolation> {
    let limit = bounds.gradient * (1.0 + GEOMETRY_TOL);
    match bounds.variant {
        Variant::Full => {
            let norm = g.norm();
            if norm > limit {
                return Err(BoundViolation::Norm {
                    norm,
                    bound: bounds.gradient,
                });
            }
        }
        Variant::Diag => {
            if let Some((index, &x)) = g.iter().enumerate().find(|(_, x)| x.abs() > limit) {
                return Err(BoundViolation::Coordinate {
                    index,
                    magnitude: x.abs(),
                    bound: bounds.gradient,
                });
            }
        }
    }
    Ok(())
}

/// A convex loss revealed by the environment.
pub trait LossFunction {
    fn value(&self, u: &Vector) -> f64;
    fn subgradient(&self, u: &Vector) -> Vector;
}

/// The concrete losses emitted by the environments.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// `scale * Σ_i |u_i - c_i|`.
    Absolute { center: Vector, scale: f64 },
    /// `max(0, 1 - y <u, x>)`.
    Hinge { x: Vector, y: f64 },
    /// `<g, u>`.
    Linear { g: Vector },
}

/// Sign with `sign(0) = 0`, the minimum-norm subgradient of `|·|`.
fn kink_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl LossFunction for Loss {
    fn value(&self, u: &Vector) -> f64 {
        match self {
            Loss::Absolute { center, scale } => scale * (u - center).abs().sum(),
            Loss::Hinge { x, y } => (1.0 - y * u.dot(x)).max(0.0),
            Loss::Linear { g } => g.dot(u),
        }
    }

    fn subgradient(&self, u: &Vector) -> Vector {
        match self {
            Loss::Absolute { center, scale } => (u - center).map(|z| scale * kink_sign(z)),
            Loss::Hinge { x, y } => {
                if y * u.dot(x) < 1.0 {
                    x * (-y)
                } else {
                    Vector::zeros(x.len())
                }
            }
            Loss::Linear { g } => g.clone(),
        }
    }
}

impl Loss {
    /// Returns `f(u)` and adds `weight * ∇f(u)` into `grad` without allocating.
    pub fn accumulate(&self, u: &Vector, weight: f64, grad: &mut Vector) -> f64 {
        match self {
            Loss::Absolute { center, scale } => {
                let mut value = 0.0;
                for i in 0..u.len() {
                    let z = u[i] - center[i];
                    value += z.abs();
                    grad[i] += weight * scale * kink_sign(z);
                }
                scale * value
            }
            Loss::Hinge { x, y } => {
                let margin = y * u.dot(x);
                if margin < 1.0 {
                    grad.axpy(-weight * y, x, 1.0);
                }
                (1.0 - margin).max(0.0)
            }
            Loss::Linear { g } => {
                grad.axpy(weight, g, 1.0);
                g.dot(u)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityViolation {
    pub v: Vector,
    pub w: Vector,
    pub gap: f64,
}

/// Checks `f(v) >= f(w) + (v-w)ᵀ∇f(w)` on `n_pairs` uniform pairs from the domain.
pub fn check_convexity<L: LossFunction + ?Sized, R: Rng + ?Sized>(
    loss: &L,
    domain: &Domain,
    n_pairs: usize,
    rng: &mut R,
) -> std::result::Result<(), ConvexityViolation> {
    for _ in 0..n_pairs {
        let v = domain.sample_uniform(rng);
        let w = domain.sample_uniform(rng);
        let gap = loss.value(&v) - loss.value(&w) - (&v - &w).dot(&loss.subgradient(&w));
        if gap < -CONVEXITY_TOL {
            return Err(ConvexityViolation { v, w, gap });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn ball_projection_scales_radially() {
        let ball = Domain::ball(2, 1.0).unwrap();
        assert_eq!(
            ball.euclidean_project(&v(&[2.0, 0.0])).unwrap(),
            v(&[1.0, 0.0])
        );
        assert_eq!(
            ball.euclidean_project(&v(&[0.3, 0.4])).unwrap(),
            v(&[0.3, 0.4])
        );
    }

    #[test]
    fn box_projection_clips() {
        let cube = Domain::cube(2, 1.0).unwrap();
        assert_eq!(
            cube.euclidean_project(&v(&[2.0, -3.0])).unwrap(),
            v(&[1.0, -1.0])
        );
    }

    #[test]
    fn projection_rejects_wrong_dimension() {
        let cube = Domain::cube(2, 1.0).unwrap();
        assert!(matches!(
            cube.euclidean_project(&v(&[1.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn domains_must_contain_origin() {
        assert!(Domain::boxed(v(&[0.5]), v(&[1.0])).is_err());
        assert!(Domain::ball(2, 0.0).is_err());
        assert!(Domain::ball(0, 1.0).is_err());
    }

    #[test]
    fn diameters() {
        let ball = Domain::ball(3, 1.0).unwrap();
        assert_eq!(bounds_for(&ball, 1.0, Variant::Full).unwrap().diameter, 2.0);
        let cube = Domain::cube(2, 1.0).unwrap();
        assert_eq!(bounds_for(&cube, 1.0, Variant::Diag).unwrap().diameter, 2.0);
        let full = bounds_for(&cube, 1.0, Variant::Full).unwrap().diameter;
        assert!((full - 2.0 * 2f64.sqrt()).abs() < GEOMETRY_TOL);
    }

    #[test]
    fn gradient_bound_reports() {
        let full = Bounds::new(2.0, 1.0, Variant::Full).unwrap();
        assert!(check_gradient_bound(&v(&[0.6, 0.8]), &full).is_ok());
        let diag = Bounds::new(2.0, 0.7, Variant::Diag).unwrap();
        match check_gradient_bound(&v(&[0.6, 0.8]), &diag) {
            Err(BoundViolation::Coordinate {
                index, magnitude, ..
            }) => {
                assert_eq!(index, 1);
                assert_eq!(magnitude, 0.8);
            }
            other => panic!("expected coordinate violation, got {other:?}"),
        }
        assert!(check_gradient_bound(&v(&[0.0, 0.0]), &diag).is_ok());
        assert!(check_gradient_bound(&v(&[0.0, 0.0]), &full).is_ok());
        assert!(matches!(
            check_gradient_bound(&v(&[2.0, 0.0]), &full),
            Err(BoundViolation::Norm { .. })
        ));
    }

    #[test]
    fn kinks_use_zero_subgradient() {
        let abs = Loss::Absolute {
            center: v(&[0.25]),
            scale: 1.0,
        };
        assert_eq!(abs.subgradient(&v(&[0.25])), v(&[0.0]));
        let hinge = Loss::Hinge {
            x: v(&[1.0, 0.0]),
            y: 1.0,
        };
        assert_eq!(hinge.subgradient(&v(&[1.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(hinge.subgradient(&v(&[0.5, 0.0])), v(&[-1.0, 0.0]));
    }

    #[test]
    fn projection_is_optimal_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let domains = [
            Domain::ball(3, 1.5).unwrap(),
            Domain::boxed(v(&[-1.0, -0.5, -2.0]), v(&[0.5, 1.0, 0.1])).unwrap(),
        ];
        for domain in &domains {
            for _ in 0..1000 {
                let p = domain.sample_uniform(&mut rng) * 3.0;
                let u = domain.sample_uniform(&mut rng);
                let proj = domain.euclidean_project(&p).unwrap();
                assert!(domain.contains(&proj, GEOMETRY_TOL));
                assert!((&proj - &p).norm() <= (&u - &p).norm() + GEOMETRY_TOL);
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(xs in prop::collection::vec(-5.0f64..5.0, 3), radius in 0.1f64..3.0) {
            let p = Vector::from_vec(xs);
            for domain in [Domain::ball(3, radius).unwrap(), Domain::cube(3, radius).unwrap()] {
                let once = domain.euclidean_project(&p).unwrap();
                let twice = domain.euclidean_project(&once).unwrap();
                prop_assert!(domain.contains(&once, GEOMETRY_TOL));
                prop_assert_eq!(once, twice);
            }
        }
    }

    #[test]
    fn accumulate_agrees_with_value_and_subgradient() {
        let u = v(&[0.3, -0.25, 0.0]);
        let losses = [
            Loss::Absolute {
                center: v(&[0.25, -0.25, 0.5]),
                scale: 0.5,
            },
            Loss::Hinge {
                x: v(&[0.6, 0.0, 0.8]),
                y: -1.0,
            },
            Loss::Hinge {
                x: v(&[0.0, 1.0, 0.0]),
                y: -4.0,
            },
            Loss::Linear {
                g: v(&[1.0, 2.0, -3.0]),
            },
        ];
        for f in &losses {
            let mut grad = v(&[1.0, 1.0, 1.0]);
            let value = f.accumulate(&u, 2.0, &mut grad);
            assert_eq!(value, f.value(&u));
            assert_eq!(grad, v(&[1.0, 1.0, 1.0]) + f.subgradient(&u) * 2.0);
        }
    }

    #[test]
    fn normalised_vectors_respect_unit_bound() {
        let bounds = Bounds::new(2.0, 1.0, Variant::Full).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            assert!(check_gradient_bound(&sample_sphere(5, &mut rng), &bounds).is_ok());
        }
        assert!(check_gradient_bound(&v(&[1.0 + 1e-9]), &bounds).is_err());
    }
}
