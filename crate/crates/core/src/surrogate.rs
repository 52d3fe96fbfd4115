//! Linear-plus-quadratic surrogate losses shared by the master and slaves.
//!
//! For a learning rate `η`, master point `w_t` and gradient `g_t`,
//!
//! ```text
//! ℓ_t^η(u) = -η (w_t - u)ᵀ g_t + η² (u - w_t)ᵀ M_t (u - w_t)
//! ```
//!
//! where `M_t = g_t g_tᵀ` (full) or `diag(g_t²)` (diag).

use nalgebra::DMatrix;

use crate::error::{check_dim, Result};
use crate::geometry::{Variant, Vector};

/// Exponential-weights rate of the master: `1` for full, `1/d` for diag.
pub fn alpha(variant: Variant, dim: usize) -> f64 {
    match variant {
        Variant::Full => 1.0,
        Variant::Diag => 1.0 / dim as f64,
    }
}

/// `M_t` without materialising a `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum GradientOuterProduct {
    /// Rank-one `g gᵀ`, stored as `g`.
    Full(Vector),
    /// `diag(g_1², …, g_d²)`, stored as `g`.
    Diag(Vector),
}

impl GradientOuterProduct {
    pub fn new(variant: Variant, g: &Vector) -> Self {
        match variant {
            Variant::Full => GradientOuterProduct::Full(g.clone()),
            Variant::Diag => GradientOuterProduct::Diag(g.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GradientOuterProduct::Full(g) | GradientOuterProduct::Diag(g) => g.len(),
        }
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &Vector) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(match self {
            GradientOuterProduct::Full(g) => {
                let s = g.dot(v);
                s * s
            }
            GradientOuterProduct::Diag(g) => g
                .iter()
                .zip(v.iter())
                .map(|(gi, x)| (gi * x) * (gi * x))
                .sum(),
        })
    }

    /// Dense `M`, for oracles and accumulators.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            GradientOuterProduct::Full(g) => g * g.transpose(),
            GradientOuterProduct::Diag(g) => DMatrix::from_diagonal(&g.component_mul(g)),
        }
    }
}

pub fn surrogate_loss(
    eta: f64,
    w_t: &Vector,
    g_t: &Vector,
    u: &Vector,
    variant: Variant,
) -> Result<f64> {
    check_dim(w_t.len(), g_t.len())?;
    check_dim(w_t.len(), u.len())?;
    let diff = u - w_t;
    let linear = eta * diff.dot(g_t);
    let quad = GradientOuterProduct::new(variant, g_t).quadratic_form(&diff)?;
    Ok(linear + eta * eta * quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Bounds, Domain};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(Variant::Full, 7), 1.0);
        assert_eq!(alpha(Variant::Diag, 4), 0.25);
        assert_eq!(alpha(Variant::Diag, 1), 1.0);
    }

    #[test]
    fn quadratic_form_examples() {
        let full = GradientOuterProduct::new(Variant::Full, &v(&[1.0, 2.0]));
        assert_eq!(full.quadratic_form(&v(&[1.0, 1.0])).unwrap(), 9.0);
        let diag = GradientOuterProduct::new(Variant::Diag, &v(&[1.0, 2.0]));
        assert_eq!(diag, GradientOuterProduct::Diag(v(&[1.0, 2.0])));
        assert_eq!(diag.quadratic_form(&v(&[1.0, 1.0])).unwrap(), 5.0);
        assert_eq!(full.quadratic_form(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(diag.quadratic_form(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert!(full.quadratic_form(&v(&[1.0])).is_err());
    }

    #[test]
    fn surrogate_example() {
        let l = surrogate_loss(0.1, &v(&[0.0]), &v(&[1.0]), &v(&[0.5]), Variant::Full).unwrap();
        assert!((l - 0.0525).abs() < 1e-15);
    }

    #[test]
    fn full_quadratic_form_matches_materialised_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d = rng.random_range(1..6);
            let g = Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let x = Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let m = GradientOuterProduct::new(Variant::Full, &g);
            let fast = m.quadratic_form(&x).unwrap();
            let dense = (x.transpose() * m.to_matrix() * &x)[(0, 0)];
            assert!(fast >= 0.0);
            assert!((fast - dense).abs() <= 1e-12 * dense.abs().max(1.0));
        }
    }

    /// `exp(-α ℓ_t^η(w^η)) <= 1 + α η (w_t - w^η)ᵀ g_t` for `η <= 1/(5DG)`.
    #[test]
    fn tangent_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for variant in [Variant::Full, Variant::Diag] {
            for _ in 0..10_000 {
                let d = rng.random_range(1..6);
                let domain = Domain::cube(d, 1.0).unwrap();
                let bounds = crate::geometry::bounds_for(&domain, 1.0, variant).unwrap();
                let Bounds {
                    diameter, gradient, ..
                } = bounds;
                let eta = rng.random_range(1e-4..=1.0) / (5.0 * diameter * gradient);
                let w_t = domain.sample_uniform(&mut rng);
                let w_eta = domain.sample_uniform(&mut rng);
                let mut g = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                if variant == Variant::Full && g.norm() > 1.0 {
                    g /= g.norm();
                }
                let a = alpha(variant, d);
                let l = surrogate_loss(eta, &w_t, &g, &w_eta, variant).unwrap();
                let rhs = 1.0 + a * eta * (&w_t - &w_eta).dot(&g);
                assert!(
                    (-a * l).exp() <= rhs + 1e-12,
                    "{variant}: {} > {rhs}",
                    (-a * l).exp()
                );
            }
        }
    }

    proptest! {
        #[test]
        fn vanishes_at_master_point(
            eta in 1e-4f64..1.0,
            w in prop::collection::vec(-1.0f64..1.0, 1..5),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Vector::from_vec(w);
            let g = Vector::from_fn(w.len(), |_, _| rng.random_range(-1.0..1.0));
            for variant in [Variant::Full, Variant::Diag] {
                prop_assert_eq!(surrogate_loss(eta, &w, &g, &w, variant).unwrap(), 0.0);
            }
        }

        #[test]
        fn variants_agree_in_one_dimension(eta in 1e-4f64..1.0, w in -1.0f64..1.0, g in -1.0f64..1.0, u in -1.0f64..1.0) {
            let (w, g, u) = (v(&[w]), v(&[g]), v(&[u]));
            let full = surrogate_loss(eta, &w, &g, &u, Variant::Full).unwrap();
            let diag = surrogate_loss(eta, &w, &g, &u, Variant::Diag).unwrap();
            prop_assert!((full - diag).abs() <= 1e-15 * full.abs().max(f64::MIN_POSITIVE));
        }
    }
}
