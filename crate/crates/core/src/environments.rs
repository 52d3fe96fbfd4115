//! Seeded loss-sequence generators with known comparators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_gradient_bound, sample_sphere, Bounds, Domain, Loss, Variant, Vector};

/// Name of the generator behind every seeded stream.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm: String,
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec {
            algorithm: RNG_ALGORITHM.into(),
            seed,
        }
    }

    pub fn rng(&self) -> Result<ChaCha8Rng> {
        if self.algorithm != RNG_ALGORITHM {
            return Err(Error::InvalidConfig(format!(
                "unsupported rng `{}`, expected `{RNG_ALGORITHM}`",
                self.algorithm
            )));
        }
        Ok(ChaCha8Rng::seed_from_u64(self.seed))
    }
}

#[derive(Debug, Clone)]
enum Source {
    FixedAbsolute { center: Vector, scale: f64 },
    StochasticAbsolute { p_plus: f64, scale: f64 },
    HingeSphere { u_bar: Vector },
    RandomLinear { drift: Vector },
    Scripted { gradients: Vec<Vector> },
}

#[derive(Debug, Clone)]
pub struct Environment {
    name: &'static str,
    source: Source,
    domain: Domain,
    gradient_bound: f64,
    u_star: Option<Vector>,
    rng: ChaCha8Rng,
    round: usize,
}

impl Environment {
    fn build(
        name: &'static str,
        source: Source,
        domain: Domain,
        u_star: Option<Vector>,
        seed: u64,
    ) -> Self {
        Environment {
            name,
            source,
            domain,
            gradient_bound: 1.0,
            u_star,
            rng: ChaCha8Rng::seed_from_u64(seed),
            round: 0,
        }
    }

    /// `f(u) = |u - 1/4|` on `[-1, 1]`.
    pub fn fixed_absolute() -> Self {
        Self::fixed_absolute_nd(1).expect("d = 1 is valid")
    }

    /// `f(u) = (1/√d) Σ_i |u_i - 1/4|` on `[-1, 1]^d`; `d = 1` is the scalar case.
    pub fn fixed_absolute_nd(dim: usize) -> Result<Self> {
        let domain = Domain::cube(dim, 1.0)?;
        let center = Vector::from_element(dim, 0.25);
        let scale = 1.0 / (dim as f64).sqrt();
        Ok(Self::build(
            "fixed-absolute",
            Source::FixedAbsolute {
                center: center.clone(),
                scale,
            },
            domain,
            Some(center),
            0,
        ))
    }

    /// `f_t(u) = |u - x_t|` with `x_t = +1/2` w.p. `p_plus`, else `-1/2`.
    pub fn stochastic_absolute(p_plus: f64, seed: u64) -> Result<Self> {
        Self::stochastic_absolute_nd(1, p_plus, seed)
    }

    /// Coordinate-wise i.i.d. outcomes, scaled by `1/√d`.
    pub fn stochastic_absolute_nd(dim: usize, p_plus: f64, seed: u64) -> Result<Self> {
        if !(p_plus > 0.5 && p_plus < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_plus {p_plus} must lie in (1/2, 1)"
            )));
        }
        let domain = Domain::cube(dim, 1.0)?;
        let scale = 1.0 / (dim as f64).sqrt();
        Ok(Self::build(
            "stochastic-absolute",
            Source::StochasticAbsolute { p_plus, scale },
            domain,
            Some(Vector::from_element(dim, 0.5)),
            seed,
        ))
    }

    /// Hinge loss on the unit ball with `X` uniform on the sphere and
    /// noiseless labels `sign(<u_bar, X>)`, `sign(0) = +1`.
    pub fn hinge_sphere(u_bar: Vector, seed: u64) -> Result<Self> {
        let dim = u_bar.len();
        if dim < 2 {
            return Err(Error::InvalidArgument(
                "hinge environment needs d >= 2".into(),
            ));
        }
        if (u_bar.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "u_bar has norm {}, expected 1",
                u_bar.norm()
            )));
        }
        let domain = Domain::ball(dim, 1.0)?;
        Ok(Self::build(
            "hinge-sphere",
            Source::HingeSphere {
                u_bar: u_bar.clone(),
            },
            domain,
            Some(u_bar),
            seed,
        ))
    }

    /// Random linear losses on the unit ball: `g_t = 0.3 b + 0.7 v_t` with a
    /// fixed unit drift `b` and `v_t` uniform in the ball.
    pub fn random_linear(dim: usize, seed: u64) -> Result<Self> {
        let domain = Domain::ball(dim, 1.0)?;
        let drift = Vector::from_element(dim, 1.0 / (dim as f64).sqrt());
        Ok(Self::build(
            "random-linear",
            Source::RandomLinear { drift },
            domain,
            None,
            seed,
        ))
    }

    /// Replays linear losses `f_t(u) = g_tᵀu`; every gradient must satisfy
    /// `‖g‖₂ <= gradient_bound`.
    pub fn scripted(gradients: Vec<Vector>, domain: Domain, gradient_bound: f64) -> Result<Self> {
        let bounds = Bounds::new(1.0, gradient_bound, Variant::Full)?;
        for (t, g) in gradients.iter().enumerate() {
            crate::error::check_dim(domain.dim(), g.len())?;
            if let Err(v) = check_gradient_bound(g, &bounds) {
                return Err(Error::InvalidArgument(format!(
                    "scripted gradient {t}: {v}"
                )));
            }
        }
        let mut env = Self::build("scripted", Source::Scripted { gradients }, domain, None, 0);
        env.gradient_bound = gradient_bound;
        Ok(env)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `G` with `‖g‖₂ <= G` for every emitted loss (hence also `|g_i| <= G`).
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    /// Known optimum, when the environment has one.
    pub fn comparator(&self) -> Option<&Vector> {
        self.u_star.as_ref()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn next_loss(&mut self) -> Result<Loss> {
        let dim = self.domain.dim();
        let rng = &mut self.rng;
        let loss = match &self.source {
            Source::FixedAbsolute { center, scale } => Loss::Absolute {
                center: center.clone(),
                scale: *scale,
            },
            Source::StochasticAbsolute { p_plus, scale } => {
                let center = Vector::from_fn(dim, |_, _| {
                    if rng.random::<f64>() < *p_plus {
                        0.5
                    } else {
                        -0.5
                    }
                });
                Loss::Absolute {
                    center,
                    scale: *scale,
                }
            }
            Source::HingeSphere { u_bar } => {
                let x = sample_sphere(dim, rng);
                let y = if u_bar.dot(&x) >= 0.0 { 1.0 } else { -1.0 };
                Loss::Hinge { x, y }
            }
            Source::RandomLinear { drift } => {
                let v = sample_sphere(dim, rng) * rng.random::<f64>().powf(1.0 / dim as f64);
                Loss::Linear {
                    g: drift * 0.3 + v * 0.7,
                }
            }
            Source::Scripted { gradients } => {
                let g = gradients
                    .get(self.round)
                    .ok_or(Error::ScriptExhausted(gradients.len()))?;
                Loss::Linear { g: g.clone() }
            }
        };
        self.round += 1;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{check_convexity, LossFunction};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn fixed_absolute_values() {
        let mut env = Environment::fixed_absolute();
        assert_eq!(env.comparator(), Some(&v(&[0.25])));
        let f = env.next_loss().unwrap();
        assert_eq!(f.value(&v(&[0.25])), 0.0);
        assert_eq!(f.subgradient(&v(&[0.25])), v(&[0.0]));
        assert_eq!(f.value(&v(&[1.0])), 0.75);
        assert_eq!(f.subgradient(&v(&[1.0])), v(&[1.0]));
        assert_eq!(f.value(&v(&[-1.0])), 1.25);
        assert_eq!(f.subgradient(&v(&[-1.0])), v(&[-1.0]));
    }

    #[test]
    fn stochastic_absolute_frequencies() {
        let mut env = Environment::stochastic_absolute(0.6, 42).unwrap();
        assert_eq!(env.comparator(), Some(&v(&[0.5])));
        let n = 100_000;
        let mut plus = 0;
        let mut at_star = 0.0;
        for _ in 0..n {
            let f = env.next_loss().unwrap();
            let Loss::Absolute { center, .. } = &f else {
                panic!()
            };
            if center[0] > 0.0 {
                plus += 1;
            }
            at_star += f.value(&v(&[0.5]));
        }
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.6).abs() < 0.01, "{freq}");
        // E f(u*) = 0.4 · 1 + 0.6 · 0.
        assert!((at_star / n as f64 - 0.4).abs() < 0.01);
        assert!(Environment::stochastic_absolute(0.5, 1).is_err());
    }

    #[test]
    fn hinge_samples() {
        let u_bar = v(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        let mut env = Environment::hinge_sphere(u_bar.clone(), 3).unwrap();
        let origin = Vector::zeros(5);
        let mut margin = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let f = env.next_loss().unwrap();
            let Loss::Hinge { x, y } = &f else { panic!() };
            assert!((x.norm() - 1.0).abs() < 1e-12);
            assert_eq!(f.value(&origin), 1.0);
            assert!(f.subgradient(&origin).norm() <= 1.0 + 1e-12);
            margin += y * u_bar.dot(x);
        }
        assert!(margin / n as f64 > 0.0);
        assert!(Environment::hinge_sphere(v(&[1.0, 1.0]), 0).is_err());
        assert!(Environment::hinge_sphere(v(&[1.0]), 0).is_err());
    }

    #[test]
    fn scripted_replays_and_validates() {
        let domain = Domain::cube(2, 1.0).unwrap();
        let mut env = Environment::scripted(vec![v(&[0.5, -0.5])], domain.clone(), 1.0).unwrap();
        let f = env.next_loss().unwrap();
        assert_eq!(f.subgradient(&v(&[0.3, 0.9])), v(&[0.5, -0.5]));
        assert_eq!(f.subgradient(&v(&[-1.0, 0.0])), v(&[0.5, -0.5]));
        assert!(matches!(env.next_loss(), Err(Error::ScriptExhausted(1))));
        assert!(Environment::scripted(vec![v(&[2.0, 0.0])], domain, 1.0).is_err());
    }

    #[test]
    fn streams_are_deterministic() {
        let make = || {
            vec![
                Environment::stochastic_absolute_nd(3, 0.6, 9).unwrap(),
                Environment::hinge_sphere(v(&[0.6, 0.8]), 9).unwrap(),
                Environment::random_linear(4, 9).unwrap(),
            ]
        };
        for (mut a, mut b) in make().into_iter().zip(make()) {
            for _ in 0..500 {
                assert_eq!(a.next_loss().unwrap(), b.next_loss().unwrap());
            }
        }
    }

    #[test]
    fn emitted_losses_are_convex_and_bounded() {
        let mut rng = RngSpec::new(1).rng().unwrap();
        let mut envs = vec![
            Environment::fixed_absolute(),
            Environment::fixed_absolute_nd(3).unwrap(),
            Environment::stochastic_absolute(0.6, 2).unwrap(),
            Environment::stochastic_absolute_nd(5, 0.7, 2).unwrap(),
            Environment::hinge_sphere(v(&[0.0, 1.0, 0.0]), 2).unwrap(),
            Environment::random_linear(2, 2).unwrap(),
            Environment::scripted(vec![v(&[0.1, 0.2]); 20], Domain::ball(2, 1.0).unwrap(), 1.0)
                .unwrap(),
        ];
        for env in &mut envs {
            for _ in 0..20 {
                let f = env.next_loss().unwrap();
                check_convexity(&f, env.domain(), 100, &mut rng).unwrap();
                for _ in 0..20 {
                    let w = env.domain().sample_uniform(&mut rng);
                    assert!(
                        f.subgradient(&w).norm() <= env.gradient_bound() + 1e-12,
                        "{}",
                        env.name()
                    );
                }
            }
        }
    }

    #[test]
    fn rng_spec_rejects_unknown_algorithms() {
        let spec = RngSpec {
            algorithm: "mt19937".into(),
            seed: 1,
        };
        assert!(spec.rng().is_err());
    }
}
