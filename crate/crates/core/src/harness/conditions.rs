//! Empirical checkers for the two sufficient conditions for fast rates: the
//! directional-derivative lower bound and the Bernstein condition on
//! stochastic gradients.

use rand::Rng;
use serde::Serialize;

use crate::environments::Environment;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{LossFunction, Vector};

/// Slack on the directional inequality.
pub const DIRECTIONAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DirectionalOutcome {
    HoldsOnSample { samples: usize },
    Counterexample { w: Vector, lhs: f64, rhs: f64 },
}

impl DirectionalOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, DirectionalOutcome::HoldsOnSample { .. })
    }
}

impl std::fmt::Display for DirectionalOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DirectionalOutcome::HoldsOnSample { samples } => {
                write!(f, "holds on {samples} samples")
            }
            DirectionalOutcome::Counterexample { w, lhs, rhs } => {
                write!(
                    f,
                    "violated at w = {:?}: f(u) = {lhs:.6} < {rhs:.6}",
                    w.as_slice()
                )
            }
        }
    }
}

/// Samples `w` uniformly from the environment's domain, draws a loss for each
/// and tests `f(u) >= f(w) + a (u-w)ᵀ∇f(w) + b ((u-w)ᵀ∇f(w))²`.
pub fn directional_condition_check<R: Rng + ?Sized>(
    env: &mut Environment,
    u: &Vector,
    a: f64,
    b: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<DirectionalOutcome> {
    check_dim(env.dim(), u.len())?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument("a and b must be positive".into()));
    }
    for _ in 0..n_samples {
        let w = env.domain().sample_uniform(rng);
        let f = env.next_loss()?;
        let inner = (u - &w).dot(&f.subgradient(&w));
        let lhs = f.value(u);
        let rhs = f.value(&w) + a * inner + b * inner * inner;
        if lhs < rhs - DIRECTIONAL_TOL {
            return Ok(DirectionalOutcome::Counterexample { w, lhs, rhs });
        }
    }
    Ok(DirectionalOutcome::HoldsOnSample { samples: n_samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernsteinPoint {
    pub w: Vec<f64>,
    /// `(w-u*)ᵀ E[∇f ∇fᵀ] (w-u*)`.
    pub second_moment: f64,
    /// `(w-u*)ᵀ E[∇f]`.
    pub first_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernsteinEstimate {
    /// Smallest `B` satisfying the condition on every usable grid point.
    pub b_hat: f64,
    pub argmax: Option<Vec<f64>>,
    pub points: Vec<BernsteinPoint>,
    /// Grid points where the first moment was not positive.
    pub skipped: Vec<Vec<f64>>,
}

/// Monte-Carlo estimate of `max_w (w-u*)ᵀE[∇f∇fᵀ](w-u*) / ((w-u*)ᵀE[∇f])^β`
/// over `w_grid`, with `n_mc` fresh losses per grid point.
pub fn bernstein_estimate(
    env: &mut Environment,
    u_star: &Vector,
    beta: f64,
    n_mc: usize,
    w_grid: &[Vector],
) -> Result<BernsteinEstimate> {
    check_dim(env.dim(), u_star.len())?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta {beta} must lie in (0, 1]"
        )));
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let mut estimate = BernsteinEstimate {
        b_hat: 0.0,
        argmax: None,
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for w in w_grid {
        check_dim(env.dim(), w.len())?;
        if w == u_star {
            return Err(Error::InvalidArgument(
                "grid must exclude the comparator".into(),
            ));
        }
        let diff = w - u_star;
        let (mut first, mut second) = (0.0, 0.0);
        for _ in 0..n_mc {
            let x = diff.dot(&env.next_loss()?.subgradient(w));
            first += x;
            second += x * x;
        }
        let point = BernsteinPoint {
            w: w.iter().cloned().collect(),
            second_moment: second / n_mc as f64,
            first_moment: first / n_mc as f64,
        };
        if point.first_moment <= 0.0 {
            estimate.skipped.push(point.w);
            continue;
        }
        let ratio = point.second_moment / point.first_moment.powf(beta);
        if ratio > estimate.b_hat {
            estimate.b_hat = ratio;
            estimate.argmax = Some(point.w.clone());
        }
        estimate.points.push(point);
    }
    Ok(estimate)
}
