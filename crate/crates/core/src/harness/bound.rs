//! Exact-constant regret bounds for the grid learner, evaluated on a ledger.
//!
//! With `B = ‖u‖²/D² + C_T/α` and `C_T = 4 ln(3 + ½ log₂ T)`:
//!
//! ```text
//! variance bound:      √(8 V (B + Ξ)) + 5DG (B + Ξ)
//! gradient-sum bound:  √(8 D² Σ‖g‖² B) + 5DG B
//! ```
//!
//! `Ξ` is `min{ln det(I + D² rk(S)/V · S), rk(S) ln(D² Σ‖g‖² / V)}` for the
//! full variant and `Σ_i ln(D² S_ii / V_i)` for the diagonal one.

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::geometry::{Variant, Vector};
use crate::harness::ledger::RegretLedger;
use crate::metagrad::LearningRateGrid;
use crate::surrogate::alpha;

/// Singular values below this fraction of the largest one do not count
/// towards the rank of `S_T`.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// `None` when the variance vanishes and only the gradient-sum form applies.
    pub bound_variance: Option<f64>,
    pub bound_gradient_sum: f64,
    pub xi: Option<f64>,
    pub c_t: f64,
    /// `min(bounds) - R̃_T^u`.
    pub slack: f64,
}

impl BoundReport {
    pub fn bound(&self) -> f64 {
        match self.bound_variance {
            Some(b) => b.min(self.bound_gradient_sum),
            None => self.bound_gradient_sum,
        }
    }

    /// `slack >= -rel_tol · max(1, bound)`.
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.slack >= -rel_tol * self.bound().abs().max(1.0)
    }
}

/// `C_T = 4 ln(3 + ½ log₂ T)`.
pub fn c_t(horizon: u64) -> f64 {
    4.0 * (3.0 + 0.5 * (horizon as f64).log2()).ln()
}

/// Number of eigenvalues of the PSD matrix above `RANK_TOL` times the largest.
pub fn numerical_rank(eigenvalues: &Vector) -> usize {
    let top = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    eigenvalues.iter().filter(|&&x| x > RANK_TOL * top).count()
}

/// Evaluates both bounds for comparator `u` (the ledger's comparator) with the
/// grid's `D`, `G` and horizon.
pub fn regret_bound(
    ledger: &RegretLedger,
    grid: &LearningRateGrid,
    variant: Variant,
) -> BoundReport {
    let u = ledger.comparator();
    let d = ledger.dim();
    let (diam, grad) = (grid.diameter(), grid.gradient());
    let d2 = diam * diam;
    let c_t = c_t(grid.horizon());
    let base = u.norm_squared() / d2 + c_t / alpha(variant, d);
    let grad_sq = ledger.grad_sq_sum();

    let bound_gradient_sum = (8.0 * d2 * grad_sq * base).sqrt() + 5.0 * diam * grad * base;

    let xi = match variant {
        Variant::Full => xi_full(ledger, d2),
        Variant::Diag => xi_diag(ledger.diag_gradient_sum(), ledger.variance_coords(), d2),
    };
    let variance = ledger.variance(variant);
    let xi = xi.filter(|_| variance > 0.0);
    let bound_variance = xi.map(|xi| {
        let a = base + xi;
        (8.0 * variance * a).sqrt() + 5.0 * diam * grad * a
    });

    let mut report = BoundReport {
        bound_variance,
        bound_gradient_sum,
        xi,
        c_t,
        slack: 0.0,
    };
    report.slack = report.bound() - ledger.lin_regret();
    report
}

fn xi_full(ledger: &RegretLedger, d2: f64) -> Option<f64> {
    let v = ledger.variance(Variant::Full);
    if !(v > 0.0) {
        return None;
    }
    let eig = SymmetricEigen::new(ledger.gradient_sum(Variant::Full)).eigenvalues;
    let rank = numerical_rank(&eig) as f64;
    let log_det: f64 = eig
        .iter()
        .map(|&l| (d2 * rank / v * l.max(0.0)).ln_1p())
        .sum();
    let trace_form = rank * (d2 * ledger.grad_sq_sum() / v).ln();
    Some(log_det.min(trace_form))
}

fn xi_diag(diag_sum: &Vector, variance_coords: &Vector, d2: f64) -> Option<f64> {
    let mut xi = 0.0;
    for (&s, &v) in diag_sum.iter().zip(variance_coords.iter()) {
        if s == 0.0 {
            // Coordinate never moved: it contributes nothing to the bound.
            continue;
        }
        if !(v > 0.0) {
            return None;
        }
        xi += (d2 * s / v).ln();
    }
    Some(xi)
}
