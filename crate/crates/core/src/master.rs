//! Aggregation of the slaves: an η-tilted weighted average for prediction and
//! exponential weights on the surrogate losses for learning.

use crate::error::{check_dim, Error, Result};
use crate::geometry::Vector;

/// Tolerance on prior normalisation.
pub const PRIOR_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Master {
    etas: Vec<f64>,
    priors: Vec<f64>,
    /// Normalised log-weights, `log π_t^η`.
    log_weights: Vec<f64>,
    alpha: f64,
    cumulative_surrogate: Vec<f64>,
}

impl Master {
    /// `entries` are `(η, prior)` pairs with strictly decreasing `η`.
    pub fn new(entries: &[(f64, f64)], alpha: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument(
                "master needs at least one learning rate".into(),
            ));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} must be positive"
            )));
        }
        if entries.windows(2).any(|w| !(w[0].0 > w[1].0)) {
            return Err(Error::InvalidArgument(
                "learning rates must be strictly decreasing".into(),
            ));
        }
        if entries
            .iter()
            .any(|&(eta, p)| !(eta > 0.0 && p > 0.0 && p.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "learning rates and priors must be positive".into(),
            ));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "priors sum to {total}, expected 1"
            )));
        }
        Ok(Master {
            etas: entries.iter().map(|e| e.0).collect(),
            priors: entries.iter().map(|e| e.1).collect(),
            log_weights: entries.iter().map(|e| e.1.ln()).collect(),
            alpha,
            cumulative_surrogate: vec![0.0; entries.len()],
        })
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cumulative_surrogate(&self) -> &[f64] {
        &self.cumulative_surrogate
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// `Σ_η π_t^η η w^η / Σ_η π_t^η η`.
    pub fn tilted_average(&self, points: &[Vector]) -> Result<Vector> {
        check_dim(self.len(), points.len())?;
        let dim = points[0].len();
        // Weights relative to the largest log-weight; the common factor cancels.
        let top = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let coeffs: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.etas)
            .map(|(lw, eta)| (lw - top).exp() * eta)
            .collect();
        let den: f64 = coeffs.iter().sum();
        let mut avg = Vector::zeros(dim);
        for (c, p) in coeffs.iter().zip(points) {
            check_dim(dim, p.len())?;
            avg.axpy(c / den, p, 1.0);
        }
        Ok(avg)
    }

    /// `π_{t+1}^η ∝ π_t^η exp(-α ℓ_t^η(w_t^η))`.
    pub fn weight_update(&mut self, losses: &[f64]) -> Result<()> {
        check_dim(self.len(), losses.len())?;
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("surrogate loss"));
        }
        for ((lw, cum), &l) in self
            .log_weights
            .iter_mut()
            .zip(self.cumulative_surrogate.iter_mut())
            .zip(losses)
        {
            *lw -= self.alpha * l;
            *cum += l;
        }
        let norm = log_sum_exp(&self.log_weights);
        for lw in &mut self.log_weights {
            *lw -= norm;
        }
        Ok(())
    }

    /// `Φ = Σ_η π_1^η exp(-α Σ_s ℓ_s^η(w_s^η))`.
    pub fn potential(&self) -> f64 {
        self.priors
            .iter()
            .zip(&self.cumulative_surrogate)
            .map(|(p, c)| p * (-self.alpha * c).exp())
            .sum()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}
