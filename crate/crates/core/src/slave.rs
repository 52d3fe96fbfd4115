//! One learner per grid learning rate: exponential weights with a Gaussian
//! prior on the surrogate losses, kept in closed form as a mean and a
//! covariance.

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{Bounds, Domain, Variant, Vector};
use crate::projection::{mahalanobis_project, Covariance};

/// Smallest admissible diagonal covariance entry before the update is
/// declared broken.
pub const MIN_COVARIANCE_DIAGONAL: f64 = 1e-300;

/// Relative slack allowed on `η <= 1/(5DG)`.
const ETA_RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Slave {
    eta: f64,
    w: Vector,
    cov: Covariance,
    diameter: f64,
}

impl Slave {
    /// Starts at the origin with covariance `D² I`.
    pub fn new(eta: f64, bounds: &Bounds, dim: usize) -> Result<Self> {
        let max = bounds.max_learning_rate();
        if !(eta > 0.0 && eta <= max * (1.0 + ETA_RANGE_TOL)) {
            return Err(Error::LearningRateOutOfRange { eta, max });
        }
        let d2 = bounds.diameter * bounds.diameter;
        Ok(Slave {
            eta,
            w: Vector::zeros(dim),
            cov: Covariance::scaled_identity(bounds.variant, dim, d2),
            diameter: bounds.diameter,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn point(&self) -> &Vector {
        &self.w
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn variant(&self) -> Variant {
        match self.cov {
            Covariance::Full(_) => Variant::Full,
            Covariance::Diag(_) => Variant::Diag,
        }
    }

    /// One update with the master's gradient `g` taken at the master point.
    pub fn step(&mut self, g: &Vector, w_master: &Vector, domain: &Domain) -> Result<()> {
        let d = self.w.len();
        check_dim(d, g.len())?;
        check_dim(d, w_master.len())?;
        check_dim(d, domain.dim())?;
        check_finite(g.as_slice(), "gradient")?;
        if g.iter().all(|&x| x == 0.0) {
            return Ok(());
        }
        let eta = self.eta;
        let eta2 = eta * eta;
        let offset = &self.w - w_master;

        let intermediate = match &mut self.cov {
            Covariance::Full(cov) => {
                // Sherman–Morrison on the precision update I/D² + 2η² Σ g gᵀ.
                let cov_g = &*cov * g;
                let denom = 1.0 + 2.0 * eta2 * g.dot(&cov_g);
                cov.ger(-2.0 * eta2 / denom, &cov_g, &cov_g, 1.0);
                // Σ_{t+1} g = Σ_t g / denom
                let new_cov_g = cov_g / denom;
                &self.w - new_cov_g * (eta * (1.0 + 2.0 * eta * g.dot(&offset)))
            }
            Covariance::Diag(cov) => {
                for (s, &gi) in cov.iter_mut().zip(g.iter()) {
                    *s /= 1.0 + 2.0 * eta2 * gi * gi * *s;
                }
                Vector::from_fn(d, |i, _| {
                    let gi = g[i];
                    self.w[i] - cov[i] * (eta * gi + 2.0 * eta2 * gi * gi * offset[i])
                })
            }
        };

        let smallest = match &self.cov {
            Covariance::Full(cov) => cov.diagonal().min(),
            Covariance::Diag(cov) => cov.min(),
        };
        if !(smallest >= MIN_COVARIANCE_DIAGONAL) {
            return Err(Error::NotPositiveDefinite);
        }
        check_finite(intermediate.as_slice(), "slave iterate")?;
        self.w = mahalanobis_project(domain, &self.cov, &intermediate)?;
        Ok(())
    }
}
