//! Running regret statistics against a fixed comparator.

use nalgebra::DMatrix;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{LossFunction, Variant, Vector};

/// Slack on `R_T^u <= R̃_T^u`.
pub const LINEARIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    comparator: Vector,
    rounds: u64,
    cum_loss: f64,
    regret: f64,
    lin_regret: f64,
    variance_full: f64,
    variance_coords: Vector,
    grad_sq_sum: f64,
    outer_sum: DMatrix<f64>,
    diag_sum: Vector,
}

/// One round's contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub loss: f64,
    pub cum_loss: f64,
    pub regret: f64,
    pub lin_regret: f64,
    pub variance: f64,
}

impl RegretLedger {
    pub fn new(comparator: Vector) -> Self {
        let d = comparator.len();
        RegretLedger {
            comparator,
            rounds: 0,
            cum_loss: 0.0,
            regret: 0.0,
            lin_regret: 0.0,
            variance_full: 0.0,
            variance_coords: Vector::zeros(d),
            grad_sq_sum: 0.0,
            outer_sum: DMatrix::zeros(d, d),
            diag_sum: Vector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.comparator.len()
    }

    pub fn comparator(&self) -> &Vector {
        &self.comparator
    }

    /// Advances every accumulator by the round `(w_t, g_t, f_t)`; `g` is the
    /// subgradient the learner observed at `w`.
    pub fn record<L: LossFunction + ?Sized>(
        &mut self,
        w: &Vector,
        g: &Vector,
        f: &L,
    ) -> Result<RoundRecord> {
        let d = self.dim();
        check_dim(d, w.len())?;
        check_dim(d, g.len())?;
        check_finite(w.as_slice(), "prediction")?;
        check_finite(g.as_slice(), "gradient")?;
        let loss = f.value(w);
        let comparator_loss = f.value(&self.comparator);
        if !(loss.is_finite() && comparator_loss.is_finite()) {
            return Err(Error::NonFinite("loss value"));
        }
        let diff = w - &self.comparator;
        let inner = diff.dot(g);
        self.rounds += 1;
        self.cum_loss += loss;
        self.regret += loss - comparator_loss;
        self.lin_regret += inner;
        self.variance_full += inner * inner;
        for i in 0..d {
            let c = diff[i] * g[i];
            self.variance_coords[i] += c * c;
            self.diag_sum[i] += g[i] * g[i];
        }
        self.grad_sq_sum += g.norm_squared();
        self.outer_sum.ger(1.0, g, g, 1.0);
        Ok(RoundRecord {
            t: self.rounds,
            loss,
            cum_loss: self.cum_loss,
            regret: self.regret,
            lin_regret: self.lin_regret,
            variance: self.variance_full,
        })
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn cum_loss(&self) -> f64 {
        self.cum_loss
    }

    /// `R_T^u`.
    pub fn regret(&self) -> f64 {
        self.regret
    }

    /// `R̃_T^u = Σ (w_t - u)ᵀ g_t`.
    pub fn lin_regret(&self) -> f64 {
        self.lin_regret
    }

    /// `V_T^u` for the variant.
    pub fn variance(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Full => self.variance_full,
            Variant::Diag => self.variance_coords.sum(),
        }
    }

    /// `V_{T,i}^u`.
    pub fn variance_coords(&self) -> &Vector {
        &self.variance_coords
    }

    /// `Σ ‖g_t‖²`.
    pub fn grad_sq_sum(&self) -> f64 {
        self.grad_sq_sum
    }

    /// `S_T = Σ M_t` as a dense matrix.
    pub fn gradient_sum(&self, variant: Variant) -> DMatrix<f64> {
        match variant {
            Variant::Full => self.outer_sum.clone(),
            Variant::Diag => DMatrix::from_diagonal(&self.diag_sum),
        }
    }

    /// Diagonal of `S_T`, `Σ_t g_{t,i}²`.
    pub fn diag_gradient_sum(&self) -> &Vector {
        &self.diag_sum
    }

    /// `R_T^u <= R̃_T^u` up to [`LINEARIZATION_TOL`].
    pub fn linearization_holds(&self) -> bool {
        self.regret <= self.lin_regret + LINEARIZATION_TOL
    }
}
