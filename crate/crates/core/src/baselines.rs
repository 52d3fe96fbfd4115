//! Reference learners: projected online gradient descent, diagonal AdaGrad
//! and the Online Newton Step.

use nalgebra::DMatrix;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{Bounds, Domain, Vector};
use crate::learner::OnlineLearner;
use crate::projection::{mahalanobis_project, Covariance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OgdSchedule {
    /// `η_t = D/(G√t)`.
    General { diameter: f64, gradient: f64 },
    /// `η_t = 1/(μt)`.
    StronglyConvex { mu: f64 },
}

impl OgdSchedule {
    fn rate(&self, t: u64) -> f64 {
        let t = t as f64;
        match *self {
            OgdSchedule::General { diameter, gradient } => diameter / (gradient * t.sqrt()),
            OgdSchedule::StronglyConvex { mu } => 1.0 / (mu * t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ogd {
    w: Vector,
    /// Index of the next update, starting at 1.
    t: u64,
    schedule: OgdSchedule,
    domain: Domain,
}

impl Ogd {
    pub fn new(domain: Domain, schedule: OgdSchedule) -> Result<Self> {
        match schedule {
            OgdSchedule::General { diameter, gradient } if !(diameter > 0.0 && gradient > 0.0) => {
                return Err(Error::InvalidArgument("OGD needs positive D and G".into()))
            }
            OgdSchedule::StronglyConvex { mu } if !(mu > 0.0) => {
                return Err(Error::InvalidArgument("OGD needs positive mu".into()))
            }
            _ => {}
        }
        Ok(Ogd {
            w: Vector::zeros(domain.dim()),
            t: 1,
            schedule,
            domain,
        })
    }

    /// Standard `D/(G√t)` tuning from full-variant bounds.
    pub fn general(domain: Domain, bounds: &Bounds) -> Result<Self> {
        Self::new(
            domain,
            OgdSchedule::General {
                diameter: bounds.diameter,
                gradient: bounds.gradient,
            },
        )
    }

    pub fn with_state(mut self, w: Vector, t: u64) -> Result<Self> {
        check_dim(self.domain.dim(), w.len())?;
        self.w = w;
        self.t = t.max(1);
        Ok(self)
    }

    pub fn point(&self) -> &Vector {
        &self.w
    }

    pub fn step(&mut self, g: &Vector) -> Result<()> {
        check_dim(self.w.len(), g.len())?;
        check_finite(g.as_slice(), "gradient")?;
        let eta = self.schedule.rate(self.t);
        self.w = self.domain.euclidean_project(&(&self.w - g * eta))?;
        self.t += 1;
        Ok(())
    }
}

impl OnlineLearner for Ogd {
    fn name(&self) -> String {
        match self.schedule {
            OgdSchedule::General { .. } => "ogd".into(),
            OgdSchedule::StronglyConvex { .. } => "ogd-sc".into(),
        }
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn predict(&self) -> Vector {
        self.w.clone()
    }

    fn observe(&mut self, gradient: &Vector) -> Result<()> {
        self.step(gradient)
    }
}

/// Added inside the square root of the AdaGrad denominator.
pub const ADAGRAD_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AdaGradDiag {
    w: Vector,
    accum: Vector,
    step_scale: f64,
    domain: Domain,
}

impl AdaGradDiag {
    pub fn new(domain: Domain, step_scale: f64) -> Result<Self> {
        if !(step_scale > 0.0 && step_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step scale {step_scale} must be positive"
            )));
        }
        let d = domain.dim();
        Ok(AdaGradDiag {
            w: Vector::zeros(d),
            accum: Vector::zeros(d),
            step_scale,
            domain,
        })
    }

    pub fn point(&self) -> &Vector {
        &self.w
    }

    pub fn accumulated(&self) -> &Vector {
        &self.accum
    }

    pub fn step(&mut self, g: &Vector) -> Result<()> {
        check_dim(self.w.len(), g.len())?;
        check_finite(g.as_slice(), "gradient")?;
        self.accum += g.component_mul(g);
        let raw = Vector::from_fn(self.w.len(), |i, _| {
            self.w[i] - self.step_scale * g[i] / (self.accum[i] + ADAGRAD_EPS).sqrt()
        });
        self.w = self.domain.euclidean_project(&raw)?;
        Ok(())
    }
}

impl OnlineLearner for AdaGradDiag {
    fn name(&self) -> String {
        "adagrad".into()
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn predict(&self) -> Vector {
        self.w.clone()
    }

    fn observe(&mut self, gradient: &Vector) -> Result<()> {
        self.step(gradient)
    }
}

/// Online Newton Step with `A_t = εI + Σ g gᵀ` and step `(1/γ) A⁻¹ g`,
/// projected in the `A`-metric.
#[derive(Debug, Clone)]
pub struct Ons {
    w: Vector,
    precision: DMatrix<f64>,
    /// `A⁻¹`, maintained by Sherman–Morrison.
    inverse: DMatrix<f64>,
    gamma: f64,
    domain: Domain,
}

impl Ons {
    pub fn new(domain: Domain, epsilon: f64, gamma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && gamma > 0.0) {
            return Err(Error::InvalidArgument(
                "ONS needs positive epsilon and gamma".into(),
            ));
        }
        let d = domain.dim();
        Ok(Ons {
            w: Vector::zeros(d),
            precision: DMatrix::from_diagonal_element(d, d, epsilon),
            inverse: DMatrix::from_diagonal_element(d, d, 1.0 / epsilon),
            gamma,
            domain,
        })
    }

    /// `ε = 1/D²`, `γ = ½ min(1/(4GD), 1)`.
    pub fn with_defaults(domain: Domain, bounds: &Bounds) -> Result<Self> {
        let (d, g) = (bounds.diameter, bounds.gradient);
        Self::new(domain, 1.0 / (d * d), 0.5 * (1.0 / (4.0 * g * d)).min(1.0))
    }

    pub fn point(&self) -> &Vector {
        &self.w
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn step(&mut self, g: &Vector) -> Result<()> {
        check_dim(self.w.len(), g.len())?;
        check_finite(g.as_slice(), "gradient")?;
        if g.iter().all(|&x| x == 0.0) {
            return Ok(());
        }
        self.precision.ger(1.0, g, g, 1.0);
        let inv_g = &self.inverse * g;
        let denom = 1.0 + g.dot(&inv_g);
        self.inverse.ger(-1.0 / denom, &inv_g, &inv_g, 1.0);
        let raw = &self.w - (&self.inverse * g) / self.gamma;
        self.w = mahalanobis_project(&self.domain, &Covariance::Full(self.inverse.clone()), &raw)?;
        Ok(())
    }
}

impl OnlineLearner for Ons {
    fn name(&self) -> String {
        "ons".into()
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn predict(&self) -> Vector {
        self.w.clone()
    }

    fn observe(&mut self, gradient: &Vector) -> Result<()> {
        self.step(gradient)
    }
}
