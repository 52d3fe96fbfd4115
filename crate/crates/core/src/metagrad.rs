//! The two-level learner: a master over an exponentially spaced grid of
//! learning rates, with one slave per grid point.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{bounds_for, check_gradient_bound, Bounds, Domain, Variant, Vector};
use crate::learner::OnlineLearner;
use crate::master::Master;
use crate::slave::Slave;
use crate::surrogate::{alpha, surrogate_loss};

/// `⌈½ log₂ T⌉` in integer arithmetic.
pub fn ceil_half_log2(horizon: u64) -> u32 {
    let ceil_log2 = if horizon <= 1 {
        0
    } else {
        64 - (horizon - 1).leading_zeros()
    };
    ceil_log2.div_ceil(2)
}

/// Learning rates `η_i = 2^{-i}/(5DG)` for `i = 0..=⌈½ log₂ T⌉` with
/// heavy-tailed prior `C/((i+1)(i+2))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRateGrid {
    entries: Vec<(f64, f64)>,
    horizon: u64,
    diameter: f64,
    gradient: f64,
}

impl LearningRateGrid {
    pub fn new(diameter: f64, gradient: f64, horizon: u64) -> Result<Self> {
        if !(diameter > 0.0 && gradient > 0.0 && diameter.is_finite() && gradient.is_finite()) {
            return Err(Error::InvalidArgument("D and G must be positive".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument(
                "horizon bound must be at least 1".into(),
            ));
        }
        let last = ceil_half_log2(horizon);
        let c = 1.0 + 1.0 / (1.0 + last as f64);
        let top = 1.0 / (5.0 * diameter * gradient);
        let entries = (0..=last)
            .map(|i| {
                let i = i as i32;
                let k = (i + 1) as f64 * (i + 2) as f64;
                (top * 2f64.powi(-i), c / k)
            })
            .collect();
        Ok(LearningRateGrid {
            entries,
            horizon,
            diameter,
            gradient,
        })
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn gradient(&self) -> f64 {
        self.gradient
    }
}

pub fn make_grid(diameter: f64, gradient: f64, horizon: u64) -> Result<LearningRateGrid> {
    LearningRateGrid::new(diameter, gradient, horizon)
}

/// What happened inside one `observe`, for property checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub master_point: Vector,
    /// Slave points before the update.
    pub slave_points: Vec<Vector>,
    /// `ℓ_t^η(w_t^η)` per slave.
    pub surrogate_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MetaGrad {
    variant: Variant,
    bounds: Bounds,
    domain: Domain,
    grid: LearningRateGrid,
    master: Master,
    slaves: Vec<Slave>,
    round: u64,
}

impl MetaGrad {
    /// `gradient_bound` is `G` for the chosen variant; `horizon` is any upper
    /// bound on the number of rounds.
    pub fn new(
        domain: Domain,
        variant: Variant,
        gradient_bound: f64,
        horizon: u64,
    ) -> Result<Self> {
        let bounds = bounds_for(&domain, gradient_bound, variant)?;
        let grid = LearningRateGrid::new(bounds.diameter, bounds.gradient, horizon)?;
        Self::with_grid(domain, bounds, grid)
    }

    pub fn with_grid(domain: Domain, bounds: Bounds, grid: LearningRateGrid) -> Result<Self> {
        let dim = domain.dim();
        let master = Master::new(grid.entries(), alpha(bounds.variant, dim))?;
        let slaves = grid
            .entries()
            .iter()
            .map(|&(eta, _)| Slave::new(eta, &bounds, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaGrad {
            variant: bounds.variant,
            bounds,
            domain,
            grid,
            master,
            slaves,
            round: 0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn grid(&self) -> &LearningRateGrid {
        &self.grid
    }

    pub fn master(&self) -> &Master {
        &self.master
    }

    pub fn slaves(&self) -> &[Slave] {
        &self.slaves
    }

    /// Rounds observed so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    fn slave_points(&self) -> Vec<Vector> {
        self.slaves.iter().map(|s| s.point().clone()).collect()
    }

    pub fn predict(&self) -> Vector {
        self.master
            .tilted_average(&self.slave_points())
            .expect("one point per slave")
    }

    pub fn observe(&mut self, gradient: &Vector) -> Result<()> {
        self.observe_traced(gradient).map(|_| ())
    }

    /// Collect slave points, play their tilted average, charge each slave its
    /// surrogate loss at the pre-update point, reweight, then step the slaves.
    pub fn observe_traced(&mut self, gradient: &Vector) -> Result<RoundTrace> {
        check_dim(self.domain.dim(), gradient.len())?;
        check_gradient_bound(gradient, &self.bounds).map_err(Error::GradientBound)?;
        let slave_points = self.slave_points();
        let master_point = self.master.tilted_average(&slave_points)?;
        let surrogate_losses = self
            .slaves
            .iter()
            .zip(&slave_points)
            .map(|(s, p)| surrogate_loss(s.eta(), &master_point, gradient, p, self.variant))
            .collect::<Result<Vec<_>>>()?;
        self.master.weight_update(&surrogate_losses)?;
        for slave in &mut self.slaves {
            slave.step(gradient, &master_point, &self.domain)?;
        }
        self.round += 1;
        Ok(RoundTrace {
            master_point,
            slave_points,
            surrogate_losses,
        })
    }

    pub fn into_online_learner(self) -> Box<dyn OnlineLearner> {
        Box::new(self)
    }
}

impl OnlineLearner for MetaGrad {
    fn name(&self) -> String {
        format!("metagrad-{}", self.variant)
    }

    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn predict(&self) -> Vector {
        MetaGrad::predict(self)
    }

    fn observe(&mut self, gradient: &Vector) -> Result<()> {
        MetaGrad::observe(self, gradient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::Covariance;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn grid_for_sixteen_rounds() {
        let g = make_grid(1.0, 1.0, 16).unwrap();
        let expected = [(0.2, 2.0 / 3.0), (0.1, 2.0 / 9.0), (0.05, 1.0 / 9.0)];
        assert_eq!(g.len(), 3);
        for (&(eta, prior), &(e, p)) in g.entries().iter().zip(&expected) {
            assert!((eta - e).abs() < 1e-17 && (prior - p).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(make_grid(1.0, 1.0, 1_000_000_000).unwrap().len(), 16);
        let one = make_grid(1.0, 1.0, 1).unwrap();
        assert_eq!(one.entries(), &[(0.2, 1.0)]);
        // Powers of four sit exactly on the boundary.
        assert_eq!(ceil_half_log2(4), 1);
        assert_eq!(ceil_half_log2(5), 2);
        assert_eq!(ceil_half_log2(16), 2);
        assert_eq!(ceil_half_log2(17), 3);
        assert_eq!(ceil_half_log2(1 << 40), 20);
    }

    #[test]
    fn grid_priors_normalised_and_etas_exact() {
        for t in [1u64, 2, 10, 16, 1_000, 1_000_000, 1_000_000_000] {
            let g = make_grid(2.0, 0.5, t).unwrap();
            let total: f64 = g.entries().iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() <= 1e-12, "T={t}: {total}");
            for (i, &(eta, _)) in g.entries().iter().enumerate() {
                assert_eq!(eta, 2f64.powi(-(i as i32)) / (5.0 * 2.0 * 0.5));
            }
        }
    }

    #[test]
    fn fresh_learner_predicts_origin() {
        let learner =
            MetaGrad::new(Domain::ball(3, 1.0).unwrap(), Variant::Full, 1.0, 100).unwrap();
        assert_eq!(learner.predict(), Vector::zeros(3));
    }

    #[test]
    fn single_slave_prediction_is_its_point() {
        let domain = Domain::cube(1, 1.0).unwrap();
        let mut learner = MetaGrad::new(domain, Variant::Full, 1.0, 1).unwrap();
        learner.observe(&v(&[1.0])).unwrap();
        assert_eq!(learner.slaves().len(), 1);
        assert_eq!(&learner.predict(), learner.slaves()[0].point());
    }

    #[test]
    fn one_round_by_hand() {
        // d = 1, U = [-1, 1], D = 2, G = 1, T = 4: η = (0.1, 0.05), priors (3/4, 1/4).
        let domain = Domain::cube(1, 1.0).unwrap();
        let mut learner = MetaGrad::new(domain, Variant::Full, 1.0, 4).unwrap();
        assert_eq!(learner.grid().len(), 2);
        learner.observe(&v(&[1.0])).unwrap();
        // Slaves start and are charged at the master point 0, so weights stay.
        let w = learner.master().weights();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        // Σ₂ = 1/(1/4 + 2η²), w₂ = -η Σ₂.
        let p: Vec<f64> = [0.1f64, 0.05]
            .iter()
            .map(|e| -e / (0.25 + 2.0 * e * e))
            .collect();
        let expected = (0.75 * 0.1 * p[0] + 0.25 * 0.05 * p[1]) / (0.75 * 0.1 + 0.25 * 0.05);
        assert!((learner.predict()[0] - expected).abs() < 1e-15);
    }

    /// Straight-line transcription of the master and slave updates for d = 1.
    #[test]
    fn two_rounds_match_transcription() {
        let domain = Domain::cube(1, 1.0).unwrap();
        let mut learner = MetaGrad::new(domain, Variant::Full, 1.0, 16).unwrap();
        let (d2, etas, priors) = (
            4.0f64,
            [0.1f64, 0.05, 0.025],
            [2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0],
        );
        let mut w = [0.0f64; 3];
        let mut sigma = [d2; 3];
        let mut pi = priors;
        for g in [1.0f64, -1.0] {
            let num: f64 = (0..3).map(|i| pi[i] * etas[i] * w[i]).sum();
            let den: f64 = (0..3).map(|i| pi[i] * etas[i]).sum();
            let wm = num / den;
            assert!((learner.predict()[0] - wm).abs() < 1e-15);
            learner.observe(&v(&[g])).unwrap();
            let mut unnorm = [0.0; 3];
            for i in 0..3 {
                let e = etas[i];
                let loss = -e * (wm - w[i]) * g + e * e * (w[i] - wm).powi(2) * g * g;
                unnorm[i] = pi[i] * (-loss).exp();
                sigma[i] = 1.0 / (1.0 / sigma[i] + 2.0 * e * e * g * g);
                let raw = w[i] - sigma[i] * (e * g + 2.0 * e * e * g * g * (w[i] - wm));
                w[i] = raw.clamp(-1.0, 1.0);
            }
            let z: f64 = unnorm.iter().sum();
            for i in 0..3 {
                pi[i] = unnorm[i] / z;
            }
        }
        for (i, s) in learner.slaves().iter().enumerate() {
            assert!((s.point()[0] - w[i]).abs() < 1e-14);
            let Covariance::Full(m) = s.covariance() else {
                panic!()
            };
            assert!((m[(0, 0)] - sigma[i]).abs() < 1e-14);
        }
        for (a, b) in learner.master().weights().iter().zip(&pi) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_gradient_keeps_prediction() {
        let domain = Domain::ball(2, 1.0).unwrap();
        let mut learner = MetaGrad::new(domain, Variant::Diag, 1.0, 100).unwrap();
        learner.observe(&v(&[0.5, -0.5])).unwrap();
        let before = learner.predict();
        learner.observe(&v(&[0.0, 0.0])).unwrap();
        assert_eq!(learner.predict(), before);
        assert_eq!(learner.round(), 2);
    }

    #[test]
    fn gradient_bound_violation_is_an_error() {
        let domain = Domain::ball(2, 1.0).unwrap();
        let mut learner = MetaGrad::new(domain, Variant::Full, 1.0, 100).unwrap();
        let err = learner.observe(&v(&[2.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::GradientBound(_)));
        assert_eq!(learner.round(), 0);
    }

    #[test]
    fn adapter_is_transparent() {
        let domain = Domain::cube(2, 1.0).unwrap();
        for variant in [Variant::Full, Variant::Diag] {
            let mut direct = MetaGrad::new(domain.clone(), variant, 1.0, 10).unwrap();
            let mut wrapped = MetaGrad::new(domain.clone(), variant, 1.0, 10)
                .unwrap()
                .into_online_learner();
            assert_eq!(wrapped.name(), format!("metagrad-{variant}"));
            for g in [v(&[0.3, -0.2]), v(&[-0.5, 0.1]), v(&[0.2, 0.2])] {
                assert_eq!(direct.predict(), wrapped.predict());
                direct.observe(&g).unwrap();
                wrapped.observe(&g).unwrap();
            }
            assert_eq!(direct.predict(), wrapped.predict());
        }
    }
}
