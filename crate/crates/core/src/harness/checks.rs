//! Named property suites executed over seeded runs: the master potential,
//! the slave surrogate-regret bound, the exact-constant regret bound, Gaussian
//! exp-concavity of the surrogate, and the two fast-rate conditions.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::environments::{Environment, RngSpec};
use crate::error::{Error, Result};
use crate::geometry::{sample_sphere, Domain, LossFunction, Variant, Vector};
use crate::harness::bound::regret_bound;
use crate::harness::conditions::{
    bernstein_estimate, directional_condition_check, BernsteinEstimate,
};
use crate::harness::ledger::RegretLedger;
use crate::metagrad::MetaGrad;
use crate::surrogate::{surrogate_loss, GradientOuterProduct};

/// Relative slack on `Φ_t <= Φ_{t-1}`.
pub const POTENTIAL_TOL: f64 = 1e-10;
/// Relative slack on the regret bound.
pub const BOUND_TOL: f64 = 1e-6;
/// Absolute slack on the slave surrogate-regret bound.
pub const SLAVE_REGRET_TOL: f64 = 1e-8;
/// Standard errors of Monte-Carlo slack in the exp-concavity check.
pub const EXP_CONCAVITY_STD_ERRORS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// The master potential starts at 1 and never increases.
    #[serde(rename = "lemma4")]
    Potential,
    /// Every slave's surrogate regret stays within its log-det bound.
    #[serde(rename = "lemma5")]
    SlaveRegret,
    Bound,
    ExpConcavity,
    Bernstein,
    Directional,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Potential,
        Suite::SlaveRegret,
        Suite::Bound,
        Suite::ExpConcavity,
        Suite::Bernstein,
        Suite::Directional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Potential => "lemma4",
            Suite::SlaveRegret => "lemma5",
            Suite::Bound => "bound",
            Suite::ExpConcavity => "exp-concavity",
            Suite::Bernstein => "bernstein",
            Suite::Directional => "directional",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite `{s}`")))
    }
}

/// Environments used by the bound and potential suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundEnv {
    FixedAbsolute,
    StochasticAbsolute,
    RandomLinear,
}

impl BoundEnv {
    pub const ALL: [BoundEnv; 3] = [
        BoundEnv::FixedAbsolute,
        BoundEnv::StochasticAbsolute,
        BoundEnv::RandomLinear,
    ];

    pub fn build(self, dim: usize, seed: u64) -> Result<Environment> {
        match self {
            BoundEnv::FixedAbsolute => Environment::fixed_absolute_nd(dim),
            BoundEnv::StochasticAbsolute => Environment::stochastic_absolute_nd(dim, 0.6, seed),
            BoundEnv::RandomLinear => Environment::random_linear(dim, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub seeds: u64,
    pub horizon: u64,
    pub dims: Vec<usize>,
    /// Monte-Carlo samples per case where a suite needs them.
    pub samples: usize,
    /// Random tuples or comparators per run.
    pub cases: usize,
}

impl SuiteOptions {
    /// Sizes used by the acceptance runs for `suite`.
    pub fn full(suite: Suite) -> Self {
        match suite {
            Suite::Potential | Suite::Bound => SuiteOptions {
                seeds: 20,
                horizon: 2000,
                dims: vec![1, 2, 5],
                samples: 0,
                cases: 0,
            },
            Suite::SlaveRegret => SuiteOptions {
                seeds: 10,
                horizon: 500,
                dims: vec![1, 3],
                samples: 0,
                cases: 100,
            },
            Suite::ExpConcavity => SuiteOptions {
                seeds: 1,
                horizon: 0,
                dims: vec![1, 2, 3, 5],
                samples: 100_000,
                cases: 100,
            },
            Suite::Bernstein => SuiteOptions {
                seeds: 1,
                horizon: 0,
                dims: vec![2, 5, 10],
                samples: 100_000,
                cases: 200,
            },
            Suite::Directional => SuiteOptions {
                seeds: 1,
                horizon: 0,
                dims: vec![1],
                samples: 10_000,
                cases: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub failures: Vec<String>,
    pub details: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        SuiteReport {
            suite,
            cases: 0,
            failures: Vec::new(),
            details: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(msg());
        }
    }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    match suite {
        Suite::Potential | Suite::Bound => bound_suite(suite, opts),
        Suite::SlaveRegret => slave_regret_suite(opts),
        Suite::ExpConcavity => exp_concavity_suite(opts),
        Suite::Bernstein => bernstein_suite(opts),
        Suite::Directional => directional_suite(opts),
    }
}

/// Per-round outcome of one MetaGrad run against a fixed comparator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRun {
    /// `min_t slack_t / max(1, bound_t)`.
    pub min_relative_slack: f64,
    pub initial_potential: f64,
    /// `max_t (Φ_t - Φ_{t-1}) / Φ_{t-1}`.
    pub max_potential_increase: f64,
    pub linearization_holds: bool,
    pub final_lin_regret: f64,
    pub final_bound: f64,
}

impl BoundRun {
    pub fn bound_holds(&self) -> bool {
        self.min_relative_slack >= -BOUND_TOL
    }

    pub fn potential_holds(&self) -> bool {
        (self.initial_potential - 1.0).abs() <= 1e-12
            && self.max_potential_increase <= POTENTIAL_TOL
    }
}

/// Runs MetaGrad for `horizon` rounds, evaluating the regret bound and the
/// master potential after every round.
pub fn bound_run(
    env: &mut Environment,
    variant: Variant,
    horizon: u64,
    u: &Vector,
) -> Result<BoundRun> {
    let mut learner = MetaGrad::new(env.domain().clone(), variant, env.gradient_bound(), horizon)?;
    let mut ledger = RegretLedger::new(u.clone());
    let initial_potential = learner.master().potential();
    let mut run = BoundRun {
        min_relative_slack: f64::INFINITY,
        initial_potential,
        max_potential_increase: f64::NEG_INFINITY,
        linearization_holds: true,
        final_lin_regret: 0.0,
        final_bound: 0.0,
    };
    let mut potential = initial_potential;
    for _ in 0..horizon {
        let f = env.next_loss()?;
        let w = learner.predict();
        let g = f.subgradient(&w);
        ledger.record(&w, &g, &f)?;
        learner.observe(&g)?;

        let next = learner.master().potential();
        run.max_potential_increase = run
            .max_potential_increase
            .max((next - potential) / potential);
        potential = next;

        let report = regret_bound(&ledger, learner.grid(), variant);
        run.min_relative_slack = run
            .min_relative_slack
            .min(report.slack / report.bound().abs().max(1.0));
        run.linearization_holds &= ledger.linearization_holds();
        run.final_bound = report.bound();
    }
    run.final_lin_regret = ledger.lin_regret();
    Ok(run)
}

fn bound_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(suite);
    for env_kind in BoundEnv::ALL {
        for &dim in &opts.dims {
            for variant in [Variant::Full, Variant::Diag] {
                let mut worst = f64::INFINITY;
                for seed in 0..opts.seeds {
                    let mut env = env_kind.build(dim, seed)?;
                    let mut rng = RngSpec::new(seed ^ 0x5eed).rng()?;
                    let u = env.domain().sample_uniform(&mut rng);
                    let run = bound_run(&mut env, variant, opts.horizon, &u)?;
                    let tag = || format!("{env_kind:?} d={dim} {variant} seed={seed}");
                    match suite {
                        Suite::Bound => {
                            worst = worst.min(run.min_relative_slack);
                            report.check(run.bound_holds(), || {
                                format!("{}: relative slack {:.3e}", tag(), run.min_relative_slack)
                            });
                            report.check(run.linearization_holds, || {
                                format!("{}: regret above linearization", tag())
                            });
                        }
                        _ => {
                            worst = worst.min(-run.max_potential_increase);
                            report.check(run.potential_holds(), || {
                                format!(
                                    "{}: Φ0 = {}, largest relative increase {:.3e}",
                                    tag(),
                                    run.initial_potential,
                                    run.max_potential_increase
                                )
                            });
                        }
                    }
                }
                report.details.push(format!(
                    "{env_kind:?} d={dim} {variant}: worst margin {worst:.3e}"
                ));
            }
        }
    }
    Ok(report)
}

/// Largest violation `lhs - rhs` of the slave surrogate-regret bound over all
/// slaves, comparators and prefixes of the run (negative means it holds).
pub fn slave_regret_run<R: Rng + ?Sized>(
    env: &mut Environment,
    variant: Variant,
    horizon: u64,
    n_comparators: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut learner = MetaGrad::new(env.domain().clone(), variant, env.gradient_bound(), horizon)?;
    let dim = env.dim();
    let d2 = learner.bounds().diameter.powi(2);
    let etas: Vec<f64> = learner.slaves().iter().map(|s| s.eta()).collect();
    let comparators: Vec<Vector> = (0..n_comparators)
        .map(|_| env.domain().sample_uniform(rng))
        .collect();

    let mut slave_loss = vec![0.0; etas.len()];
    // comparator_loss[k][j]: cumulative surrogate loss of comparator j under slave k.
    let mut comparator_loss = vec![vec![0.0; comparators.len()]; etas.len()];
    let mut gradient_sum = DMatrix::zeros(dim, dim);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..horizon {
        let f = env.next_loss()?;
        let w = learner.predict();
        let g = f.subgradient(&w);
        let trace = learner.observe_traced(&g)?;
        gradient_sum += GradientOuterProduct::new(variant, &g).to_matrix();
        for (k, &eta) in etas.iter().enumerate() {
            slave_loss[k] += trace.surrogate_losses[k];
            let identity = DMatrix::<f64>::identity(dim, dim);
            let log_det = 2.0
                * Cholesky::new(identity + &gradient_sum * (2.0 * eta * eta * d2))
                    .ok_or(Error::NotPositiveDefinite)?
                    .l()
                    .diagonal()
                    .map(f64::ln)
                    .sum();
            for (j, u) in comparators.iter().enumerate() {
                comparator_loss[k][j] += surrogate_loss(eta, &trace.master_point, &g, u, variant)?;
                let rhs = comparator_loss[k][j] + u.norm_squared() / (2.0 * d2) + 0.5 * log_det;
                worst = worst.max(slave_loss[k] - rhs);
            }
        }
    }
    Ok(worst)
}

fn slave_regret_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::SlaveRegret);
    for &dim in &opts.dims {
        for env_kind in [BoundEnv::StochasticAbsolute, BoundEnv::RandomLinear] {
            for variant in [Variant::Full, Variant::Diag] {
                let mut worst = f64::NEG_INFINITY;
                for seed in 0..opts.seeds {
                    let mut env = env_kind.build(dim, seed)?;
                    let mut rng = RngSpec::new(seed ^ 0x1e55).rng()?;
                    let gap =
                        slave_regret_run(&mut env, variant, opts.horizon, opts.cases, &mut rng)?;
                    worst = worst.max(gap);
                    report.check(gap <= SLAVE_REGRET_TOL, || {
                        format!("{env_kind:?} d={dim} {variant} seed={seed}: violation {gap:.3e}")
                    });
                }
                report.details.push(format!(
                    "{env_kind:?} d={dim} {variant}: largest lhs - rhs {worst:.3e}"
                ));
            }
        }
    }
    Ok(report)
}

/// One Monte-Carlo comparison of `E exp(-ℓ(u))`, `u ~ N(μ, Σ)`, with `exp(-ℓ(μ))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpConcavityCase {
    pub variant: Variant,
    pub dim: usize,
    pub eta: f64,
    pub mean: f64,
    pub std_error: f64,
    pub target: f64,
}

impl ExpConcavityCase {
    pub fn holds(&self) -> bool {
        self.mean <= self.target + EXP_CONCAVITY_STD_ERRORS * self.std_error
    }
}

/// Draws a random tuple on the unit ball (`D = 2`, `G = 1`) and estimates the
/// Gaussian expectation with `n_samples` draws.
pub fn exp_concavity_case<R: Rng + ?Sized>(
    variant: Variant,
    dim: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<ExpConcavityCase> {
    let domain = Domain::ball(dim, 1.0)?;
    let (diameter, gradient) = (2.0, 1.0);
    let eta = rng.random_range(1e-3..=1.0) / (5.0 * diameter * gradient);
    let mu = domain.sample_uniform(rng);
    let w = domain.sample_uniform(rng);
    let g = match variant {
        Variant::Full => sample_sphere(dim, rng) * rng.random::<f64>(),
        Variant::Diag => Vector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0)),
    };
    // Covariance scales spread over several orders of magnitude around D².
    let scale = |rng: &mut R| 10f64.powf(rng.random_range(-2.0..=2.0)) * diameter * diameter;
    let factor = match variant {
        Variant::Full => {
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = a.qr().q();
            let eig = DMatrix::from_diagonal(&Vector::from_fn(dim, |_, _| scale(rng)));
            let sigma = &q * eig * q.transpose();
            Cholesky::new(sigma).ok_or(Error::NotPositiveDefinite)?.l()
        }
        Variant::Diag => DMatrix::from_diagonal(&Vector::from_fn(dim, |_, _| scale(rng).sqrt())),
    };

    let target = (-surrogate_loss(eta, &w, &g, &mu, variant)?).exp();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let z = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &mu + &factor * z;
        let x = (-surrogate_loss(eta, &w, &g, &u, variant)?).exp();
        sum += x;
        sum_sq += x * x;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(ExpConcavityCase {
        variant,
        dim,
        eta,
        mean,
        std_error: (var / n).sqrt(),
        target,
    })
}

fn exp_concavity_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::ExpConcavity);
    let mut rng = RngSpec::new(0xec).rng()?;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..opts.cases {
        let variant = if k % 2 == 0 {
            Variant::Full
        } else {
            Variant::Diag
        };
        let dim = opts.dims[k % opts.dims.len()];
        let case = exp_concavity_case(variant, dim, opts.samples, &mut rng)?;
        worst = worst.max((case.mean - case.target) / case.std_error.max(f64::MIN_POSITIVE));
        report.check(case.holds(), || {
            format!(
                "{variant} d={dim} eta={:.4}: mean {} exceeds {} by more than {EXP_CONCAVITY_STD_ERRORS} s.e. ({})",
                case.eta, case.mean, case.target, case.std_error
            )
        });
    }
    report
        .details
        .push(format!("largest excess in standard errors: {worst:.3}"));
    Ok(report)
}

/// Grid `[-1, 1]` with step `0.01`, excluding the point with index `skip`.
fn unit_interval_grid(skip: usize) -> Vec<Vector> {
    (0..=200)
        .filter(|&k| k != skip)
        .map(|k| Vector::from_element(1, -1.0 + 0.01 * k as f64))
        .collect()
}

/// Grid `[-1, 1]` with step `0.01`, excluding `u* = 1/2`.
pub fn stochastic_absolute_grid() -> Vec<Vector> {
    unit_interval_grid(150)
}

/// Points of the unit ball at distance at least `1/2` from `u_bar`: half on
/// the sphere, half uniform inside.
pub fn hinge_grid<R: Rng + ?Sized>(u_bar: &Vector, n_points: usize, rng: &mut R) -> Vec<Vector> {
    let dim = u_bar.len();
    let mut grid = Vec::with_capacity(n_points);
    while grid.len() < n_points {
        let mut w = sample_sphere(dim, rng);
        if grid.len() % 2 == 1 {
            w *= rng.random::<f64>().powf(1.0 / dim as f64);
        }
        if (&w - u_bar).norm() >= 0.5 {
            grid.push(w);
        }
    }
    grid
}

/// `B̂` for the stochastic absolute loss on the 0.01 grid of `[-1, 1]`.
pub fn stochastic_bernstein(n_mc: usize, seed: u64) -> Result<BernsteinEstimate> {
    let mut env = Environment::stochastic_absolute(0.6, seed)?;
    bernstein_estimate(
        &mut env,
        &Vector::from_element(1, 0.5),
        1.0,
        n_mc,
        &stochastic_absolute_grid(),
    )
}

/// `B̂` for the hinge environment in dimension `dim` with `u_bar = e_1`.
pub fn hinge_bernstein(
    dim: usize,
    n_points: usize,
    n_mc: usize,
    seed: u64,
) -> Result<BernsteinEstimate> {
    let mut u_bar = Vector::zeros(dim);
    u_bar[0] = 1.0;
    let mut rng = RngSpec::new(seed).rng()?;
    let grid = hinge_grid(&u_bar, n_points, &mut rng);
    let mut env = Environment::hinge_sphere(u_bar.clone(), seed)?;
    bernstein_estimate(&mut env, &u_bar, 1.0, n_mc, &grid)
}

fn bernstein_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Bernstein);
    let est = stochastic_bernstein(opts.samples, 1)?;
    report.check(est.b_hat <= 7.5 + 0.3, || {
        format!("stochastic absolute: B̂ = {} above 7.5", est.b_hat)
    });
    report.details.push(format!(
        "stochastic absolute: B̂ = {:.4} at w = {:?}",
        est.b_hat, est.argmax
    ));

    let fixed = {
        let mut env = Environment::fixed_absolute();
        bernstein_estimate(
            &mut env,
            &Vector::from_element(1, 0.25),
            1.0,
            1,
            &unit_interval_grid(125),
        )?
    };
    report.check(fixed.b_hat <= 2.0 + 1e-12, || {
        format!("fixed absolute: B̂ = {} above DG = 2", fixed.b_hat)
    });
    report
        .details
        .push(format!("fixed absolute: B̂ = {:.4}", fixed.b_hat));

    let n_mc = (opts.samples / 10).max(1);
    let mut previous = f64::INFINITY;
    for &dim in &opts.dims {
        let est = hinge_bernstein(dim, opts.cases, n_mc, dim as u64)?;
        report.check(est.b_hat.is_finite() && est.b_hat < previous, || {
            format!(
                "hinge d={dim}: B̂ = {} does not decrease from {previous}",
                est.b_hat
            )
        });
        report
            .details
            .push(format!("hinge d={dim}: B̂ = {:.4}", est.b_hat));
        previous = est.b_hat;
    }
    Ok(report)
}

fn directional_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Directional);
    let mut rng = RngSpec::new(12).rng()?;
    let mut env = Environment::fixed_absolute();
    let u = Vector::from_element(1, 0.25);
    let (diameter, gradient) = (2.0, env.gradient_bound());
    let strong = directional_condition_check(
        &mut env,
        &u,
        2.0,
        1.0 / (diameter * gradient),
        opts.samples,
        &mut rng,
    )?;
    report.check(strong.holds(), || format!("a = 2, b = 1/(DG): {strong}"));
    let weak = directional_condition_check(&mut env, &u, 1.0, 10.0, opts.samples, &mut rng)?;
    report.check(!weak.holds(), || {
        "a = 1, b = 10: no counterexample found".into()
    });
    report.details.push(format!("a = 1, b = 10: {weak}"));
    Ok(report)
}
