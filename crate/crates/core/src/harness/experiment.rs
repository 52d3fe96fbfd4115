//! Config-driven runs of the online protocol with CSV and JSON artifacts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{AdaGradDiag, Ogd, OgdSchedule, Ons};
use crate::environments::Environment;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{bounds_for, Domain, Loss, LossFunction, Shape, Variant, Vector};
use crate::harness::bound::{regret_bound, BoundReport};
use crate::harness::ledger::{RegretLedger, RoundRecord};
use crate::harness::slope::slope_fit_default;
use crate::learner::{ConstantLearner, OnlineLearner};
use crate::metagrad::MetaGrad;

pub const CSV_HEADER: &str = "t,loss,cum_loss,regret,lin_regret,variance";

/// Iterations of the projected-subgradient hindsight search for `d > 2`.
pub const HINDSIGHT_ITERATIONS: usize = 10_000;

fn default_p_plus() -> f64 {
    0.6
}

fn default_gradient_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    FixedAbsolute,
    StochasticAbsolute {
        #[serde(default = "default_p_plus")]
        p_plus: f64,
    },
    /// `u_bar` defaults to the first basis vector.
    HingeSphere {
        #[serde(default)]
        u_bar: Option<Vec<f64>>,
    },
    RandomLinear,
    /// Linear losses on the unit ball.
    Scripted {
        gradients: Vec<Vec<f64>>,
        #[serde(default = "default_gradient_bound")]
        gradient_bound: f64,
    },
}

impl EnvSpec {
    /// Parses a bare environment name with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "fixed-absolute" => EnvSpec::FixedAbsolute,
            "stochastic-absolute" => EnvSpec::StochasticAbsolute {
                p_plus: default_p_plus(),
            },
            "hinge-sphere" => EnvSpec::HingeSphere { u_bar: None },
            "random-linear" => EnvSpec::RandomLinear,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown environment `{other}`"
                )))
            }
        })
    }

    pub fn build(&self, dim: usize, seed: u64) -> Result<Environment> {
        match self {
            EnvSpec::FixedAbsolute => Environment::fixed_absolute_nd(dim),
            EnvSpec::StochasticAbsolute { p_plus } => {
                Environment::stochastic_absolute_nd(dim, *p_plus, seed)
            }
            EnvSpec::HingeSphere { u_bar } => {
                let u_bar = match u_bar {
                    Some(u) => Vector::from_row_slice(u),
                    None => {
                        let mut e = Vector::zeros(dim);
                        if dim > 0 {
                            e[0] = 1.0;
                        }
                        e
                    }
                };
                check_dim(dim, u_bar.len())?;
                Environment::hinge_sphere(u_bar, seed)
            }
            EnvSpec::RandomLinear => Environment::random_linear(dim, seed),
            EnvSpec::Scripted {
                gradients,
                gradient_bound,
            } => {
                let gradients = gradients
                    .iter()
                    .map(|g| {
                        check_dim(dim, g.len())?;
                        Ok(Vector::from_row_slice(g))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Environment::scripted(gradients, Domain::ball(dim, 1.0)?, *gradient_bound)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    Metagrad {
        #[serde(default = "default_variant")]
        variant: Variant,
    },
    /// `step_scale` defaults to the diagonal diameter.
    Adagrad {
        #[serde(default)]
        step_scale: Option<f64>,
    },
    /// `D/(G√t)` steps, or `1/(μt)` when `mu` is given.
    Ogd {
        #[serde(default)]
        mu: Option<f64>,
    },
    Ons,
    /// Plays `point` (the origin when omitted) every round.
    Constant {
        #[serde(default)]
        point: Option<Vec<f64>>,
    },
}

fn default_variant() -> Variant {
    Variant::Full
}

impl LearnerSpec {
    pub fn from_name(name: &str, variant: Variant) -> Result<Self> {
        Ok(match name {
            "metagrad" => LearnerSpec::Metagrad { variant },
            "metagrad-full" => LearnerSpec::Metagrad {
                variant: Variant::Full,
            },
            "metagrad-diag" => LearnerSpec::Metagrad {
                variant: Variant::Diag,
            },
            "adagrad" => LearnerSpec::Adagrad { step_scale: None },
            "ogd" => LearnerSpec::Ogd { mu: None },
            "ons" => LearnerSpec::Ons,
            "constant" => LearnerSpec::Constant { point: None },
            other => return Err(Error::InvalidConfig(format!("unknown learner `{other}`"))),
        })
    }

    /// The variant whose variance the run reports.
    pub fn variant(&self) -> Variant {
        match self {
            LearnerSpec::Metagrad { variant } => *variant,
            LearnerSpec::Adagrad { .. } => Variant::Diag,
            _ => Variant::Full,
        }
    }

    pub fn build(&self, env: &Environment, horizon: u64) -> Result<Box<dyn OnlineLearner>> {
        let domain = env.domain().clone();
        let g = env.gradient_bound();
        Ok(match self {
            LearnerSpec::Metagrad { variant } => {
                Box::new(MetaGrad::new(domain, *variant, g, horizon)?)
            }
            LearnerSpec::Adagrad { step_scale } => {
                let scale = match step_scale {
                    Some(s) => *s,
                    None => bounds_for(&domain, g, Variant::Diag)?.diameter,
                };
                Box::new(AdaGradDiag::new(domain, scale)?)
            }
            LearnerSpec::Ogd { mu } => match mu {
                Some(mu) => Box::new(Ogd::new(domain, OgdSchedule::StronglyConvex { mu: *mu })?),
                None => {
                    let bounds = bounds_for(&domain, g, Variant::Full)?;
                    Box::new(Ogd::general(domain, &bounds)?)
                }
            },
            LearnerSpec::Ons => {
                let bounds = bounds_for(&domain, g, Variant::Full)?;
                Box::new(Ons::with_defaults(domain, &bounds)?)
            }
            LearnerSpec::Constant { point } => {
                let p = match point {
                    Some(p) => Vector::from_row_slice(p),
                    None => Vector::zeros(domain.dim()),
                };
                check_dim(domain.dim(), p.len())?;
                Box::new(ConstantLearner::new(p))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparatorKind {
    /// The environment's optimum when it has one, else best in hindsight.
    Auto,
    Origin,
    Hindsight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComparatorSpec {
    Kind(ComparatorKind),
    Point(Vec<f64>),
}

impl Default for ComparatorSpec {
    fn default() -> Self {
        ComparatorSpec::Kind(ComparatorKind::Auto)
    }
}

impl std::str::FromStr for ComparatorSpec {
    type Err = Error;

    /// `auto`, `origin`, `hindsight`, or comma-separated coordinates.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ComparatorSpec::Kind(ComparatorKind::Auto)),
            "origin" => Ok(ComparatorSpec::Kind(ComparatorKind::Origin)),
            "hindsight" => Ok(ComparatorSpec::Kind(ComparatorKind::Hindsight)),
            _ => s
                .trim_matches(|c| c == '[' || c == ']')
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(ComparatorSpec::Point)
                .map_err(|e| Error::InvalidConfig(format!("comparator `{s}`: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub learner: LearnerSpec,
    pub horizon: u64,
    pub dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub comparator: ComparatorSpec,
    /// CSV path; the summary goes next to it with a `.json` extension.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if let Some(out) = &self.output {
            if out.extension().is_some_and(|e| e == "json") {
                return Err(Error::InvalidConfig(
                    "output names the CSV file, not the summary".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub final_regret: f64,
    pub final_lin_regret: f64,
    pub final_variance: f64,
    pub bound_variance: Option<f64>,
    pub bound_gradient_sum: Option<f64>,
    pub bound_slack: Option<f64>,
    /// Log-log regret slope over `[T/10, T]`, absent when the fit is inapplicable.
    pub slope: Option<f64>,
    pub seed: u64,
    pub comparator: Vec<f64>,
    pub learner: String,
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub rows: Vec<RoundRecord>,
    pub summary: RunSummary,
    pub bound: Option<BoundReport>,
}

impl RunArtifact {
    /// `(t, regret)` pairs for slope fits.
    pub fn regret_curve(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t as f64, r.regret)).collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 128);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.loss, r.cum_loss, r.regret, r.lin_regret, r.variance
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes the CSV to `csv_path` and the summary beside it, each atomically.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        write_atomic(csv_path, self.csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&self.summary)?;
        write_atomic(&csv_path.with_extension("json"), json.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Best fixed point for `Σ_t f_t` over the domain: a grid search for `d <= 2`,
/// otherwise projected subgradient descent keeping the best iterate.
pub fn best_in_hindsight(losses: &[Loss], domain: &Domain) -> Result<Vector> {
    let dim = domain.dim();
    let total = |u: &Vector, grad: &mut Vector| -> f64 {
        grad.fill(0.0);
        losses.iter().map(|f| f.accumulate(u, 1.0, grad)).sum()
    };
    let mut scratch = Vector::zeros(dim);
    let (lower, upper) = match domain.shape() {
        Shape::Ball { radius } => (
            Vector::from_element(dim, -radius),
            Vector::from_element(dim, *radius),
        ),
        Shape::Box { lower, upper } => (lower.clone(), upper.clone()),
    };
    if dim <= 2 {
        let steps = if dim == 1 { 2000 } else { 100 };
        let mut best = (f64::INFINITY, Vector::zeros(dim));
        let mut idx = vec![0usize; dim];
        loop {
            let u = Vector::from_fn(dim, |i, _| {
                lower[i] + (upper[i] - lower[i]) * idx[i] as f64 / steps as f64
            });
            if domain.contains(&u, 0.0) {
                let value = losses.iter().map(|f| f.value(&u)).sum::<f64>();
                if value < best.0 {
                    best = (value, u);
                }
            }
            let mut k = 0;
            while k < dim && idx[k] == steps {
                idx[k] = 0;
                k += 1;
            }
            if k == dim {
                break;
            }
            idx[k] += 1;
        }
        return Ok(best.1);
    }
    let diameter = (&upper - &lower).norm();
    let mut u = Vector::zeros(dim);
    let mut best = (total(&u, &mut scratch), u.clone());
    for k in 1..=HINDSIGHT_ITERATIONS {
        let value = total(&u, &mut scratch);
        if value < best.0 {
            best = (value, u.clone());
        }
        let norm = scratch.norm();
        if norm == 0.0 {
            break;
        }
        let step = diameter / (norm * (k as f64).sqrt());
        u = domain.euclidean_project(&(&u - &scratch * step))?;
    }
    let value = total(&u, &mut scratch);
    if value < best.0 {
        best = (value, u);
    }
    Ok(best.1)
}

/// Runs the protocol for `config.horizon` rounds and writes the artifacts when
/// `config.output` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifact> {
    config.validate()?;
    let mut env = config.env.build(config.dim, config.seed)?;
    let horizon = config.horizon;
    let losses = (0..horizon)
        .map(|_| env.next_loss())
        .collect::<Result<Vec<_>>>()?;

    let comparator = match &config.comparator {
        ComparatorSpec::Kind(ComparatorKind::Origin) => Vector::zeros(config.dim),
        ComparatorSpec::Kind(ComparatorKind::Auto) => match env.comparator() {
            Some(u) => u.clone(),
            None => best_in_hindsight(&losses, env.domain())?,
        },
        ComparatorSpec::Kind(ComparatorKind::Hindsight) => {
            best_in_hindsight(&losses, env.domain())?
        }
        ComparatorSpec::Point(p) => {
            check_dim(config.dim, p.len())?;
            Vector::from_row_slice(p)
        }
    };

    let variant = config.learner.variant();
    let metagrad = match config.learner {
        LearnerSpec::Metagrad { variant } => Some(MetaGrad::new(
            env.domain().clone(),
            variant,
            env.gradient_bound(),
            horizon,
        )?),
        _ => None,
    };
    let grid = metagrad.as_ref().map(|m| m.grid().clone());
    let mut learner: Box<dyn OnlineLearner> = match metagrad {
        Some(m) => Box::new(m),
        None => config.learner.build(&env, horizon)?,
    };

    let mut ledger = RegretLedger::new(comparator.clone());
    let mut rows = Vec::with_capacity(horizon as usize);
    for f in &losses {
        let w = learner.predict();
        let g = f.subgradient(&w);
        let mut rec = ledger.record(&w, &g, f)?;
        rec.variance = ledger.variance(variant);
        rows.push(rec);
        learner.observe(&g)?;
    }

    let bound = grid
        .as_ref()
        .map(|grid| regret_bound(&ledger, grid, variant));
    let curve: Vec<(f64, f64)> = rows.iter().map(|r| (r.t as f64, r.regret)).collect();
    let summary = RunSummary {
        config: config.clone(),
        final_regret: ledger.regret(),
        final_lin_regret: ledger.lin_regret(),
        final_variance: ledger.variance(variant),
        bound_variance: bound.and_then(|b| b.bound_variance),
        bound_gradient_sum: bound.map(|b| b.bound_gradient_sum),
        bound_slack: bound.map(|b| b.slack),
        slope: slope_fit_default(&curve).ok(),
        seed: config.seed,
        comparator: comparator.iter().cloned().collect(),
        learner: learner.name(),
    };
    let artifact = RunArtifact {
        rows,
        summary,
        bound,
    };
    if let Some(out) = &config.output {
        artifact.write(out)?;
    }
    Ok(artifact)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(env: EnvSpec, learner: LearnerSpec, horizon: u64, dim: usize) -> ExperimentConfig {
        ExperimentConfig {
            env,
            learner,
            horizon,
            dim,
            seed: 1,
            comparator: ComparatorSpec::default(),
            output: None,
        }
    }

    #[test]
    fn structural_run() {
        let cfg = config(
            EnvSpec::FixedAbsolute,
            LearnerSpec::Metagrad {
                variant: Variant::Full,
            },
            10,
            1,
        );
        let run = run_experiment(&cfg).unwrap();
        assert_eq!(run.rows.len(), 10);
        assert_eq!(run.csv().lines().count(), 11);
        assert_eq!(run.csv().lines().next(), Some(CSV_HEADER));
        assert_eq!(run.summary.comparator, vec![0.25]);
        assert_eq!(run.summary.final_regret, run.rows[9].regret);
        assert!(run.summary.bound_gradient_sum.is_some());
        assert!(run.bound.unwrap().holds(1e-6));
        assert!(run.summary.slope.is_some());
    }

    #[test]
    fn csv_values_round_trip() {
        let cfg = config(
            EnvSpec::StochasticAbsolute { p_plus: 0.6 },
            LearnerSpec::Ons,
            50,
            1,
        );
        let run = run_experiment(&cfg).unwrap();
        for (line, row) in run.csv().lines().skip(1).zip(&run.rows) {
            let fields: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(
                fields,
                vec![
                    row.t as f64,
                    row.loss,
                    row.cum_loss,
                    row.regret,
                    row.lin_regret,
                    row.variance
                ]
            );
        }
    }

    #[test]
    fn same_config_gives_identical_csv() {
        let cfg = config(
            EnvSpec::HingeSphere { u_bar: None },
            LearnerSpec::Metagrad {
                variant: Variant::Diag,
            },
            200,
            3,
        );
        assert_eq!(
            run_experiment(&cfg).unwrap().csv(),
            run_experiment(&cfg).unwrap().csv()
        );
    }

    #[test]
    fn constant_learner_regret_matches_external_sum() {
        let gradients = vec![
            vec![0.5, -0.2],
            vec![-0.1, 0.9],
            vec![0.3, 0.3],
            vec![-0.6, 0.0],
        ];
        let mut cfg = config(
            EnvSpec::Scripted {
                gradients: gradients.clone(),
                gradient_bound: 1.0,
            },
            LearnerSpec::Constant { point: None },
            4,
            2,
        );
        let u = [0.6, -0.8];
        cfg.comparator = ComparatorSpec::Point(u.to_vec());
        let run = run_experiment(&cfg).unwrap();
        let expected: f64 = gradients
            .iter()
            .map(|g| 0.0 - (g[0] * u[0] + g[1] * u[1]))
            .sum();
        assert!((run.summary.final_regret - expected).abs() < 1e-15);
    }

    #[test]
    fn writes_artifacts_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(
            EnvSpec::FixedAbsolute,
            LearnerSpec::Adagrad { step_scale: None },
            20,
            1,
        );
        cfg.output = Some(dir.path().join("run.csv"));
        let run = run_experiment(&cfg).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(csv, run.csv());
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap())
                .unwrap();
        for key in [
            "config",
            "final_regret",
            "final_lin_regret",
            "final_variance",
            "bound_variance",
            "bound_gradient_sum",
            "slope",
            "seed",
        ] {
            assert!(summary.get(key).is_some(), "missing {key}");
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn config_round_trips_through_json() {
        let json = r#"{"env": {"name": "stochastic-absolute", "p_plus": 0.7},
                       "learner": {"name": "metagrad", "variant": "diag"},
                       "horizon": 100, "dim": 2, "seed": 3, "comparator": [0.1, 0.2]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.env, EnvSpec::StochasticAbsolute { p_plus: 0.7 });
        assert_eq!(cfg.comparator, ComparatorSpec::Point(vec![0.1, 0.2]));
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let bad = r#"{"env": {"name": "nope"}, "learner": {"name": "ons"}, "horizon": 1, "dim": 1, "seed": 0}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
        let zero: ExperimentConfig = serde_json::from_str(
            r#"{"env": {"name": "fixed-absolute"}, "learner": {"name": "ons"}, "horizon": 0, "dim": 1, "seed": 0}"#,
        )
        .unwrap();
        assert!(matches!(
            run_experiment(&zero),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn comparator_parsing() {
        assert_eq!(
            "auto".parse::<ComparatorSpec>().unwrap(),
            ComparatorSpec::Kind(ComparatorKind::Auto)
        );
        assert_eq!(
            "0.5,-1".parse::<ComparatorSpec>().unwrap(),
            ComparatorSpec::Point(vec![0.5, -1.0])
        );
        assert!("x".parse::<ComparatorSpec>().is_err());
    }

    #[test]
    fn hindsight_search_finds_linear_optimum() {
        let g = Vector::from_row_slice(&[0.3, -0.4, 0.0, 0.0]);
        let losses = vec![Loss::Linear { g: g.clone() }; 5];
        let u = best_in_hindsight(&losses, &Domain::ball(4, 1.0).unwrap()).unwrap();
        let exact = -&g / g.norm();
        assert!((u - exact).norm() < 1e-2);

        let losses = vec![
            Loss::Absolute {
                center: Vector::from_row_slice(&[0.25]),
                scale: 1.0
            };
            3
        ];
        let u = best_in_hindsight(&losses, &Domain::cube(1, 1.0).unwrap()).unwrap();
        assert!((u[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn out_of_bound_script_is_rejected() {
        let cfg = config(
            EnvSpec::Scripted {
                gradients: vec![vec![0.9]],
                gradient_bound: 5.0,
            },
            LearnerSpec::Metagrad {
                variant: Variant::Full,
            },
            1,
            1,
        );
        assert!(run_experiment(&cfg).is_ok());
        let cfg = config(
            EnvSpec::Scripted {
                gradients: vec![vec![3.0]],
                gradient_bound: 1.0,
            },
            LearnerSpec::Constant { point: None },
            1,
            1,
        );
        assert!(run_experiment(&cfg).is_err());
    }
}
