//! Regret accounting, bound evaluation, fast-rate condition checks and the
//! experiment runner.

pub mod bound;
pub mod checks;
pub mod conditions;
pub mod experiment;
pub mod ledger;
pub mod slope;

pub use bound::{regret_bound, BoundReport};
pub use checks::{run_suite, Suite, SuiteOptions, SuiteReport};
pub use experiment::{run_experiment, ExperimentConfig, RunArtifact, RunSummary};
pub use ledger::{RegretLedger, RoundRecord};
pub use slope::{slope_fit, slope_fit_default};
