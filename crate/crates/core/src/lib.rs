//! Adaptive online convex optimization over a grid of learning rates.
//!
//! The [`metagrad::MetaGrad`] learner runs one second-order slave per
//! learning rate and aggregates them with a tilted exponential-weights
//! master, in a full-matrix and a diagonal variant. Baseline learners,
//! seeded environments and a regret/bound harness sit alongside it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod environments;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod learner;
pub mod master;
pub mod metagrad;
pub mod projection;
pub mod slave;
pub mod surrogate;

pub use error::{Error, Result};
pub use geometry::{Bounds, Domain, Loss, LossFunction, Variant, Vector};
pub use learner::OnlineLearner;
pub use metagrad::{LearningRateGrid, MetaGrad};
