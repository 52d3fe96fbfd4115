//! The interface the harness drives every online learner through.

use crate::error::Result;
use crate::geometry::Vector;

/// Predict-then-observe learner over a fixed domain.
pub trait OnlineLearner {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    /// Point played this round; must not change state.
    fn predict(&self) -> Vector;
    /// Feedback for the point returned by the latest `predict`.
    fn observe(&mut self, gradient: &Vector) -> Result<()>;
}

impl<L: OnlineLearner + ?Sized> OnlineLearner for Box<L> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict(&self) -> Vector {
        (**self).predict()
    }

    fn observe(&mut self, gradient: &Vector) -> Result<()> {
        (**self).observe(gradient)
    }
}

/// Plays the same point every round.
#[derive(Debug, Clone)]
pub struct ConstantLearner {
    point: Vector,
}

impl ConstantLearner {
    pub fn new(point: Vector) -> Self {
        ConstantLearner { point }
    }
}

impl OnlineLearner for ConstantLearner {
    fn name(&self) -> String {
        "constant".into()
    }

    fn dim(&self) -> usize {
        self.point.len()
    }

    fn predict(&self) -> Vector {
        self.point.clone()
    }

    fn observe(&mut self, gradient: &Vector) -> Result<()> {
        crate::error::check_dim(self.point.len(), gradient.len())
    }
}
