//! Plain and inverse-propensity-weighted majority voting.

use nalgebra::DMatrix;

use crate::data::{argmax_lowest, LabelDataset, PropensityMatrix};
use crate::error::{Error, Result};

/// m x K matrix of (possibly weighted) vote totals.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteScores {
    pub scores: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    /// Winning class per task; ties go to the lowest class index.
    pub predictions: Vec<usize>,
    pub scores: VoteScores,
    /// Tasks with no labels at all. Their prediction is class 0.
    pub unlabeled_tasks: Vec<usize>,
}

pub fn majority_vote(ds: &LabelDataset) -> VoteOutcome {
    weighted_vote(ds, &vec![1.0; ds.n_observations()])
}

pub fn ips_majority_vote(ds: &LabelDataset, e: &PropensityMatrix) -> Result<VoteOutcome> {
    let weights = e.ips_weights(ds)?;
    Ok(weighted_vote(ds, &weights))
}

/// Votes with per-observation weights aligned to `ds.observations()`.
pub fn weighted_vote(ds: &LabelDataset, weights: &[f64]) -> VoteOutcome {
    assert_eq!(weights.len(), ds.n_observations(), "one weight per observation");
    let mut scores = DMatrix::zeros(ds.n_tasks(), ds.n_classes());
    for (o, &w) in ds.observations().iter().zip(weights) {
        scores[(o.task, o.label)] += w;
    }
    let unlabeled_tasks = (0..ds.n_tasks())
        .filter(|&j| ds.task_observations(j).is_empty())
        .collect();
    let predictions = scores
        .row_iter()
        .map(|row| argmax_lowest(row.iter().copied()))
        .collect();
    VoteOutcome {
        predictions,
        scores: VoteScores { scores },
        unlabeled_tasks,
    }
}

/// Weights must be finite and non-negative, one per observation.
pub(crate) fn validate_weights(ds: &LabelDataset, weights: &[f64]) -> Result<()> {
    if weights.len() != ds.n_observations() {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} observations",
            weights.len(),
            ds.n_observations()
        )));
    }
    for (o, &w) in ds.observations().iter().zip(weights) {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Domain(format!(
                "weight {w} for worker {} on task {} must be finite and non-negative",
                o.worker, o.task
            )));
        }
    }
    Ok(())
}
