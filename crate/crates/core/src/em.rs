//! Pieces shared by the EM-based aggregators.

use nalgebra::DMatrix;

use crate::data::{LabelDataset, LabelPosterior};
use crate::majority::weighted_vote;

/// Outer-loop settings for EM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the lower bound improves by less than this (absolute).
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Result of an EM run.
#[derive(Debug, Clone)]
pub struct EmFit<P> {
    pub posterior: LabelPosterior,
    pub params: P,
    /// Lower-bound value after each full E/M cycle.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl<P> EmFit<P> {
    pub fn predictions(&self) -> Vec<usize> {
        self.posterior.predictions()
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// `x * ln(y)` with the convention `0 * ln(0) = 0`.
pub(crate) fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Sum over tasks of `sum_k q_jk ln(p_k / q_jk)`.
pub(crate) fn prior_entropy_term(q: &DMatrix<f64>, prior: &[f64]) -> f64 {
    let mut total = 0.0;
    for row in q.row_iter() {
        for (k, &qk) in row.iter().enumerate() {
            total += xlny(qk, prior[k]) - xlny(qk, qk);
        }
    }
    total
}

/// Row-normalized weighted vote totals; unlabeled tasks get a uniform row.
pub(crate) fn vote_initialized_q(ds: &LabelDataset, weights: &[f64]) -> DMatrix<f64> {
    let mut q = weighted_vote(ds, weights).scores.scores;
    let k = ds.n_classes() as f64;
    for mut row in q.row_iter_mut() {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row /= total;
        } else {
            row.fill(1.0 / k);
        }
    }
    q
}

pub(crate) fn class_marginal(q: &DMatrix<f64>) -> Vec<f64> {
    let m = q.nrows().max(1) as f64;
    let k = q.ncols();
    if q.nrows() == 0 {
        return vec![1.0 / k as f64; k];
    }
    q.column_iter().map(|c| c.sum() / m).collect()
}
