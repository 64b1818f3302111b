//! Dawid-Skene EM with optional inverse-propensity weighting.
//!
//! Each observed label contributes `w_ij * ln pi^(i)[z, l]` to the lower
//! bound, with `w_ij = 1/e_ij` for the IPS variant and `1` otherwise. The
//! prior/entropy term is never weighted. The M-step adds `smoothing`
//! pseudo-counts to every confusion cell, which is the exact maximizer of
//! the bound plus `smoothing * sum ln pi`; that penalized bound is what the
//! trace records (it reduces to the plain bound when `smoothing == 0`).

use nalgebra::DMatrix;

use crate::data::{normalize_log_scores, observation_weights, LabelDataset, LabelPosterior, PropensityMatrix};
use crate::em::{class_marginal, prior_entropy_term, vote_initialized_q, xlny, EmFit, EmOptions};
use crate::error::{Error, Result};
use crate::majority::validate_weights;

pub const DEFAULT_SMOOTHING: f64 = 0.01;

/// Per-worker confusion matrices (row = true class, column = given label)
/// and the class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DsParams {
    pub confusions: Vec<DMatrix<f64>>,
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsOptions {
    pub em: EmOptions,
    pub smoothing: f64,
}

impl Default for DsOptions {
    fn default() -> Self {
        DsOptions {
            em: EmOptions::default(),
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

pub fn ds_e_step(ds: &LabelDataset, params: &DsParams, weights: &[f64]) -> Result<LabelPosterior> {
    validate_weights(ds, weights)?;
    let k = ds.n_classes();
    let log_prior: Vec<f64> = params.prior.iter().map(|p| p.ln()).collect();
    let mut q = DMatrix::zeros(ds.n_tasks(), k);
    let mut scores = vec![0.0; k];
    for j in 0..ds.n_tasks() {
        scores.copy_from_slice(&log_prior);
        for &idx in ds.task_observations(j) {
            let w = weights[idx];
            if w == 0.0 {
                continue;
            }
            let o = ds.observations()[idx];
            let pi = &params.confusions[o.worker];
            for (z, s) in scores.iter_mut().enumerate() {
                *s += w * pi[(z, o.label)].ln();
            }
        }
        if !normalize_log_scores(&mut scores) {
            return Err(Error::DegeneratePosterior { task: j });
        }
        for (z, &s) in scores.iter().enumerate() {
            q[(j, z)] = s;
        }
    }
    LabelPosterior::new(q, params.prior.clone())
}

pub fn ds_m_step(ds: &LabelDataset, q: &LabelPosterior, weights: &[f64], smoothing: f64) -> DsParams {
    let k = ds.n_classes();
    let qm = q.q();
    let mut confusions = vec![DMatrix::from_element(k, k, smoothing); ds.n_workers()];
    for (o, &w) in ds.observations().iter().zip(weights) {
        let counts = &mut confusions[o.worker];
        for z in 0..k {
            counts[(z, o.label)] += w * qm[(o.task, z)];
        }
    }
    for pi in &mut confusions {
        for mut row in pi.row_iter_mut() {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row /= total;
            } else {
                row.fill(1.0 / k as f64);
            }
        }
    }
    DsParams {
        confusions,
        prior: class_marginal(qm),
    }
}

/// The (IPS-weighted) lower bound, plus the smoothing log-prior on confusions.
pub fn ds_lower_bound(
    ds: &LabelDataset,
    q: &LabelPosterior,
    params: &DsParams,
    weights: &[f64],
    smoothing: f64,
) -> f64 {
    let qm = q.q();
    let mut total = 0.0;
    for (o, &w) in ds.observations().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let pi = &params.confusions[o.worker];
        for z in 0..ds.n_classes() {
            total += w * xlny(qm[(o.task, z)], pi[(z, o.label)]);
        }
    }
    total += prior_entropy_term(qm, &params.prior);
    if smoothing > 0.0 {
        total += smoothing * params.confusions.iter().flat_map(|pi| pi.iter()).map(|p| p.ln()).sum::<f64>();
    }
    total
}

/// Plain Dawid-Skene when `propensity` is `None`, IPS-weighted otherwise.
pub fn ds_run(
    ds: &LabelDataset,
    propensity: Option<&PropensityMatrix>,
    opts: &DsOptions,
) -> Result<EmFit<DsParams>> {
    let weights = observation_weights(ds, propensity)?;
    ds_run_weighted(ds, &weights, opts)
}

pub fn ds_run_weighted(ds: &LabelDataset, weights: &[f64], opts: &DsOptions) -> Result<EmFit<DsParams>> {
    validate_weights(ds, weights)?;
    let q0 = vote_initialized_q(ds, weights);
    let prior0 = class_marginal(&q0);
    let mut posterior = LabelPosterior::new(q0, prior0)?;
    let mut params = ds_m_step(ds, &posterior, weights, opts.smoothing);
    let mut trace = Vec::new();
    let mut converged = false;
    for iter in 0..opts.em.max_iters {
        if iter > 0 {
            params = ds_m_step(ds, &posterior, weights, opts.smoothing);
        }
        posterior = ds_e_step(ds, &params, weights)?;
        let bound = ds_lower_bound(ds, &posterior, &params, weights, opts.smoothing);
        let improved = trace.last().map(|&prev: &f64| bound - prev);
        trace.push(bound);
        if improved.is_some_and(|d| d < opts.em.tol) {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        posterior,
        params,
        trace,
        converged,
    })
}
