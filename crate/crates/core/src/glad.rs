//! GLAD: label correctness probability sigma(alpha_i * beta_j), with wrong
//! labels uniform over the other K-1 classes, fit by EM with optional
//! inverse-propensity weighting. The class prior is fixed uniform.
//!
//! Task inverse difficulty is parametrized as `beta_j = exp(b_j)` so the
//! M-step is an unconstrained ascent over `(alpha, b)`.

use nalgebra::DMatrix;

use crate::data::{normalize_log_scores, observation_weights, LabelDataset, LabelPosterior, PropensityMatrix};
use crate::em::{prior_entropy_term, EmFit, EmOptions};
use crate::error::{Error, Result};
use crate::majority::validate_weights;

#[derive(Debug, Clone, PartialEq)]
pub struct GladParams {
    /// Worker ability, any real.
    pub alpha: Vec<f64>,
    /// `ln beta_j`; `1/beta_j` is the task difficulty.
    pub log_beta: Vec<f64>,
}

impl GladParams {
    pub fn initial(n_workers: usize, n_tasks: usize) -> Self {
        GladParams {
            alpha: vec![1.0; n_workers],
            log_beta: vec![0.0; n_tasks],
        }
    }

    pub fn beta(&self, task: usize) -> f64 {
        self.log_beta[task].exp()
    }
}

/// Backtracking gradient ascent settings for the M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GladOptions {
    pub em: EmOptions,
    pub max_grad_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
}

impl Default for GladOptions {
    fn default() -> Self {
        GladOptions {
            em: EmOptions::default(),
            max_grad_iters: 25,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

const MAX_BACKTRACKS: usize = 60;

/// ln(sigma(x)), stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-probability that a worker with ability `alpha` gives label `label` to
/// a task of inverse difficulty `beta` whose true class is `truth`.
pub fn glad_label_logprob(label: usize, truth: usize, alpha: f64, beta: f64, k: usize) -> f64 {
    let x = alpha * beta;
    if label == truth {
        log_sigmoid(x)
    } else {
        log_sigmoid(-x) - ((k - 1) as f64).ln()
    }
}

pub fn glad_e_step(ds: &LabelDataset, params: &GladParams, weights: &[f64]) -> Result<LabelPosterior> {
    validate_weights(ds, weights)?;
    let k = ds.n_classes();
    let wrong_norm = ((k - 1) as f64).ln();
    let mut q = DMatrix::zeros(ds.n_tasks(), k);
    let mut scores = vec![0.0; k];
    for j in 0..ds.n_tasks() {
        scores.fill(0.0);
        let beta = params.beta(j);
        for &idx in ds.task_observations(j) {
            let w = weights[idx];
            if w == 0.0 {
                continue;
            }
            let o = ds.observations()[idx];
            let x = params.alpha[o.worker] * beta;
            let right = w * log_sigmoid(x);
            let wrong = w * (log_sigmoid(-x) - wrong_norm);
            for (z, s) in scores.iter_mut().enumerate() {
                *s += if z == o.label { right } else { wrong };
            }
        }
        if !normalize_log_scores(&mut scores) {
            return Err(Error::DegeneratePosterior { task: j });
        }
        for (z, &s) in scores.iter().enumerate() {
            q[(j, z)] = s;
        }
    }
    LabelPosterior::new(q, LabelPosterior::uniform_prior(k))
}

/// Weighted expected complete-data log-likelihood
/// `sum_obs w * sum_z q(z) * ln p(l | z, alpha, beta)`.
pub fn glad_expected_loglik(ds: &LabelDataset, q: &LabelPosterior, params: &GladParams, weights: &[f64]) -> f64 {
    let wrong_norm = ((ds.n_classes() - 1) as f64).ln();
    let qm = q.q();
    let mut total = 0.0;
    for (o, &w) in ds.observations().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let r = qm[(o.task, o.label)];
        let x = params.alpha[o.worker] * params.beta(o.task);
        let mut term = 0.0;
        if r > 0.0 {
            term += r * log_sigmoid(x);
        }
        if r < 1.0 {
            term += (1.0 - r) * (log_sigmoid(-x) - wrong_norm);
        }
        total += w * term;
    }
    total
}

/// Gradient of [`glad_expected_loglik`] with respect to `(alpha, log_beta)`.
pub fn glad_gradient(ds: &LabelDataset, q: &LabelPosterior, params: &GladParams, weights: &[f64]) -> GladParams {
    let qm = q.q();
    let mut g = GladParams {
        alpha: vec![0.0; params.alpha.len()],
        log_beta: vec![0.0; params.log_beta.len()],
    };
    for (o, &w) in ds.observations().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let r = qm[(o.task, o.label)];
        let alpha = params.alpha[o.worker];
        let beta = params.beta(o.task);
        let dx = w * (r - sigmoid(alpha * beta));
        g.alpha[o.worker] += dx * beta;
        g.log_beta[o.task] += dx * alpha * beta;
    }
    g
}

pub fn glad_lower_bound(ds: &LabelDataset, q: &LabelPosterior, params: &GladParams, weights: &[f64]) -> f64 {
    glad_expected_loglik(ds, q, params, weights) + prior_entropy_term(q.q(), q.prior())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GladMStep {
    pub params: GladParams,
    /// Set when a backtracking search found no acceptable step; the last
    /// accepted iterate is returned.
    pub line_search_failed: bool,
}

pub fn glad_m_step(
    ds: &LabelDataset,
    q: &LabelPosterior,
    params: &GladParams,
    weights: &[f64],
    opts: &GladOptions,
) -> GladMStep {
    let mut current = params.clone();
    let mut value = glad_expected_loglik(ds, q, &current, weights);
    let mut line_search_failed = false;
    for _ in 0..opts.max_grad_iters {
        let grad = glad_gradient(ds, q, &current, weights);
        let sq_norm: f64 = grad.alpha.iter().chain(&grad.log_beta).map(|g| g * g).sum();
        if sq_norm == 0.0 {
            break;
        }
        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = GladParams {
                alpha: current.alpha.iter().zip(&grad.alpha).map(|(a, g)| a + step * g).collect(),
                log_beta: current.log_beta.iter().zip(&grad.log_beta).map(|(b, g)| b + step * g).collect(),
            };
            let cand_value = glad_expected_loglik(ds, q, &candidate, weights);
            if cand_value >= value + opts.armijo * step * sq_norm {
                accepted = Some((candidate, cand_value));
                break;
            }
            step *= opts.shrink;
        }
        match accepted {
            Some((p, v)) => {
                current = p;
                value = v;
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
    }
    GladMStep {
        params: current,
        line_search_failed,
    }
}

/// Plain GLAD when `propensity` is `None`, IPS-weighted otherwise.
pub fn glad_run(
    ds: &LabelDataset,
    propensity: Option<&PropensityMatrix>,
    opts: &GladOptions,
) -> Result<EmFit<GladParams>> {
    let weights = observation_weights(ds, propensity)?;
    glad_run_weighted(ds, &weights, opts)
}

pub fn glad_run_weighted(ds: &LabelDataset, weights: &[f64], opts: &GladOptions) -> Result<EmFit<GladParams>> {
    validate_weights(ds, weights)?;
    let mut params = GladParams::initial(ds.n_workers(), ds.n_tasks());
    let mut posterior = glad_e_step(ds, &params, weights)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for iter in 0..opts.em.max_iters {
        if iter > 0 {
            posterior = glad_e_step(ds, &params, weights)?;
        }
        params = glad_m_step(ds, &posterior, &params, weights, opts).params;
        let bound = glad_lower_bound(ds, &posterior, &params, weights);
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
