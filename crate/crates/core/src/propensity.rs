//! Propensity estimation from the observation pattern.
//!
//! The main estimator is 1-bit matrix completion: fit a real matrix `A` so
//! that `sigma(A_ij)` models `Pr[O_ij = 1]`, minimizing the Bernoulli negative
//! log-likelihood over every cell subject to `||A||_* <= gamma * sqrt(n m)`.
//! The solver is projected gradient descent with backtracking, where the
//! projection onto the nuclear-norm ball soft-thresholds singular values.

use nalgebra::DMatrix;

use crate::data::{ObservationMatrix, PropensityMatrix};
use crate::error::{Error, Result};
use crate::glad::{log_sigmoid, sigmoid};

/// Upper clip for estimated propensities.
pub const PROPENSITY_CEIL: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCConfig {
    pub gamma: f64,
    /// Initial step of each backtracking search. The loss gradient is
    /// 1/4-Lipschitz, so steps up to 4 are always accepted.
    pub step_init: f64,
    pub max_iters: usize,
    /// Stop when the objective decreases by less than `tol * max(1, f)`.
    pub tol: f64,
    pub clip_floor: f64,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig {
            gamma: 1.0,
            step_init: 4.0,
            max_iters: 500,
            tol: 1e-6,
            clip_floor: 0.01,
        }
    }
}

impl MCConfig {
    pub fn with_gamma(self, gamma: f64) -> Self {
        MCConfig { gamma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.clip_floor > 0.0 && self.clip_floor < 0.5) {
            return Err(Error::Config(format!("clip floor must be in (0, 0.5), got {}", self.clip_floor)));
        }
        if !(self.step_init > 0.0 && self.tol > 0.0) {
            return Err(Error::Config("step and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Euclidean projection of a vector of non-negative values onto
/// `{x >= 0 : sum x <= radius}`.
fn project_simplex_ball(values: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total <= radius {
        return values.to_vec();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - radius) / (i + 1) as f64;
        if s > t {
            theta = t;
        } else {
            break;
        }
    }
    values.iter().map(|&s| (s - theta).max(0.0)).collect()
}

/// Thin SVD `a = U diag(s) V^T`, returned as `(U, s, V)`.
fn svd(a: &DMatrix<f64>) -> Result<(faer::Mat<f64>, Vec<f64>, faer::Mat<f64>)> {
    let m = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let dec = m.thin_svd().map_err(|_| Error::Svd)?;
    let s = dec.S().column_vector().iter().copied().collect();
    Ok((dec.U().to_owned(), s, dec.V().to_owned()))
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(svd(a)?.1.iter().sum())
}

/// Projects `a` onto the nuclear-norm ball of the given radius.
pub fn nuclear_ball_project(a: &DMatrix<f64>, radius: f64) -> Result<DMatrix<f64>> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("radius must be positive, got {radius}")));
    }
    let (u, sv, v) = svd(a)?;
    if sv.iter().sum::<f64>() <= radius {
        return Ok(a.clone());
    }
    let shrunk = project_simplex_ball(&sv, radius);
    let scaled = faer::Mat::from_fn(u.nrows(), u.ncols(), |i, r| u[(i, r)] * shrunk[r]);
    let out = scaled * v.transpose();
    Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| out[(i, j)]))
}

/// Bernoulli negative log-likelihood of `o` under `sigma(a)`, summed over all cells.
pub fn bernoulli_nll(o: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    o.iter()
        .zip(a.iter())
        .map(|(&obs, &x)| -(obs * log_sigmoid(x) + (1.0 - obs) * log_sigmoid(-x)))
        .sum()
}

#[derive(Debug, Clone)]
pub struct MCFit {
    pub propensity: PropensityMatrix,
    /// The fitted logit matrix.
    pub logits: DMatrix<f64>,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl MCFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial objective")
    }
}

pub fn fit_1bit_mc(o: &ObservationMatrix, cfg: &MCConfig) -> Result<MCFit> {
    cfg.validate()?;
    let (n, m) = (o.nrows(), o.ncols());
    if n == 0 || m == 0 {
        return Err(Error::Config("observation matrix is empty".into()));
    }
    let obs = o.as_matrix();
    let radius = cfg.gamma * ((n * m) as f64).sqrt();

    let mut a = DMatrix::zeros(n, m);
    let mut f = bernoulli_nll(obs, &a);
    let mut trace = vec![f];
    let mut converged = false;

    'outer: for _ in 0..cfg.max_iters {
        let grad = a.map(sigmoid) - obs;
        let mut step = cfg.step_init;
        loop {
            let candidate = nuclear_ball_project(&(&a - &grad * step), radius)?;
            let diff = &candidate - &a;
            let f_new = bernoulli_nll(obs, &candidate);
            let model = f + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if f_new <= model && f_new <= f {
                let decrease = f - f_new;
                a = candidate;
                f = f_new;
                trace.push(f);
                if decrease < cfg.tol * f.max(1.0) {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                converged = true;
                break 'outer;
            }
        }
    }

    let clipped = a.map(|x| sigmoid(x).clamp(cfg.clip_floor, PROPENSITY_CEIL));
    Ok(MCFit {
        propensity: PropensityMatrix::new(clipped)?,
        logits: a,
        objective_trace: trace,
        converged,
    })
}

/// Rank-1 estimate from worker and task marginal answer rates:
/// `e_ij = (n_i / m) * (m_j * n / |O|)`, clipped to `[clip_floor, 1]`.
pub fn empirical_propensity(o: &ObservationMatrix, clip_floor: f64) -> Result<PropensityMatrix> {
    let total = o.n_observed();
    if total == 0 {
        return Err(Error::Config("no observed labels".into()));
    }
    let (n, m) = (o.nrows(), o.ncols());
    let mat = o.as_matrix();
    let worker_rate: Vec<f64> = mat.row_iter().map(|r| r.sum() / m as f64).collect();
    let task_factor: Vec<f64> = mat
        .column_iter()
        .map(|c| c.sum() * n as f64 / total as f64)
        .collect();
    PropensityMatrix::new(DMatrix::from_fn(n, m, |i, j| {
        (worker_rate[i] * task_factor[j]).clamp(clip_floor, 1.0)
    }))
}
