//! Core domain types: labeled observations, propensity scores, and
//! per-task label posteriors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One observed label: worker `worker` assigned class `label` to task `task`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub worker: usize,
    pub task: usize,
    pub label: usize,
}

/// Human-readable names for the dense worker, task and class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Names {
    pub workers: Vec<String>,
    pub tasks: Vec<String>,
    pub classes: Vec<String>,
}

impl Names {
    pub fn indexed(n_workers: usize, n_tasks: usize, n_classes: usize) -> Self {
        let seq = |n: usize| (0..n).map(|i| i.to_string()).collect();
        Names {
            workers: seq(n_workers),
            tasks: seq(n_tasks),
            classes: seq(n_classes),
        }
    }
}

/// A sparse crowd-labeling matrix with optional gold labels.
///
/// Holds at most one label per (worker, task) pair. Workers or tasks without
/// any label keep their index so that dense n x m matrices derived from the
/// dataset (observation pattern, propensities) stay aligned.
#[derive(Debug, Clone)]
pub struct LabelDataset {
    n_workers: usize,
    n_tasks: usize,
    n_classes: usize,
    observations: Vec<Observation>,
    gold: Vec<Option<usize>>,
    by_task: Vec<Vec<usize>>,
    by_worker: Vec<Vec<usize>>,
    names: Names,
}

impl LabelDataset {
    pub fn new(
        n_workers: usize,
        n_tasks: usize,
        n_classes: usize,
        observations: Vec<Observation>,
        gold: Option<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let names = Names::indexed(n_workers, n_tasks, n_classes);
        Self::with_names(n_workers, n_tasks, n_classes, observations, gold, names)
    }

    pub fn with_names(
        n_workers: usize,
        n_tasks: usize,
        n_classes: usize,
        observations: Vec<Observation>,
        gold: Option<Vec<Option<usize>>>,
        names: Names,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if names.workers.len() != n_workers
            || names.tasks.len() != n_tasks
            || names.classes.len() != n_classes
        {
            return Err(Error::LengthMismatch(
                "name tables do not match dataset dimensions".into(),
            ));
        }
        let gold = gold.unwrap_or_else(|| vec![None; n_tasks]);
        if gold.len() != n_tasks {
            return Err(Error::LengthMismatch(format!(
                "gold has {} entries for {} tasks",
                gold.len(),
                n_tasks
            )));
        }
        if let Some((task, label)) = gold
            .iter()
            .enumerate()
            .find_map(|(j, g)| g.filter(|&l| l >= n_classes).map(|l| (j, l)))
        {
            return Err(Error::Domain(format!(
                "gold label {label} for task {task} is not below K={n_classes}"
            )));
        }

        let mut by_task = vec![Vec::new(); n_tasks];
        let mut by_worker = vec![Vec::new(); n_workers];
        let mut seen = std::collections::HashSet::with_capacity(observations.len());
        for (idx, obs) in observations.iter().enumerate() {
            if obs.worker >= n_workers || obs.task >= n_tasks {
                return Err(Error::Domain(format!(
                    "observation ({}, {}) outside {}x{} worker/task range",
                    obs.worker, obs.task, n_workers, n_tasks
                )));
            }
            if obs.label >= n_classes {
                return Err(Error::Domain(format!(
                    "label {} from worker {} on task {} is not below K={}",
                    obs.label, obs.worker, obs.task, n_classes
                )));
            }
            if !seen.insert((obs.worker, obs.task)) {
                return Err(Error::DuplicateObservation {
                    worker: names.workers[obs.worker].clone(),
                    task: names.tasks[obs.task].clone(),
                });
            }
            by_task[obs.task].push(idx);
            by_worker[obs.worker].push(idx);
        }

        Ok(LabelDataset {
            n_workers,
            n_tasks,
            n_classes,
            observations,
            gold,
            by_task,
            by_worker,
            names,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Indices into [`observations`](Self::observations) of the labels on task `task`.
    pub fn task_observations(&self, task: usize) -> &[usize] {
        &self.by_task[task]
    }

    /// Indices into [`observations`](Self::observations) of the labels by worker `worker`.
    pub fn worker_observations(&self, worker: usize) -> &[usize] {
        &self.by_worker[worker]
    }

    pub fn gold(&self) -> &[Option<usize>] {
        &self.gold
    }

    pub fn has_gold(&self) -> bool {
        self.gold.iter().any(Option::is_some)
    }

    pub fn names(&self) -> &Names {
        &self.names
    }

    /// Builds a dataset over the same tasks and classes with a new
    /// observation list, appending `extra_workers` to the worker table.
    pub(crate) fn derive(
        &self,
        observations: Vec<Observation>,
        extra_workers: Vec<String>,
    ) -> Result<Self> {
        let mut names = self.names.clone();
        names.workers.extend(extra_workers);
        LabelDataset::with_names(
            names.workers.len(),
            self.n_tasks,
            self.n_classes,
            observations,
            Some(self.gold.clone()),
            names,
        )
    }
}

/// Observation probabilities e_ij for every worker/task cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityMatrix {
    values: DMatrix<f64>,
}

impl PropensityMatrix {
    /// Every entry must be finite and lie in (0, 1].
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                let v = values[(i, j)];
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::NonPositivePropensity {
                        worker: i,
                        task: j,
                        value: v,
                    });
                }
            }
        }
        Ok(PropensityMatrix { values })
    }

    pub fn constant(n_workers: usize, n_tasks: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n_workers, n_tasks, value))
    }

    pub fn get(&self, worker: usize, task: usize) -> f64 {
        self.values[(worker, task)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_workers(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_tasks(&self) -> usize {
        self.values.ncols()
    }

    /// Inverse-propensity weights 1/e_ij, aligned with `ds.observations()`.
    pub fn ips_weights(&self, ds: &LabelDataset) -> Result<Vec<f64>> {
        if self.n_workers() != ds.n_workers() || self.n_tasks() != ds.n_tasks() {
            return Err(Error::LengthMismatch(format!(
                "propensity matrix is {}x{}, dataset is {}x{}",
                self.n_workers(),
                self.n_tasks(),
                ds.n_workers(),
                ds.n_tasks()
            )));
        }
        Ok(ds
            .observations()
            .iter()
            .map(|o| 1.0 / self.get(o.worker, o.task))
            .collect())
    }
}

/// Weights aligned with `ds.observations()`: `1/e_ij` when propensities are
/// given, otherwise all ones.
pub fn observation_weights(
    ds: &LabelDataset,
    propensity: Option<&PropensityMatrix>,
) -> Result<Vec<f64>> {
    match propensity {
        Some(e) => e.ips_weights(ds),
        None => Ok(vec![1.0; ds.n_observations()]),
    }
}

/// Binary n x m observation pattern O.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    mask: DMatrix<f64>,
}

impl ObservationMatrix {
    pub fn from_dataset(ds: &LabelDataset) -> Self {
        let mut mask = DMatrix::zeros(ds.n_workers(), ds.n_tasks());
        for o in ds.observations() {
            mask[(o.worker, o.task)] = 1.0;
        }
        ObservationMatrix { mask }
    }

    pub fn from_bools(rows: usize, cols: usize, cells: impl Fn(usize, usize) -> bool) -> Self {
        ObservationMatrix {
            mask: DMatrix::from_fn(rows, cols, |i, j| if cells(i, j) { 1.0 } else { 0.0 }),
        }
    }

    /// O as a 0/1 real matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mask
    }

    pub fn is_observed(&self, worker: usize, task: usize) -> bool {
        self.mask[(worker, task)] > 0.5
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn nrows(&self) -> usize {
        self.mask.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mask.ncols()
    }
}

/// Per-task categorical posterior q(Z_j) together with the class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPosterior {
    q: DMatrix<f64>,
    prior: Vec<f64>,
}

const NORMALIZATION_TOL: f64 = 1e-9;

impl LabelPosterior {
    pub fn new(q: DMatrix<f64>, prior: Vec<f64>) -> Result<Self> {
        if q.ncols() != prior.len() {
            return Err(Error::LengthMismatch(format!(
                "posterior has {} classes, prior has {}",
                q.ncols(),
                prior.len()
            )));
        }
        for (j, row) in q.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Domain(format!(
                    "posterior row {j} is not a distribution (sum {sum})"
                )));
            }
        }
        let sum: f64 = prior.iter().sum();
        if prior.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!(
                "prior is not a distribution (sum {sum})"
            )));
        }
        Ok(LabelPosterior { q, prior })
    }

    pub fn uniform_prior(k: usize) -> Vec<f64> {
        vec![1.0 / k as f64; k]
    }

    /// m x K matrix of q(Z_j = k).
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn n_tasks(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.q.ncols()
    }

    /// Most probable class per task; ties go to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        self.q
            .row_iter()
            .map(|row| argmax_lowest(row.iter().copied()))
            .collect()
    }
}

/// Index of the maximum, preferring the lowest index among exact ties.
pub(crate) fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// Normalizes per-class log scores in place into a probability vector.
///
/// Returns `false` when every score is -inf (or NaN), leaving `scores` untouched.
pub(crate) fn normalize_log_scores(scores: &mut [f64]) -> bool {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
    true
}
