//! Synthetic crowds, per-task label subsampling, and injection of spam or
//! colluding workers.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{LabelDataset, Observation, PropensityMatrix};
use crate::error::{Error, Result};

const STREAM_SYNTH: u64 = 1;
const STREAM_SUBSAMPLE: u64 = 2;
const STREAM_INJECT: u64 = 3;

/// Deterministic generator for a given seed and purpose.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_workers: usize,
    pub n_tasks: usize,
    pub n_classes: usize,
    pub mean_e: f64,
    pub mean_c: f64,
    pub sd_e: f64,
    pub sd_c: f64,
    /// Correlation between observation and correctness probabilities.
    pub rho: f64,
    pub seed: u64,
    /// Replaces oracle propensities that clip to zero. Those cells are
    /// never observed, so the value only keeps the matrix positive.
    pub clip_floor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_workers: 20,
            n_tasks: 100,
            n_classes: 2,
            mean_e: 0.15,
            mean_c: 0.75,
            sd_e: 0.075,
            sd_c: 0.125,
            rho: 0.0,
            seed: 0,
            clip_floor: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_e > 0.0 && self.sd_c > 0.0) {
            return Err(Error::Config("standard deviations must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must be in [-1, 1], got {}", self.rho)));
        }
        if self.n_classes < 2 || self.n_workers == 0 || self.n_tasks == 0 {
            return Err(Error::Config("need K >= 2 and a non-empty crowd".into()));
        }
        if !(self.clip_floor > 0.0 && self.clip_floor <= 1.0) {
            return Err(Error::Config("clip floor must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// One (observation, correctness) probability pair before clipping.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let e = self.mean_e + self.sd_e * z1;
        let c = self.mean_c + self.sd_c * (self.rho * z1 + (1.0 - self.rho * self.rho).max(0.0).sqrt() * z2);
        (e, c)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: LabelDataset,
    /// Clipped observation probabilities, zeros replaced by `clip_floor`.
    pub propensity: PropensityMatrix,
    /// Raw draws before clipping, n x m.
    pub raw_e: DMatrix<f64>,
    pub raw_c: DMatrix<f64>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let (n, m, k) = (cfg.n_workers, cfg.n_tasks, cfg.n_classes);
    let mut rng = seeded_rng(cfg.seed, STREAM_SYNTH);
    let truth: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();

    let mut raw_e = DMatrix::zeros(n, m);
    let mut raw_c = DMatrix::zeros(n, m);
    let mut propensity = DMatrix::zeros(n, m);
    let mut observations = Vec::new();
    for i in 0..n {
        for (j, &z) in truth.iter().enumerate() {
            let (e, c) = cfg.draw_pair(&mut rng);
            raw_e[(i, j)] = e;
            raw_c[(i, j)] = c;
            let e = e.clamp(0.0, 1.0);
            let c = c.clamp(0.0, 1.0);
            propensity[(i, j)] = if e > 0.0 { e } else { cfg.clip_floor };
            if rng.random::<f64>() < e {
                let label = if rng.random::<f64>() < c {
                    z
                } else {
                    wrong_label(z, k, &mut rng)
                };
                observations.push(Observation { worker: i, task: j, label });
            }
        }
    }
    let gold = truth.into_iter().map(Some).collect();
    Ok(SyntheticData {
        dataset: LabelDataset::new(n, m, k, observations, Some(gold))?,
        propensity: PropensityMatrix::new(propensity)?,
        raw_e,
        raw_c,
    })
}

/// Uniform over the K-1 classes other than `truth` (a flip when K = 2).
fn wrong_label<R: Rng + ?Sized>(truth: usize, k: usize, rng: &mut R) -> usize {
    if k == 2 {
        return 1 - truth;
    }
    let r = rng.random_range(0..k - 1);
    if r >= truth {
        r + 1
    } else {
        r
    }
}

/// Keeps at most `labels_per_task` labels per task, chosen uniformly
/// without replacement. Every worker keeps its index.
pub fn subsample_labels(ds: &LabelDataset, labels_per_task: usize, seed: u64) -> Result<LabelDataset> {
    if labels_per_task == 0 {
        return Err(Error::Config("labels per task must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed, STREAM_SUBSAMPLE);
    let mut keep = Vec::with_capacity(ds.n_tasks() * labels_per_task);
    for j in 0..ds.n_tasks() {
        let idx = ds.task_observations(j);
        if idx.len() <= labels_per_task {
            keep.extend_from_slice(idx);
        } else {
            keep.extend(sample(&mut rng, idx.len(), labels_per_task).into_iter().map(|p| idx[p]));
        }
    }
    keep.sort_unstable();
    let obs = keep.into_iter().map(|i| ds.observations()[i]).collect();
    ds.derive(obs, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InjectionKind {
    Spam,
    Colluding,
}

impl InjectionKind {
    pub fn name(self) -> &'static str {
        match self {
            InjectionKind::Spam => "spam",
            InjectionKind::Colluding => "colluding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InjectionAmount {
    Workers(usize),
    /// Target share of malicious labels among all labels, at most 0.5.
    LabelFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionConfig {
    pub kind: InjectionKind,
    pub amount: InjectionAmount,
    pub seed: u64,
}

pub const MAX_MALICIOUS_FRACTION: f64 = 0.5;

/// Share of labels contributed by `count` injected workers that answer every task.
pub fn malicious_fraction(ds: &LabelDataset, count: usize) -> f64 {
    let injected = (count * ds.n_tasks()) as f64;
    let total = injected + ds.n_observations() as f64;
    if total == 0.0 {
        0.0
    } else {
        injected / total
    }
}

/// Largest worker count whose labels stay within `fraction` of all labels.
pub fn workers_for_fraction(ds: &LabelDataset, fraction: f64) -> Result<usize> {
    if !(0.0..=MAX_MALICIOUS_FRACTION).contains(&fraction) {
        return Err(Error::Config(format!(
            "malicious label fraction must be in [0, 0.5], got {fraction}"
        )));
    }
    if fraction == 0.0 || ds.n_tasks() == 0 {
        return Ok(0);
    }
    let exact = fraction * ds.n_observations() as f64 / ((1.0 - fraction) * ds.n_tasks() as f64);
    // guard against 2.9999999 style rounding of exact ratios
    Ok((exact + 1e-9).floor() as usize)
}

/// Worker count at the 50% malicious-label cap.
pub fn max_injected_workers(ds: &LabelDataset) -> usize {
    if ds.n_tasks() == 0 {
        0
    } else {
        ds.n_observations() / ds.n_tasks()
    }
}

pub fn inject(ds: &LabelDataset, cfg: &InjectionConfig) -> Result<LabelDataset> {
    let count = match cfg.amount {
        InjectionAmount::Workers(c) => c,
        InjectionAmount::LabelFraction(f) => workers_for_fraction(ds, f)?,
    };
    if count == 0 {
        return ds.derive(ds.observations().to_vec(), Vec::new());
    }
    let frac = malicious_fraction(ds, count);
    if frac > MAX_MALICIOUS_FRACTION {
        return Err(Error::Config(format!(
            "{count} injected workers would contribute {frac:.3} of all labels (cap 0.5)"
        )));
    }
    let (n0, m, k) = (ds.n_workers(), ds.n_tasks(), ds.n_classes());
    let mut rng = seeded_rng(cfg.seed, STREAM_INJECT);
    let mut obs = ds.observations().to_vec();
    obs.reserve(count * m);
    match cfg.kind {
        InjectionKind::Spam => {
            for w in 0..count {
                for j in 0..m {
                    obs.push(Observation { worker: n0 + w, task: j, label: rng.random_range(0..k) });
                }
            }
        }
        InjectionKind::Colluding => {
            let shared: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
            for w in 0..count {
                for (j, &label) in shared.iter().enumerate() {
                    obs.push(Observation { worker: n0 + w, task: j, label });
                }
            }
        }
    }
    let names = (0..count).map(|w| format!("{}-{w}", cfg.kind.name())).collect();
    ds.derive(obs, names)
}

pub fn inject_spam(ds: &LabelDataset, count: usize, seed: u64) -> Result<LabelDataset> {
    inject(ds, &InjectionConfig { kind: InjectionKind::Spam, amount: InjectionAmount::Workers(count), seed })
}

pub fn inject_collusion(ds: &LabelDataset, count: usize, seed: u64) -> Result<LabelDataset> {
    inject(ds, &InjectionConfig { kind: InjectionKind::Colluding, amount: InjectionAmount::Workers(count), seed })
}
