//! Experiment orchestration: synthetic correlation sweeps, real-data
//! subsampling, spam/collusion injection sweeps, and worker correlation
//! statistics, with CSV emission of per-replication records and summaries.
//!
//! Replications and method cells are run in parallel; records are sorted by
//! their key before they are returned, so output is deterministic apart from
//! the wall-time column.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabelDataset, LabelPosterior, ObservationMatrix, PropensityMatrix};
use crate::ds::{ds_run, DsOptions};
use crate::error::{Error, Result};
use crate::glad::{glad_run, GladOptions};
use crate::majority::{ips_majority_vote, majority_vote};
use crate::propensity::{empirical_propensity, fit_1bit_mc, MCConfig};
use crate::simgen::{
    generate_synthetic, inject, malicious_fraction, max_injected_workers, subsample_labels, InjectionAmount,
    InjectionConfig, InjectionKind, SynthConfig,
};
use crate::stats::{accuracy, worker_stats, WorkerStats};

/// Environment variable naming the directory that holds `<name>/labels.csv`
/// and `<name>/gold.csv` for each dataset.
pub const DATA_DIR_ENV: &str = "BIASCROWD_DATA_DIR";

/// Public benchmark datasets and their class counts.
pub const STANDARD_DATASETS: [(&str, usize); 4] = [("rte", 2), ("temp", 2), ("wsd", 3), ("sp", 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mv,
    IpsMv,
    Ds,
    IpsDs,
    Glad,
    IpsGlad,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Mv, Method::IpsMv, Method::Ds, Method::IpsDs, Method::Glad, Method::IpsGlad];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mv => "mv",
            Method::IpsMv => "ips-mv",
            Method::Ds => "ds",
            Method::IpsDs => "ips-ds",
            Method::Glad => "glad",
            Method::IpsGlad => "ips-glad",
        }
    }

    pub fn is_ips(self) -> bool {
        matches!(self, Method::IpsMv | Method::IpsDs | Method::IpsGlad)
    }

    fn display_name(self) -> &'static str {
        match self {
            Method::Mv => "MV",
            Method::IpsMv => "IPS-MV",
            Method::Ds => "D&S",
            Method::IpsDs => "IPS-D&S",
            Method::Glad => "GLAD",
            Method::IpsGlad => "IPS-GLAD",
        }
    }

    /// Row label in summaries, e.g. `IPS-MV (gamma=0.1)`.
    pub fn label(self, gamma: Option<f64>) -> String {
        match gamma {
            Some(g) => format!("{} (gamma={g})", self.display_name()),
            None => self.display_name().to_owned(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    SyntheticSweep,
    RealSubsample,
    SpamRobustness,
    CollusionRobustness,
    WorkerCorrelation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SyntheticSweep => "synthetic-sweep",
            ExperimentKind::RealSubsample => "real-subsample",
            ExperimentKind::SpamRobustness => "spam-robustness",
            ExperimentKind::CollusionRobustness => "collusion-robustness",
            ExperimentKind::WorkerCorrelation => "worker-correlation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensitySource {
    /// True generating probabilities; synthetic data only.
    Oracle,
    /// 1-bit matrix completion, one fit per gamma.
    OneBitMc,
    /// Rank-1 product of marginal answer rates.
    Empirical,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dataset_name: String,
    pub methods: Vec<Method>,
    pub gammas: Vec<f64>,
    pub labels_per_task: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub rho_grid: Vec<f64>,
    /// Injected worker counts; `None` sweeps every count up to the 50% cap.
    pub inject_counts: Option<Vec<usize>>,
    pub propensity: PropensitySource,
    pub ds: DsOptions,
    pub glad: GladOptions,
    pub mc: MCConfig,
    pub synth: SynthConfig,
}

/// Evenly spaced grid of `points` values from -1 to 1.
pub fn rho_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        let synthetic = experiment == ExperimentKind::SyntheticSweep;
        ExperimentConfig {
            experiment,
            dataset_name: if synthetic { "synthetic".into() } else { "dataset".into() },
            methods: if synthetic { vec![Method::Mv, Method::IpsMv] } else { Method::ALL.to_vec() },
            gammas: vec![0.1, 1.0, 10.0],
            labels_per_task: vec![2, 5, 8],
            reps: if synthetic { 1000 } else { 5 },
            seed: 42,
            rho_grid: rho_grid(21),
            inject_counts: None,
            propensity: if synthetic { PropensitySource::Oracle } else { PropensitySource::OneBitMc },
            ds: DsOptions::default(),
            glad: GladOptions::default(),
            mc: MCConfig::default(),
            synth: SynthConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.methods.is_empty() && self.experiment != ExperimentKind::WorkerCorrelation {
            return Err(Error::Config("no methods selected".into()));
        }
        let any_ips = self.methods.iter().any(|m| m.is_ips());
        match self.experiment {
            ExperimentKind::SyntheticSweep => {
                if let Some(m) = self.methods.iter().find(|m| !matches!(m, Method::Mv | Method::IpsMv)) {
                    return Err(Error::Config(format!("synthetic sweep supports mv and ips-mv only, got {m}")));
                }
                if self.propensity != PropensitySource::Oracle {
                    return Err(Error::Config("synthetic sweep uses oracle propensities".into()));
                }
                if self.rho_grid.iter().any(|r| !(-1.0..=1.0).contains(r)) || self.rho_grid.is_empty() {
                    return Err(Error::Config("rho grid must be non-empty and within [-1, 1]".into()));
                }
            }
            _ => {
                if self.propensity == PropensitySource::Oracle && any_ips {
                    return Err(Error::Config("oracle propensities exist only for synthetic data".into()));
                }
            }
        }
        if any_ips && self.propensity == PropensitySource::OneBitMc {
            if self.gammas.is_empty() {
                return Err(Error::Config("IPS methods with 1-bit MC need at least one gamma".into()));
            }
            for &g in &self.gammas {
                self.mc.with_gamma(g).validate()?;
            }
        }
        if self.experiment == ExperimentKind::RealSubsample
            && (self.labels_per_task.is_empty() || self.labels_per_task.contains(&0))
        {
            return Err(Error::Config("labels per task must be a non-empty list of positive counts".into()));
        }
        Ok(())
    }

    /// Every (method, gamma) cell evaluated per dataset instance.
    pub fn cells(&self) -> Vec<(Method, Option<f64>)> {
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        let mut out = Vec::new();
        for m in methods {
            if m.is_ips() && self.propensity == PropensitySource::OneBitMc {
                out.extend(self.gammas.iter().map(|&g| (m, Some(g))));
            } else {
                out.push((m, None));
            }
        }
        out
    }
}

/// One accuracy measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub dataset: String,
    pub method: String,
    pub gamma: Option<f64>,
    /// What `axis_value` measures: `rho`, `labels_per_task` or `injected_workers`.
    pub axis: String,
    pub axis_value: f64,
    pub injected_workers: Option<usize>,
    pub malicious_fraction: Option<f64>,
    pub seed: u64,
    pub accuracy: f64,
    pub wall_time_ms: f64,
}

impl ResultRecord {
    fn method_enum(&self) -> Option<Method> {
        self.method.parse().ok()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.experiment
            .cmp(&other.experiment)
            .then_with(|| self.dataset.cmp(&other.dataset))
            .then_with(|| self.axis_value.total_cmp(&other.axis_value))
            .then_with(|| self.method_enum().cmp(&other.method_enum()))
            .then_with(|| self.method.cmp(&other.method))
            .then_with(|| cmp_gamma(self.gamma, other.gamma))
            .then_with(|| self.seed.cmp(&other.seed))
    }

    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_time_ms = other.wall_time_ms;
        &a == other
    }
}

fn cmp_gamma(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(ResultRecord::key_cmp);
}

/// Output of a single aggregation run.
#[derive(Debug, Clone)]
pub struct Aggregation {
    pub predictions: Vec<usize>,
    pub posterior: Option<LabelPosterior>,
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Runs one method. IPS methods require `propensity`.
pub fn aggregate(
    ds: &LabelDataset,
    method: Method,
    propensity: Option<&PropensityMatrix>,
    ds_opts: &DsOptions,
    glad_opts: &GladOptions,
) -> Result<Aggregation> {
    let e = if method.is_ips() {
        Some(propensity.ok_or_else(|| Error::Config(format!("{method} needs propensity scores")))?)
    } else {
        None
    };
    Ok(match method {
        Method::Mv | Method::IpsMv => {
            let out = match e {
                Some(e) => ips_majority_vote(ds, e)?,
                None => majority_vote(ds),
            };
            Aggregation { predictions: out.predictions, posterior: None, trace: Vec::new(), converged: true }
        }
        Method::Ds | Method::IpsDs => {
            let fit = ds_run(ds, e, ds_opts)?;
            Aggregation { predictions: fit.predictions(), converged: fit.converged, trace: fit.trace, posterior: Some(fit.posterior) }
        }
        Method::Glad | Method::IpsGlad => {
            let fit = glad_run(ds, e, glad_opts)?;
            Aggregation { predictions: fit.predictions(), converged: fit.converged, trace: fit.trace, posterior: Some(fit.posterior) }
        }
    })
}

/// Estimated propensities for a dataset from its observation pattern.
pub fn estimate_propensity(ds: &LabelDataset, source: PropensitySource, mc: &MCConfig) -> Result<PropensityMatrix> {
    let o = ObservationMatrix::from_dataset(ds);
    match source {
        PropensitySource::OneBitMc => Ok(fit_1bit_mc(&o, mc)?.propensity),
        PropensitySource::Empirical => empirical_propensity(&o, mc.clip_floor),
        PropensitySource::Oracle => Err(Error::Config("oracle propensities cannot be estimated".into())),
    }
}

struct CellResult {
    method: Method,
    gamma: Option<f64>,
    accuracy: f64,
    wall_time_ms: f64,
}

/// Evaluates every configured cell on one dataset instance.
fn evaluate_instance(ds: &LabelDataset, cfg: &ExperimentConfig, oracle: Option<&PropensityMatrix>) -> Result<Vec<CellResult>> {
    let cells = cfg.cells();
    let needs_ips = cells.iter().any(|(m, _)| m.is_ips());
    let mut estimated: Vec<(Option<f64>, PropensityMatrix)> = Vec::new();
    if needs_ips {
        match cfg.propensity {
            PropensitySource::Oracle => {}
            PropensitySource::Empirical => {
                estimated.push((None, estimate_propensity(ds, PropensitySource::Empirical, &cfg.mc)?));
            }
            PropensitySource::OneBitMc => {
                estimated = cfg
                    .gammas
                    .par_iter()
                    .map(|&g| Ok((Some(g), estimate_propensity(ds, PropensitySource::OneBitMc, &cfg.mc.with_gamma(g))?)))
                    .collect::<Result<_>>()?;
            }
        }
    }
    cells
        .par_iter()
        .map(|&(method, gamma)| {
            let e = if !method.is_ips() {
                None
            } else if cfg.propensity == PropensitySource::Oracle {
                Some(oracle.ok_or_else(|| Error::Config("oracle propensities unavailable".into()))?)
            } else {
                estimated.iter().find(|(g, _)| *g == gamma).map(|(_, e)| e)
            };
            let start = Instant::now();
            let agg = aggregate(ds, method, e, &cfg.ds, &cfg.glad)?;
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(CellResult { method, gamma, accuracy: accuracy(&agg.predictions, ds.gold())?, wall_time_ms })
        })
        .collect()
}

struct Axis {
    name: &'static str,
    value: f64,
    injected: Option<(usize, f64)>,
}

fn to_records(cfg: &ExperimentConfig, axis: &Axis, seed: u64, cells: Vec<CellResult>) -> Vec<ResultRecord> {
    cells
        .into_iter()
        .map(|c| ResultRecord {
            experiment: cfg.experiment.name().to_owned(),
            dataset: cfg.dataset_name.clone(),
            method: c.method.name().to_owned(),
            gamma: c.gamma,
            axis: axis.name.to_owned(),
            axis_value: axis.value,
            injected_workers: axis.injected.map(|(n, _)| n),
            malicious_fraction: axis.injected.map(|(_, f)| f),
            seed,
            accuracy: c.accuracy,
            wall_time_ms: c.wall_time_ms,
        })
        .collect()
}

fn flatten_sorted(parts: Vec<Result<Vec<ResultRecord>>>) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    sort_records(&mut out);
    Ok(out)
}

fn replication_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

/// MV vs IPS-MV with oracle propensities over a grid of (e, c) correlations.
pub fn run_synthetic_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    if cfg.experiment != ExperimentKind::SyntheticSweep {
        return Err(Error::Config(format!("expected synthetic-sweep, got {}", cfg.experiment.name())));
    }
    cfg.validate()?;
    let jobs: Vec<(f64, usize)> = cfg
        .rho_grid
        .iter()
        .flat_map(|&rho| (0..cfg.reps).map(move |r| (rho, r)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(rho, rep)| {
            let seed = replication_seed(cfg.seed, rep);
            let data = generate_synthetic(&SynthConfig { rho, seed, ..cfg.synth })?;
            let cells = evaluate_instance(&data.dataset, cfg, Some(&data.propensity))?;
            Ok(to_records(cfg, &Axis { name: "rho", value: rho, injected: None }, seed, cells))
        })
        .collect();
    flatten_sorted(parts)
}

/// Accuracy on seeded per-task subsamples of a gold-labeled dataset.
pub fn run_real_subsample(ds: &LabelDataset, cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    if cfg.experiment != ExperimentKind::RealSubsample {
        return Err(Error::Config(format!("expected real-subsample, got {}", cfg.experiment.name())));
    }
    cfg.validate()?;
    if !ds.has_gold() {
        return Err(Error::MissingGold);
    }
    let jobs: Vec<(usize, usize)> = cfg
        .labels_per_task
        .iter()
        .flat_map(|&k| (0..cfg.reps).map(move |r| (k, r)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(lpt, rep)| {
            let seed = replication_seed(cfg.seed, rep);
            let sub = subsample_labels(ds, lpt, seed)?;
            let cells = evaluate_instance(&sub, cfg, None)?;
            Ok(to_records(cfg, &Axis { name: "labels_per_task", value: lpt as f64, injected: None }, seed, cells))
        })
        .collect();
    flatten_sorted(parts)
}

/// Accuracy as spam or colluding workers are added, up to the 50% label cap.
pub fn run_injection(ds: &LabelDataset, cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = match cfg.experiment {
        ExperimentKind::SpamRobustness => InjectionKind::Spam,
        ExperimentKind::CollusionRobustness => InjectionKind::Colluding,
        other => return Err(Error::Config(format!("expected an injection experiment, got {}", other.name()))),
    };
    cfg.validate()?;
    if !ds.has_gold() {
        return Err(Error::MissingGold);
    }
    let counts = cfg
        .inject_counts
        .clone()
        .unwrap_or_else(|| (0..=max_injected_workers(ds)).collect());
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .flat_map(|&c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(count, rep)| {
            let seed = replication_seed(cfg.seed, rep);
            let injected = inject(ds, &InjectionConfig { kind, amount: InjectionAmount::Workers(count), seed })?;
            let cells = evaluate_instance(&injected, cfg, None)?;
            let axis = Axis {
                name: "injected_workers",
                value: count as f64,
                injected: Some((count, malicious_fraction(ds, count))),
            };
            Ok(to_records(cfg, &axis, seed, cells))
        })
        .collect();
    flatten_sorted(parts)
}

/// Worker propensity/accuracy statistics for one dataset.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub dataset: String,
    pub stats: WorkerStats,
    pub workers_used: usize,
    pub pearson: f64,
    pub spearman: f64,
}

pub fn run_worker_correlation(ds: &LabelDataset, name: &str) -> Result<CorrelationReport> {
    let stats = worker_stats(ds)?;
    let workers_used = stats.accuracy.iter().filter(|a| a.is_some()).count();
    Ok(CorrelationReport {
        dataset: name.to_owned(),
        pearson: stats.pearson()?,
        spearman: stats.spearman()?,
        workers_used,
        stats,
    })
}

pub fn write_correlation(report: &CorrelationReport, ds: &LabelDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stats_path = dir.join("worker_stats.csv");
    let mut w = csv::Writer::from_path(&stats_path)?;
    w.write_record(["dataset", "worker", "propensity", "accuracy"])?;
    for (i, (p, a)) in report.stats.propensity.iter().zip(&report.stats.accuracy).enumerate() {
        w.write_record([
            report.dataset.clone(),
            ds.names().workers[i].clone(),
            p.to_string(),
            a.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&stats_path, e))?;
    let corr_path = dir.join("correlation.csv");
    let mut w = csv::Writer::from_path(&corr_path)?;
    w.write_record(["dataset", "workers_used", "pearson", "spearman"])?;
    w.write_record([
        report.dataset.clone(),
        report.workers_used.to_string(),
        report.pearson.to_string(),
        report.spearman.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(&corr_path, e))?;
    Ok((stats_path, corr_path))
}

/// Mean accuracy of one (experiment, dataset, axis value, method, gamma) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub dataset: String,
    pub method: String,
    pub gamma: Option<f64>,
    pub axis: String,
    pub axis_value: f64,
    pub malicious_fraction: Option<f64>,
    pub mean_accuracy: f64,
    pub replications: usize,
}

impl SummaryRow {
    pub fn label(&self) -> String {
        match self.method.parse::<Method>() {
            Ok(m) => m.label(self.gamma),
            Err(_) => self.method.clone(),
        }
    }
}

/// Groups sorted records into per-cell means.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for r in &sorted {
        let same = out.last().is_some_and(|s| {
            s.experiment == r.experiment
                && s.dataset == r.dataset
                && s.axis_value == r.axis_value
                && s.method == r.method
                && s.gamma == r.gamma
        });
        if same {
            let last = out.len() - 1;
            sums[last] += r.accuracy;
            out[last].replications += 1;
        } else {
            sums.push(r.accuracy);
            out.push(SummaryRow {
                experiment: r.experiment.clone(),
                dataset: r.dataset.clone(),
                method: r.method.clone(),
                gamma: r.gamma,
                axis: r.axis.clone(),
                axis_value: r.axis_value,
                malicious_fraction: r.malicious_fraction,
                mean_accuracy: 0.0,
                replications: 1,
            });
        }
    }
    for (row, sum) in out.iter_mut().zip(sums) {
        row.mean_accuracy = sum / row.replications as f64;
    }
    out
}

/// Mean accuracy for one cell, if present.
pub fn mean_accuracy(summary: &[SummaryRow], dataset: &str, axis_value: f64, method: Method, gamma: Option<f64>) -> Option<f64> {
    summary
        .iter()
        .find(|s| s.dataset == dataset && s.axis_value == axis_value && s.method == method.name() && s.gamma == gamma)
        .map(|s| s.mean_accuracy)
}

fn fmt_axis(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Paths written by [`emit_results`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Writes `results.csv` (long format), `summary.csv` (methods x
/// dataset/axis columns, mean accuracy) and `plot.csv` (one row per
/// dataset/axis value, one column per method).
pub fn emit_results(records: &[ResultRecord], dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);

    let results = dir.join("results.csv");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&results)?;
    w.write_record([
        "experiment", "dataset", "method", "gamma", "axis", "axis_value", "injected_workers",
        "malicious_fraction", "seed", "accuracy", "wall_time_ms",
    ])?;
    for r in &sorted {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&results, e))?;

    let summary_rows = summarize(&sorted);

    // Row order: canonical method order, then gamma.
    let mut row_keys: Vec<(Option<Method>, String, Option<f64>, String)> = Vec::new();
    for s in &summary_rows {
        let key = (s.method.parse::<Method>().ok(), s.method.clone(), s.gamma, s.label());
        if !row_keys.iter().any(|k| k.1 == key.1 && k.2 == key.2) {
            row_keys.push(key);
        }
    }
    row_keys.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)).then_with(|| cmp_gamma(a.2, b.2)));
    let mut columns: Vec<(String, f64)> = Vec::new();
    for s in &summary_rows {
        if !columns.iter().any(|(d, v)| d == &s.dataset && *v == s.axis_value) {
            columns.push((s.dataset.clone(), s.axis_value));
        }
    }
    let mut lookup: BTreeMap<(String, Option<u64>, String, u64), f64> = BTreeMap::new();
    for s in &summary_rows {
        lookup.insert(
            (s.method.clone(), s.gamma.map(f64::to_bits), s.dataset.clone(), s.axis_value.to_bits()),
            s.mean_accuracy,
        );
    }
    let summary = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    let mut header = vec!["method".to_owned()];
    header.extend(columns.iter().map(|(d, v)| format!("{d}:{}", fmt_axis(*v))));
    w.write_record(&header)?;
    for (_, method, gamma, label) in &row_keys {
        let mut row = vec![label.clone()];
        for (d, v) in &columns {
            let cell = lookup.get(&(method.clone(), gamma.map(f64::to_bits), d.clone(), v.to_bits()));
            row.push(cell.map(|a| format!("{a:.4}")).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&summary, e))?;

    let plot = dir.join("plot.csv");
    let mut w = csv::Writer::from_path(&plot)?;
    let mut header = vec!["dataset".to_owned(), "axis".to_owned(), "x".to_owned(), "malicious_fraction".to_owned()];
    header.extend(row_keys.iter().map(|k| k.3.clone()));
    w.write_record(&header)?;
    for (d, v) in &columns {
        let first = summary_rows.iter().find(|s| &s.dataset == d && s.axis_value == *v);
        let mut row = vec![
            d.clone(),
            first.map(|s| s.axis.clone()).unwrap_or_default(),
            fmt_axis(*v),
            first.and_then(|s| s.malicious_fraction).map(|f| f.to_string()).unwrap_or_default(),
        ];
        for (_, method, gamma, _) in &row_keys {
            let cell = lookup.get(&(method.clone(), gamma.map(f64::to_bits), d.clone(), v.to_bits()));
            row.push(cell.map(|a| a.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&plot, e))?;

    Ok(EmittedFiles { results, summary, plot })
}

/// Parses a `results.csv` written by [`emit_results`].
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Loads `<root>/<name>/labels.csv` and `<root>/<name>/gold.csv`.
pub fn load_named_dataset(root: &Path, name: &str, k: usize) -> Result<LabelDataset> {
    let dir = root.join(name);
    crate::io::load_dataset(&dir.join("labels.csv"), Some(&dir.join("gold.csv")), k)
}
