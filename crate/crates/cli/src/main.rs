use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use biascrowd_core::ds::DsOptions;
use biascrowd_core::em::EmOptions;
use biascrowd_core::glad::GladOptions;
use biascrowd_core::harness::{
    aggregate, emit_results, estimate_propensity, load_named_dataset, rho_grid, run_injection, run_real_subsample,
    run_synthetic_sweep, run_worker_correlation, write_correlation, ExperimentConfig, ExperimentKind, Method,
    PropensitySource, ResultRecord, DATA_DIR_ENV, STANDARD_DATASETS,
};
use biascrowd_core::io::{
    convert_tsv, load_dataset, write_class_map, write_gold_csv, write_labels_csv, write_predictions, write_propensity,
    write_trace, TsvLayout,
};
use biascrowd_core::propensity::MCConfig;
use biascrowd_core::simgen::{generate_synthetic, inject, InjectionAmount, InjectionConfig, InjectionKind, SynthConfig};
use biascrowd_core::stats::accuracy;
use biascrowd_core::LabelDataset;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Crowdsourced label aggregation with inverse-propensity weighting.
#[derive(Parser)]
#[command(name = "biascrowd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MV vs IPS-MV on synthetic data across (propensity, correctness) correlations.
    SyntheticSweep(SweepArgs),
    /// Accuracy on seeded per-task subsamples of a gold-labeled dataset.
    RealSubsample(SubsampleArgs),
    /// Accuracy as spam workers are added.
    SpamRobustness(InjectionArgs),
    /// Accuracy as colluding workers are added.
    CollusionRobustness(InjectionArgs),
    /// Correlation between worker answer rate and worker accuracy.
    WorkerCorrelation(CorrelationArgs),
    /// Aggregates one dataset with one method and writes predictions.
    Aggregate(AggregateArgs),
    /// Writes one synthetic dataset, optionally with injected workers.
    Generate(GenerateArgs),
    /// Converts tab-separated annotation files to labels/gold CSV.
    Convert(ConvertArgs),
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// Labels CSV with a `worker,task,label` header.
    #[arg(long, requires = "k")]
    labels: Option<PathBuf>,
    /// Gold CSV with a `task,label` header.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Number of classes.
    #[arg(long)]
    k: Option<usize>,
    /// Dataset name: the directory under the data root when `--labels` is
    /// absent, and the name used in result files.
    #[arg(long)]
    dataset: Option<String>,
    /// Root holding `<dataset>/labels.csv` and `<dataset>/gold.csv`.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

impl DatasetArgs {
    fn name(&self) -> String {
        if let Some(d) = &self.dataset {
            return d.clone();
        }
        self.labels
            .as_deref()
            .and_then(|p| p.parent())
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    fn load(&self) -> Result<LabelDataset> {
        if let Some(labels) = &self.labels {
            let k = self.k.context("--k is required with --labels")?;
            return load_dataset(labels, self.gold.as_deref(), k)
                .with_context(|| format!("loading {}", labels.display()));
        }
        let Some(name) = &self.dataset else {
            bail!("give either --labels or --dataset");
        };
        let Some(root) = &self.data_dir else {
            bail!("--dataset needs --data-dir or {DATA_DIR_ENV}");
        };
        let k = match self.k {
            Some(k) => k,
            None => STANDARD_DATASETS
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, k)| *k)
                .with_context(|| format!("unknown dataset `{name}`; pass --k"))?,
        };
        load_named_dataset(root, name, k).with_context(|| format!("loading {name} from {}", root.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PropensityArg {
    /// 1-bit matrix completion, one fit per gamma.
    Mc,
    /// Rank-1 product of worker and task answer rates.
    Empirical,
}

impl From<PropensityArg> for PropensitySource {
    fn from(p: PropensityArg) -> Self {
        match p {
            PropensityArg::Mc => PropensitySource::OneBitMc,
            PropensityArg::Empirical => PropensitySource::Empirical,
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// EM iteration cap.
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// EM stops when the lower bound improves by less than this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Pseudo-count added to every D&S confusion cell.
    #[arg(long, default_value_t = 0.01)]
    smoothing: f64,
    /// Gradient steps per GLAD M-step.
    #[arg(long, default_value_t = 25)]
    glad_grad_iters: usize,
    /// Iteration cap of the 1-bit matrix completion solver.
    #[arg(long, default_value_t = 500)]
    mc_max_iters: usize,
    /// Relative objective tolerance of the 1-bit matrix completion solver.
    #[arg(long, default_value_t = 1e-6)]
    mc_tol: f64,
    /// Lower clip applied to estimated propensities.
    #[arg(long, default_value_t = 0.01)]
    clip_floor: f64,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let em = EmOptions { max_iters: self.max_iters, tol: self.tol };
        cfg.ds = DsOptions { em, smoothing: self.smoothing };
        cfg.glad = GladOptions { em, max_grad_iters: self.glad_grad_iters, ..GladOptions::default() };
        cfg.mc = MCConfig { max_iters: self.mc_max_iters, tol: self.mc_tol, clip_floor: self.clip_floor, ..MCConfig::default() };
    }
}

#[derive(Args, Clone)]
struct MethodArgs {
    /// Methods to run.
    #[arg(long, value_delimiter = ',', default_value = "mv,ips-mv,ds,ips-ds,glad,ips-glad")]
    methods: Vec<String>,
    /// Nuclear-norm scale(s) for 1-bit matrix completion.
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    gamma: Vec<f64>,
    /// Propensity estimator for IPS methods.
    #[arg(long, value_enum, default_value = "mc")]
    propensity: PropensityArg,
    /// Replications (seeds are `seed`, `seed + 1`, ...).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
}

impl MethodArgs {
    fn config(&self, kind: ExperimentKind, name: String) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.dataset_name = name;
        cfg.methods = parse_methods(&self.methods)?;
        cfg.gammas = self.gamma.clone();
        cfg.propensity = self.propensity.into();
        cfg.reps = self.reps;
        cfg.seed = self.seed;
        self.model.apply(&mut cfg);
        Ok(cfg)
    }
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|m| m.parse::<Method>().map_err(Into::into)).collect()
}

#[derive(Args)]
struct SweepArgs {
    /// Explicit rho values; defaults to an evenly spaced grid on [-1, 1].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho: Option<Vec<f64>>,
    /// Number of grid points when `--rho` is absent.
    #[arg(long, default_value_t = 21)]
    rho_points: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    workers: usize,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SubsampleArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    methods: MethodArgs,
    /// Labels kept per task.
    #[arg(long, value_delimiter = ',', default_value = "2,5,8")]
    labels_per_task: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InjectionArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    methods: MethodArgs,
    /// Injected worker counts; defaults to every count up to the 50%
    /// malicious-label cap.
    #[arg(long, value_delimiter = ',')]
    inject_count: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelationArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "mv")]
    method: String,
    /// Nuclear-norm scale for 1-bit matrix completion.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "mc")]
    propensity: PropensityArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectArg {
    Spam,
    Colluding,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    workers: usize,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Kind of malicious workers to add.
    #[arg(long, value_enum, requires = "inject_count")]
    inject: Option<InjectArg>,
    /// Number of malicious workers to add.
    #[arg(long, requires = "inject")]
    inject_count: Option<usize>,
    /// Output directory for labels.csv, gold.csv and propensity.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    /// `worker<TAB>task<TAB>label` rows.
    Triples,
    /// Columns `!amt_worker_ids`, `orig_id`, `response`, `gold`.
    Standardized,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "standardized")]
    layout: LayoutArg,
    #[arg(long)]
    out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn finish(records: &[ResultRecord], out: &Path) -> Result<()> {
    let files = emit_results(records, out)?;
    println!("{} records", records.len());
    println!("wrote {}", files.results.display());
    println!("wrote {}", files.summary.display());
    println!("wrote {}", files.plot.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SyntheticSweep(a) => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::SyntheticSweep);
            cfg.rho_grid = a.rho.unwrap_or_else(|| rho_grid(a.rho_points));
            cfg.reps = a.reps;
            cfg.seed = a.seed;
            cfg.synth.n_workers = a.workers;
            cfg.synth.n_tasks = a.tasks;
            cfg.synth.n_classes = a.classes;
            finish(&run_synthetic_sweep(&cfg)?, &a.out)
        }
        Command::RealSubsample(a) => {
            let ds = a.data.load()?;
            let mut cfg = a.methods.config(ExperimentKind::RealSubsample, a.data.name())?;
            cfg.labels_per_task = a.labels_per_task;
            finish(&run_real_subsample(&ds, &cfg)?, &a.out)
        }
        Command::SpamRobustness(a) => run_injection_cmd(ExperimentKind::SpamRobustness, a),
        Command::CollusionRobustness(a) => run_injection_cmd(ExperimentKind::CollusionRobustness, a),
        Command::WorkerCorrelation(a) => {
            let ds = a.data.load()?;
            let report = run_worker_correlation(&ds, &a.data.name())?;
            let (stats, corr) = write_correlation(&report, &ds, &a.out)?;
            println!(
                "{}: pearson {:.4}, spearman {:.4} over {} workers",
                report.dataset, report.pearson, report.spearman, report.workers_used
            );
            println!("wrote {}", stats.display());
            println!("wrote {}", corr.display());
            Ok(())
        }
        Command::Aggregate(a) => run_aggregate(a),
        Command::Generate(a) => run_generate(a),
        Command::Convert(a) => {
            create_dir(&a.out)?;
            let layout = match a.layout {
                LayoutArg::Triples => TsvLayout::Triples,
                LayoutArg::Standardized => TsvLayout::Standardized,
            };
            let c = convert_tsv(&a.input, layout, &a.out)?;
            println!("{} rows", c.rows);
            println!("wrote {}", c.labels.display());
            if let Some(g) = c.gold {
                println!("wrote {}", g.display());
            }
            Ok(())
        }
    }
}

fn run_injection_cmd(kind: ExperimentKind, a: InjectionArgs) -> Result<()> {
    let ds = a.data.load()?;
    let mut cfg = a.methods.config(kind, a.data.name())?;
    cfg.inject_counts = a.inject_count;
    finish(&run_injection(&ds, &cfg)?, &a.out)
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_workers: a.workers,
        n_tasks: a.tasks,
        n_classes: a.classes,
        rho: a.rho,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg)?;
    create_dir(&a.out)?;
    let propensity = a.out.join("propensity.csv");
    write_propensity(&data.dataset, &data.propensity, &propensity)?;
    let ds = match (a.inject, a.inject_count) {
        (Some(kind), Some(count)) => {
            let kind = match kind {
                InjectArg::Spam => InjectionKind::Spam,
                InjectArg::Colluding => InjectionKind::Colluding,
            };
            inject(&data.dataset, &InjectionConfig { kind, amount: InjectionAmount::Workers(count), seed: a.seed })?
        }
        _ => data.dataset,
    };
    let labels = a.out.join("labels.csv");
    let gold = a.out.join("gold.csv");
    write_labels_csv(&ds, &labels)?;
    write_gold_csv(&ds, &gold)?;
    println!("{} workers, {} tasks, {} labels", ds.n_workers(), ds.n_tasks(), ds.n_observations());
    for p in [&labels, &gold, &propensity] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run_aggregate(a: AggregateArgs) -> Result<()> {
    let ds = a.data.load()?;
    let method: Method = a.method.parse()?;
    let mut cfg = ExperimentConfig::new(ExperimentKind::RealSubsample);
    a.model.apply(&mut cfg);
    create_dir(&a.out)?;
    let propensity = if method.is_ips() {
        let e = estimate_propensity(&ds, a.propensity.into(), &cfg.mc.with_gamma(a.gamma))?;
        let path = a.out.join("propensity.csv");
        write_propensity(&ds, &e, &path)?;
        println!("wrote {}", path.display());
        Some(e)
    } else {
        None
    };
    let result = aggregate(&ds, method, propensity.as_ref(), &cfg.ds, &cfg.glad)?;
    let predictions = a.out.join("predictions.csv");
    write_predictions(&ds, &result.predictions, result.posterior.as_ref(), &predictions)?;
    println!("wrote {}", predictions.display());
    let classes = a.out.join("class_map.csv");
    write_class_map(&ds, &classes)?;
    println!("wrote {}", classes.display());
    if !result.trace.is_empty() {
        let trace = a.out.join("trace.csv");
        write_trace(&result.trace, &trace)?;
        println!("wrote {}", trace.display());
        if !result.converged {
            eprintln!("warning: EM stopped at the iteration cap before converging");
        }
    }
    if ds.has_gold() {
        println!("accuracy {:.4}", accuracy(&result.predictions, ds.gold())?);
    }
    Ok(())
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
