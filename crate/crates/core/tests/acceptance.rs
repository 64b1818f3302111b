//! Acceptance checks. Each test writes one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts.
//!
//! The real-data checks need the benchmark datasets under
//! `$BIASCROWD_DATA_DIR/{rte,temp,wsd,sp}/{labels,gold}.csv` and are ignored
//! by default; run them with `cargo test --release --test acceptance -- --ignored`.

mod common;

use std::io::Write;
use std::path::PathBuf;

use biascrowd_core::ds::{ds_e_step, ds_lower_bound, ds_run, ds_run_weighted, DsOptions, DsParams};
use biascrowd_core::glad::{glad_e_step, glad_expected_loglik, glad_gradient, glad_run, GladOptions, GladParams};
use biascrowd_core::harness::{
    load_named_dataset, mean_accuracy, run_injection, run_real_subsample, run_synthetic_sweep, run_worker_correlation,
    summarize, ExperimentConfig, ExperimentKind, Method, SummaryRow, DATA_DIR_ENV, STANDARD_DATASETS,
};
use biascrowd_core::majority::{ips_majority_vote, majority_vote};
use biascrowd_core::propensity::{fit_1bit_mc, nuclear_ball_project, nuclear_norm, MCConfig};
use biascrowd_core::simgen::max_injected_workers;
use biascrowd_core::{LabelDataset, LabelPosterior, Observation, ObservationMatrix, PropensityMatrix};
use nalgebra::DMatrix;
use rand::Rng;

use common::{random_instance, random_matrix, random_propensity, rng, worst_decrease, worst_increase};

fn report(criterion: u32, title: &str, failures: &[String], detail: &str) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "criterion {criterion} [{status}] {title}: {detail}").unwrap();
    for f in failures {
        writeln!(err, "    - {f}").unwrap();
    }
    assert!(failures.is_empty(), "criterion {criterion} failed: {failures:?}");
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_synthetic_correlation_sweep() {
    let cfg = ExperimentConfig::new(ExperimentKind::SyntheticSweep);
    assert_eq!(cfg.reps, 1000);
    assert_eq!(cfg.rho_grid.len(), 21);
    let records = run_synthetic_sweep(&cfg).unwrap();
    let summary = summarize(&records);
    let diffs: Vec<f64> = cfg
        .rho_grid
        .iter()
        .map(|&rho| {
            let ips = mean_accuracy(&summary, "synthetic", rho, Method::IpsMv, None).unwrap();
            let mv = mean_accuracy(&summary, "synthetic", rho, Method::Mv, None).unwrap();
            ips - mv
        })
        .collect();
    let violations = diffs.windows(2).filter(|w| w[1] > w[0]).count();
    let (first, last) = (diffs[0], diffs[diffs.len() - 1]);
    let mut failures = Vec::new();
    if first <= 0.01 {
        failures.push(format!("IPS-MV - MV at rho=-1 is {first:.4}, need > 0.01"));
    }
    if last >= 0.005 {
        failures.push(format!("IPS-MV - MV at rho=+1 is {last:.4}, need < 0.005"));
    }
    if violations > 2 {
        failures.push(format!("{violations} monotonicity violations, allowed 2"));
    }
    report(
        1,
        "synthetic correlation sweep",
        &failures,
        &format!("diff(rho=-1)={first:+.4}, diff(rho=+1)={last:+.4}, violations={violations}"),
    );
}

// ------------------------------------------------------------- criteria 2-5

fn data_root() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(p) => PathBuf::from(p),
        None => panic!("{DATA_DIR_ENV} is not set; the real-data checks need the benchmark datasets"),
    }
}

fn load(name: &str) -> LabelDataset {
    let k = STANDARD_DATASETS.iter().find(|(n, _)| *n == name).unwrap().1;
    load_named_dataset(&data_root(), name, k).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

#[test]
#[ignore = "needs the benchmark datasets under $BIASCROWD_DATA_DIR"]
fn criterion_2_worker_correlations() {
    let expected = [("rte", -0.384), ("temp", -0.377), ("wsd", 0.062), ("sp", 0.097)];
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (name, want) in expected {
        let r = run_worker_correlation(&load(name), name).unwrap();
        detail.push(format!("{name}={:+.3}", r.pearson));
        if (r.pearson - want).abs() > 0.01 {
            failures.push(format!("{name}: pearson {:.4}, expected {want} +/- 0.01", r.pearson));
        }
    }
    report(2, "worker propensity/accuracy correlations", &failures, &detail.join(", "));
}

/// Expected mean accuracies, rows in `Method`/gamma order, columns
/// labels-per-task 2, 5, 8.
const TABLE: [(&str, [[f64; 3]; 12]); 4] = [
    ("rte", [
        [0.769, 0.845, 0.896], [0.809, 0.845, 0.902], [0.809, 0.867, 0.908], [0.808, 0.871, 0.902],
        [0.757, 0.899, 0.925], [0.767, 0.900, 0.927], [0.781, 0.898, 0.926], [0.798, 0.889, 0.922],
        [0.788, 0.894, 0.921], [0.786, 0.895, 0.920], [0.809, 0.890, 0.911], [0.809, 0.884, 0.910],
    ]),
    ("temp", [
        [0.789, 0.894, 0.939], [0.825, 0.894, 0.939], [0.825, 0.905, 0.937], [0.824, 0.893, 0.933],
        [0.842, 0.929, 0.942], [0.835, 0.929, 0.941], [0.844, 0.926, 0.937], [0.848, 0.925, 0.939],
        [0.835, 0.925, 0.940], [0.836, 0.926, 0.939], [0.846, 0.923, 0.935], [0.843, 0.921, 0.936],
    ]),
    ("wsd", [
        [0.973, 0.992, 0.994], [0.979, 0.993, 0.994], [0.979, 0.992, 0.993], [0.977, 0.992, 0.994],
        [0.988, 0.989, 0.993], [0.984, 0.988, 0.991], [0.980, 0.986, 0.989], [0.988, 0.989, 0.993],
        [0.991, 0.993, 0.994], [0.991, 0.993, 0.994], [0.982, 0.993, 0.993], [0.988, 0.992, 0.994],
    ]),
    ("sp", [
        [0.882, 0.933, 0.938], [0.880, 0.933, 0.937], [0.880, 0.933, 0.938], [0.880, 0.924, 0.928],
        [0.900, 0.938, 0.944], [0.902, 0.937, 0.944], [0.902, 0.935, 0.944], [0.901, 0.928, 0.938],
        [0.904, 0.934, 0.944], [0.904, 0.934, 0.944], [0.900, 0.934, 0.941], [0.891, 0.924, 0.928],
    ]),
];

fn experiment(kind: ExperimentKind, name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.dataset_name = name.to_owned();
    cfg
}

fn mean(summary: &[SummaryRow], name: &str, x: f64, m: Method, gamma: Option<f64>) -> f64 {
    mean_accuracy(summary, name, x, m, gamma).unwrap_or_else(|| panic!("no result for {name} {x} {m} {gamma:?}"))
}

#[test]
#[ignore = "needs the benchmark datasets under $BIASCROWD_DATA_DIR"]
fn criterion_3_subsampled_accuracy_table() {
    let mut failures = Vec::new();
    let mut rte_summary = Vec::new();
    let mut checked = 0;
    for (name, rows) in TABLE {
        let cfg = experiment(ExperimentKind::RealSubsample, name);
        let cells = cfg.cells();
        assert_eq!(cells.len(), 12);
        let summary = summarize(&run_real_subsample(&load(name), &cfg).unwrap());
        for (row, &(method, gamma)) in rows.iter().zip(&cells) {
            for (col, &lpt) in [2.0, 5.0, 8.0].iter().enumerate() {
                let got = mean(&summary, name, lpt, method, gamma);
                checked += 1;
                if (got - row[col]).abs() > 0.03 {
                    failures.push(format!("{name}@{lpt} {}: {got:.3} vs {:.3}", method.label(gamma), row[col]));
                }
            }
        }
        if name == "rte" {
            rte_summary = summary;
        }
    }
    let mv = mean(&rte_summary, "rte", 2.0, Method::Mv, None);
    let ips_mv = mean(&rte_summary, "rte", 2.0, Method::IpsMv, Some(0.1));
    let ds = mean(&rte_summary, "rte", 2.0, Method::Ds, None);
    let ips_ds = mean(&rte_summary, "rte", 2.0, Method::IpsDs, Some(10.0));
    if ips_mv - mv < 0.02 {
        failures.push(format!("rte@2 IPS-MV(0.1) - MV = {:.3}, need >= 0.02", ips_mv - mv));
    }
    if ips_ds - ds < 0.02 {
        failures.push(format!("rte@2 IPS-D&S(10) - D&S = {:.3}, need >= 0.02", ips_ds - ds));
    }
    report(
        3,
        "subsampled accuracy table",
        &failures,
        &format!("{checked} cells; rte@2 MV={mv:.3} IPS-MV(0.1)={ips_mv:.3} D&S={ds:.3} IPS-D&S(10)={ips_ds:.3}"),
    );
}

/// Runs an injection sweep at zero and at the cap only.
fn injection_summary(kind: ExperimentKind, name: &str, ds: &LabelDataset) -> (Vec<SummaryRow>, f64) {
    let cap = max_injected_workers(ds);
    let mut cfg = experiment(kind, name);
    cfg.inject_counts = Some(vec![0, cap]);
    (summarize(&run_injection(ds, &cfg).unwrap()), cap as f64)
}

#[test]
#[ignore = "needs the benchmark datasets under $BIASCROWD_DATA_DIR"]
fn criterion_4_spam_robustness() {
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for name in ["rte", "temp"] {
        let ds = load(name);
        let (s, cap) = injection_summary(ExperimentKind::SpamRobustness, name, &ds);
        let mv = mean(&s, name, cap, Method::Mv, None);
        let ips = mean(&s, name, cap, Method::IpsMv, Some(1.0));
        detail.push(format!("{name}: MV={mv:.3} IPS-MV(1)={ips:.3}"));
        if ips - mv < 0.03 {
            failures.push(format!("{name}: IPS-MV(1) - MV = {:.3} at the cap, need >= 0.03", ips - mv));
        }
        for method in [Method::Ds, Method::IpsDs, Method::Glad, Method::IpsGlad] {
            let gammas: &[Option<f64>] = if method.is_ips() { &[Some(0.1), Some(1.0), Some(10.0)] } else { &[None] };
            for &g in gammas {
                let clean = mean(&s, name, 0.0, method, g);
                let spam = mean(&s, name, cap, method, g);
                if clean - spam > 0.05 {
                    failures.push(format!("{name}: {} drops {clean:.3} -> {spam:.3}", method.label(g)));
                }
            }
        }
    }
    report(4, "spam robustness", &failures, &detail.join("; "));
}

#[test]
#[ignore = "needs the benchmark datasets under $BIASCROWD_DATA_DIR"]
fn criterion_5_collusion_robustness() {
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (name, _) in STANDARD_DATASETS {
        let ds = load(name);
        let (s, cap) = injection_summary(ExperimentKind::CollusionRobustness, name, &ds);
        for (plain, ips) in [(Method::Mv, Method::IpsMv), (Method::Ds, Method::IpsDs), (Method::Glad, Method::IpsGlad)] {
            let a = mean(&s, name, cap, plain, None);
            let b = mean(&s, name, cap, ips, Some(1.0));
            detail.push(format!("{name} {}={a:.3}/{b:.3}", plain.label(None)));
            if b <= a {
                failures.push(format!("{name}: {} {b:.3} <= {} {a:.3}", ips.label(Some(1.0)), plain.label(None)));
            }
        }
    }
    report(5, "collusion robustness", &failures, &detail.join(", "));
}

// ---------------------------------------------------------------- criterion 6

fn em_monotonicity(failures: &mut Vec<String>) {
    for seed in 0..100 {
        let ds = random_instance(seed, 8, 15, 4, 0.5);
        let e = random_propensity(seed, ds.n_workers(), ds.n_tasks(), 0.05);
        for (tag, prop) in [("plain", None), ("ips", Some(&e))] {
            let d = ds_run(&ds, prop, &DsOptions::default()).unwrap();
            let g = glad_run(&ds, prop, &GladOptions::default()).unwrap();
            if worst_decrease(&d.trace) > 1e-10 {
                failures.push(format!("D&S {tag} seed {seed}: bound fell by {:e}", worst_decrease(&d.trace)));
            }
            if worst_decrease(&g.trace) > 1e-10 {
                failures.push(format!("GLAD {tag} seed {seed}: bound fell by {:e}", worst_decrease(&g.trace)));
            }
            for q in [&d.posterior, &g.posterior] {
                let bad = q.q().row_iter().any(|r| (r.sum() - 1.0).abs() > 1e-12 || r.iter().any(|&v| v < 0.0));
                if bad {
                    failures.push(format!("{tag} seed {seed}: posterior row not normalized"));
                }
            }
        }
    }
}

fn unit_propensity_reduction(failures: &mut Vec<String>) {
    for seed in 0..20 {
        let ds = random_instance(seed + 500, 6, 12, 3, 0.5);
        let ones = PropensityMatrix::constant(ds.n_workers(), ds.n_tasks(), 1.0).unwrap();
        if ips_majority_vote(&ds, &ones).unwrap() != majority_vote(&ds) {
            failures.push(format!("IPS-MV with e=1 differs from MV (seed {seed})"));
        }
        let (a, b) = (ds_run(&ds, None, &DsOptions::default()).unwrap(), ds_run(&ds, Some(&ones), &DsOptions::default()).unwrap());
        if a.trace != b.trace || a.posterior != b.posterior || a.params != b.params {
            failures.push(format!("IPS-D&S with e=1 differs from D&S (seed {seed})"));
        }
        let (a, b) = (glad_run(&ds, None, &GladOptions::default()).unwrap(), glad_run(&ds, Some(&ones), &GladOptions::default()).unwrap());
        if a.trace != b.trace || a.posterior != b.posterior || a.params != b.params {
            failures.push(format!("IPS-GLAD with e=1 differs from GLAD (seed {seed})"));
        }
    }
}

fn rescaling_invariance(failures: &mut Vec<String>) {
    for seed in 0..50 {
        let ds = random_instance(seed + 1000, 8, 20, 4, 0.6);
        let e = random_propensity(seed, ds.n_workers(), ds.n_tasks(), 0.1);
        let base = ips_majority_vote(&ds, &e).unwrap().predictions;
        for c in [0.5, 0.25, 0.125] {
            let scaled = PropensityMatrix::new(e.values() * c).unwrap();
            if ips_majority_vote(&ds, &scaled).unwrap().predictions != base {
                failures.push(format!("IPS-MV argmax changed under e*{c} (seed {seed})"));
            }
        }
    }
}

fn glad_gradient_check(failures: &mut Vec<String>) {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let ds = random_instance(seed + 2000, 5, 8, 3, 0.6);
        let mut r = rng(seed);
        let params = GladParams {
            alpha: (0..ds.n_workers()).map(|_| r.random_range(-2.0..2.0)).collect(),
            log_beta: (0..ds.n_tasks()).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        let w: Vec<f64> = (0..ds.n_observations()).map(|_| r.random_range(1.0..5.0)).collect();
        let q = glad_e_step(&ds, &GladParams::initial(ds.n_workers(), ds.n_tasks()), &w).unwrap();
        let grad = glad_gradient(&ds, &q, &params, &w);
        let f = |p: &GladParams| glad_expected_loglik(&ds, &q, p, &w);
        for i in 0..params.alpha.len() {
            let (mut up, mut dn) = (params.clone(), params.clone());
            up.alpha[i] += h;
            dn.alpha[i] -= h;
            worst = worst.max(((f(&up) - f(&dn)) / (2.0 * h) - grad.alpha[i]).abs());
        }
        for j in 0..params.log_beta.len() {
            let (mut up, mut dn) = (params.clone(), params.clone());
            up.log_beta[j] += h;
            dn.log_beta[j] -= h;
            worst = worst.max(((f(&up) - f(&dn)) / (2.0 * h) - grad.log_beta[j]).abs());
        }
    }
    if worst >= 1e-6 {
        failures.push(format!("GLAD gradient off by {worst:e} from finite differences"));
    }
}

fn projection_checks(failures: &mut Vec<String>) {
    for seed in 0..50 {
        let a = random_matrix(seed, 3 + (seed as usize % 5), 4 + (seed as usize % 7), 3.0);
        let radius = nuclear_norm(&a).unwrap() * (0.1 + 0.02 * seed as f64);
        let p = nuclear_ball_project(&a, radius).unwrap();
        let norm = nuclear_norm(&p).unwrap();
        if norm > radius * (1.0 + 1e-9) {
            failures.push(format!("projection infeasible: {norm} > {radius} (seed {seed})"));
        }
        let pp = nuclear_ball_project(&p, radius).unwrap();
        if (&pp - &p).abs().max() > 1e-9 {
            failures.push(format!("projection not idempotent (seed {seed})"));
        }
    }
}

fn mc_checks(failures: &mut Vec<String>) {
    for seed in 0..10 {
        let mut r = rng(seed + 3000);
        let (n, m) = (6 + seed as usize % 4, 15 + seed as usize % 6);
        let u: Vec<f64> = (0..n).map(|_| r.random_range(0.1..0.9)).collect();
        let v: Vec<f64> = (0..m).map(|_| r.random_range(0.1..0.9)).collect();
        let o = ObservationMatrix::from_bools(n, m, |i, j| (i * 31 + j * 17 + seed as usize) % 100 < (100.0 * u[i] * v[j] * 1.5) as usize);
        let mut objectives = Vec::new();
        for gamma in [0.1, 1.0, 10.0] {
            let fit = fit_1bit_mc(&o, &MCConfig::default().with_gamma(gamma)).unwrap();
            if worst_increase(&fit.objective_trace) > 0.0 {
                failures.push(format!("MC objective rose along accepted steps (seed {seed}, gamma {gamma})"));
            }
            objectives.push(fit.objective());
        }
        for w in objectives.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-6) {
                failures.push(format!("MC objective increased with gamma: {objectives:?} (seed {seed})"));
            }
        }
    }
}

/// For toy binary instances with at most 8 tasks, compares the D&S bound
/// against exhaustive enumeration of all 2^m labelings.
fn ds_brute_force(failures: &mut Vec<String>) {
    for seed in 0..30 {
        let ds = random_instance(seed + 4000, 4, 8, 2, 0.6);
        let e = random_propensity(seed, ds.n_workers(), ds.n_tasks(), 0.2);
        let w = e.ips_weights(&ds).unwrap();
        let opts = DsOptions::default();
        let fit = ds_run_weighted(&ds, &w, &opts).unwrap();
        let params: &DsParams = &fit.params;
        let posterior = ds_e_step(&ds, params, &w).unwrap();
        let bound = ds_lower_bound(&ds, &posterior, params, &w, 0.0);

        let m = ds.n_tasks();
        let mut log_terms = Vec::with_capacity(1 << m);
        let mut best_hard = f64::NEG_INFINITY;
        for z in 0..(1usize << m) {
            let labels: Vec<usize> = (0..m).map(|j| (z >> j) & 1).collect();
            let mut lp: f64 = labels.iter().map(|&c| params.prior[c].ln()).sum();
            for (o, &wi) in ds.observations().iter().zip(&w) {
                lp += wi * params.confusions[o.worker][(labels[o.task], o.label)].ln();
            }
            log_terms.push(lp);
            let mut q = DMatrix::zeros(m, 2);
            for (j, &c) in labels.iter().enumerate() {
                q[(j, c)] = 1.0;
            }
            let hard = LabelPosterior::new(q, params.prior.clone()).unwrap();
            best_hard = best_hard.max(ds_lower_bound(&ds, &hard, params, &w, 0.0));
        }
        let top = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let marginal = top + log_terms.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
        if (marginal - bound).abs() > 1e-8 * marginal.abs().max(1.0) {
            failures.push(format!("D&S bound {bound} != enumerated marginal {marginal} (seed {seed})"));
        }
        if best_hard > bound + 1e-9 {
            failures.push(format!("hard labeling bound {best_hard} exceeds posterior bound {bound} (seed {seed})"));
        }
    }
}

/// Inverse-propensity vote totals over random observation patterns match
/// the full-observation totals in expectation.
fn ips_unbiasedness(failures: &mut Vec<String>) {
    let (n, k, draws) = (12, 3, 10_000);
    let mut r = rng(5000);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let e = PropensityMatrix::new(DMatrix::from_fn(n, 1, |_, _| r.random_range(0.1..0.9))).unwrap();
    let full: Vec<f64> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count() as f64).collect();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for _ in 0..draws {
        let obs: Vec<Observation> = (0..n)
            .filter(|&i| r.random_bool(e.get(i, 0)))
            .map(|i| Observation { worker: i, task: 0, label: labels[i] })
            .collect();
        let ds = LabelDataset::new(n, 1, k, obs, None).unwrap();
        let scores = ips_majority_vote(&ds, &e).unwrap().scores.scores;
        for c in 0..k {
            sum[c] += scores[(0, c)];
            sum_sq[c] += scores[(0, c)] * scores[(0, c)];
        }
    }
    for c in 0..k {
        let mean = sum[c] / draws as f64;
        let var = (sum_sq[c] / draws as f64 - mean * mean) * draws as f64 / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        if (mean - full[c]).abs() > 3.0 * se {
            failures.push(format!("class {c}: IPS mean {mean:.4} vs full count {} (3 SE = {:.4})", full[c], 3.0 * se));
        }
    }
}

#[test]
fn criterion_6_property_suite() {
    let mut failures = Vec::new();
    let checks: [(&str, fn(&mut Vec<String>)); 8] = [
        ("EM monotonicity + posterior normalization", em_monotonicity),
        ("e=1 reduction", unit_propensity_reduction),
        ("IPS-MV rescaling invariance", rescaling_invariance),
        ("GLAD gradient", glad_gradient_check),
        ("nuclear-ball projection", projection_checks),
        ("1-bit MC monotonicity", mc_checks),
        ("D&S enumeration oracle", ds_brute_force),
        ("IPS unbiasedness", ips_unbiasedness),
    ];
    for (name, check) in checks {
        let before = failures.len();
        check(&mut failures);
        for f in &mut failures[before..] {
            *f = format!("{name}: {f}");
        }
    }
    report(6, "property suite", &failures, &format!("{} property groups", checks.len()));
}

