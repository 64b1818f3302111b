//! Worker-level statistics and evaluation metrics.

use crate::data::LabelDataset;
use crate::error::{Error, Result};

/// Per-worker answer rate and accuracy against gold.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerStats {
    /// Fraction of all tasks the worker labeled.
    pub propensity: Vec<f64>,
    /// Fraction of the worker's labels on gold tasks that match gold;
    /// `None` when the worker labeled no gold task.
    pub accuracy: Vec<Option<f64>>,
}

impl WorkerStats {
    /// (propensity, accuracy) pairs of workers whose accuracy is defined.
    pub fn defined_pairs(&self) -> (Vec<f64>, Vec<f64>) {
        self.propensity
            .iter()
            .zip(&self.accuracy)
            .filter_map(|(&p, a)| a.map(|a| (p, a)))
            .unzip()
    }

    pub fn pearson(&self) -> Result<f64> {
        let (p, a) = self.defined_pairs();
        pearson_correlation(&p, &a)
    }

    pub fn spearman(&self) -> Result<f64> {
        let (p, a) = self.defined_pairs();
        spearman_correlation(&p, &a)
    }
}

pub fn worker_stats(ds: &LabelDataset) -> Result<WorkerStats> {
    if !ds.has_gold() {
        return Err(Error::MissingGold);
    }
    let m = ds.n_tasks() as f64;
    let gold = ds.gold();
    let mut propensity = Vec::with_capacity(ds.n_workers());
    let mut accuracy = Vec::with_capacity(ds.n_workers());
    for w in 0..ds.n_workers() {
        let idx = ds.worker_observations(w);
        propensity.push(idx.len() as f64 / m);
        let (mut graded, mut correct) = (0usize, 0usize);
        for &i in idx {
            let o = ds.observations()[i];
            if let Some(g) = gold[o.task] {
                graded += 1;
                correct += usize::from(g == o.label);
            }
        }
        accuracy.push((graded > 0).then(|| correct as f64 / graded as f64));
    }
    Ok(WorkerStats {
        propensity,
        accuracy,
    })
}

pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::LengthMismatch(format!(
            "need at least 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average-tie ranks.
pub fn spearman_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    pearson_correlation(&ranks(x), &ranks(y))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0 + 1.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Fraction of gold-labeled tasks whose prediction equals gold.
pub fn accuracy(predictions: &[usize], gold: &[Option<usize>]) -> Result<f64> {
    let mut graded = 0usize;
    let mut correct = 0usize;
    for (task, g) in gold.iter().enumerate() {
        if let Some(g) = g {
            let p = predictions.get(task).ok_or(Error::Coverage { task })?;
            graded += 1;
            correct += usize::from(p == g);
        }
    }
    if graded == 0 {
        return Err(Error::MissingGold);
    }
    Ok(correct as f64 / graded as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use proptest::prelude::*;

    #[test]
    fn stats_for_half_coverage_worker() {
        let obs = vec![
            Observation { worker: 0, task: 0, label: 1 },
            Observation { worker: 0, task: 2, label: 0 },
        ];
        let ds = LabelDataset::new(2, 4, 2, obs, Some(vec![Some(1), Some(0), Some(0), Some(1)])).unwrap();
        let s = worker_stats(&ds).unwrap();
        assert_eq!(s.propensity, vec![0.5, 0.0]);
        assert_eq!(s.accuracy, vec![Some(1.0), None]);
        assert_eq!(s.defined_pairs().0.len(), 1);
    }

    #[test]
    fn missing_gold_is_an_error() {
        let ds = LabelDataset::new(1, 1, 2, vec![], None).unwrap();
        assert!(matches!(worker_stats(&ds), Err(Error::MissingGold)));
    }

    #[test]
    fn pearson_basic_cases() {
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson_correlation(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance)));
        assert!(pearson_correlation(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        let r = spearman_correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_cases() {
        let gold = vec![Some(0), Some(1), Some(1), Some(0)];
        assert_eq!(accuracy(&[0, 1, 1, 0], &gold).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 0, 0], &gold).unwrap(), 0.75);
        assert!(matches!(accuracy(&[0, 1], &gold), Err(Error::Coverage { task: 2 })));
        assert_eq!(accuracy(&[1, 1], &[None, Some(1)]).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            scale in 0.01f64..50.0,
            shift in -10.0f64..10.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Ok(r) = pearson_correlation(&x, &y) {
                let r2 = pearson_correlation(&y, &x).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                let xs: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
                let r3 = pearson_correlation(&xs, &y).unwrap();
                prop_assert!((r - r3).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn propensities_recover_label_count(
            cells in prop::collection::vec(prop::bool::ANY, 12),
        ) {
            let obs: Vec<Observation> = cells.iter().enumerate().filter(|(_, &c)| c)
                .map(|(i, _)| Observation { worker: i / 4, task: i % 4, label: i % 2 }).collect();
            let total = obs.len();
            let ds = LabelDataset::new(3, 4, 2, obs, Some(vec![Some(0); 4])).unwrap();
            let s = worker_stats(&ds).unwrap();
            let recovered: f64 = s.propensity.iter().sum::<f64>() * 4.0;
            prop_assert!((recovered - total as f64).abs() < 1e-12);
        }
    }
}
