//! CSV ingestion and serialization of label datasets.
//!
//! Labels files carry a `worker,task,label` header and gold files a
//! `task,label` header. Worker and task tokens are mapped to dense indices in
//! first-appearance order (gold file first). Class tokens are used directly
//! when every token is a non-negative integer; otherwise they are mapped to
//! `0..K` in first-appearance order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::data::{LabelDataset, LabelPosterior, Names, Observation, PropensityMatrix};
use crate::error::{Error, Result};

struct Row {
    line: u64,
    fields: Vec<String>,
}

fn read_rows(path: &Path, expected: &[&str]) -> Result<Vec<Row>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let found: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if found != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != expected.len() || record.iter().any(str::is_empty) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} non-empty fields", expected.len()),
            });
        }
        rows.push(Row {
            line,
            fields: record.iter().map(str::to_owned).collect(),
        });
    }
    Ok(rows)
}

#[derive(Default)]
struct Interner {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(token.to_owned(), i);
        self.names.push(token.to_owned());
        i
    }
}

enum ClassCoding {
    Numeric,
    Named(Interner),
}

impl ClassCoding {
    fn infer<'a>(tokens: impl Iterator<Item = &'a str>, k: usize) -> Result<Self> {
        let tokens: Vec<&str> = tokens.collect();
        if tokens.iter().all(|t| t.parse::<usize>().is_ok()) {
            return Ok(ClassCoding::Numeric);
        }
        let mut interner = Interner::default();
        for t in tokens {
            interner.intern(t);
        }
        if interner.names.len() > k {
            return Err(Error::Domain(format!(
                "found {} distinct class tokens but K={k}",
                interner.names.len()
            )));
        }
        Ok(ClassCoding::Named(interner))
    }

    fn code(&self, token: &str, k: usize, path: &Path, line: u64) -> Result<usize> {
        let label = match self {
            ClassCoding::Numeric => token.parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("bad class `{token}`"),
            })?,
            ClassCoding::Named(interner) => interner.index[token],
        };
        if label >= k {
            return Err(Error::Domain(format!(
                "{}:{line}: label {label} is not below K={k}",
                path.display()
            )));
        }
        Ok(label)
    }

    fn class_names(&self, k: usize) -> Vec<String> {
        match self {
            ClassCoding::Numeric => (0..k).map(|c| c.to_string()).collect(),
            ClassCoding::Named(interner) => (0..k)
                .map(|c| {
                    interner
                        .names
                        .get(c)
                        .cloned()
                        .unwrap_or_else(|| format!("class{c}"))
                })
                .collect(),
        }
    }
}

/// Loads a labels CSV (and optional gold CSV) into a validated dataset.
pub fn load_dataset(labels_path: &Path, gold_path: Option<&Path>, k: usize) -> Result<LabelDataset> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {k}")));
    }
    let gold_rows = match gold_path {
        Some(p) => read_rows(p, &["task", "label"])?,
        None => Vec::new(),
    };
    let label_rows = read_rows(labels_path, &["worker", "task", "label"])?;

    let coding = ClassCoding::infer(
        gold_rows
            .iter()
            .map(|r| r.fields[1].as_str())
            .chain(label_rows.iter().map(|r| r.fields[2].as_str())),
        k,
    )?;

    let mut tasks = Interner::default();
    let mut workers = Interner::default();
    let mut gold_pairs = Vec::with_capacity(gold_rows.len());
    if let Some(gp) = gold_path {
        for row in &gold_rows {
            let task = tasks.intern(&row.fields[0]);
            let label = coding.code(&row.fields[1], k, gp, row.line)?;
            gold_pairs.push((task, label, row.line));
        }
    }
    let mut observations = Vec::with_capacity(label_rows.len());
    for row in &label_rows {
        let worker = workers.intern(&row.fields[0]);
        let task = tasks.intern(&row.fields[1]);
        let label = coding.code(&row.fields[2], k, labels_path, row.line)?;
        observations.push(Observation {
            worker,
            task,
            label,
        });
    }

    let mut gold = vec![None; tasks.names.len()];
    for (task, label, line) in gold_pairs {
        if gold[task].replace(label).is_some() {
            return Err(Error::Parse {
                path: gold_path.map(Path::to_path_buf).unwrap_or_default(),
                line,
                message: format!("task `{}` has more than one gold label", tasks.names[task]),
            });
        }
    }

    let names = Names {
        workers: workers.names,
        tasks: tasks.names,
        classes: coding.class_names(k),
    };
    LabelDataset::with_names(
        names.workers.len(),
        names.tasks.len(),
        k,
        observations,
        Some(gold),
        names,
    )
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `worker,task,label` rows using the dataset's name tables.
pub fn write_labels_csv(ds: &LabelDataset, path: &Path) -> Result<()> {
    let names = ds.names();
    let mut w = create(path)?;
    w.write_record(["worker", "task", "label"])?;
    for o in ds.observations() {
        w.write_record([
            &names.workers[o.worker],
            &names.tasks[o.task],
            &names.classes[o.label],
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `task,label` rows for every task with a gold label.
pub fn write_gold_csv(ds: &LabelDataset, path: &Path) -> Result<()> {
    let names = ds.names();
    let mut w = create(path)?;
    w.write_record(["task", "label"])?;
    for (task, label) in ds.gold().iter().enumerate() {
        if let Some(label) = label {
            w.write_record([&names.tasks[task], &names.classes[*label]])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the class-token to dense-index mapping as `index,class`.
pub fn write_class_map(ds: &LabelDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["index", "class"])?;
    for (i, name) in ds.names().classes.iter().enumerate() {
        w.write_record([i.to_string().as_str(), name])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `task,label,n_labels` predictions, followed by one `p_<class>`
/// column per class when a posterior is given. Tasks with `n_labels == 0`
/// carry the default prediction (class 0) rather than an inferred one.
pub fn write_predictions(
    ds: &LabelDataset,
    predictions: &[usize],
    posterior: Option<&LabelPosterior>,
    path: &Path,
) -> Result<()> {
    if predictions.len() != ds.n_tasks() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} tasks",
            predictions.len(),
            ds.n_tasks()
        )));
    }
    let names = ds.names();
    let mut w = create(path)?;
    let mut header = vec!["task".to_owned(), "label".to_owned(), "n_labels".to_owned()];
    if posterior.is_some() {
        header.extend(names.classes.iter().map(|c| format!("p_{c}")));
    }
    w.write_record(&header)?;
    for (j, &label) in predictions.iter().enumerate() {
        let mut row = vec![
            names.tasks[j].clone(),
            names.classes[label].clone(),
            ds.task_observations(j).len().to_string(),
        ];
        if let Some(q) = posterior {
            row.extend(q.q().row(j).iter().map(|p| p.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes an EM lower-bound trace as `iteration,bound`.
pub fn write_trace(trace: &[f64], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["iteration", "bound"])?;
    for (i, b) in trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), b.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every cell of a propensity matrix as `worker,task,propensity`.
pub fn write_propensity(ds: &LabelDataset, e: &PropensityMatrix, path: &Path) -> Result<()> {
    if e.n_workers() != ds.n_workers() || e.n_tasks() != ds.n_tasks() {
        return Err(Error::LengthMismatch("propensity matrix does not match the dataset".into()));
    }
    let names = ds.names();
    let mut w = create(path)?;
    w.write_record(["worker", "task", "propensity"])?;
    for i in 0..ds.n_workers() {
        for j in 0..ds.n_tasks() {
            w.write_record([names.workers[i].as_str(), names.tasks[j].as_str(), &e.get(i, j).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Input layouts accepted by [`convert_tsv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsvLayout {
    /// `worker<TAB>task<TAB>label`, optional header row.
    Triples,
    /// Tab-separated files with `!amt_worker_ids`, `orig_id`, `response`
    /// and `gold` header columns; also produces a gold file.
    Standardized,
}

/// Paths written by [`convert_tsv`].
#[derive(Debug, Clone)]
pub struct Converted {
    pub labels: PathBuf,
    pub gold: Option<PathBuf>,
    pub rows: usize,
}

/// Converts tab-separated annotation files into the labels/gold CSV format.
pub fn convert_tsv(input: &Path, layout: TsvLayout, out_dir: &Path) -> Result<Converted> {
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    let mut lines = BufReader::new(file).lines().enumerate().peekable();
    let labels_path = out_dir.join("labels.csv");
    let mut labels = create(&labels_path)?;
    labels.write_record(["worker", "task", "label"])?;
    let mut rows = 0;

    let parse_err = |line: usize, message: String| Error::Parse {
        path: input.to_path_buf(),
        line: line as u64 + 1,
        message,
    };

    match layout {
        TsvLayout::Triples => {
            for (n, line) in lines {
                let line = line.map_err(|e| Error::io(input, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
                if n == 0 && fields.iter().map(|f| f.to_ascii_lowercase()).eq(["worker", "task", "label"]) {
                    continue;
                }
                if fields.len() != 3 {
                    return Err(parse_err(n, format!("expected 3 tab-separated fields, got {}", fields.len())));
                }
                labels.write_record(&fields)?;
                rows += 1;
            }
            labels.flush().map_err(|e| Error::io(&labels_path, e))?;
            Ok(Converted {
                labels: labels_path,
                gold: None,
                rows,
            })
        }
        TsvLayout::Standardized => {
            let header = match lines.next() {
                Some((_, h)) => h.map_err(|e| Error::io(input, e))?,
                None => return Err(parse_err(0, "empty file".into())),
            };
            let cols: Vec<String> = header
                .split('\t')
                .map(|h| h.trim().trim_start_matches('!').to_ascii_lowercase())
                .collect();
            let find = |name: &str| {
                cols.iter()
                    .position(|c| c == name)
                    .ok_or_else(|| parse_err(0, format!("missing `{name}` column")))
            };
            let (wi, ti, ri, gi) = (find("amt_worker_ids")?, find("orig_id")?, find("response")?, find("gold")?);
            let mut gold: Vec<(String, String)> = Vec::new();
            let mut gold_seen: HashMap<String, String> = HashMap::new();
            for (n, line) in lines {
                let line = line.map_err(|e| Error::io(input, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
                let get = |i: usize| {
                    fields
                        .get(i)
                        .copied()
                        .ok_or_else(|| parse_err(n, format!("missing column {i}")))
                };
                let (worker, task, response, g) = (get(wi)?, get(ti)?, get(ri)?, get(gi)?);
                labels.write_record([worker, task, response])?;
                rows += 1;
                match gold_seen.get(task) {
                    Some(prev) if prev != g => {
                        return Err(parse_err(n, format!("conflicting gold for task `{task}`")));
                    }
                    Some(_) => {}
                    None => {
                        gold_seen.insert(task.to_owned(), g.to_owned());
                        gold.push((task.to_owned(), g.to_owned()));
                    }
                }
            }
            labels.flush().map_err(|e| Error::io(&labels_path, e))?;
            let gold_path = out_dir.join("gold.csv");
            let mut gw = create(&gold_path)?;
            gw.write_record(["task", "label"])?;
            for (t, g) in &gold {
                gw.write_record([t, g])?;
            }
            gw.flush().map_err(|e| Error::io(&gold_path, e))?;
            Ok(Converted {
                labels: labels_path,
                gold: Some(gold_path),
                rows,
            })
        }
    }
}
