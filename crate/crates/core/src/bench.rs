//! Experiment harness: repeated simulations, benchmark splits, error tables
//! and efficiency scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{knn_fit, lda_fit, qda_fit};
use crate::classifier::{self, FeatureChoice, ScatterChoice, TrainConfig};
use crate::dataset::{Dataset, DatasetError};
use crate::estimators::ScatterMode;
use crate::seed::{derive, rng_from};
use crate::simgen::{bayes_oracle, gen_example, ExampleSpec, SimError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repetition count must be at least 1")]
    NoRepetitions,
    #[error("no classifiers requested")]
    NoClassifiers,
    #[error("unknown classifier `{0}`")]
    UnknownMethod(String),
    #[error("training fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("dataset {0} has zero accuracy for every classifier")]
    AllZeroAccuracy(String),
    #[error("accuracy {value} for dataset {dataset} is outside [0, 1]")]
    BadAccuracy { dataset: String, value: f64 },
    #[error("results table: {0}")]
    Table(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, BenchError>;

/// A classifier that the harness knows how to train.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// MD or LMD classifier.
    Gam { name: String, config: TrainConfig },
    Lda,
    Qda,
    Knn,
    /// Bayes rule of a simulated example; unavailable for real data.
    Bayes,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Gam { name, .. } => name.clone(),
            Method::Lda => "lda".into(),
            Method::Qda => "qda".into(),
            Method::Knn => "knn".into(),
            Method::Bayes => "bayes".into(),
        }
    }

    /// Parses `md`, `lmd`, `md-mcd`, `lmd-mcd`, `lda`, `qda`, `knn` or `bayes`.
    /// `base` supplies the bootstrap and smoothing settings for the GAM methods.
    pub fn parse(s: &str, base: &TrainConfig) -> Result<Self> {
        let gam = |feature, scatter| Method::Gam {
            name: s.to_string(),
            config: TrainConfig {
                feature,
                scatter,
                ..base.clone()
            },
        };
        Ok(match s {
            "md" => gam(FeatureChoice::Md, ScatterChoice::AutoHdlss),
            "lmd" => gam(FeatureChoice::Lmd, ScatterChoice::AutoHdlss),
            "md-mcd" => gam(FeatureChoice::Md, ScatterChoice::Fixed(ScatterMode::Mcd)),
            "lmd-mcd" => gam(FeatureChoice::Lmd, ScatterChoice::Fixed(ScatterMode::Mcd)),
            "lda" => Method::Lda,
            "qda" => Method::Qda,
            "knn" => Method::Knn,
            "bayes" => Method::Bayes,
            other => return Err(BenchError::UnknownMethod(other.to_string())),
        })
    }

    pub fn parse_list(list: &str, base: &TrainConfig) -> Result<Vec<Self>> {
        let methods = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Self::parse(s, base))
            .collect::<Result<Vec<_>>>()?;
        if methods.is_empty() {
            return Err(BenchError::NoClassifiers);
        }
        Ok(methods)
    }
}

fn error_rate(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64
}

/// Discriminant scatter for LDA/QDA: diagonal when the class scatters are
/// singular by construction.
fn discriminant_mode(train: &Dataset) -> ScatterMode {
    let min = train.class_counts().into_iter().min().unwrap_or(0);
    if train.d() >= min {
        ScatterMode::Diagonal
    } else {
        ScatterMode::Moment
    }
}

/// Trains `method` on `train` and returns its error on `test`.
///
/// `spec` is needed only by [`Method::Bayes`].
pub fn evaluate(
    method: &Method,
    train: &Dataset,
    test: &Dataset,
    spec: Option<&ExampleSpec>,
    seed: u64,
) -> std::result::Result<f64, String> {
    let pred = match method {
        Method::Gam { config, .. } => {
            let mut cfg = config.clone();
            cfg.bootstrap.seed = seed;
            let clf = classifier::fit(train, &cfg).map_err(|e| e.to_string())?;
            clf.predict(test.rows()).map_err(|e| e.to_string())?.classes
        }
        Method::Lda => lda_fit(train, discriminant_mode(train), None)
            .and_then(|m| m.predict(test.rows()))
            .map_err(|e| e.to_string())?,
        Method::Qda => qda_fit(train, discriminant_mode(train), None)
            .and_then(|m| m.predict(test.rows()))
            .map_err(|e| e.to_string())?,
        Method::Knn => knn_fit(train, seed)
            .and_then(|m| m.predict(test.rows()))
            .map_err(|e| e.to_string())?,
        Method::Bayes => {
            let spec = spec.ok_or("the Bayes rule needs a simulated example")?;
            let rule = bayes_oracle(spec.id, spec.d).map_err(|e| e.to_string())?;
            rule.classify_rows(test.rows())
        }
    };
    Ok(error_rate(&pred, test.labels()))
}

/// Aggregated errors of one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub name: String,
    /// Errors of the repetitions that succeeded, in repetition order.
    pub per_rep_errors: Vec<f64>,
    /// `(repetition, message)` of failed fits.
    pub failures: Vec<(usize, String)>,
    /// `None` when every repetition failed.
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    /// Only one usable repetition: the standard error is reported as 0.
    pub se_undefined: bool,
}

impl MethodResult {
    /// Aggregates per-repetition outcomes with `SE = sd / √R`, `sd` using
    /// the `R − 1` divisor.
    pub fn from_outcomes(name: String, outcomes: Vec<std::result::Result<f64, String>>) -> Self {
        let mut per_rep_errors = Vec::new();
        let mut failures = Vec::new();
        for (r, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(e) => per_rep_errors.push(e),
                Err(m) => failures.push((r, m)),
            }
        }
        let r = per_rep_errors.len();
        let (mean_error, std_error) = match r {
            0 => (None, None),
            1 => (Some(per_rep_errors[0]), Some(0.0)),
            _ => {
                let mean = per_rep_errors.iter().sum::<f64>() / r as f64;
                let var = per_rep_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
                (Some(mean), Some((var / r as f64).sqrt()))
            }
        };
        Self {
            name,
            per_rep_errors,
            failures,
            mean_error,
            std_error,
            se_undefined: r == 1,
        }
    }

    fn fixed(name: String, outcome: std::result::Result<f64, String>, n_test: usize) -> Self {
        match outcome {
            Ok(e) => Self {
                name,
                per_rep_errors: vec![e],
                failures: Vec::new(),
                mean_error: Some(e),
                std_error: Some(fixed_split_se(e, n_test)),
                se_undefined: false,
            },
            Err(m) => Self::from_outcomes(name, vec![Err(m)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Example id or dataset name.
    pub label: String,
    pub d: usize,
    pub repetitions: usize,
    pub methods: Vec<MethodResult>,
}

/// `R` simulated train/test replications of `spec`. Every classifier sees
/// the same data in a repetition; failures become missing cells.
pub fn run_experiment(
    spec: &ExampleSpec,
    methods: &[Method],
    reps: usize,
    master_seed: u64,
) -> Result<ExperimentResult> {
    if reps == 0 {
        return Err(BenchError::NoRepetitions);
    }
    if methods.is_empty() {
        return Err(BenchError::NoClassifiers);
    }
    let per_rep: Vec<Vec<std::result::Result<f64, String>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive(master_seed, "experiment", &[r as u64]);
            match gen_example(spec, data_seed) {
                Ok((train, test)) => methods
                    .iter()
                    .enumerate()
                    .map(|(m, method)| {
                        let seed = derive(master_seed, "method", &[r as u64, m as u64]);
                        evaluate(method, &train, &test, Some(spec), seed)
                    })
                    .collect(),
                Err(e) => vec![Err(e.to_string()); methods.len()],
            }
        })
        .collect();
    Ok(collect_results(spec.id.to_string(), spec.d, reps, methods, per_rep))
}

fn collect_results(
    label: String,
    d: usize,
    reps: usize,
    methods: &[Method],
    per_rep: Vec<Vec<std::result::Result<f64, String>>>,
) -> ExperimentResult {
    let methods = methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let outcomes = per_rep.iter().map(|row| row[m].clone()).collect();
            MethodResult::from_outcomes(method.name(), outcomes)
        })
        .collect();
    ExperimentResult {
        label,
        d,
        repetitions: reps,
        methods,
    }
}

/// Standard error of an error rate `eps` measured on `n_test` rows.
pub fn fixed_split_se(eps: f64, n_test: usize) -> f64 {
    (eps * (1.0 - eps) / n_test as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    /// Given train and test sets.
    Fixed(Dataset),
    /// `reps` stratified random splits with `fraction` of each class in training.
    Repeated { reps: usize, fraction: f64 },
}

/// Stratified split: `(train indices, test indices)`.
pub fn stratified_split(data: &Dataset, fraction: f64, seed: u64, rep: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng_from(seed, "split", &[rep as u64]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for j in 1..=data.n_classes() {
        let mut idx = data.class_indices(j);
        idx.shuffle(&mut rng);
        let n = idx.len();
        // at least one training row, and one test row when the class allows it
        let k = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1)).min(n);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn check_classes(data: &Dataset) -> Result<()> {
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(DatasetError::TooFewClasses(present).into());
    }
    Ok(())
}

/// Benchmark on a labeled data set.
pub fn run_benchmark(
    name: &str,
    data: &Dataset,
    split: &Split,
    methods: &[Method],
    seed: u64,
) -> Result<ExperimentResult> {
    if methods.is_empty() {
        return Err(BenchError::NoClassifiers);
    }
    check_classes(data)?;
    match split {
        Split::Fixed(test) => {
            let results = methods
                .iter()
                .enumerate()
                .map(|(m, method)| {
                    let s = derive(seed, "method", &[0, m as u64]);
                    MethodResult::fixed(method.name(), evaluate(method, data, test, None, s), test.n())
                })
                .collect();
            Ok(ExperimentResult {
                label: name.to_string(),
                d: data.d(),
                repetitions: 1,
                methods: results,
            })
        }
        &Split::Repeated { reps, fraction } => {
            if reps == 0 {
                return Err(BenchError::NoRepetitions);
            }
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(BenchError::BadFraction(fraction));
            }
            let per_rep = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let (tr, te) = stratified_split(data, fraction, seed, r);
                    let train = data.subset(&tr);
                    let test = data.subset(&te);
                    methods
                        .iter()
                        .enumerate()
                        .map(|(m, method)| {
                            let s = derive(seed, "method", &[r as u64, m as u64]);
                            evaluate(method, &train, &test, None, s)
                        })
                        .collect()
                })
                .collect();
            Ok(collect_results(name.to_string(), data.d(), reps, methods, per_rep))
        }
    }
}

/// `e_t = C_t / max_t C_t` for each dataset (row) of accuracies.
pub fn efficiency_scores(datasets: &[String], accuracy: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    datasets
        .iter()
        .zip(accuracy)
        .map(|(name, row)| {
            if let Some(&v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(BenchError::BadAccuracy {
                    dataset: name.clone(),
                    value: v,
                });
            }
            let best = row.iter().cloned().fold(0.0, f64::max);
            if best <= 0.0 {
                return Err(BenchError::AllZeroAccuracy(name.clone()));
            }
            Ok(row.iter().map(|c| c / best).collect())
        })
        .collect()
}

const TABLE_HEADER: [&str; 5] = ["dataset", "d", "classifier", "mean_error_pct", "se_pct"];

fn pct(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{:.2}", 100.0 * v))
}

/// Long-form error table.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in results {
        for m in &r.methods {
            w.write_record([
                r.label.clone(),
                r.d.to_string(),
                m.name.clone(),
                pct(m.mean_error),
                pct(m.std_error),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table: one row per dataset, `mean (se)` per classifier.
pub fn results_markdown(results: &[ExperimentResult]) -> String {
    let mut names: Vec<String> = Vec::new();
    for r in results {
        for m in &r.methods {
            if !names.contains(&m.name) {
                names.push(m.name.clone());
            }
        }
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["dataset".to_string(), "d".to_string()];
    header.extend(names.iter().cloned());
    rows.push(header);
    for r in results {
        let mut row = vec![r.label.clone(), r.d.to_string()];
        for n in &names {
            let cell = r
                .methods
                .iter()
                .find(|m| &m.name == n)
                .filter(|m| m.mean_error.is_some())
                .map_or_else(|| "-".into(), |m| format!("{} ({})", pct(m.mean_error), pct(m.std_error)));
            row.push(cell);
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "| {} |", rule.join(" | "));
        }
    }
    out
}

/// One row of a results table as read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    pub d: usize,
    pub classifier: String,
    pub mean_error_pct: Option<f64>,
    pub se_pct: Option<f64>,
}

/// Reads a table written by [`write_results_csv`].
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<TableRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TABLE_HEADER {
        return Err(BenchError::Table(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| BenchError::Table(format!("line {line}: `{s}` is not a number")))
            }
        };
        out.push(TableRow {
            dataset: rec[0].to_string(),
            d: rec[1]
                .parse()
                .map_err(|_| BenchError::Table(format!("line {line}: bad dimension")))?,
            classifier: rec[2].to_string(),
            mean_error_pct: opt(&rec[3])?,
            se_pct: opt(&rec[4])?,
        });
    }
    Ok(out)
}

/// Long-form efficiency table `(dataset, classifier, accuracy, efficiency)`
/// from a results table. Missing cells are skipped.
pub fn efficiency_from_table(rows: &[TableRow]) -> Result<Vec<(String, String, f64, f64)>> {
    let mut by_set: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let Some(e) = r.mean_error_pct else { continue };
        if !by_set.contains_key(&r.dataset) {
            order.push(r.dataset.clone());
        }
        by_set
            .entry(r.dataset.clone())
            .or_default()
            .push((r.classifier.clone(), 1.0 - e / 100.0));
    }
    let acc: Vec<Vec<f64>> = order
        .iter()
        .map(|k| by_set[k].iter().map(|(_, a)| *a).collect())
        .collect();
    let scores = efficiency_scores(&order, &acc)?;
    let mut out = Vec::new();
    for (k, s) in order.iter().zip(scores) {
        for ((name, a), e) in by_set[k].iter().zip(s) {
            out.push((k.clone(), name.clone(), *a, e));
        }
    }
    Ok(out)
}

pub fn write_efficiency_csv<W: Write>(rows: &[(String, String, f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "classifier", "accuracy", "efficiency"])?;
    for (d, c, a, e) in rows {
        w.write_record([d.clone(), c.clone(), format!("{a:.6}"), format!("{e:.6}")])?;
    }
    w.flush()?;
    Ok(())
}
