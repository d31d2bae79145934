//! `mdgam`: simulate data, fit and apply classifiers, run benchmarks.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use mdgam_core::bench::{
    efficiency_from_table, read_results_csv, results_markdown, run_benchmark, run_experiment,
    write_efficiency_csv, write_results_csv, Method, Split,
};
use mdgam_core::classifier::{
    self, hdlss_limit_check, FeatureChoice, HRule, HdlssCheck, LimitComparison, ScatterChoice,
};
use mdgam_core::dataset::{load_labeled_csv, read_features_csv, CsvOptions};
use mdgam_core::simgen::gen_example;
use mdgam_core::{ExampleId, ExampleSpec, FittedClassifier, TrainConfig};

#[derive(Parser)]
#[command(name = "mdgam", version, about = "Distance-based additive-model classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw training and test sets from a simulated example.
    Simulate(SimulateArgs),
    /// Train a classifier on a labeled CSV file and save it.
    Fit(FitArgs),
    /// Classify the rows of a CSV file with a saved classifier.
    Predict(PredictArgs),
    /// Compare classifiers on a simulated example or a labeled CSV file.
    Bench(BenchArgs),
    /// Compare high-dimensional feature averages with their limits.
    HdlssCheck(HdlssArgs),
    /// Turn a results table into per-dataset efficiency scores.
    Efficiency(EfficiencyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// 1 to 24, A or B.
    #[arg(long)]
    example: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Training set; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainOpts {
    /// md or lmd.
    #[arg(long, default_value = "md")]
    method: String,
    /// moment, diagonal, identity, mcd or auto.
    #[arg(long, default_value = "auto")]
    scatter: String,
    /// File of `key = value` overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Column ignored in `data` if present.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Predictions; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
    example: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    /// Fixed test set for `--csv`.
    #[arg(long, requires = "csv")]
    test_csv: Option<PathBuf>,
    #[arg(long, default_value = "md,lmd,lda,qda,knn")]
    classifiers: String,
    #[arg(long, default_value_t = 25)]
    reps: usize,
    /// Training share of each class in repeated splits.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 100)]
    n_train: usize,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results CSV; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print an aligned text table to standard output.
    #[arg(long)]
    markdown: bool,
}

#[derive(Args)]
struct HdlssArgs {
    #[arg(long, default_value_t = 2000)]
    d: usize,
    /// Training rows per class.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Per-coordinate class means.
    #[arg(long, value_delimiter = ',', default_value = "0,0.7071067811865476")]
    means: Vec<f64>,
    /// Per-coordinate class variances.
    #[arg(long, value_delimiter = ',', default_value = "1,1.5")]
    sigma2: Vec<f64>,
    /// Fix h² = c0·d instead of the median heuristic.
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EfficiencyArgs {
    /// Results table written by `bench`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad input detected before any computation (exit 2) versus a failure while
/// running (exit 1).
enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Invalid<T> {
    fn invalid(self) -> std::result::Result<T, Failure>;
}

impl<T> Invalid<T> for Result<T> {
    fn invalid(self) -> std::result::Result<T, Failure> {
        self.map_err(Failure::Invalid)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn parse_example(s: &str, d: Option<usize>) -> Result<(ExampleId, usize)> {
    let id: ExampleId = s.parse().map_err(|e| anyhow!("--example: {e}"))?;
    Ok((id, d.unwrap_or(id.default_d())))
}

fn train_config(opts: &TrainOpts) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        feature: FeatureChoice::parse(&opts.method)
            .ok_or_else(|| anyhow!("--method must be md or lmd, got `{}`", opts.method))?,
        scatter: ScatterChoice::parse(&opts.scatter)
            .ok_or_else(|| anyhow!("--scatter: unknown choice `{}`", opts.scatter))?,
        ..TrainConfig::default()
    };
    cfg.bootstrap.seed = opts.seed;
    if let Some(p) = &opts.config {
        config::load_into(&mut cfg, p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(a: SimulateArgs) -> Outcome {
    let (id, d) = parse_example(&a.example, a.d).invalid()?;
    let spec = ExampleSpec {
        id,
        d,
        n_train: a.n_train,
        n_test: a.n_test,
    };
    let (train, test) = gen_example(&spec, a.seed).map_err(|e| Failure::Invalid(e.into()))?;
    train.write_csv(output(a.out.as_deref())?).context("writing training set")?;
    if let Some(p) = &a.test_out {
        test.save_csv(p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn csv_opts(label_column: &str, drop: &[String]) -> CsvOptions {
    CsvOptions {
        label_column: label_column.to_string(),
        drop_columns: drop.to_vec(),
    }
}

fn fit(a: FitArgs) -> Outcome {
    let cfg = train_config(&a.opts).invalid()?;
    let train = load_labeled_csv(&a.train, &csv_opts(&a.label_column, &a.drop))
        .with_context(|| format!("reading {}", a.train.display()))
        .invalid()?;
    let clf = classifier::fit(&train, &cfg).context("training failed")?;
    clf.save(&a.model_out)
        .with_context(|| format!("writing {}", a.model_out.display()))?;
    let err = clf.error_rate(&train).context("scoring training set")?;
    eprintln!(
        "fitted {} classes, d = {}, scatter {}, features {}; training error {:.4}",
        clf.n_classes(),
        clf.dim(),
        clf.scatter_mode().name(),
        clf.feature_kind.label(),
        err
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Outcome {
    let clf = FittedClassifier::load(&a.model)
        .with_context(|| format!("loading {}", a.model.display()))
        .invalid()?;
    let file = File::open(&a.data)
        .with_context(|| format!("opening {}", a.data.display()))
        .invalid()?;
    let x = read_features_csv(file, &a.label_column)
        .with_context(|| format!("reading {}", a.data.display()))
        .invalid()?;
    let pred = clf.predict(x.view()).context("prediction failed")?;
    let mut out = output(a.out.as_deref())?;
    let mut header = vec!["class".to_string()];
    header.extend((1..=clf.n_classes()).map(|j| format!("p{j}")));
    writeln!(out, "{}", header.join(",")).context("writing predictions")?;
    for (c, p) in pred.classes.iter().zip(pred.posteriors.rows()) {
        let probs: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{c},{}", probs.join(",")).context("writing predictions")?;
    }
    out.flush().context("writing predictions")?;
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome {
    let mut base = TrainConfig::default();
    if let Some(p) = &a.config {
        config::load_into(&mut base, p).invalid()?;
    }
    base.validate().map_err(|e| Failure::Invalid(e.into()))?;
    let methods = Method::parse_list(&a.classifiers, &base).map_err(|e| Failure::Invalid(e.into()))?;
    let result = if let Some(ex) = &a.example {
        let (id, d) = parse_example(ex, a.d).invalid()?;
        let mut spec = ExampleSpec::new(id, d);
        spec.n_train = a.n_train;
        if let Some(n) = a.n_test {
            spec.n_test = n;
        }
        if a.reps == 0 || spec.n_train == 0 || spec.n_test == 0 {
            return Err(Failure::Invalid(anyhow!("--reps and sample sizes must be positive")));
        }
        run_experiment(&spec, &methods, a.reps, a.seed).context("experiment failed")?
    } else {
        let path = a.csv.as_ref().expect("clap requires --csv");
        let opts = csv_opts(&a.label_column, &a.drop);
        let data = load_labeled_csv(path, &opts)
            .with_context(|| format!("reading {}", path.display()))
            .invalid()?;
        let split = match &a.test_csv {
            Some(p) => Split::Fixed(
                load_labeled_csv(p, &opts)
                    .with_context(|| format!("reading {}", p.display()))
                    .invalid()?,
            ),
            None => {
                if a.reps == 0 || !(a.fraction > 0.0 && a.fraction < 1.0) {
                    return Err(Failure::Invalid(anyhow!(
                        "--reps must be positive and --fraction in (0, 1)"
                    )));
                }
                Split::Repeated {
                    reps: a.reps,
                    fraction: a.fraction,
                }
            }
        };
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        run_benchmark(&name, &data, &split, &methods, a.seed).context("benchmark failed")?
    };
    for m in &result.methods {
        for (r, msg) in &m.failures {
            eprintln!("{} failed on repetition {r}: {msg}", m.name);
        }
    }
    let results = [result];
    write_results_csv(&results, output(a.out.as_deref())?).context("writing results")?;
    if a.markdown {
        print!("{}", results_markdown(&results));
    }
    Ok(())
}

fn print_comparison(name: &str, c: &LimitComparison) {
    println!(
        "{name}: max abs deviation {:.5}, max rel deviation {:.5}",
        c.max_abs_deviation(),
        c.max_rel_deviation()
    );
    for j in 0..c.limit.nrows() {
        let fmt = |m: &Vec<f64>| m.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>().join(" ");
        println!("  class {}: empirical [{}] limit [{}]", j + 1, fmt(&c.empirical.row(j).to_vec()), fmt(&c.limit.row(j).to_vec()));
    }
}

fn hdlss(a: HdlssArgs) -> Outcome {
    let k = a.sigma2.len();
    let check = HdlssCheck {
        means: a.means,
        sigma2: a.sigma2,
        n: vec![a.n; k],
        n_test: a.n_test,
        d: a.d,
        h_rule: match a.c0 {
            Some(c0) => HRule::Fixed { c0 },
            None => HRule::MedianHeuristic,
        },
        seed: a.seed,
    };
    let r = hdlss_limit_check(&check).map_err(|e| Failure::Invalid(e.into()))?;
    println!("d = {}, h = {:.5}, h^2/d = {:.5}", a.d, r.h, r.c0);
    print_comparison("distance to mean, training rows", &r.md_train);
    print_comparison("distance to mean, fresh rows", &r.md_test);
    print_comparison("local feature, training rows", &r.lmd_train);
    print_comparison("local feature, fresh rows", &r.lmd_test);
    println!("max rel deviation {:.5}", r.max_rel_deviation());
    Ok(())
}

fn efficiency(a: EfficiencyArgs) -> Outcome {
    let file = File::open(&a.results)
        .with_context(|| format!("opening {}", a.results.display()))
        .invalid()?;
    let rows = read_results_csv(file).map_err(|e| Failure::Invalid(e.into()))?;
    let scores = efficiency_from_table(&rows).map_err(|e| Failure::Invalid(e.into()))?;
    write_efficiency_csv(&scores, output(a.out.as_deref())?).context("writing scores")?;
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MDGAM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("MDGAM_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Outcome {
        init_threads().invalid()?;
        match cli.command {
            Command::Simulate(a) => simulate(a),
            Command::Fit(a) => fit(a),
            Command::Predict(a) => predict(a),
            Command::Bench(a) => bench(a),
            Command::HdlssCheck(a) => hdlss(a),
            Command::Efficiency(a) => efficiency(a),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
