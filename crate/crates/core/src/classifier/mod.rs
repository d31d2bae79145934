//! The MD and LMD classifiers.
//!
//! Training estimates one scatter model per class, turns every observation
//! into a vector of `J` distance features and fits the additive
//! multinomial-logistic model on them. For LMD the localization parameter is
//! picked from a geometric grid by out-of-bag bootstrap error. In
//! high-dimensional mode the scatter is either the identity or the diagonal of
//! the sample covariance, again chosen by out-of-bag error.

mod hdlss;
mod io;


pub use hdlss::{
    hdlss_limit_check, lmd_limits, md_limits, HRule, HdlssCheck, HdlssReport, LimitComparison,
};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::estimators::{fit_scatter, EstimatorError, McdOptions, ScatterMode, ScatterModel};
use crate::features::{
    gaussian_profile, md_features, md_squared, md_squared_scaled_features, pairwise_sq,
    scaled_lmd_from_sq, DistanceCache, FeatureError, FeatureKind, FeatureMatrix, KernelProfile,
};
use crate::gam::{self, GamError, GamModel, GamOptions};
use crate::linalg::{pearson, quantile_sorted};
use crate::seed::{derive, rng_from};
use crate::textfmt::TextError;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("class {class} has {got} rows, needs at least {needed}")]
    ClassTooSmall { class: usize, needed: usize, got: usize },
    #[error("every bootstrap resample was skipped")]
    AllResamplesSkipped,
    #[error("dimension mismatch: model has d = {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gam(#[from] GamError),
    #[error(transparent)]
    Format(#[from] TextError),
}

type Result<T> = std::result::Result<T, ClassifierError>;

/// Scatter estimator requested at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterChoice {
    Fixed(ScatterMode),
    /// High-dimensional mode when `d` exceeds every class size, `Moment` otherwise.
    AutoHdlss,
}

impl ScatterChoice {
    pub fn name(self) -> &'static str {
        match self {
            ScatterChoice::Fixed(m) => m.name(),
            ScatterChoice::AutoHdlss => "auto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Some(ScatterChoice::AutoHdlss);
        }
        ScatterMode::parse(s).map(ScatterChoice::Fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    Md,
    Lmd,
}

impl FeatureChoice {
    pub fn name(self) -> &'static str {
        match self {
            FeatureChoice::Md => "md",
            FeatureChoice::Lmd => "lmd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "md" => Some(FeatureChoice::Md),
            "lmd" => Some(FeatureChoice::Lmd),
            _ => None,
        }
    }
}

/// Localization grid `h_i = shrink · q · k0^{i-1}` where `q` is the given
/// percentile of pooled within-class pairwise distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub percentile: f64,
    pub shrink: f64,
    pub k0: f64,
    pub r_stop: f64,
    pub max_points: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            percentile: 5.0,
            shrink: 1.0 / 3.0,
            k0: 1.5,
            r_stop: 0.95,
            max_points: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapParams {
    /// Number of resamples.
    pub b: usize,
    /// Master seed for every random choice made during training.
    pub seed: u64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self { b: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scatter: ScatterChoice,
    pub feature: FeatureChoice,
    pub grid: GridParams,
    pub bootstrap: BootstrapParams,
    /// Resamples used in high-dimensional mode.
    pub hdlss_b: usize,
    pub gam: GamOptions,
    pub mcd: McdOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scatter: ScatterChoice::Fixed(ScatterMode::Moment),
            feature: FeatureChoice::Md,
            grid: GridParams::default(),
            bootstrap: BootstrapParams::default(),
            hdlss_b: 20,
            gam: GamOptions::default(),
            mcd: McdOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn md() -> Self {
        Self::default()
    }

    pub fn lmd() -> Self {
        Self {
            feature: FeatureChoice::Lmd,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let bad = |m: &str| Err(ClassifierError::BadConfig(m.to_string()));
        if self.bootstrap.b < 1 || self.hdlss_b < 1 {
            return bad("bootstrap resample count must be at least 1");
        }
        if !(g.k0 > 1.0) || !g.k0.is_finite() {
            return bad("grid ratio k0 must exceed 1");
        }
        if !(g.r_stop > 0.0 && g.r_stop < 1.0) {
            return bad("r_stop must lie in (0, 1)");
        }
        if !(g.percentile > 0.0 && g.percentile <= 100.0) {
            return bad("grid percentile must lie in (0, 100]");
        }
        if !(g.shrink > 0.0) || !g.shrink.is_finite() {
            return bad("grid shrink factor must be positive");
        }
        if g.max_points < 1 {
            return bad("grid must allow at least one point");
        }
        if self.gam.lambda_grid.is_empty() {
            return bad("empty smoothing-parameter grid");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub h_grid: Vec<f64>,
    /// Mean out-of-bag error per grid point (empty when no bootstrap ran).
    pub bootstrap_errors: Vec<f64>,
    pub skipped_resamples: usize,
    pub degenerate_grid: bool,
    pub chosen_mode: Option<ScatterMode>,
    /// High-dimensional mode only: best out-of-bag error of each candidate.
    pub mode_errors: Vec<(ScatterMode, f64)>,
}

/// A trained classifier. Immutable; prediction is thread-safe.
#[derive(Debug, Clone)]
pub struct FittedClassifier {
    pub models: Vec<ScatterModel>,
    pub class_rows: Vec<Array2<f64>>,
    pub feature_kind: FeatureKind,
    pub gam: GamModel,
    pub config: TrainConfig,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Labels in `1..=J`.
    pub classes: Vec<usize>,
    pub posteriors: Array2<f64>,
}

/// Smallest class size accepted for `mode` in dimension `d`.
pub fn min_class_size(mode: ScatterMode, d: usize) -> usize {
    match mode {
        ScatterMode::Moment | ScatterMode::Mcd => (d + 2).max(10),
        ScatterMode::Diagonal => 2,
        ScatterMode::Identity => 1,
    }
}

fn check_sizes(train: &Dataset, mode: ScatterMode) -> Result<()> {
    let needed = min_class_size(mode, train.d());
    for (j, &got) in train.class_counts().iter().enumerate() {
        if got < needed {
            return Err(ClassifierError::ClassTooSmall {
                class: j + 1,
                needed,
                got,
            });
        }
    }
    Ok(())
}

/// True when the dimension exceeds every class size.
pub fn is_hdlss(train: &Dataset) -> bool {
    let max = train.class_counts().into_iter().max().unwrap_or(0);
    train.d() > max
}

fn split_by_class(train: &Dataset) -> Vec<Array2<f64>> {
    (1..=train.n_classes()).map(|j| train.class_rows(j)).collect()
}

fn fit_models(
    class_rows: &[Array2<f64>],
    mode: ScatterMode,
    mcd: &McdOptions,
    seed: u64,
    stream: &[u64],
) -> Result<Vec<ScatterModel>> {
    class_rows
        .iter()
        .enumerate()
        .map(|(j, rows)| {
            let mut idx = stream.to_vec();
            idx.push(j as u64);
            let opts = McdOptions {
                seed: derive(seed, "mcd", &idx),
                ..*mcd
            };
            let mut m = fit_scatter(rows.view(), mode, Some(&opts))?;
            m.class_id = j + 1;
            Ok(m)
        })
        .collect()
}

fn views(rows: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
    rows.iter().map(|r| r.view()).collect()
}

fn kernel_for(d: usize) -> KernelProfile {
    gaussian_profile(d)
}

/// Features of `kind` for the rows of `x`.
pub fn compute_features(
    x: ArrayView2<f64>,
    models: &[ScatterModel],
    class_rows: &[Array2<f64>],
    kind: FeatureKind,
) -> Result<FeatureMatrix> {
    Ok(match kind {
        FeatureKind::Md => md_features(x, models)?,
        FeatureKind::MdSquaredScaled => md_squared_scaled_features(x, models)?,
        FeatureKind::Lmd { .. } | FeatureKind::LmdScaled { .. } => {
            let cache = DistanceCache::new(x, &views(class_rows), models)?;
            cache
                .features(kind, &kernel_for(x.ncols()))
                .expect("distance-based kind")?
        }
    })
}

/// Output of [`build_h_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct HGrid {
    pub points: Vec<f64>,
    /// Correlation reached at each grid point.
    pub correlations: Vec<f64>,
    /// All within-class pairwise distances were zero (or absent).
    pub degenerate: bool,
}

/// Geometric grid of localization parameters.
///
/// The grid starts at `shrink` times the chosen percentile of the pooled
/// within-class pairwise distances and grows by `k0` until LMD and
/// `MD² + d` on the training rows correlate above `r_stop`.
pub fn build_h_grid(train: &Dataset, models: &[ScatterModel], params: &GridParams) -> Result<HGrid> {
    let class_rows = split_by_class(train);
    let d = train.d();
    let kernel = kernel_for(d);
    let mut pooled = Vec::new();
    let mut own_q = Vec::with_capacity(class_rows.len());
    let mut md_plus_d = Vec::new();
    for (rows, m) in class_rows.iter().zip(models) {
        let q = pairwise_sq(rows.view(), rows.view(), m)?;
        for i in 0..q.nrows() {
            for k in i + 1..q.ncols() {
                pooled.push(q[[i, k]].sqrt());
            }
        }
        let md2 = md_squared(rows.view(), std::slice::from_ref(m))?;
        md_plus_d.extend(md2.column(0).iter().map(|v| v + d as f64));
        own_q.push(q);
    }
    pooled.sort_by(f64::total_cmp);
    let largest = pooled.last().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return Ok(HGrid {
            points: vec![1.0],
            correlations: vec![f64::NAN],
            degenerate: true,
        });
    }
    let mut base = quantile_sorted(&pooled, params.percentile / 100.0);
    if base <= 0.0 {
        // Ties at zero below the percentile: use the smallest positive distance.
        base = *pooled.iter().find(|&&v| v > 0.0).expect("largest is positive");
    }
    let h1 = params.shrink * base;
    let mut points = Vec::new();
    let mut correlations = Vec::new();
    for i in 0..params.max_points {
        let h = h1 * params.k0.powi(i as i32);
        // Correlation ignores the constant factor Ψ(0)·h^{-(d+2)}, so the
        // scaled form avoids underflow in high dimension.
        let lmd: Vec<f64> = own_q
            .iter()
            .flat_map(|q| {
                q.outer_iter()
                    .map(|row| scaled_lmd_from_sq(row.as_slice().expect("standard layout"), h, &kernel))
                    .collect::<Vec<_>>()
            })
            .collect();
        let r = pearson(&lmd, &md_plus_d).unwrap_or(f64::NAN);
        points.push(h);
        correlations.push(r);
        if r > params.r_stop {
            break;
        }
    }
    Ok(HGrid {
        points,
        correlations,
        degenerate: false,
    })
}

/// Out-of-bag bootstrap errors for several feature kinds on common resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// Mean error per kind; a kind that never produced a fit scores 1.
    pub mean_errors: Vec<f64>,
    pub used: usize,
    /// Resamples skipped because the out-of-bag set was empty or a scatter
    /// fit failed.
    pub skipped: usize,
}

fn stratified_resample(train: &Dataset, seed: u64, b: usize) -> (Vec<usize>, Vec<usize>) {
    use rand::Rng;
    let mut rng = rng_from(seed, "bootstrap", &[b as u64]);
    let mut in_bag = vec![false; train.n()];
    let mut drawn = Vec::with_capacity(train.n());
    for j in 1..=train.n_classes() {
        let idx = train.class_indices(j);
        for _ in 0..idx.len() {
            let i = idx[rng.random_range(0..idx.len())];
            in_bag[i] = true;
            drawn.push(i);
        }
    }
    let oob = (0..train.n()).filter(|&i| !in_bag[i]).collect();
    (drawn, oob)
}

fn error_rate(pred: &[usize], truth: &[usize]) -> f64 {
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len() as f64
}

fn one_resample(
    train: &Dataset,
    mode: ScatterMode,
    kinds: &[FeatureKind],
    config: &TrainConfig,
    seed: u64,
    b: usize,
) -> Option<Vec<Option<f64>>> {
    let (drawn, oob) = stratified_resample(train, seed, b);
    if oob.is_empty() {
        return None;
    }
    let boot = train.subset(&drawn);
    let held = train.subset(&oob);
    let class_rows = split_by_class(&boot);
    let models = fit_models(&class_rows, mode, &config.mcd, seed, &[b as u64]).ok()?;
    let kernel = kernel_for(train.d());
    let needs_cache = kinds
        .iter()
        .any(|k| matches!(k, FeatureKind::Lmd { .. } | FeatureKind::LmdScaled { .. }));
    let caches = if needs_cache {
        let v = views(&class_rows);
        Some((
            DistanceCache::new(boot.rows(), &v, &models).ok()?,
            DistanceCache::new(held.rows(), &v, &models).ok()?,
        ))
    } else {
        None
    };
    let errors = kinds
        .iter()
        .map(|&kind| {
            let (fin, fout) = match (kind, &caches) {
                (FeatureKind::Md | FeatureKind::MdSquaredScaled, _) => (
                    compute_features(boot.rows(), &models, &class_rows, kind).ok()?,
                    compute_features(held.rows(), &models, &class_rows, kind).ok()?,
                ),
                (_, Some((cin, cout))) => (
                    cin.features(kind, &kernel)?.ok()?,
                    cout.features(kind, &kernel)?.ok()?,
                ),
                (_, None) => unreachable!("cache built for distance kinds"),
            };
            let model = gam::fit(&fin, boot.labels(), None, &config.gam).ok()?;
            let pred = model.predict_class(&fout).ok()?;
            Some(error_rate(&pred, held.labels()))
        })
        .collect();
    Some(errors)
}

/// Mean out-of-bag error of each feature kind over `b` stratified resamples.
///
/// Every kind sees the same resamples; resample `i` draws from a stream
/// derived from `(seed, i)` only, so results do not depend on scheduling.
pub fn bootstrap_errors(
    train: &Dataset,
    mode: ScatterMode,
    kinds: &[FeatureKind],
    b: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<BootstrapOutcome> {
    let per: Vec<Option<Vec<Option<f64>>>> = (0..b)
        .into_par_iter()
        .map(|i| one_resample(train, mode, kinds, config, seed, i))
        .collect();
    let used = per.iter().filter(|r| r.is_some()).count();
    if used == 0 {
        return Err(ClassifierError::AllResamplesSkipped);
    }
    let mean_errors = (0..kinds.len())
        .map(|k| {
            let vals: Vec<f64> = per.iter().flatten().filter_map(|r| r[k]).collect();
            if vals.is_empty() {
                1.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();
    Ok(BootstrapOutcome {
        mean_errors,
        used,
        skipped: b - used,
    })
}

/// Index of the smallest value; ties go to the first.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Chosen `h` with the per-grid-point mean errors.
#[derive(Debug, Clone, PartialEq)]
pub struct HSelection {
    pub h: f64,
    pub mean_errors: Vec<f64>,
    pub skipped: usize,
}

/// Picks `h` from `grid` by out-of-bag error with `config.bootstrap.b`
/// resamples. A one-point grid is returned without resampling.
pub fn bootstrap_select_h(
    train: &Dataset,
    grid: &[f64],
    mode: ScatterMode,
    config: &TrainConfig,
) -> Result<HSelection> {
    if grid.is_empty() {
        return Err(ClassifierError::BadConfig("empty localization grid".into()));
    }
    if grid.len() == 1 {
        return Ok(HSelection {
            h: grid[0],
            mean_errors: Vec::new(),
            skipped: 0,
        });
    }
    let kinds: Vec<FeatureKind> = grid.iter().map(|&h| FeatureKind::Lmd { h }).collect();
    let out = bootstrap_errors(
        train,
        mode,
        &kinds,
        config.bootstrap.b,
        config.bootstrap.seed,
        config,
    )?;
    Ok(HSelection {
        h: grid[argmin(&out.mean_errors)],
        mean_errors: out.mean_errors,
        skipped: out.skipped,
    })
}

fn finish(
    train: &Dataset,
    models: Vec<ScatterModel>,
    class_rows: Vec<Array2<f64>>,
    kind: FeatureKind,
    config: &TrainConfig,
    diagnostics: Diagnostics,
) -> Result<FittedClassifier> {
    let feats = compute_features(train.rows(), &models, &class_rows, kind)?;
    let gam = gam::fit(&feats, train.labels(), None, &config.gam)?;
    Ok(FittedClassifier {
        models,
        class_rows,
        feature_kind: kind,
        gam,
        config: config.clone(),
        diagnostics,
    })
}

fn resolve_mode(train: &Dataset, config: &TrainConfig) -> Option<ScatterMode> {
    match config.scatter {
        ScatterChoice::Fixed(m) => Some(m),
        ScatterChoice::AutoHdlss if is_hdlss(train) => None,
        ScatterChoice::AutoHdlss => Some(ScatterMode::Moment),
    }
}

/// Trains the classifier described by `config`.
pub fn fit(train: &Dataset, config: &TrainConfig) -> Result<FittedClassifier> {
    config.validate()?;
    let Some(mode) = resolve_mode(train, config) else {
        return fit_hdlss(train, config);
    };
    check_sizes(train, mode)?;
    let class_rows = split_by_class(train);
    let models = fit_models(&class_rows, mode, &config.mcd, config.bootstrap.seed, &[])?;
    let mut diag = Diagnostics {
        chosen_mode: Some(mode),
        ..Diagnostics::default()
    };
    let kind = match config.feature {
        FeatureChoice::Md => FeatureKind::Md,
        FeatureChoice::Lmd => {
            let grid = build_h_grid(train, &models, &config.grid)?;
            let sel = bootstrap_select_h(train, &grid.points, mode, config)?;
            diag.h_grid = grid.points;
            diag.degenerate_grid = grid.degenerate;
            diag.bootstrap_errors = sel.mean_errors;
            diag.skipped_resamples = sel.skipped;
            FeatureKind::Lmd { h: sel.h }
        }
    };
    finish(train, models, class_rows, kind, config, diag)
}

/// MD classifier with `config`'s scatter choice.
pub fn fit_md(train: &Dataset, config: &TrainConfig) -> Result<FittedClassifier> {
    fit(
        train,
        &TrainConfig {
            feature: FeatureChoice::Md,
            ..config.clone()
        },
    )
}

/// LMD classifier with `config`'s scatter choice.
pub fn fit_lmd(train: &Dataset, config: &TrainConfig) -> Result<FittedClassifier> {
    fit(
        train,
        &TrainConfig {
            feature: FeatureChoice::Lmd,
            ..config.clone()
        },
    )
}

/// High-dimensional variant: tries identity and diagonal scatter and keeps
/// the one with the lower out-of-bag error over `config.hdlss_b` resamples.
/// MD features are `δ²/d`; LMD features are the scaled form, with `h`
/// chosen on the same resamples.
pub fn fit_hdlss(train: &Dataset, config: &TrainConfig) -> Result<FittedClassifier> {
    config.validate()?;
    let class_rows = split_by_class(train);
    let mut best: Option<(f64, ScatterMode, Vec<ScatterModel>, FeatureKind, Diagnostics)> = None;
    let mut mode_errors = Vec::new();
    for (idx, mode) in [ScatterMode::Identity, ScatterMode::Diagonal].into_iter().enumerate() {
        check_sizes(train, mode)?;
        let models = fit_models(&class_rows, mode, &config.mcd, config.bootstrap.seed, &[])?;
        let mut diag = Diagnostics::default();
        let kinds = match config.feature {
            FeatureChoice::Md => vec![FeatureKind::MdSquaredScaled],
            FeatureChoice::Lmd => {
                let grid = build_h_grid(train, &models, &config.grid)?;
                diag.degenerate_grid = grid.degenerate;
                diag.h_grid = grid.points.clone();
                grid.points.iter().map(|&h| FeatureKind::LmdScaled { h }).collect()
            }
        };
        let seed = derive(config.bootstrap.seed, "hdlss", &[idx as u64]);
        let out = bootstrap_errors(train, mode, &kinds, config.hdlss_b, seed, config)?;
        let k = argmin(&out.mean_errors);
        let score = out.mean_errors[k];
        mode_errors.push((mode, score));
        if config.feature == FeatureChoice::Lmd {
            diag.bootstrap_errors = out.mean_errors.clone();
        }
        diag.skipped_resamples = out.skipped;
        diag.chosen_mode = Some(mode);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, mode, models, kinds[k], diag));
        }
    }
    let (_, _, models, kind, mut diag) = best.expect("two candidates");
    diag.mode_errors = mode_errors;
    finish(train, models, class_rows, kind, config, diag)
}

impl FittedClassifier {
    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn scatter_mode(&self) -> ScatterMode {
        self.models[0].mode
    }

    /// Training-time feature map applied to new rows.
    pub fn features(&self, x: ArrayView2<f64>) -> Result<FeatureMatrix> {
        if x.ncols() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        compute_features(x, &self.models, &self.class_rows, self.feature_kind)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        let feats = self.features(x)?;
        let posteriors = self.gam.predict_proba(&feats)?;
        let classes = gam::argmax_labels(posteriors.view());
        Ok(Prediction { classes, posteriors })
    }

    /// Misclassification rate on a labeled set.
    pub fn error_rate(&self, data: &Dataset) -> Result<f64> {
        let p = self.predict(data.rows())?;
        Ok(error_rate(&p.classes, data.labels()))
    }
}
