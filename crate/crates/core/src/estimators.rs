//! Per-class location and scatter estimation.
//!
//! Four modes are supported: the 1/n-normalized moment estimator, its
//! diagonal, the identity (Euclidean) model, and a FAST-MCD style robust
//! estimator. Every fitted model carries a numerically safe inverse and a
//! whitening transform used by the distance computations in
//! [`crate::features`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::linalg;
use crate::seed;

/// Variance floor for diagonal scatter entries.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Relative asymmetry tolerated by [`invert_scatter`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("observations have zero columns")]
    EmptyDimension,
    #[error("scatter matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("MCD coverage must lie in (0.5, 1], got {0}")]
    BadCoverage(f64),
    #[error("scatter could not be regularized into a positive-definite matrix")]
    InversionFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScatterMode {
    Moment,
    Diagonal,
    Identity,
    Mcd,
}

impl ScatterMode {
    pub fn name(self) -> &'static str {
        match self {
            ScatterMode::Moment => "moment",
            ScatterMode::Diagonal => "diagonal",
            ScatterMode::Identity => "identity",
            ScatterMode::Mcd => "mcd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "moment" => Some(ScatterMode::Moment),
            "diagonal" => Some(ScatterMode::Diagonal),
            "identity" => Some(ScatterMode::Identity),
            "mcd" => Some(ScatterMode::Mcd),
            _ => None,
        }
    }
}

/// Maps `x - y` to a space where the scatter is the identity, so that
/// `‖W(x - y)‖² = (x - y)ᵀ Σ⁻¹ (x - y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Whitener {
    Identity,
    /// Reciprocal standard deviations.
    Diagonal(Array1<f64>),
    /// `L⁻¹` for the Cholesky factor `L` of the (ridged) scatter.
    Full(Array2<f64>),
}

impl Whitener {
    pub fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Whitener::Identity => v.to_owned(),
            Whitener::Diagonal(s) => &v * s,
            Whitener::Full(linv) => linv.dot(&v),
        }
    }

    /// Whitens every row of `rows`.
    pub fn apply_rows(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Whitener::Identity => rows.to_owned(),
            Whitener::Diagonal(s) => &rows * &s.view().insert_axis(Axis(0)),
            Whitener::Full(linv) => rows.dot(&linv.t()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScatterFlags {
    /// Diagonal-mode coordinates whose variance was raised to [`VARIANCE_FLOOR`].
    pub clamped_coordinates: Vec<usize>,
    /// Some MCD start hit the C-step limit before its determinant settled.
    pub mcd_not_converged: bool,
}

/// Location, scatter and inverse scatter of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterModel {
    pub class_id: usize,
    pub location: Array1<f64>,
    pub scatter: Array2<f64>,
    /// Inverse of `scatter + ridge·I`.
    pub scatter_inv: Array2<f64>,
    pub mode: ScatterMode,
    /// `ln |scatter + ridge·I|`.
    pub log_det: f64,
    pub ridge: f64,
    pub whitener: Whitener,
    pub flags: ScatterFlags,
}

impl ScatterModel {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Assembles a model from its parts, recomputing inverse and whitener.
    pub fn from_parts(
        class_id: usize,
        location: Array1<f64>,
        scatter: Array2<f64>,
        mode: ScatterMode,
    ) -> Result<Self, EstimatorError> {
        let d = location.len();
        let (scatter_inv, log_det, ridge, whitener) = match mode {
            ScatterMode::Identity => (Array2::eye(d), 0.0, 0.0, Whitener::Identity),
            ScatterMode::Diagonal => {
                let diag = scatter.diag().to_owned();
                let inv = Array2::from_diag(&diag.mapv(|v| 1.0 / v));
                let log_det = diag.iter().map(|v| v.ln()).sum();
                (inv, log_det, 0.0, Whitener::Diagonal(diag.mapv(|v| 1.0 / v.sqrt())))
            }
            ScatterMode::Moment | ScatterMode::Mcd => {
                let inv = invert_scatter(scatter.view())?;
                let linv = linalg::lower_triangular_inverse(inv.cholesky.view());
                (inv.inverse, inv.log_det, inv.ridge, Whitener::Full(linv))
            }
        };
        Ok(Self {
            class_id,
            location,
            scatter,
            scatter_inv,
            mode,
            log_det,
            ridge,
            whitener,
            flags: ScatterFlags::default(),
        })
    }
}

/// Result of [`invert_scatter`].
#[derive(Debug, Clone)]
pub struct Inversion {
    pub inverse: Array2<f64>,
    pub log_det: f64,
    pub ridge: f64,
    /// Cholesky factor of `scatter + ridge·I`.
    pub cholesky: Array2<f64>,
}

/// Cholesky-based inverse. If the factorization fails, `λI` is added with `λ`
/// starting at `1e-8·trace/d` and doubling until it succeeds.
pub fn invert_scatter(scatter: ArrayView2<f64>) -> Result<Inversion, EstimatorError> {
    let d = scatter.nrows();
    let asym = linalg::asymmetry(scatter);
    if asym > SYMMETRY_TOL {
        return Err(EstimatorError::NotSymmetric(asym));
    }
    if let Some(l) = linalg::cholesky(scatter) {
        return Ok(Inversion {
            inverse: linalg::cholesky_inverse(l.view()),
            log_det: linalg::cholesky_log_det(l.view()),
            ridge: 0.0,
            cholesky: l,
        });
    }
    let trace = scatter.diag().sum();
    let mut ridge = if trace > 0.0 && trace.is_finite() {
        1e-8 * trace / d as f64
    } else {
        1e-8
    };
    for _ in 0..2000 {
        let mut a = scatter.to_owned();
        a.diag_mut().mapv_inplace(|v| v + ridge);
        if let Some(l) = linalg::cholesky(a.view()) {
            return Ok(Inversion {
                inverse: linalg::cholesky_inverse(l.view()),
                log_det: linalg::cholesky_log_det(l.view()),
                ridge,
                cholesky: l,
            });
        }
        ridge *= 2.0;
    }
    Err(EstimatorError::InversionFailed)
}

fn check_rows(rows: ArrayView2<f64>, needed: usize) -> Result<(), EstimatorError> {
    if rows.ncols() == 0 {
        return Err(EstimatorError::EmptyDimension);
    }
    if rows.nrows() < needed {
        return Err(EstimatorError::TooFewRows {
            needed,
            got: rows.nrows(),
        });
    }
    Ok(())
}

fn mean_and_covariance(rows: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = rows.nrows() as f64;
    let mean = rows.mean_axis(Axis(0)).expect("non-empty rows");
    let centered = &rows - &mean.view().insert_axis(Axis(0));
    let mut cov = centered.t().dot(&centered) / n;
    linalg::symmetrize(&mut cov);
    (mean, cov)
}

/// Sample mean and 1/n-normalized sample covariance.
pub fn fit_moment(rows: ArrayView2<f64>) -> Result<ScatterModel, EstimatorError> {
    check_rows(rows, 2)?;
    let (mean, cov) = mean_and_covariance(rows);
    ScatterModel::from_parts(0, mean, cov, ScatterMode::Moment)
}

/// Diagonal of the moment scatter; variances below [`VARIANCE_FLOOR`] are
/// raised to it and reported in the flags.
pub fn fit_diagonal(rows: ArrayView2<f64>) -> Result<ScatterModel, EstimatorError> {
    check_rows(rows, 2)?;
    let n = rows.nrows() as f64;
    let mean = rows.mean_axis(Axis(0)).expect("non-empty rows");
    let mut var = Array1::<f64>::zeros(rows.ncols());
    for row in rows.outer_iter() {
        for (k, (x, m)) in row.iter().zip(mean.iter()).enumerate() {
            var[k] += (x - m) * (x - m);
        }
    }
    var /= n;
    let mut clamped = Vec::new();
    for (k, v) in var.iter_mut().enumerate() {
        if *v < VARIANCE_FLOOR {
            *v = VARIANCE_FLOOR;
            clamped.push(k);
        }
    }
    let mut model = ScatterModel::from_parts(0, mean, Array2::from_diag(&var), ScatterMode::Diagonal)?;
    model.flags.clamped_coordinates = clamped;
    Ok(model)
}

/// Sample mean with identity scatter.
pub fn fit_identity(rows: ArrayView2<f64>) -> Result<ScatterModel, EstimatorError> {
    check_rows(rows, 1)?;
    let mean = rows.mean_axis(Axis(0)).expect("non-empty rows");
    let d = mean.len();
    ScatterModel::from_parts(0, mean, Array2::eye(d), ScatterMode::Identity)
}

/// FAST-MCD parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McdOptions {
    /// Fraction of observations in the covered subset, in (0.5, 1].
    pub coverage: f64,
    pub n_starts: usize,
    pub max_c_steps: usize,
    pub seed: u64,
}

impl Default for McdOptions {
    fn default() -> Self {
        Self {
            coverage: 0.75,
            n_starts: 500,
            max_c_steps: 20,
            seed: 0,
        }
    }
}

/// Size of the covered subset for `n` rows.
pub fn mcd_subset_size(n: usize, coverage: f64) -> usize {
    ((coverage * n as f64).ceil() as usize).min(n)
}

/// Multiplier making the covered-subset covariance consistent at the normal:
/// `coverage / P(χ²_{d+2} ≤ χ²_{d, coverage})`.
pub fn mcd_consistency_factor(d: usize, coverage: f64) -> f64 {
    if coverage >= 1.0 {
        return 1.0;
    }
    let q = ChiSquared::new(d as f64).expect("d >= 1").inverse_cdf(coverage);
    let mass = ChiSquared::new(d as f64 + 2.0).expect("d >= 1").cdf(q);
    coverage / mass
}

struct Subset {
    indices: Vec<usize>,
    mean: Array1<f64>,
    cov: Array2<f64>,
    log_det: f64,
}

fn subset_stats(rows: ArrayView2<f64>, indices: &[usize]) -> Subset {
    let sub = rows.select(Axis(0), indices);
    let (mean, cov) = mean_and_covariance(sub.view());
    let log_det = match linalg::cholesky(cov.view()) {
        Some(l) => linalg::cholesky_log_det(l.view()),
        None => f64::NEG_INFINITY,
    };
    Subset {
        indices: indices.to_vec(),
        mean,
        cov,
        log_det,
    }
}

/// Indices of the `h` rows closest to `subset` in its own Mahalanobis metric.
fn closest_rows(rows: ArrayView2<f64>, subset: &Subset, h: usize) -> Vec<usize> {
    let inv = invert_scatter(subset.cov.view()).expect("covariance is symmetric");
    let linv = linalg::lower_triangular_inverse(inv.cholesky.view());
    let centered = &rows - &subset.mean.view().insert_axis(Axis(0));
    let white = centered.dot(&linv.t());
    let mut dist: Vec<(f64, usize)> = white
        .outer_iter()
        .enumerate()
        .map(|(i, r)| (r.dot(&r), i))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = dist[..h].iter().map(|&(_, i)| i).collect();
    out.sort_unstable();
    out
}

/// Runs C-steps from `start` (an initial covered subset of size `h`) and
/// returns the log-determinant after each step, starting with the initial one.
pub fn c_step_trace(
    rows: ArrayView2<f64>,
    start: &[usize],
    max_steps: usize,
) -> Vec<f64> {
    let h = start.len();
    let mut current = subset_stats(rows, start);
    let mut trace = vec![current.log_det];
    for _ in 0..max_steps {
        let next = subset_stats(rows, &closest_rows(rows, &current, h));
        if next.log_det >= current.log_det {
            break;
        }
        trace.push(next.log_det);
        current = next;
    }
    trace
}

fn run_start(
    rows: ArrayView2<f64>,
    h: usize,
    opts: &McdOptions,
    start_index: usize,
) -> (Subset, bool) {
    let (n, d) = rows.dim();
    let mut rng = seed::rng_from(opts.seed, "mcd-start", &[start_index as u64]);
    let mut initial: Vec<usize> = sample(&mut rng, n, (d + 1).min(n)).into_vec();
    // Grow a singular elemental subset until its covariance is invertible.
    let mut stats = subset_stats(rows, &initial);
    while stats.log_det == f64::NEG_INFINITY && initial.len() < n {
        loop {
            let extra = rng.random_range(0..n);
            if !initial.contains(&extra) {
                initial.push(extra);
                break;
            }
        }
        stats = subset_stats(rows, &initial);
    }
    let mut current = subset_stats(rows, &closest_rows(rows, &stats, h));
    let mut converged = false;
    for _ in 0..opts.max_c_steps {
        let next = subset_stats(rows, &closest_rows(rows, &current, h));
        if next.log_det >= current.log_det {
            converged = true;
            break;
        }
        current = next;
    }
    (current, converged)
}

/// FAST-MCD: `n_starts` random elemental subsets, each refined by C-steps
/// until the covered-subset determinant stops decreasing. The winning
/// subset's covariance is multiplied by [`mcd_consistency_factor`].
pub fn fit_mcd(rows: ArrayView2<f64>, opts: &McdOptions) -> Result<ScatterModel, EstimatorError> {
    if !(opts.coverage > 0.5 && opts.coverage <= 1.0) {
        return Err(EstimatorError::BadCoverage(opts.coverage));
    }
    if rows.ncols() == 0 {
        return Err(EstimatorError::EmptyDimension);
    }
    let (n, d) = rows.dim();
    let h = mcd_subset_size(n, opts.coverage);
    if h < d + 1 || n < 2 {
        let needed = ((d + 1) as f64 / opts.coverage).ceil() as usize;
        return Err(EstimatorError::TooFewRows {
            needed: needed.max(2),
            got: n,
        });
    }
    let results: Vec<(Subset, bool)> = (0..opts.n_starts.max(1))
        .into_par_iter()
        .map(|s| run_start(rows, h, opts, s))
        .collect();
    let mut not_converged = false;
    let mut best: Option<&Subset> = None;
    for (subset, converged) in &results {
        not_converged |= !converged;
        if best.is_none_or(|b| subset.log_det < b.log_det) {
            best = Some(subset);
        }
    }
    let best = best.expect("at least one start");
    let factor = mcd_consistency_factor(d, opts.coverage);
    let scatter = &best.cov * factor;
    let mut model = ScatterModel::from_parts(0, best.mean.clone(), scatter, ScatterMode::Mcd)?;
    model.flags.mcd_not_converged = not_converged;
    debug_assert_eq!(best.indices.len(), h);
    Ok(model)
}

/// Dispatches on `mode`. MCD uses `mcd` (defaults if `None`).
pub fn fit_scatter(
    rows: ArrayView2<f64>,
    mode: ScatterMode,
    mcd: Option<&McdOptions>,
) -> Result<ScatterModel, EstimatorError> {
    match mode {
        ScatterMode::Moment => fit_moment(rows),
        ScatterMode::Diagonal => fit_diagonal(rows),
        ScatterMode::Identity => fit_identity(rows),
        ScatterMode::Mcd => fit_mcd(rows, mcd.unwrap_or(&McdOptions::default())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng_from(seed, "test-normal", &[]);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn moment_two_points() {
        let m = fit_moment(array![[0.0, 0.0], [2.0, 2.0]].view()).unwrap();
        assert_eq!(m.location, array![1.0, 1.0]);
        assert_eq!(m.scatter, array![[1.0, 1.0], [1.0, 1.0]]);
        // rank one, so the inverse needed a ridge
        assert!(m.ridge > 0.0);
    }

    #[test]
    fn moment_repeated_point_takes_ridge_path() {
        let rows = Array2::from_shape_fn((5, 3), |(_, j)| j as f64);
        let m = fit_moment(rows.view()).unwrap();
        assert!(m.ridge > 0.0);
        assert!(m.scatter_inv.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn moment_too_few_rows() {
        assert_eq!(
            fit_moment(array![[1.0, 2.0]].view()).unwrap_err(),
            EstimatorError::TooFewRows { needed: 2, got: 1 }
        );
    }

    #[test]
    fn moment_recovers_generating_covariance() {
        let mut rows = normal_rows(500, 2, 11);
        rows.column_mut(0).mapv_inplace(|v| 2.0 * v);
        let m = fit_moment(rows.view()).unwrap();
        let want = array![[4.0, 0.0], [0.0, 1.0]];
        for (a, b) in m.scatter.iter().zip(want.iter()) {
            assert!((a - b).abs() < 0.5, "{a} vs {b}");
        }
    }

    #[test]
    fn diagonal_two_points_and_clamp() {
        let m = fit_diagonal(array![[0.0, 0.0], [2.0, 4.0]].view()).unwrap();
        assert_eq!(m.scatter, array![[1.0, 0.0], [0.0, 4.0]]);
        assert!(m.flags.clamped_coordinates.is_empty());

        let c = fit_diagonal(array![[1.0, 0.0], [1.0, 4.0], [1.0, 2.0]].view()).unwrap();
        assert_eq!(c.scatter[[0, 0]], VARIANCE_FLOOR);
        assert_eq!(c.flags.clamped_coordinates, vec![0]);
        assert_eq!(c.scatter[[0, 1]], 0.0);
    }

    #[test]
    fn diagonal_matches_moment_when_moment_is_diagonal() {
        let rows = array![[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]];
        let m = fit_moment(rows.view()).unwrap();
        let d = fit_diagonal(rows.view()).unwrap();
        assert_eq!(m.scatter, d.scatter);
    }

    #[test]
    fn identity_model() {
        let m = fit_identity(array![[1.0, 2.0, 3.0]].view()).unwrap();
        assert_eq!(m.location, array![1.0, 2.0, 3.0]);
        assert_eq!(m.scatter, Array2::<f64>::eye(3));
        assert_eq!(m.scatter_inv, Array2::<f64>::eye(3));
        assert_eq!(m.log_det, 0.0);
    }

    #[test]
    fn invert_examples() {
        let inv = invert_scatter(Array2::<f64>::eye(2).view()).unwrap();
        assert_eq!(inv.inverse, Array2::<f64>::eye(2));
        assert_eq!(inv.ridge, 0.0);
        assert_abs_diff_eq!(inv.log_det, 0.0);

        let inv = invert_scatter(array![[4.0, 0.0], [0.0, 1.0]].view()).unwrap();
        assert_abs_diff_eq!(inv.inverse[[0, 0]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.inverse[[1, 1]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.log_det, 4f64.ln(), epsilon = 1e-14);

        let inv = invert_scatter(array![[1.0, 1.0], [1.0, 1.0]].view()).unwrap();
        assert!(inv.ridge > 0.0);
        let ridged = array![[1.0 + inv.ridge, 1.0], [1.0, 1.0 + inv.ridge]];
        let eye = inv.inverse.dot(&ridged);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - want).abs() < 1e-6);
            }
        }

        assert!(matches!(
            invert_scatter(array![[1.0, 0.5], [0.0, 1.0]].view()),
            Err(EstimatorError::NotSymmetric(_))
        ));
    }

    #[test]
    fn mcd_full_coverage_equals_moment() {
        let rows = normal_rows(60, 2, 3);
        let opts = McdOptions {
            coverage: 1.0,
            n_starts: 10,
            ..McdOptions::default()
        };
        let mcd = fit_mcd(rows.view(), &opts).unwrap();
        let mom = fit_moment(rows.view()).unwrap();
        for (a, b) in mcd.location.iter().zip(mom.location.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in mcd.scatter.iter().zip(mom.scatter.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mcd_clean_data_location() {
        let rows = normal_rows(200, 2, 5);
        let opts = McdOptions {
            n_starts: 100,
            seed: 1,
            ..McdOptions::default()
        };
        let m = fit_mcd(rows.view(), &opts).unwrap();
        assert!(m.location.iter().all(|v| v.abs() < 0.3), "{:?}", m.location);
    }

    #[test]
    fn mcd_resists_point_mass_contamination() {
        let mut rows = normal_rows(200, 2, 9);
        for i in 160..200 {
            rows[[i, 0]] = 100.0;
            rows[[i, 1]] = 100.0;
        }
        let opts = McdOptions {
            n_starts: 100,
            seed: 2,
            ..McdOptions::default()
        };
        let robust = fit_mcd(rows.view(), &opts).unwrap();
        let naive = fit_moment(rows.view()).unwrap();
        assert!(robust.location.iter().all(|v| v.abs() < 0.5), "{:?}", robust.location);
        assert!(naive.location.iter().all(|v| *v > 10.0));
    }

    #[test]
    fn mcd_rejects_bad_input() {
        let rows = normal_rows(4, 3, 1);
        assert!(matches!(
            fit_mcd(rows.view(), &McdOptions::default()),
            Err(EstimatorError::TooFewRows { .. })
        ));
        assert!(matches!(
            fit_mcd(
                rows.view(),
                &McdOptions {
                    coverage: 0.4,
                    ..McdOptions::default()
                }
            ),
            Err(EstimatorError::BadCoverage(_))
        ));
    }

    #[test]
    fn c_steps_never_increase_the_determinant() {
        let mut rows = normal_rows(80, 3, 21);
        for i in 0..15 {
            rows[[i, 0]] += 8.0;
        }
        let h = mcd_subset_size(80, 0.75);
        for s in 0..20u64 {
            let mut rng = seed::rng_from(s, "trace", &[]);
            let start = sample(&mut rng, 80, h).into_vec();
            let trace = c_step_trace(rows.view(), &start, 20);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0], "{trace:?}");
            }
        }
    }

    #[test]
    fn consistency_factor_exceeds_one_for_partial_coverage() {
        assert_eq!(mcd_consistency_factor(2, 1.0), 1.0);
        let c = mcd_consistency_factor(2, 0.75);
        // for d = 2: 0.75 / (1 - (1 + q/2) e^{-q/2}) with q = -2 ln 0.25
        let q = -2.0 * 0.25f64.ln();
        let want = 0.75 / (1.0 - (1.0 + q / 2.0) * (-q / 2.0).exp());
        assert_abs_diff_eq!(c, want, epsilon = 1e-9);
    }
}
