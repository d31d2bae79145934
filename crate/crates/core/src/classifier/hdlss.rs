//! Monte Carlo check of the high-dimensional limits of scaled distance
//! features.
//!
//! Class `j` is `N_d(m_j·1, σ_j² I)`, so `d⁻¹‖μ_j − μ_k‖² = (m_j − m_k)²`
//! and `d⁻¹ tr Σ_j = σ_j²` for every `d`. Identity scatter is used for all
//! distances. For a training row of class `j` and class means `X̄_k`:
//!
//! * `d⁻¹‖x − X̄_j‖² → (1 − 1/n_j) σ_j²`,
//! * `d⁻¹‖x − X̄_k‖² → ν²_{jk} + σ_j² + σ_k²/n_k` for `k ≠ j`;
//!
//! a fresh row of class `i` has `(1 + 1/n_i) σ_i²` in its own coordinate.
//! With `h²/d = C₀` and `s_{jk} = σ_j² + σ_k² + ν²_{jk}`, the scaled local
//! feature `d⁻¹ n_k⁻¹ Σ_l Ψ(‖x − X_{kl}‖²/h²) ‖x − X_{kl}‖²` tends to
//! `θ°_{jk} = Ψ(s_{jk}/C₀) s_{jk}`, times `(1 − 1/n_j)` in the own-class
//! coordinate of a training row. `Ψ` is the Gaussian shape `e^{−t/2}`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::{ClassifierError, Result};
use crate::features::{gaussian_profile, sq_distance_matrix, KernelProfile};
use crate::linalg::quantile_sorted;
use crate::seed::rng_from;

/// How the localization parameter is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HRule {
    /// Smallest per-class median of within-class squared distances is `h²`.
    MedianHeuristic,
    /// `h² = C₀ d`.
    Fixed { c0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdlssCheck {
    /// Per-coordinate class means `m_j`.
    pub means: Vec<f64>,
    /// Per-coordinate variances `σ_j²`.
    pub sigma2: Vec<f64>,
    /// Training rows per class.
    pub n: Vec<usize>,
    /// Fresh rows per class used for the test-point limits.
    pub n_test: usize,
    pub d: usize,
    pub h_rule: HRule,
    pub seed: u64,
}

/// Empirical class-wise mean feature vectors against their limits.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitComparison {
    /// Row `j`: mean scaled feature vector over class-`j` rows.
    pub empirical: Array2<f64>,
    pub limit: Array2<f64>,
    /// Row `j`: within-class standard deviation of each coordinate.
    pub spread: Array2<f64>,
}

impl LimitComparison {
    pub fn max_abs_deviation(&self) -> f64 {
        (&self.empirical - &self.limit)
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_rel_deviation(&self) -> f64 {
        self.empirical
            .iter()
            .zip(self.limit.iter())
            .fold(0.0, |m, (e, l)| m.max((e - l).abs() / l.abs()))
    }

    /// Smallest distance between two distinct rows of the limit matrix.
    pub fn min_limit_gap(&self) -> f64 {
        let j = self.limit.nrows();
        let mut gap = f64::INFINITY;
        for a in 0..j {
            for b in a + 1..j {
                let diff = &self.limit.row(a) - &self.limit.row(b);
                gap = gap.min(diff.dot(&diff).sqrt());
            }
        }
        gap
    }

    pub fn max_spread(&self) -> f64 {
        self.spread.iter().fold(0.0, |m, &v| m.max(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdlssReport {
    pub h: f64,
    /// `h² / d`.
    pub c0: f64,
    pub md_train: LimitComparison,
    pub md_test: LimitComparison,
    pub lmd_train: LimitComparison,
    pub lmd_test: LimitComparison,
}

impl HdlssReport {
    pub fn max_rel_deviation(&self) -> f64 {
        [&self.md_train, &self.md_test, &self.lmd_train, &self.lmd_test]
            .iter()
            .fold(0.0, |m, c| m.max(c.max_rel_deviation()))
    }
}

fn nu2(means: &[f64], j: usize, k: usize) -> f64 {
    (means[j] - means[k]).powi(2)
}

/// Limits of scaled squared distances to class means: `(training, test)`.
pub fn md_limits(means: &[f64], sigma2: &[f64], n: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let jn = sigma2.len();
    let mut train = Array2::zeros((jn, jn));
    let mut test = Array2::zeros((jn, jn));
    for j in 0..jn {
        for k in 0..jn {
            if j == k {
                let inv = 1.0 / n[j] as f64;
                train[[j, k]] = (1.0 - inv) * sigma2[j];
                test[[j, k]] = (1.0 + inv) * sigma2[j];
            } else {
                let v = nu2(means, j, k) + sigma2[j] + sigma2[k] / n[k] as f64;
                train[[j, k]] = v;
                test[[j, k]] = v;
            }
        }
    }
    (train, test)
}

/// Limits of the scaled local features: `(training, test)`.
pub fn lmd_limits(
    means: &[f64],
    sigma2: &[f64],
    n: &[usize],
    c0: f64,
    kernel: &KernelProfile,
) -> (Array2<f64>, Array2<f64>) {
    let jn = sigma2.len();
    let mut train = Array2::zeros((jn, jn));
    let mut test = Array2::zeros((jn, jn));
    for j in 0..jn {
        for k in 0..jn {
            let s = sigma2[j] + sigma2[k] + nu2(means, j, k);
            let theta = kernel.shape(s / c0) * s;
            test[[j, k]] = theta;
            train[[j, k]] = if j == k {
                (1.0 - 1.0 / n[j] as f64) * theta
            } else {
                theta
            };
        }
    }
    (train, test)
}

fn draw(rows: usize, d: usize, mean: f64, sd: f64, seed: u64, tag: &[u64]) -> Array2<f64> {
    let mut rng = rng_from(seed, "hdlss-check", tag);
    Array2::from_shape_fn((rows, d), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        mean + sd * z
    })
}

fn summarize(features: &[Array2<f64>], limit: Array2<f64>) -> LimitComparison {
    let jn = features.len();
    let mut empirical = Array2::zeros((jn, limit.ncols()));
    let mut spread = Array2::zeros((jn, limit.ncols()));
    for (j, f) in features.iter().enumerate() {
        empirical.row_mut(j).assign(&f.mean_axis(Axis(0)).expect("rows"));
        spread.row_mut(j).assign(&f.std_axis(Axis(0), 1.0));
    }
    LimitComparison {
        empirical,
        limit,
        spread,
    }
}

fn scaled_md(x: ArrayView2<f64>, centers: &[Array1<f64>]) -> Array2<f64> {
    let d = x.ncols() as f64;
    let mut out = Array2::zeros((x.nrows(), centers.len()));
    for (k, c) in centers.iter().enumerate() {
        for (i, row) in x.outer_iter().enumerate() {
            let diff = &row - c;
            out[[i, k]] = diff.dot(&diff) / d;
        }
    }
    out
}

fn scaled_lmd(x: ArrayView2<f64>, train: &[Array2<f64>], h: f64, kernel: &KernelProfile) -> Array2<f64> {
    let d = x.ncols() as f64;
    let h2 = h * h;
    let mut out = Array2::zeros((x.nrows(), train.len()));
    for (k, rows) in train.iter().enumerate() {
        let q = sq_distance_matrix(x, rows.view());
        for (i, qi) in q.outer_iter().enumerate() {
            let s: f64 = qi.iter().map(|&v| kernel.shape(v / h2) * v).sum();
            out[[i, k]] = s / (rows.nrows() as f64 * d);
        }
    }
    out
}

fn median_heuristic(train: &[Array2<f64>]) -> f64 {
    train
        .iter()
        .map(|rows| {
            let q = sq_distance_matrix(rows.view(), rows.view());
            let mut vals: Vec<f64> = Vec::new();
            for i in 0..q.nrows() {
                for k in i + 1..q.ncols() {
                    vals.push(q[[i, k]]);
                }
            }
            vals.sort_by(f64::total_cmp);
            quantile_sorted(&vals, 0.5)
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Simulates the setting in `check` and compares the scaled features with
/// their limits.
pub fn hdlss_limit_check(check: &HdlssCheck) -> Result<HdlssReport> {
    let jn = check.sigma2.len();
    let bad = |m: &str| Err(ClassifierError::BadConfig(m.to_string()));
    if jn < 2 || check.means.len() != jn || check.n.len() != jn {
        return bad("need matching means, variances and sizes for at least two classes");
    }
    if check.sigma2.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return bad("class variances must be positive");
    }
    if check.n.iter().any(|&n| n < 2) || check.n_test < 2 || check.d == 0 {
        return bad("need at least two rows per class and d ≥ 1");
    }
    let d = check.d;
    let kernel = gaussian_profile(d);
    let train: Vec<Array2<f64>> = (0..jn)
        .map(|j| draw(check.n[j], d, check.means[j], check.sigma2[j].sqrt(), check.seed, &[0, j as u64]))
        .collect();
    let test: Vec<Array2<f64>> = (0..jn)
        .map(|j| draw(check.n_test, d, check.means[j], check.sigma2[j].sqrt(), check.seed, &[1, j as u64]))
        .collect();
    let centers: Vec<Array1<f64>> = train.iter().map(|r| r.mean_axis(Axis(0)).expect("rows")).collect();
    let h = match check.h_rule {
        HRule::MedianHeuristic => median_heuristic(&train),
        HRule::Fixed { c0 } => {
            if !(c0 > 0.0) {
                return bad("C0 must be positive");
            }
            (c0 * d as f64).sqrt()
        }
    };
    let c0 = h * h / d as f64;
    let (md_tr, md_te) = md_limits(&check.means, &check.sigma2, &check.n);
    let (lmd_tr, lmd_te) = lmd_limits(&check.means, &check.sigma2, &check.n, c0, &kernel);
    let md_train = train.iter().map(|x| scaled_md(x.view(), &centers)).collect::<Vec<_>>();
    let md_test = test.iter().map(|x| scaled_md(x.view(), &centers)).collect::<Vec<_>>();
    let lmd_train = train.iter().map(|x| scaled_lmd(x.view(), &train, h, &kernel)).collect::<Vec<_>>();
    let lmd_test = test.iter().map(|x| scaled_lmd(x.view(), &train, h, &kernel)).collect::<Vec<_>>();
    Ok(HdlssReport {
        h,
        c0,
        md_train: summarize(&md_train, md_tr),
        md_test: summarize(&md_test, md_te),
        lmd_train: summarize(&lmd_train, lmd_tr),
        lmd_test: summarize(&lmd_test, lmd_te),
    })
}
