//! Additive baseline-category multinomial logistic model.
//!
//! Class `j < J` has score `g_j(f) = α_j + Σ_k g_{jk}(f_k)` over the `J`
//! feature columns; the last class is the baseline with score 0. Each
//! `g_{jk}` is a centered cubic B-spline with a second-difference penalty.
//! One smoothing parameter, shared by all terms, is chosen by GCV on the
//! working problem; the coefficients are then refined by penalized Newton
//! iterations with step-halving.
//!
//! Labels are `1..=J` at this interface, matching [`Dataset`](crate::Dataset).

mod basis;
mod io;

pub use basis::{default_interior_knots, BasisKind, SplineBasis};
pub use io::{decode_kind, encode_kind};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::features::{FeatureKind, FeatureMatrix};
use crate::linalg;
use crate::textfmt::TextError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GamError {
    #[error("class {0} has no training rows")]
    MissingClass(usize),
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {label} outside 1..={classes}")]
    BadLabel { label: usize, classes: usize },
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("feature kind {got} does not match model kind {expected}")]
    KindMismatch { expected: String, got: String },
    #[error("model has {expected} feature columns, input has {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("priors must be {0} positive numbers")]
    BadPriors(usize),
    #[error("smoothing grid must be non-empty, finite and non-negative")]
    BadLambdaGrid,
    #[error("penalized Hessian could not be factored")]
    Singular,
    #[error("model file: {0}")]
    Format(#[from] TextError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GamOptions {
    /// Interior knots per feature; `None` uses [`default_interior_knots`].
    pub n_interior_knots: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub max_iter: usize,
    /// Relative change in penalized deviance that counts as converged.
    pub tol: f64,
    /// Separation guard: iterations stop once a coefficient reaches this size.
    pub coef_bound: f64,
}

impl Default for GamOptions {
    fn default() -> Self {
        Self {
            n_interior_knots: None,
            lambda_grid: (-4..=4).map(|k| 10f64.powi(k)).collect(),
            max_iter: 100,
            tol: 1e-8,
            coef_bound: 20.0,
        }
    }
}

/// Fit diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Convergence {
    pub iterations: usize,
    pub deviance: f64,
    pub penalized_deviance: f64,
    pub converged: bool,
    /// The separation guard stopped the iterations.
    pub separated: bool,
    /// Penalized deviance after each accepted step of the fixed-λ phase.
    pub trace: Vec<f64>,
    /// `(λ, GCV score)` from the final smoothing-parameter selection.
    pub gcv: Vec<(f64, f64)>,
    /// Feature columns that got the linear fallback basis.
    pub fallback_columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GamModel {
    n_classes: usize,
    feature_kind: FeatureKind,
    bases: Vec<SplineBasis>,
    /// Per-feature map from centered coefficients to basis coefficients.
    constraints: Vec<Array2<f64>>,
    /// `(J-1) × p`; column 0 is the intercept.
    coefficients: Array2<f64>,
    /// Log-prior-ratio adjustment added to each score.
    prior_shift: Array1<f64>,
    lambda: f64,
    convergence: Convergence,
}

/// Householder basis of the orthogonal complement of `c` (`m × (m-1)`).
fn null_space_of(c: &Array1<f64>) -> Array2<f64> {
    let m = c.len();
    let norm = c.dot(c).sqrt();
    let mut v = c.clone();
    v[0] += if c[0] >= 0.0 { norm } else { -norm };
    let vv = v.dot(&v);
    let mut h = Array2::<f64>::eye(m);
    if vv > 0.0 {
        for i in 0..m {
            for j in 0..m {
                h[[i, j]] -= 2.0 * v[i] * v[j] / vv;
            }
        }
    }
    h.slice(s![.., 1..]).to_owned()
}

/// Common design shared by all class scores.
struct Layout {
    /// Column offset of each feature block (after the intercept).
    offsets: Vec<usize>,
    p: usize,
}

impl Layout {
    fn new(constraints: &[Array2<f64>]) -> Self {
        let mut offsets = Vec::with_capacity(constraints.len());
        let mut p = 1;
        for z in constraints {
            offsets.push(p);
            p += z.ncols();
        }
        Self { offsets, p }
    }
}

fn design(
    values: ArrayView2<f64>,
    bases: &[SplineBasis],
    constraints: &[Array2<f64>],
    layout: &Layout,
) -> Array2<f64> {
    let n = values.nrows();
    let mut x = Array2::<f64>::zeros((n, layout.p));
    x.column_mut(0).fill(1.0);
    for (k, (b, z)) in bases.iter().zip(constraints).enumerate() {
        let col: Vec<f64> = values.column(k).to_vec();
        let block = b.eval_matrix(&col).dot(z);
        let off = layout.offsets[k];
        x.slice_mut(s![.., off..off + z.ncols()]).assign(&block);
    }
    x
}

/// Softmax over `(η_1, …, η_{J-1}, 0)`; returns `n × J`.
fn softmax_with_baseline(eta: ArrayView2<f64>) -> Array2<f64> {
    let (n, k) = eta.dim();
    let mut p = Array2::<f64>::zeros((n, k + 1));
    for i in 0..n {
        let m = eta.row(i).iter().fold(0.0_f64, |a, &b| a.max(b));
        let mut total = (-m).exp();
        for j in 0..k {
            let e = (eta[[i, j]] - m).exp();
            p[[i, j]] = e;
            total += e;
        }
        p[[i, k]] = (-m).exp();
        for j in 0..=k {
            p[[i, j]] /= total;
        }
    }
    p
}

/// Working quantities of the penalized likelihood at one coefficient vector.
struct Working {
    /// Unpenalized Hessian `Xᵀ W X` of the half deviance.
    h0: Array2<f64>,
    /// Score `Xᵀ (y - p)`.
    grad: Array1<f64>,
    /// `Σ_i (y_i - p_i)ᵀ W_i⁻¹ (y_i - p_i)`.
    resid_const: f64,
}

const PROB_FLOOR: f64 = 1e-12;

struct Problem<'a> {
    x: &'a Array2<f64>,
    /// 0-based class index per row.
    y: &'a [usize],
    k: usize,
    p: usize,
    /// Block-diagonal penalty, `kp × kp`.
    penalty: Array2<f64>,
}

impl Problem<'_> {
    fn eta(&self, beta: &Array1<f64>) -> Array2<f64> {
        let b = beta.view().into_shape_with_order((self.k, self.p)).unwrap();
        self.x.dot(&b.t())
    }

    fn deviance(&self, beta: &Array1<f64>) -> f64 {
        let probs = softmax_with_baseline(self.eta(beta).view());
        self.y
            .iter()
            .enumerate()
            .map(|(i, &c)| -2.0 * probs[[i, c]].max(1e-300).ln())
            .sum()
    }

    fn penalized(&self, beta: &Array1<f64>, lambda: f64) -> f64 {
        self.deviance(beta) + lambda * beta.dot(&self.penalty.dot(beta))
    }

    fn working(&self, beta: &Array1<f64>) -> Working {
        let (k, p) = (self.k, self.p);
        let n = self.x.nrows();
        let probs = softmax_with_baseline(self.eta(beta).view());
        let mut resid = Array2::<f64>::zeros((n, k));
        let mut resid_const = 0.0;
        for i in 0..n {
            let c = self.y[i];
            let pj_base = probs[[i, k]].max(PROB_FLOOR);
            let mut sum_r = 0.0;
            for j in 0..k {
                let yij = if c == j { 1.0 } else { 0.0 };
                let r = yij - probs[[i, j]];
                resid[[i, j]] = r;
                resid_const += r * r / probs[[i, j]].max(PROB_FLOOR);
                sum_r += r;
            }
            resid_const += sum_r * sum_r / pj_base;
        }
        let mut h0 = Array2::<f64>::zeros((k * p, k * p));
        let mut grad = Array1::<f64>::zeros(k * p);
        for j in 0..k {
            grad.slice_mut(s![j * p..(j + 1) * p])
                .assign(&self.x.t().dot(&resid.column(j)));
            for l in j..k {
                let w: Array1<f64> = (0..n)
                    .map(|i| {
                        let pj = probs[[i, j]];
                        if j == l {
                            pj * (1.0 - pj)
                        } else {
                            -pj * probs[[i, l]]
                        }
                    })
                    .collect();
                let xw = self.x * &w.view().insert_axis(Axis(1));
                let block = self.x.t().dot(&xw);
                h0.slice_mut(s![j * p..(j + 1) * p, l * p..(l + 1) * p])
                    .assign(&block);
                if l != j {
                    h0.slice_mut(s![l * p..(l + 1) * p, j * p..(j + 1) * p])
                        .assign(&block.t());
                }
            }
        }
        Working {
            h0,
            grad,
            resid_const,
        }
    }

    /// Solves the penalized working problem at `lambda`; returns the new
    /// coefficients and the GCV score.
    fn solve(
        &self,
        beta: &Array1<f64>,
        w: &Working,
        lambda: f64,
    ) -> Result<(Array1<f64>, f64), GamError> {
        let h = &w.h0 + &(&self.penalty * lambda);
        let (l, _) = linalg::cholesky_ridged(h.view()).ok_or(GamError::Singular)?;
        let b = w.h0.dot(beta) + &w.grad;
        let new_beta = linalg::cholesky_solve(l.view(), b.view());
        let tau = linalg::trace_solve(l.view(), w.h0.view());
        let n_obs = (self.x.nrows() * self.k) as f64;
        let rss = beta.dot(&w.h0.dot(beta)) + 2.0 * beta.dot(&w.grad) + w.resid_const
            - 2.0 * new_beta.dot(&b)
            + new_beta.dot(&w.h0.dot(&new_beta));
        let denom = (n_obs - tau).max(1e-8);
        let gcv = n_obs * rss.max(0.0) / (denom * denom);
        Ok((new_beta, gcv))
    }
}

fn relative_change(old: f64, new: f64) -> f64 {
    (old - new).abs() / (new.abs() + 0.1)
}

fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Moves from `beta` toward `target`, shrinking the step so no coefficient
/// exceeds `bound`. Returns the point and whether it was shrunk.
fn bounded_step(beta: &Array1<f64>, target: &Array1<f64>, bound: f64) -> (Array1<f64>, bool) {
    if max_abs(target) <= bound {
        return (target.clone(), false);
    }
    let step = target - beta;
    let mut alpha: f64 = 1.0;
    for (b, d) in beta.iter().zip(step.iter()) {
        if *d == 0.0 {
            continue;
        }
        let limit = if *d > 0.0 { (bound - b) / d } else { (-bound - b) / d };
        alpha = alpha.min(limit.max(0.0));
    }
    (beta + &(&step * alpha), true)
}

/// Step-halving toward `candidate` until the penalized deviance does not
/// exceed `current`. Returns `None` if no improvement was found.
fn halve_until_better(
    prob: &Problem<'_>,
    beta: &Array1<f64>,
    candidate: Array1<f64>,
    lambda: f64,
    current: f64,
) -> Option<(Array1<f64>, f64)> {
    let mut cand = candidate;
    for _ in 0..40 {
        let val = prob.penalized(&cand, lambda);
        if val.is_finite() && val <= current {
            return Some((cand, val));
        }
        cand = (&cand + beta) * 0.5;
    }
    None
}

fn validate(
    features: &FeatureMatrix,
    labels: &[usize],
    priors: Option<&[f64]>,
    opts: &GamOptions,
) -> Result<usize, GamError> {
    let j = features.class_count();
    if j < 2 {
        return Err(GamError::TooFewClasses(j));
    }
    if features.n() != labels.len() {
        return Err(GamError::LengthMismatch {
            features: features.n(),
            labels: labels.len(),
        });
    }
    let mut seen = vec![false; j];
    for &l in labels {
        if l == 0 || l > j {
            return Err(GamError::BadLabel { label: l, classes: j });
        }
        seen[l - 1] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(GamError::MissingClass(c + 1));
    }
    if let Some(p) = priors {
        if p.len() != j || p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(GamError::BadPriors(j));
        }
    }
    if opts.lambda_grid.is_empty() || opts.lambda_grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(GamError::BadLambdaGrid);
    }
    Ok(j)
}

/// Fits the additive multinomial model to `features` with labels `1..=J`.
///
/// `priors` (if given) replaces the training class proportions in the
/// posterior by shifting each score by its log-prior ratio.
pub fn fit(
    features: &FeatureMatrix,
    labels: &[usize],
    priors: Option<&[f64]>,
    opts: &GamOptions,
) -> Result<GamModel, GamError> {
    let j_classes = validate(features, labels, priors, opts)?;
    let k = j_classes - 1;
    let n = labels.len();
    let values = features.values();
    let n_int = opts.n_interior_knots.unwrap_or_else(|| default_interior_knots(n));

    let mut bases = Vec::with_capacity(j_classes);
    let mut constraints = Vec::with_capacity(j_classes);
    let mut fallback_columns = Vec::new();
    for col in 0..j_classes {
        let column: Vec<f64> = values.column(col).to_vec();
        let b = SplineBasis::build(&column, n_int);
        if b.is_fallback() {
            fallback_columns.push(col);
        }
        let means = b.eval_matrix(&column).mean_axis(Axis(0)).unwrap();
        constraints.push(null_space_of(&means));
        bases.push(b);
    }
    let layout = Layout::new(&constraints);
    let p = layout.p;
    let x = design(values, &bases, &constraints, &layout);

    let mut block = Array2::<f64>::zeros((p, p));
    for (b, (z, &off)) in bases.iter().zip(constraints.iter().zip(&layout.offsets)) {
        let sz = z.t().dot(&b.penalty()).dot(z);
        block
            .slice_mut(s![off..off + z.ncols(), off..off + z.ncols()])
            .assign(&sz);
    }
    let mut penalty = Array2::<f64>::zeros((k * p, k * p));
    for j in 0..k {
        penalty
            .slice_mut(s![j * p..(j + 1) * p, j * p..(j + 1) * p])
            .assign(&block);
    }

    let y: Vec<usize> = labels.iter().map(|l| l - 1).collect();
    let mut counts = vec![0usize; j_classes];
    for &c in &y {
        counts[c] += 1;
    }
    let prob = Problem {
        x: &x,
        y: &y,
        k,
        p,
        penalty,
    };

    let mut beta = Array1::<f64>::zeros(k * p);
    for j in 0..k {
        beta[j * p] = (counts[j] as f64 / counts[k] as f64).ln();
    }

    // Phase 1: performance iteration, re-selecting λ by GCV at each step.
    let mut lambda = opts.lambda_grid[0];
    let mut gcv_table = Vec::new();
    let mut separated = false;
    let mut prev_lambda = f64::NAN;
    let mut prev_pen = f64::INFINITY;
    for _ in 0..30 {
        let w = prob.working(&beta);
        let mut best: Option<(f64, Array1<f64>, f64)> = None;
        gcv_table.clear();
        for &lam in &opts.lambda_grid {
            let (cand, score) = prob.solve(&beta, &w, lam)?;
            gcv_table.push((lam, score));
            if best.as_ref().is_none_or(|(_, _, s)| score < *s) {
                best = Some((lam, cand, score));
            }
        }
        let (lam, cand, _) = best.expect("non-empty grid");
        lambda = lam;
        let current = prob.penalized(&beta, lambda);
        let (cand, hit) = bounded_step(&beta, &cand, opts.coef_bound);
        match halve_until_better(&prob, &beta, cand, lambda, current) {
            Some((b, val)) => {
                beta = b;
                if hit {
                    separated = true;
                    break;
                }
                let done = lambda == prev_lambda && relative_change(prev_pen, val) < 1e-6;
                prev_lambda = lambda;
                prev_pen = val;
                if done {
                    break;
                }
            }
            None => break,
        }
    }

    // Phase 2: penalized Newton at fixed λ with step-halving.
    let mut trace = vec![prob.penalized(&beta, lambda)];
    let mut converged = false;
    let mut iterations = 0;
    if !separated {
        for _ in 0..opts.max_iter {
            iterations += 1;
            let w = prob.working(&beta);
            let (target, _) = prob.solve(&beta, &w, lambda)?;
            let current = *trace.last().unwrap();
            let (cand, hit) = bounded_step(&beta, &target, opts.coef_bound);
            match halve_until_better(&prob, &beta, cand, lambda, current) {
                Some((b, val)) => {
                    beta = b;
                    trace.push(val);
                    if hit {
                        separated = true;
                        break;
                    }
                    if relative_change(current, val) < opts.tol {
                        converged = true;
                        break;
                    }
                }
                None => {
                    // no descent left at working precision
                    converged = true;
                    break;
                }
            }
        }
    }

    let deviance = prob.deviance(&beta);
    let penalized_deviance = *trace.last().unwrap();
    let coefficients = beta.into_shape_with_order((k, p)).unwrap();

    let mut prior_shift = Array1::<f64>::zeros(k);
    if let Some(pr) = priors {
        for j in 0..k {
            let fitted = (counts[j] as f64 / counts[k] as f64).ln();
            prior_shift[j] = (pr[j] / pr[k]).ln() - fitted;
        }
    }

    Ok(GamModel {
        n_classes: j_classes,
        feature_kind: features.kind(),
        bases,
        constraints,
        coefficients,
        prior_shift,
        lambda,
        convergence: Convergence {
            iterations,
            deviance,
            penalized_deviance,
            converged,
            separated,
            trace,
            gcv: gcv_table,
            fallback_columns,
        },
    })
}

/// Index of the largest entry of each row (ties to the lowest index), as a
/// label `1..=J`.
pub fn argmax_labels(probs: ArrayView2<f64>) -> Vec<usize> {
    probs
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect()
}

impl GamModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    pub fn bases(&self) -> &[SplineBasis] {
        &self.bases
    }

    /// Smoothing parameter (shared by every term).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Smoothing parameter of each term `(j, k)`; all equal.
    pub fn lambdas(&self) -> Array2<f64> {
        Array2::from_elem((self.n_classes - 1, self.n_classes), self.lambda)
    }

    pub fn intercepts(&self) -> Array1<f64> {
        self.coefficients.column(0).to_owned() + &self.prior_shift
    }

    pub fn convergence(&self) -> &Convergence {
        &self.convergence
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.constraints)
    }

    /// Basis coefficients of term `g_{jk}` (score `j`, feature `k`, 0-based).
    pub fn term_coefficients(&self, j: usize, k: usize) -> Array1<f64> {
        let layout = self.layout();
        let z = &self.constraints[k];
        let off = layout.offsets[k];
        let theta = self.coefficients.slice(s![j, off..off + z.ncols()]);
        z.dot(&theta)
    }

    /// Value of the centered term `g_{jk}` at feature value `x`.
    pub fn term(&self, j: usize, k: usize, x: f64) -> f64 {
        self.bases[k].eval(x).dot(&self.term_coefficients(j, k))
    }

    fn check(&self, features: &FeatureMatrix) -> Result<(), GamError> {
        if features.kind() != self.feature_kind {
            return Err(GamError::KindMismatch {
                expected: self.feature_kind.label(),
                got: features.kind().label(),
            });
        }
        if features.class_count() != self.n_classes {
            return Err(GamError::ColumnMismatch {
                expected: self.n_classes,
                got: features.class_count(),
            });
        }
        Ok(())
    }

    /// Scores `(g_1, …, g_{J-1})` for each row, without kind checks.
    pub fn scores_unchecked(&self, values: ArrayView2<f64>) -> Array2<f64> {
        let layout = self.layout();
        let x = design(values, &self.bases, &self.constraints, &layout);
        let mut eta = x.dot(&self.coefficients.t());
        eta += &self.prior_shift.view().insert_axis(Axis(0));
        eta
    }

    /// Posterior probabilities from raw feature values, without kind checks.
    pub fn predict_proba_unchecked(&self, values: ArrayView2<f64>) -> Array2<f64> {
        softmax_with_baseline(self.scores_unchecked(values).view())
    }

    /// `n × J` posterior probabilities.
    pub fn predict_proba(&self, features: &FeatureMatrix) -> Result<Array2<f64>, GamError> {
        self.check(features)?;
        Ok(self.predict_proba_unchecked(features.values()))
    }

    /// Most probable label `1..=J` per row; ties go to the lowest label.
    pub fn predict_class(&self, features: &FeatureMatrix) -> Result<Vec<usize>, GamError> {
        Ok(argmax_labels(self.predict_proba(features)?.view()))
    }
}

#[cfg(test)]
mod tests;
