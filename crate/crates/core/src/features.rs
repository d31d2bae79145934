//! Mahalanobis-distance (MD) and local-Mahalanobis-distance (LMD) features.
//!
//! For a class with scatter model `(μ, Σ)` and training rows `x_1..x_n`:
//!
//! * MD is `δ(x) = {(x-μ)ᵀ Σ⁻¹ (x-μ)}^{1/2}`.
//! * LMD is built from `β_h(x) = n⁻¹ Σ_i Ψ(q_i / h²) q_i` with
//!   `q_i = (x-x_i)ᵀ Σ⁻¹ (x-x_i)`; the feature is `β_h` when `h > 1` and
//!   `β_h / h^{d+2}` when `h ≤ 1`.
//!
//! All distances go through the model's [`Whitener`](crate::estimators::Whitener),
//! so squared distances are sums of squares and never negative.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::estimators::ScatterModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("dimension mismatch: model has d = {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no scatter models supplied")]
    EmptyModelList,
    #[error("localization parameter must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("class {0} has no training rows")]
    EmptyClassRows(usize),
    #[error("feature value is not finite (row {row}, class {class})")]
    NonFinite { row: usize, class: usize },
    #[error("{models} models but {rows} per-class row sets")]
    ClassCountMismatch { models: usize, rows: usize },
}

/// Radial kernel `K(t) = Ψ(tᵀt)`.
///
/// `Ψ` takes the squared standardized distance directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelProfile {
    /// Standard `d`-variate normal density.
    Gaussian { d: usize },
}

impl KernelProfile {
    pub fn dim(&self) -> usize {
        match *self {
            KernelProfile::Gaussian { d } => d,
        }
    }

    /// `ln Ψ(0)`.
    pub fn log_psi_at_zero(&self) -> f64 {
        match *self {
            KernelProfile::Gaussian { d } => {
                -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    pub fn psi_at_zero(&self) -> f64 {
        self.log_psi_at_zero().exp()
    }

    /// `Ψ(s) / Ψ(0)`; the part of the kernel that does not depend on `d`.
    pub fn shape(&self, s: f64) -> f64 {
        match self {
            KernelProfile::Gaussian { .. } => (-0.5 * s).exp(),
        }
    }

    pub fn psi(&self, s: f64) -> f64 {
        self.psi_at_zero() * self.shape(s)
    }

    /// `∫ ‖z‖² K(z) dz`.
    pub fn kappa2(&self) -> f64 {
        match *self {
            KernelProfile::Gaussian { d } => d as f64,
        }
    }
}

/// The Gaussian kernel profile in `d` dimensions.
pub fn gaussian_profile(d: usize) -> KernelProfile {
    assert!(d >= 1, "kernel dimension must be positive");
    KernelProfile::Gaussian { d }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    /// `δ_j(x)`.
    Md,
    /// `γ̂^h_j(x)`.
    Lmd { h: f64 },
    /// `δ_j(x)² / d`, used in high-dimensional mode.
    MdSquaredScaled,
    /// `d⁻¹ n⁻¹ Σ_i (Ψ(q_i/h²)/Ψ(0)) q_i`, the high-dimensional LMD.
    LmdScaled { h: f64 },
}

impl FeatureKind {
    pub fn label(&self) -> String {
        match self {
            FeatureKind::Md => "md".to_string(),
            FeatureKind::Lmd { h } => format!("lmd({h})"),
            FeatureKind::MdSquaredScaled => "md2/d".to_string(),
            FeatureKind::LmdScaled { h } => format!("lmd({h})/d"),
        }
    }
}

/// `n × J` feature matrix; entries are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, kind: FeatureKind) -> Result<Self, FeatureError> {
        for ((row, class), v) in values.indexed_iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(FeatureError::NonFinite { row, class });
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn class_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

fn check_dim(model: &ScatterModel, got: usize) -> Result<(), FeatureError> {
    if model.dim() != got {
        return Err(FeatureError::DimensionMismatch {
            expected: model.dim(),
            got,
        });
    }
    Ok(())
}

/// Squared Mahalanobis distance of `x` from `model`.
pub fn mahalanobis_sq(x: ArrayView1<f64>, model: &ScatterModel) -> Result<f64, FeatureError> {
    check_dim(model, x.len())?;
    let diff = &x - &model.location;
    let w = model.whitener.apply(diff.view());
    Ok(w.dot(&w))
}

/// Mahalanobis distance of `x` from `model`.
pub fn mahalanobis(x: ArrayView1<f64>, model: &ScatterModel) -> Result<f64, FeatureError> {
    mahalanobis_sq(x, model).map(f64::sqrt)
}

fn check_models(x: ArrayView2<f64>, models: &[ScatterModel]) -> Result<(), FeatureError> {
    if models.is_empty() {
        return Err(FeatureError::EmptyModelList);
    }
    for m in models {
        check_dim(m, x.ncols())?;
    }
    Ok(())
}

/// Squared distances of every row of `x` from every model's location.
pub fn md_squared(x: ArrayView2<f64>, models: &[ScatterModel]) -> Result<Array2<f64>, FeatureError> {
    check_models(x, models)?;
    let mut out = Array2::<f64>::zeros((x.nrows(), models.len()));
    for (j, m) in models.iter().enumerate() {
        let centered = &x - &m.location.view().insert_axis(ndarray::Axis(0));
        let white = m.whitener.apply_rows(centered.view());
        for (i, row) in white.outer_iter().enumerate() {
            out[[i, j]] = row.dot(&row);
        }
    }
    Ok(out)
}

/// MD feature matrix: entry `(i, j)` is `δ_j(x_i)`.
pub fn md_features(x: ArrayView2<f64>, models: &[ScatterModel]) -> Result<FeatureMatrix, FeatureError> {
    let sq = md_squared(x, models)?;
    FeatureMatrix::new(sq.mapv(f64::sqrt), FeatureKind::Md)
}

/// Entry `(i, j)` is `δ_j(x_i)² / d`.
pub fn md_squared_scaled_features(
    x: ArrayView2<f64>,
    models: &[ScatterModel],
) -> Result<FeatureMatrix, FeatureError> {
    let d = x.ncols() as f64;
    let sq = md_squared(x, models)?;
    FeatureMatrix::new(sq / d, FeatureKind::MdSquaredScaled)
}

/// Squared standardized distances between each row of `x` and each of
/// `class_rows`, in the metric of `model`. Shape `x.nrows() × class_rows.nrows()`.
pub fn pairwise_sq(
    x: ArrayView2<f64>,
    class_rows: ArrayView2<f64>,
    model: &ScatterModel,
) -> Result<Array2<f64>, FeatureError> {
    check_dim(model, x.ncols())?;
    check_dim(model, class_rows.ncols())?;
    let wx = model.whitener.apply_rows(x);
    let wc = model.whitener.apply_rows(class_rows);
    Ok(sq_distance_matrix(wx.view(), wc.view()))
}

/// Plain squared Euclidean distances between the rows of `a` and `b`.
pub fn sq_distance_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.nrows(), b.nrows()));
    let b_rows: Vec<&[f64]> = b
        .outer_iter()
        .map(|r| r.to_slice().expect("standard layout"))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    // Owned standard-layout copies keep the slices valid.
    let a = a.as_standard_layout();
    for (i, ra) in a.outer_iter().enumerate() {
        let ra = ra.to_slice().expect("standard layout");
        for (k, rb) in b_rows.iter().enumerate() {
            let mut s = 0.0;
            for (x, y) in ra.iter().zip(rb.iter()) {
                let t = x - y;
                s += t * t;
            }
            out[[i, k]] = s;
        }
    }
    out
}

/// `β_h` from a row of squared distances `q`.
pub fn beta_from_sq(q: &[f64], h: f64, kernel: &KernelProfile) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let h2 = h * h;
    let sum: f64 = q.iter().map(|&qi| kernel.shape(qi / h2) * qi).sum();
    kernel.psi_at_zero() * sum / q.len() as f64
}

/// `γ^h` from a row of squared distances `q`, computed in log space so
/// the `h^{d+2}` rescaling cannot overflow an intermediate.
pub fn lmd_from_sq(q: &[f64], h: f64, kernel: &KernelProfile) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let h2 = h * h;
    let mean: f64 = q.iter().map(|&qi| kernel.shape(qi / h2) * qi).sum::<f64>() / q.len() as f64;
    if mean <= 0.0 {
        return 0.0;
    }
    let mut log_v = kernel.log_psi_at_zero() + mean.ln();
    if h <= 1.0 {
        log_v -= (kernel.dim() as f64 + 2.0) * h.ln();
    }
    log_v.exp()
}

fn check_h(h: f64) -> Result<(), FeatureError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(FeatureError::NonPositiveH(h));
    }
    Ok(())
}

/// Empirical `β̂_{h}(x)` for one class.
pub fn lmd_beta(
    x: ArrayView1<f64>,
    class_rows: ArrayView2<f64>,
    model: &ScatterModel,
    h: f64,
    kernel: &KernelProfile,
) -> Result<f64, FeatureError> {
    check_h(h)?;
    if class_rows.nrows() == 0 {
        return Err(FeatureError::EmptyClassRows(model.class_id));
    }
    let q = pairwise_sq(x.insert_axis(ndarray::Axis(0)), class_rows, model)?;
    Ok(beta_from_sq(q.row(0).to_slice().unwrap(), h, kernel))
}

/// Empirical LMD `γ̂^h(x)` for one class.
pub fn lmd_value(
    x: ArrayView1<f64>,
    class_rows: ArrayView2<f64>,
    model: &ScatterModel,
    h: f64,
    kernel: &KernelProfile,
) -> Result<f64, FeatureError> {
    check_h(h)?;
    if class_rows.nrows() == 0 {
        return Err(FeatureError::EmptyClassRows(model.class_id));
    }
    let q = pairwise_sq(x.insert_axis(ndarray::Axis(0)), class_rows, model)?;
    let v = lmd_from_sq(q.row(0).to_slice().unwrap(), h, kernel);
    if !v.is_finite() {
        return Err(FeatureError::NonFinite { row: 0, class: 0 });
    }
    Ok(v)
}

/// Per-class squared-distance matrices from query rows to class rows.
///
/// Distances do not depend on `h`, so computing them once lets many values of
/// `h` be evaluated cheaply.
#[derive(Debug, Clone)]
pub struct DistanceCache {
    per_class: Vec<Array2<f64>>,
}

impl DistanceCache {
    pub fn new(
        x: ArrayView2<f64>,
        per_class_rows: &[ArrayView2<f64>],
        models: &[ScatterModel],
    ) -> Result<Self, FeatureError> {
        check_models(x, models)?;
        if per_class_rows.len() != models.len() {
            return Err(FeatureError::ClassCountMismatch {
                models: models.len(),
                rows: per_class_rows.len(),
            });
        }
        let mut per_class = Vec::with_capacity(models.len());
        for (j, (rows, m)) in per_class_rows.iter().zip(models).enumerate() {
            if rows.nrows() == 0 {
                return Err(FeatureError::EmptyClassRows(j + 1));
            }
            per_class.push(pairwise_sq(x, *rows, m)?);
        }
        Ok(Self { per_class })
    }

    pub fn class(&self, j: usize) -> ArrayView2<'_, f64> {
        self.per_class[j].view()
    }

    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn n_rows(&self) -> usize {
        self.per_class.first().map_or(0, |m| m.nrows())
    }

    /// LMD feature matrix at `h`.
    pub fn lmd_features(&self, h: f64, kernel: &KernelProfile) -> Result<FeatureMatrix, FeatureError> {
        check_h(h)?;
        let n = self.n_rows();
        let mut out = Array2::<f64>::zeros((n, self.per_class.len()));
        for (j, q) in self.per_class.iter().enumerate() {
            for (i, row) in q.outer_iter().enumerate() {
                let v = lmd_from_sq(row.as_slice().expect("standard layout"), h, kernel);
                if !v.is_finite() {
                    return Err(FeatureError::NonFinite { row: i, class: j });
                }
                out[[i, j]] = v;
            }
        }
        FeatureMatrix::new(out, FeatureKind::Lmd { h })
    }

    /// Scaled LMD feature matrix at `h` (kind [`FeatureKind::LmdScaled`]).
    pub fn scaled_lmd_features(&self, h: f64, kernel: &KernelProfile) -> Result<FeatureMatrix, FeatureError> {
        check_h(h)?;
        let n = self.n_rows();
        let d = kernel.dim() as f64;
        let mut out = Array2::<f64>::zeros((n, self.per_class.len()));
        for (j, q) in self.per_class.iter().enumerate() {
            for (i, row) in q.outer_iter().enumerate() {
                out[[i, j]] = scaled_lmd_from_sq(row.as_slice().expect("standard layout"), h, kernel) / d;
            }
        }
        FeatureMatrix::new(out, FeatureKind::LmdScaled { h })
    }

    /// Features of `kind`; `Md` kinds are not distance-cache based and are rejected.
    pub fn features(&self, kind: FeatureKind, kernel: &KernelProfile) -> Option<Result<FeatureMatrix, FeatureError>> {
        match kind {
            FeatureKind::Lmd { h } => Some(self.lmd_features(h, kernel)),
            FeatureKind::LmdScaled { h } => Some(self.scaled_lmd_features(h, kernel)),
            FeatureKind::Md | FeatureKind::MdSquaredScaled => None,
        }
    }
}

/// `n⁻¹ Σ_i (Ψ(q_i/h²)/Ψ(0)) q_i`.
pub fn scaled_lmd_from_sq(q: &[f64], h: f64, kernel: &KernelProfile) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let h2 = h * h;
    q.iter().map(|&qi| kernel.shape(qi / h2) * qi).sum::<f64>() / q.len() as f64
}

/// LMD feature matrix: entry `(i, j)` is `γ̂^h_j(x_i)`.
pub fn lmd_features(
    x: ArrayView2<f64>,
    per_class_rows: &[ArrayView2<f64>],
    models: &[ScatterModel],
    h: f64,
    kernel: &KernelProfile,
) -> Result<FeatureMatrix, FeatureError> {
    check_h(h)?;
    DistanceCache::new(x, per_class_rows, models)?.lmd_features(h, kernel)
}

/// Column `j` of `values` for rows whose label is `j + 1`, flattened in
/// class order. Used to compare own-class features across kinds.
pub fn own_class_entries(values: ArrayView2<f64>, labels: &[usize]) -> Vec<f64> {
    let j_max = values.ncols();
    let mut out = Vec::with_capacity(labels.len());
    for j in 1..=j_max {
        for (i, &l) in labels.iter().enumerate() {
            if l == j {
                out.push(values[[i, j - 1]]);
            }
        }
    }
    out
}

/// Convenience: rows of `x` as an owned column vector of MDs from one model.
pub fn md_column(x: ArrayView2<f64>, model: &ScatterModel) -> Result<Array1<f64>, FeatureError> {
    Ok(md_squared(x, std::slice::from_ref(model))?.column(0).mapv(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_identity, fit_moment, ScatterMode};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn diag_model(location: Array1<f64>, diag: &[f64]) -> ScatterModel {
        let d = location.len();
        let mut s = Array2::<f64>::zeros((d, d));
        for (k, v) in diag.iter().enumerate() {
            s[[k, k]] = *v;
        }
        ScatterModel::from_parts(1, location, s, ScatterMode::Moment).unwrap()
    }

    #[test]
    fn mahalanobis_examples() {
        let m = diag_model(array![1.0, -1.0], &[1.0, 1.0]);
        assert_eq!(mahalanobis(array![1.0, -1.0].view(), &m).unwrap(), 0.0);
        assert_relative_eq!(mahalanobis(array![4.0, 3.0].view(), &m).unwrap(), 5.0);
        let m = diag_model(array![0.0, 0.0], &[4.0, 1.0]);
        assert_relative_eq!(
            mahalanobis(array![2.0, 3.0].view(), &m).unwrap(),
            10f64.sqrt(),
            epsilon = 1e-14
        );
        assert!(matches!(
            mahalanobis(array![1.0].view(), &m),
            Err(FeatureError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn identity_model_is_euclidean_from_mean() {
        let rows = array![[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]];
        let m = fit_identity(rows.view()).unwrap();
        let x = array![4.0, 1.0, 1.0];
        let want = ((3.0f64).powi(2) + 0.0 + 0.0).sqrt();
        assert_relative_eq!(mahalanobis(x.view(), &m).unwrap(), want);
    }

    #[test]
    fn md_features_single_model_at_mean() {
        let m = diag_model(array![2.0, 3.0], &[1.0, 2.0]);
        let x = array![[2.0, 3.0]];
        let f = md_features(x.view(), &[m]).unwrap();
        assert_eq!(f.values()[[0, 0]], 0.0);
        assert_eq!(f.kind(), FeatureKind::Md);
        assert!(matches!(
            md_features(x.view(), &[]),
            Err(FeatureError::EmptyModelList)
        ));
    }

    #[test]
    fn permuting_models_permutes_columns() {
        let a = diag_model(array![0.0, 0.0], &[1.0, 1.0]);
        let b = diag_model(array![3.0, 1.0], &[2.0, 0.5]);
        let x = array![[1.0, 2.0], [-1.0, 0.5], [4.0, 4.0]];
        let f1 = md_features(x.view(), &[a.clone(), b.clone()]).unwrap();
        let f2 = md_features(x.view(), &[b, a]).unwrap();
        assert_eq!(f1.values().column(0), f2.values().column(1));
        assert_eq!(f1.values().column(1), f2.values().column(0));
    }

    #[test]
    fn gaussian_profile_constants() {
        for d in 1..6 {
            let k = gaussian_profile(d);
            let want = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
            assert_relative_eq!(k.psi(0.0), want, max_relative = 1e-14);
            assert_relative_eq!(k.psi_at_zero(), want, max_relative = 1e-14);
            assert_eq!(k.kappa2(), d as f64);
            assert_relative_eq!(k.psi(2.0) / k.psi(0.0), (-1.0f64).exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn beta_single_row_is_zero() {
        let m = diag_model(array![0.0, 0.0], &[1.0, 1.0]);
        let x = array![0.3, 0.7];
        let rows = x.clone().insert_axis(ndarray::Axis(0));
        let k = gaussian_profile(2);
        assert_eq!(lmd_beta(x.view(), rows.view(), &m, 0.5, &k).unwrap(), 0.0);
    }

    #[test]
    fn beta_one_term_sum() {
        let m = diag_model(array![0.0, 0.0], &[1.0, 1.0]);
        let k = gaussian_profile(2);
        let x = array![0.0, 0.0];
        let rows = array![[1.0, 0.0]];
        let want = (2.0 * std::f64::consts::PI).powi(-1) * (-0.5f64).exp();
        assert_relative_eq!(
            lmd_beta(x.view(), rows.view(), &m, 1.0, &k).unwrap(),
            want,
            max_relative = 1e-14
        );
    }

    #[test]
    fn beta_flat_kernel_limit() {
        let rows = array![[0.0, 1.0], [2.0, -1.0], [1.0, 3.0], [-2.0, 0.5]];
        let m = fit_moment(rows.view()).unwrap();
        let k = gaussian_profile(2);
        let x = array![0.5, 0.5];
        let q = pairwise_sq(x.view().insert_axis(ndarray::Axis(0)), rows.view(), &m).unwrap();
        let mean_q = q.mean().unwrap();
        let b = lmd_beta(x.view(), rows.view(), &m, 1e6, &k).unwrap();
        assert_relative_eq!(b, k.psi_at_zero() * mean_q, max_relative = 1e-6);
    }

    #[test]
    fn lmd_branch_rule() {
        let m = diag_model(array![0.0, 0.0], &[1.0, 1.0]);
        let k = gaussian_profile(2);
        let rows = array![[1.0, 0.0], [0.0, 2.0]];
        let x = array![0.2, 0.1];
        let b1 = lmd_beta(x.view(), rows.view(), &m, 1.0, &k).unwrap();
        let v1 = lmd_value(x.view(), rows.view(), &m, 1.0, &k).unwrap();
        assert_relative_eq!(v1, b1, max_relative = 1e-14);
        let b = lmd_beta(x.view(), rows.view(), &m, 0.5, &k).unwrap();
        let v = lmd_value(x.view(), rows.view(), &m, 0.5, &k).unwrap();
        assert_relative_eq!(v, 16.0 * b, max_relative = 1e-13);
        let b = lmd_beta(x.view(), rows.view(), &m, 2.0, &k).unwrap();
        let v = lmd_value(x.view(), rows.view(), &m, 2.0, &k).unwrap();
        assert_relative_eq!(v, b, max_relative = 1e-14);
        assert!(matches!(
            lmd_value(x.view(), rows.view(), &m, 0.0, &k),
            Err(FeatureError::NonPositiveH(_))
        ));
    }

    #[test]
    fn lmd_features_constant_class_and_kind() {
        let a = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let b = array![[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
        let ma = fit_identity(a.view()).unwrap();
        let mb = fit_identity(b.view()).unwrap();
        let x = array![[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]];
        let k = gaussian_profile(2);
        let f = lmd_features(x.view(), &[a.view(), b.view()], &[ma.clone(), mb.clone()], 0.7, &k)
            .unwrap();
        assert_eq!(f.kind(), FeatureKind::Lmd { h: 0.7 });
        // every class-1 row is the same point, so its column depends only on x
        for i in 0..3 {
            let direct = lmd_value(x.row(i), a.view(), &ma, 0.7, &k).unwrap();
            assert_relative_eq!(f.values()[[i, 0]], direct, max_relative = 1e-14);
        }
    }

    #[test]
    fn feature_matrix_rejects_negative_and_nan() {
        assert!(FeatureMatrix::new(array![[1.0, -0.1]], FeatureKind::Md).is_err());
        assert!(FeatureMatrix::new(array![[f64::NAN, 0.0]], FeatureKind::Md).is_err());
    }
}
