//! Clamped cubic B-spline bases on one feature column.

use ndarray::{Array1, Array2};

use crate::linalg::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Cubic,
    /// Two-function linear basis used when a column has too few distinct values.
    Linear,
}

/// Spline basis on `[lo, hi]`.
///
/// Evaluation happens in the unit coordinate `u = (x - lo)/(hi - lo)`; outside
/// `[lo, hi]` each basis function is continued linearly from the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    kind: BasisKind,
    lo: f64,
    hi: f64,
    /// Interior knots in feature units, strictly increasing inside `(lo, hi)`.
    knots: Vec<f64>,
}

/// Default number of interior knots for `n` training rows.
pub fn default_interior_knots(n: usize) -> usize {
    if n >= 200 {
        8
    } else {
        (n / 25).max(2)
    }
}

fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] > w[0]).count()
}

impl SplineBasis {
    /// Cubic basis with interior knots at equally spaced quantiles of
    /// `column`. Falls back to a linear basis when the column has fewer than
    /// `n_interior + 2` distinct values.
    ///
    /// # Panics
    /// If `column` is empty or contains non-finite values.
    pub fn build(column: &[f64], n_interior: usize) -> Self {
        assert!(!column.is_empty(), "empty feature column");
        assert!(column.iter().all(|v| v.is_finite()), "non-finite feature value");
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        let range = max - min;
        let pad = if range > 0.0 { 1e-6 * range } else { 0.5 };
        let (lo, hi) = (min - pad, max + pad);
        if n_interior == 0 || distinct_count(&sorted) < n_interior + 2 {
            return Self {
                kind: BasisKind::Linear,
                lo,
                hi,
                knots: Vec::new(),
            };
        }
        let mut knots: Vec<f64> = Vec::with_capacity(n_interior);
        for i in 1..=n_interior {
            let q = quantile_sorted(&sorted, i as f64 / (n_interior + 1) as f64);
            if q > lo && q < hi && knots.last().is_none_or(|&last| q > last) {
                knots.push(q);
            }
        }
        if knots.is_empty() {
            return Self {
                kind: BasisKind::Linear,
                lo,
                hi,
                knots,
            };
        }
        Self {
            kind: BasisKind::Cubic,
            lo,
            hi,
            knots,
        }
    }

    /// Rebuilds a basis from stored parts.
    pub fn from_parts(kind: BasisKind, lo: f64, hi: f64, knots: Vec<f64>) -> Option<Self> {
        if !(hi > lo) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        if knots.iter().any(|&k| k <= lo || k >= hi) {
            return None;
        }
        if kind == BasisKind::Cubic && knots.is_empty() {
            return None;
        }
        Some(Self { kind, lo, hi, knots })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn is_fallback(&self) -> bool {
        self.kind == BasisKind::Linear
    }

    pub fn degree(&self) -> usize {
        match self.kind {
            BasisKind::Cubic => 3,
            BasisKind::Linear => 1,
        }
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        match self.kind {
            BasisKind::Cubic => self.knots.len() + 4,
            BasisKind::Linear => 2,
        }
    }

    fn unit(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }

    /// Full clamped knot vector in unit coordinates.
    fn unit_knots(&self) -> Vec<f64> {
        let mut t = vec![0.0; 4];
        t.extend(self.knots.iter().map(|&k| self.unit(k)));
        t.extend([1.0; 4]);
        t
    }

    /// Greville abscissae (unit coordinates). A coefficient vector that is an
    /// affine function of these reproduces the same affine function of `u`.
    pub fn greville(&self) -> Vec<f64> {
        match self.kind {
            BasisKind::Linear => vec![0.0, 1.0],
            BasisKind::Cubic => {
                let t = self.unit_knots();
                (0..self.n_basis())
                    .map(|l| (t[l + 1] + t[l + 2] + t[l + 3]) / 3.0)
                    .collect()
            }
        }
    }

    /// Writes all basis values at `x` into `out` (length [`n_basis`](Self::n_basis)).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let m = self.n_basis();
        debug_assert_eq!(out.len(), m);
        let u = self.unit(x);
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            BasisKind::Linear => {
                out[0] = 1.0 - u;
                out[1] = u;
            }
            BasisKind::Cubic => {
                let t = self.unit_knots();
                if u < 0.0 {
                    let slope = 3.0 / t[4];
                    out[0] = 1.0 - u * slope;
                    out[1] = u * slope;
                } else if u > 1.0 {
                    let slope = 3.0 / (1.0 - t[m - 1]);
                    out[m - 1] = 1.0 + (u - 1.0) * slope;
                    out[m - 2] = -(u - 1.0) * slope;
                } else {
                    cubic_nonzero(&t, m, u, out);
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_basis());
        self.eval_into(x, out.as_slice_mut().unwrap());
        out
    }

    /// `xs.len() × n_basis` design block.
    pub fn eval_matrix(&self, xs: &[f64]) -> Array2<f64> {
        let m = self.n_basis();
        let mut out = Array2::zeros((xs.len(), m));
        for (i, &x) in xs.iter().enumerate() {
            let mut row = out.row_mut(i);
            self.eval_into(x, row.as_slice_mut().unwrap());
        }
        out
    }

    /// Second-divided-difference penalty `DᵀD` on the coefficients, taken with
    /// respect to the Greville abscissae so that its null space is exactly
    /// the affine functions of `x`. Zero for the linear basis.
    pub fn penalty(&self) -> Array2<f64> {
        let m = self.n_basis();
        let mut s = Array2::zeros((m, m));
        if self.kind == BasisKind::Linear {
            return s;
        }
        let g = self.greville();
        for r in 0..m - 2 {
            let a = 1.0 / (g[r + 1] - g[r]);
            let b = 1.0 / (g[r + 2] - g[r + 1]);
            // normalized so equal spacing gives the familiar (1, -2, 1)
            let scale = 0.5 * (g[r + 2] - g[r]);
            let row = [a * scale, -(a + b) * scale, b * scale];
            for p in 0..3 {
                for q in 0..3 {
                    s[[r + p, r + q]] += row[p] * row[q];
                }
            }
        }
        s
    }
}

/// The four non-zero cubic B-spline values at `u ∈ [0, 1]`.
fn cubic_nonzero(t: &[f64], m: usize, u: f64, out: &mut [f64]) {
    // span s with t[s] <= u < t[s+1], clamped to the last non-empty interval
    let mut s = 3;
    while s < m - 1 && u >= t[s + 1] {
        s += 1;
    }
    let mut n = [0.0; 4];
    let mut left = [0.0; 4];
    let mut right = [0.0; 4];
    n[0] = 1.0;
    for j in 1..=3 {
        left[j] = u - t[s + 1 - j];
        right[j] = t[s + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    for r in 0..4 {
        out[s - 3 + r] = n[r];
    }
}
