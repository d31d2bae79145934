//! Small dense linear-algebra kernels used by the estimators and the GAM solver.
//!
//! Everything here works on symmetric positive-definite systems of modest size
//! (at most a few hundred rows), so plain Cholesky is all we need.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Returns `None` when a pivot is not strictly positive (or not finite).
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L y = b` in place.
pub fn forward_substitute(l: ArrayView2<f64>, b: &mut Array1<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solves `Lᵀ x = y` in place.
pub fn backward_substitute(l: ArrayView2<f64>, y: &mut Array1<f64>) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let mut x = b.to_owned();
    forward_substitute(l, &mut x);
    backward_substitute(l, &mut x);
    x
}

/// Inverse of a lower-triangular matrix (also lower triangular).
pub fn lower_triangular_inverse(l: ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        inv[[j, j]] = 1.0 / l[[j, j]];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[[i, k]] * inv[[k, j]];
            }
            inv[[i, j]] = s / l[[i, i]];
        }
    }
    inv
}

/// `A⁻¹` from the Cholesky factor of `A`, symmetrized.
pub fn cholesky_inverse(l: ArrayView2<f64>) -> Array2<f64> {
    let linv = lower_triangular_inverse(l);
    let mut inv = linv.t().dot(&linv);
    symmetrize(&mut inv);
    inv
}

/// Cholesky factor of `A + λI`, with `λ = 0` if `A` factors as is, otherwise
/// starting at `1e-10·trace/n` and doubling. Returns `(L, λ)`.
pub fn cholesky_ridged(a: ArrayView2<f64>) -> Option<(Array2<f64>, f64)> {
    if let Some(l) = cholesky(a) {
        return Some((l, 0.0));
    }
    let n = a.nrows();
    let trace = a.diag().iter().map(|v| v.abs()).sum::<f64>();
    let mut ridge = if trace > 0.0 && trace.is_finite() {
        1e-10 * trace / n as f64
    } else {
        1e-10
    };
    for _ in 0..200 {
        let mut b = a.to_owned();
        b.diag_mut().mapv_inplace(|v| v + ridge);
        if let Some(l) = cholesky(b.view()) {
            return Some((l, ridge));
        }
        ridge *= 2.0;
    }
    None
}

/// `ln |A|` from the Cholesky factor of `A`.
pub fn cholesky_log_det(l: ArrayView2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

/// Largest `|a_ij - a_ji|` relative to the largest absolute entry.
pub fn asymmetry(a: ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst / scale
}

/// Trace of `A⁻¹ B` for SPD `A` given by its Cholesky factor.
pub fn trace_solve(l: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let n = l.nrows();
    let mut tr = 0.0;
    for j in 0..n {
        let col = cholesky_solve(l, b.column(j));
        tr += col[j];
    }
    tr
}

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 || !saa.is_finite() || !sbb.is_finite() {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}
