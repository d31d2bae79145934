//! Distribution building blocks with samplers and log-densities.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Beta, ChiSquared, Distribution, Exp, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::linalg;
use crate::seed::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Law of the radius of a spherical distribution. The radius may be signed
/// (a signed radius times a uniform direction is still spherical).
#[derive(Debug, Clone, PartialEq)]
pub enum RadiusLaw {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    /// `c·Y` with `Y ~ Beta(a, b)`.
    ScaledBeta { c: f64, a: f64, b: f64 },
    Constant(f64),
}

impl RadiusLaw {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            RadiusLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
            RadiusLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            RadiusLaw::ScaledBeta { c, a, b } => c * Beta::new(a, b).expect("valid beta").sample(rng),
            RadiusLaw::Constant(r) => r,
        }
    }

    /// Log-density of `|R|` at `r ≥ 0`.
    pub fn ln_abs_density(&self, r: f64) -> f64 {
        match *self {
            RadiusLaw::Uniform { lo, hi } => {
                // |R| for R ~ U(lo, hi) with lo ≥ 0
                if r >= lo && r <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            RadiusLaw::Normal { mean, sd } => {
                let z1 = (r - mean) / sd;
                let z2 = (-r - mean) / sd;
                let a = -0.5 * z1 * z1;
                let b = -0.5 * z2 * z2;
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln() - 0.5 * LN_2PI - sd.ln()
            }
            RadiusLaw::ScaledBeta { c, a, b } => {
                let y = r / c;
                if !(y > 0.0 && y < 1.0) {
                    return f64::NEG_INFINITY;
                }
                let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
                (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln() - ln_b - c.ln()
            }
            RadiusLaw::Constant(_) => f64::NEG_INFINITY,
        }
    }
}

/// A `d`-variate distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    /// `N(mean, LLᵀ)`.
    Normal { mean: Array1<f64>, chol: Array2<f64> },
    IsoNormal { mean: Array1<f64>, var: f64 },
    /// Normal with covariance `var·((ρ^|i-j|))`.
    Ar1Normal { mean: Array1<f64>, rho: f64, var: f64 },
    /// Multivariate t with scatter `LLᵀ`.
    T { df: f64, loc: Array1<f64>, chol: Array2<f64> },
    /// Uniform on `{x : a ≤ ‖Lᵀ(x - center)‖ ≤ b}` (`L = I` when `chol` is `None`).
    Shell {
        a: f64,
        b: f64,
        center: Array1<f64>,
        chol: Option<Array2<f64>>,
    },
    LaplaceIid { loc: Array1<f64>, scale: f64 },
    ExpIid { mean: f64 },
    Spherical { law: RadiusLaw },
    /// i.i.d. coordinates, each an equal mixture of `N(m, sd²)` over `means`.
    IidNormalMix { means: Vec<f64>, sd: f64 },
    /// `inner` rotated by 45° in each coordinate pair (1,2), (3,4), ….
    Rotated45 { inner: Box<Dist> },
    /// Uniform on the part of `[-w, w]^d` where `lo < Π|x_i| < hi` holds
    /// (`inside`) or fails (`!inside`).
    CubeRegion { half_width: f64, lo: f64, hi: f64, inside: bool },
}

pub fn unit_direction(d: usize, rng: &mut Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

fn std_normals(d: usize, rng: &mut Rng) -> Array1<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Radius with density `∝ r^{d-1}` on `[a, b]`.
fn shell_radius(d: usize, a: f64, b: f64, rng: &mut Rng) -> f64 {
    if a >= b {
        return a;
    }
    let u: f64 = rng.random();
    let rho_d = (a / b).powi(d as i32);
    b * (rho_d + u * (1.0 - rho_d)).powf(1.0 / d as f64)
}

fn ln_unit_ball_volume(d: usize) -> f64 {
    0.5 * d as f64 * PI.ln() - ln_gamma(d as f64 / 2.0 + 1.0)
}

fn rotate45(x: &mut Array1<f64>, inverse: bool) {
    let d = x.len();
    let mut i = 0;
    while i + 1 < d {
        let (a, b) = (x[i], x[i + 1]);
        if inverse {
            x[i] = FRAC_1_SQRT_2 * (a + b);
            x[i + 1] = FRAC_1_SQRT_2 * (b - a);
        } else {
            x[i] = FRAC_1_SQRT_2 * (a - b);
            x[i + 1] = FRAC_1_SQRT_2 * (a + b);
        }
        i += 2;
    }
}

fn cube_member(x: &[f64], half_width: f64, lo: f64, hi: f64) -> (bool, bool) {
    let in_cube = x.iter().all(|v| v.abs() <= half_width);
    let prod: f64 = x.iter().map(|v| v.abs()).product();
    (in_cube, lo < prod && prod < hi)
}

/// Rejection attempts allowed per draw from a [`Dist::CubeRegion`].
pub const REJECTION_LIMIT: usize = 1_000_000;

impl Dist {
    /// One draw; `None` only if rejection sampling gave up.
    pub fn sample(&self, d: usize, rng: &mut Rng) -> Option<Array1<f64>> {
        Some(match self {
            Dist::Normal { mean, chol } => mean + &chol.dot(&std_normals(d, rng)),
            Dist::IsoNormal { mean, var } => mean + &(std_normals(d, rng) * var.sqrt()),
            Dist::Ar1Normal { mean, rho, var } => {
                let z = std_normals(d, rng);
                let mut x = Array1::zeros(d);
                let innov = (1.0 - rho * rho).sqrt();
                for i in 0..d {
                    x[i] = if i == 0 { z[0] } else { rho * x[i - 1] + innov * z[i] };
                }
                mean + &(x * var.sqrt())
            }
            Dist::T { df, loc, chol } => {
                let z = chol.dot(&std_normals(d, rng));
                let w: f64 = ChiSquared::new(*df).expect("positive df").sample(rng);
                loc + &(z / (w / df).sqrt())
            }
            Dist::Shell { a, b, center, chol } => {
                let y = unit_direction(d, rng) * shell_radius(d, *a, *b, rng);
                let x = match chol {
                    None => y,
                    Some(l) => {
                        let mut x = y;
                        linalg::backward_substitute(l.view(), &mut x);
                        x
                    }
                };
                center + &x
            }
            Dist::LaplaceIid { loc, scale } => {
                let x: Array1<f64> = (0..d)
                    .map(|_| {
                        let u: f64 = rng.random::<f64>() - 0.5;
                        -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                    })
                    .collect();
                loc + &x
            }
            Dist::ExpIid { mean } => {
                let e = Exp::new(1.0 / mean).expect("positive mean");
                (0..d).map(|_| e.sample(rng)).collect()
            }
            Dist::Spherical { law } => unit_direction(d, rng) * law.sample(rng),
            Dist::IidNormalMix { means, sd } => (0..d)
                .map(|_| {
                    let m = means[rng.random_range(0..means.len())];
                    let z: f64 = StandardNormal.sample(rng);
                    m + sd * z
                })
                .collect(),
            Dist::Rotated45 { inner } => {
                let mut x = inner.sample(d, rng)?;
                rotate45(&mut x, false);
                x
            }
            Dist::CubeRegion {
                half_width,
                lo,
                hi,
                inside,
            } => {
                for _ in 0..REJECTION_LIMIT {
                    let x: Array1<f64> =
                        (0..d).map(|_| rng.random_range(-*half_width..*half_width)).collect();
                    let (_, member) = cube_member(x.as_slice().unwrap(), *half_width, *lo, *hi);
                    if member == *inside {
                        return Some(x);
                    }
                }
                return None;
            }
        })
    }

    /// Log-density at `x` (up to a constant only for [`Dist::CubeRegion`]).
    pub fn ln_density(&self, x: &Array1<f64>) -> f64 {
        let d = x.len();
        let df = d as f64;
        match self {
            Dist::Normal { mean, chol } => {
                let mut z = x - mean;
                linalg::forward_substitute(chol.view(), &mut z);
                let half_log_det: f64 = chol.diag().iter().map(|v| v.ln()).sum();
                -0.5 * z.dot(&z) - half_log_det - 0.5 * df * LN_2PI
            }
            Dist::IsoNormal { mean, var } => {
                let z = x - mean;
                -0.5 * z.dot(&z) / var - 0.5 * df * (LN_2PI + var.ln())
            }
            Dist::Ar1Normal { mean, rho, var } => {
                let z = (x - mean) / var.sqrt();
                let s = (1.0 - rho * rho).sqrt();
                let mut q = z[0] * z[0];
                for i in 1..d {
                    let e = (z[i] - rho * z[i - 1]) / s;
                    q += e * e;
                }
                -0.5 * q - 0.5 * df * (LN_2PI + var.ln()) - (df - 1.0) * s.ln()
            }
            Dist::T { df: nu, loc, chol } => {
                let mut z = x - loc;
                linalg::forward_substitute(chol.view(), &mut z);
                let half_log_det: f64 = chol.diag().iter().map(|v| v.ln()).sum();
                ln_gamma((nu + df) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * df * (nu * PI).ln()
                    - half_log_det
                    - 0.5 * (nu + df) * (1.0 + z.dot(&z) / nu).ln()
            }
            Dist::Shell { a, b, center, chol } => {
                let diff = x - center;
                let (y, ln_jac) = match chol {
                    None => (diff, 0.0),
                    Some(l) => (l.t().dot(&diff), l.diag().iter().map(|v| v.ln()).sum()),
                };
                let r = y.dot(&y).sqrt();
                if r < *a || r > *b {
                    return f64::NEG_INFINITY;
                }
                let ln_vol = ln_unit_ball_volume(d) + df * b.ln() + (1.0 - (a / b).powi(d as i32)).ln();
                ln_jac - ln_vol
            }
            Dist::LaplaceIid { loc, scale } => {
                let s: f64 = (x - loc).iter().map(|v| v.abs()).sum();
                -df * (2.0 * scale).ln() - s / scale
            }
            Dist::ExpIid { mean } => {
                if x.iter().any(|&v| v < 0.0) {
                    return f64::NEG_INFINITY;
                }
                -df * mean.ln() - x.sum() / mean
            }
            Dist::Spherical { law } => {
                let r = x.dot(x).sqrt();
                // surface area of the unit sphere: 2π^{d/2}/Γ(d/2)
                let ln_area = 2f64.ln() + 0.5 * df * PI.ln() - ln_gamma(df / 2.0);
                law.ln_abs_density(r) - ln_area - (df - 1.0) * r.ln()
            }
            Dist::IidNormalMix { means, sd } => {
                let k = means.len() as f64;
                x.iter()
                    .map(|&v| {
                        let terms: Vec<f64> = means
                            .iter()
                            .map(|m| {
                                let z = (v - m) / sd;
                                -0.5 * z * z
                            })
                            .collect();
                        log_sum_exp(&terms) - k.ln() - 0.5 * LN_2PI - sd.ln()
                    })
                    .sum()
            }
            Dist::Rotated45 { inner } => {
                let mut y = x.clone();
                rotate45(&mut y, true);
                inner.ln_density(&y)
            }
            Dist::CubeRegion {
                half_width,
                lo,
                hi,
                inside,
            } => {
                let (in_cube, member) = cube_member(x.as_slice().unwrap(), *half_width, *lo, *hi);
                if in_cube && member == *inside {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Finite mixture of [`Dist`]s; component labels are drawn independently per
/// row, so component counts are multinomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Law {
    pub parts: Vec<(f64, Dist)>,
}

impl Law {
    pub fn single(d: Dist) -> Self {
        Self {
            parts: vec![(1.0, d)],
        }
    }

    pub fn equal(parts: Vec<Dist>) -> Self {
        let w = 1.0 / parts.len() as f64;
        Self {
            parts: parts.into_iter().map(|p| (w, p)).collect(),
        }
    }

    fn pick(&self, rng: &mut Rng) -> usize {
        if self.parts.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, (w, _)) in self.parts.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.parts.len() - 1
    }

    /// `n` draws as rows, plus the component index of each row.
    pub fn sample_n(&self, n: usize, d: usize, rng: &mut Rng) -> Option<(Array2<f64>, Vec<usize>)> {
        let mut out = Array2::zeros((n, d));
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let c = self.pick(rng);
            comps.push(c);
            out.row_mut(i).assign(&self.parts[c].1.sample(d, rng)?);
        }
        Some((out, comps))
    }

    pub fn ln_density(&self, x: &Array1<f64>) -> f64 {
        let terms: Vec<f64> = self
            .parts
            .iter()
            .map(|(w, p)| w.ln() + p.ln_density(x))
            .collect();
        log_sum_exp(&terms)
    }
}
