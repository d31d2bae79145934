//! Simulated examples and their Bayes rules.
//!
//! Examples are numbered as they appear in the result tables: 1–16 are the
//! low-dimensional examples, 17–24 the high-dimensional ones. `A` and `B`
//! are the two bivariate examples used to illustrate the role of `h`.
//!
//! Every class of every example is a [`Law`] (a finite mixture of
//! [`Dist`]s) with a closed-form density, so the same description drives
//! both the generator and the Bayes rule.

mod dist;

pub use dist::{log_sum_exp, unit_direction, Dist, Law, RadiusLaw, REJECTION_LIMIT};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::linalg;
use crate::seed::{self, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("shell radii must satisfy 0 <= a <= b, got a = {a}, b = {b}")]
    BadInterval { a: f64, b: f64 },
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("rejection sampling gave up after {0} attempts")]
    RejectionLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleId {
    Num(u8),
    A,
    B,
}

impl ExampleId {
    /// The high-dimensional examples (17–24).
    pub fn is_hdlss(self) -> bool {
        matches!(self, ExampleId::Num(n) if n >= 17)
    }

    pub fn n_classes(self) -> usize {
        match self {
            ExampleId::Num(6) | ExampleId::Num(7) => 3,
            ExampleId::Num(9) => 4,
            _ => 2,
        }
    }

    /// Dimension used when none is given.
    pub fn default_d(self) -> usize {
        match self {
            ExampleId::A | ExampleId::B => 2,
            id if id.is_hdlss() => 500,
            _ => 2,
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExampleId::Num(n) => write!(f, "{n}"),
            ExampleId::A => write!(f, "A"),
            ExampleId::B => write!(f, "B"),
        }
    }
}

impl FromStr for ExampleId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(ExampleId::A),
            "B" | "b" => Ok(ExampleId::B),
            t => match t.parse::<u8>() {
                Ok(n) if (1..=24).contains(&n) => Ok(ExampleId::Num(n)),
                _ => Err(SimError::UnknownExample(t.to_string())),
            },
        }
    }
}

/// Example, dimension and per-class sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleSpec {
    pub id: ExampleId,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl ExampleSpec {
    /// Desk-scale sizes: 100 training rows per class; 2000 test rows per
    /// class for two-class low-dimensional examples and 1000 otherwise.
    pub fn new(id: ExampleId, d: usize) -> Self {
        let n_test = match id {
            ExampleId::A | ExampleId::B => 1000,
            id if id.is_hdlss() || id.n_classes() > 2 => 1000,
            _ => 2000,
        };
        Self {
            id,
            d,
            n_train: 100,
            n_test,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.id.n_classes()
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.d == 0 {
            return Err(SimError::BadParameters("d must be positive".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(SimError::BadParameters("sample sizes must be positive".into()));
        }
        if matches!(self.id, ExampleId::A | ExampleId::B) && self.d != 2 {
            return Err(SimError::BadParameters(format!(
                "example {} is bivariate",
                self.id
            )));
        }
        Ok(())
    }
}

fn ones(d: usize) -> Array1<f64> {
    Array1::ones(d)
}

/// `a_i = (-1)^i`, i = 1..d.
pub fn alternating(d: usize) -> Array1<f64> {
    (1..=d).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

fn equicorrelation(d: usize, off: f64) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| if i == j { 1.0 } else { off })
}

fn chol(m: &Array2<f64>) -> Result<Array2<f64>, SimError> {
    linalg::cholesky(m.view())
        .ok_or_else(|| SimError::BadParameters("matrix is not positive definite".into()))
}

fn iso(mean: Array1<f64>, var: f64) -> Dist {
    Dist::IsoNormal { mean, var }
}

fn shell(a: f64, b: f64, d: usize) -> Dist {
    Dist::Shell {
        a,
        b,
        center: Array1::zeros(d),
        chol: None,
    }
}

fn region(a: f64, b: f64, center: Array1<f64>) -> Dist {
    Dist::Shell {
        a,
        b,
        center,
        chol: None,
    }
}

/// `σ²` for the normal radius law of Example 6 (equal `E R²`).
pub fn example6_sigma2() -> f64 {
    100.0 / 3.0 - 30.25
}

/// `c` for the scaled-beta radius law of Example 6 (equal `E R²`).
pub fn example6_c() -> f64 {
    (800.0f64 / 9.0).sqrt()
}

/// Class laws of an example in dimension `d`, in label order.
pub fn class_laws(id: ExampleId, d: usize) -> Result<Vec<Law>, SimError> {
    let z = Array1::<f64>::zeros(d);
    let one = ones(d);
    let a = alternating(d);
    let laws = match id {
        ExampleId::Num(1) | ExampleId::Num(22) => vec![
            Law::equal(vec![shell(0.0, 1.0, d), shell(2.0, 3.0, d)]),
            Law::equal(vec![shell(1.0, 2.0, d), shell(3.0, 4.0, d)]),
        ],
        ExampleId::Num(2) | ExampleId::A => vec![
            Law::single(iso(&one * -0.3, 1.0)),
            Law::single(iso(&one * 0.3, 1.0)),
        ],
        ExampleId::B => {
            let l = chol(&(Array2::eye(2) + 4.0))?;
            let nm = |m: [f64; 2]| Dist::Normal {
                mean: Array1::from(m.to_vec()),
                chol: l.clone(),
            };
            vec![
                Law::equal(vec![nm([1.0, -1.0]), nm([-3.0, 3.0])]),
                Law::equal(vec![nm([-1.0, 1.0]), nm([3.0, -3.0])]),
            ]
        }
        ExampleId::Num(3) => vec![Law::single(iso(z.clone(), 1.0)), Law::single(iso(z, 5.0))],
        ExampleId::Num(4) => {
            let l = chol(&equicorrelation(d, 0.5))?;
            let sh = |a: f64, b: f64| Dist::Shell {
                a,
                b,
                center: Array1::zeros(d),
                chol: Some(l.clone()),
            };
            vec![
                Law::single(sh(1.0, 2.0)),
                Law::equal(vec![sh(0.0, 1.0), sh(2.0, 3.0)]),
            ]
        }
        ExampleId::Num(5) | ExampleId::Num(23) => vec![
            Law::single(iso(z.clone(), 3.0)),
            Law::single(Dist::T {
                df: 3.0,
                loc: z,
                chol: Array2::eye(d),
            }),
        ],
        ExampleId::Num(6) => vec![
            Law::single(Dist::Spherical {
                law: RadiusLaw::Uniform { lo: 0.0, hi: 10.0 },
            }),
            Law::single(Dist::Spherical {
                law: RadiusLaw::Normal {
                    mean: 5.5,
                    sd: example6_sigma2().sqrt(),
                },
            }),
            Law::single(Dist::Spherical {
                law: RadiusLaw::ScaledBeta {
                    c: example6_c(),
                    a: 0.5,
                    b: 0.5,
                },
            }),
        ],
        ExampleId::Num(7) => [0.1, 0.5, 0.9]
            .iter()
            .map(|&r| {
                Ok(Law::single(Dist::Normal {
                    mean: z.clone(),
                    chol: chol(&equicorrelation(d, r))?,
                }))
            })
            .collect::<Result<_, SimError>>()?,
        ExampleId::Num(8) => {
            let l = chol(&equicorrelation(d, 0.1))?;
            vec![
                Law::single(Dist::Normal {
                    mean: z.clone(),
                    chol: l.clone(),
                }),
                Law::single(Dist::T {
                    df: 1.0,
                    loc: z,
                    chol: l,
                }),
            ]
        }
        ExampleId::Num(9) => {
            // Laplace variance 2b² = 0.75
            let b = 0.375f64.sqrt();
            [one.clone(), -&one, a.clone(), -&a]
                .into_iter()
                .map(|loc| Law::single(Dist::LaplaceIid { loc, scale: b }))
                .collect()
        }
        ExampleId::Num(10) => vec![
            Law::single(Dist::ExpIid { mean: 1.0 }),
            Law::single(Dist::ExpIid { mean: 2.0 }),
        ],
        ExampleId::Num(11) => vec![
            Law::equal(vec![iso(one.clone(), 1.0), iso(-&one, 1.0)]),
            Law::equal(vec![iso(a.clone(), 4.0), iso(-&a, 4.0)]),
        ],
        ExampleId::Num(12) => {
            let base = Dist::IidNormalMix {
                means: vec![1.0, -1.0],
                sd: 0.1,
            };
            vec![
                Law::single(base.clone()),
                Law::single(Dist::Rotated45 {
                    inner: Box::new(base),
                }),
            ]
        }
        ExampleId::Num(13) | ExampleId::Num(24) => {
            let mut c = Array1::zeros(d);
            c[0] = 5.0;
            let cls = |c: &Array1<f64>| Law {
                parts: vec![
                    (0.25, region(0.0, 1.0, -c)),
                    (0.5, region(1.0, 2.0, c.clone())),
                    (0.25, region(2.0, 3.0, -c)),
                ],
            };
            vec![cls(&c), cls(&-&c)]
        }
        ExampleId::Num(14) => [true, false]
            .iter()
            .map(|&inside| {
                Law::single(Dist::CubeRegion {
                    half_width: 2.0,
                    lo: 0.5,
                    hi: 2.0,
                    inside,
                })
            })
            .collect(),
        ExampleId::Num(15) => vec![
            Law::single(Dist::ExpIid { mean: 5.0 }),
            Law::equal(vec![Dist::ExpIid { mean: 1.0 }, Dist::ExpIid { mean: 10.0 }]),
        ],
        ExampleId::Num(16) => {
            let lap = |s: f64| Dist::LaplaceIid {
                loc: Array1::zeros(d),
                scale: s,
            };
            vec![Law::single(lap(5.0)), Law::equal(vec![lap(1.0), lap(10.0)])]
        }
        ExampleId::Num(17) => vec![
            Law::single(Dist::Ar1Normal {
                mean: &one * -0.2,
                rho: 0.75,
                var: 1.0,
            }),
            Law::single(Dist::Ar1Normal {
                mean: &one * 0.2,
                rho: 0.75,
                var: 1.0,
            }),
        ],
        ExampleId::Num(18) => vec![
            Law::single(Dist::Ar1Normal {
                mean: z.clone(),
                rho: 0.25,
                var: 1.0,
            }),
            Law::single(Dist::Ar1Normal {
                mean: z,
                rho: 0.25,
                var: 1.5,
            }),
        ],
        ExampleId::Num(19) => vec![
            Law::equal(vec![iso(&one * 0.05, 0.2), iso(&one * -0.05, 0.2)]),
            Law::equal(vec![iso(&a * 0.05, 0.25), iso(&a * -0.05, 0.25)]),
        ],
        ExampleId::Num(20) => vec![
            Law::equal(vec![iso(&one * 0.5, 1.0), iso(&one * -0.5, 4.0)]),
            Law::equal(vec![iso(&a * 0.5, 1.0), iso(&a * -0.5, 4.0)]),
        ],
        ExampleId::Num(21) => {
            let comps: Vec<Dist> = [a.clone(), -&a, one.clone(), -&one]
                .into_iter()
                .map(|m| iso(m, 0.01))
                .collect();
            let rotated = comps
                .iter()
                .map(|c| Dist::Rotated45 {
                    inner: Box::new(c.clone()),
                })
                .collect();
            vec![Law::equal(comps), Law::equal(rotated)]
        }
        other => return Err(SimError::UnknownExample(other.to_string())),
    };
    Ok(laws)
}

fn sample_law(law: &Law, n: usize, d: usize, rng: &mut Rng) -> Result<Array2<f64>, SimError> {
    law.sample_n(n, d, rng)
        .map(|(rows, _)| rows)
        .ok_or(SimError::RejectionLimit(REJECTION_LIMIT))
}

fn draw(
    laws: &[Law],
    n_per_class: usize,
    d: usize,
    seed: u64,
    split: u64,
) -> Result<(Array2<f64>, Vec<usize>), SimError> {
    let j = laws.len();
    let mut rows = Array2::zeros((n_per_class * j, d));
    let mut labels = Vec::with_capacity(n_per_class * j);
    for (c, law) in laws.iter().enumerate() {
        let mut rng = seed::rng_from(seed, "simgen", &[split, c as u64]);
        let block = sample_law(law, n_per_class, d, &mut rng)?;
        rows.slice_mut(ndarray::s![c * n_per_class..(c + 1) * n_per_class, ..])
            .assign(&block);
        labels.extend(std::iter::repeat_n(c + 1, n_per_class));
    }
    Ok((rows, labels))
}

/// Balanced training and test sets for `spec`. Rows are grouped by class.
pub fn gen_example(spec: &ExampleSpec, seed: u64) -> Result<(Dataset, Dataset), SimError> {
    spec.validate()?;
    let laws = class_laws(spec.id, spec.d)?;
    let mut out = Vec::with_capacity(2);
    for (split, n) in [(0u64, spec.n_train), (1, spec.n_test)] {
        let (rows, labels) = draw(&laws, n, spec.d, seed, split)?;
        let mut ds = Dataset::with_classes(rows, labels, laws.len())
            .expect("generated labels are valid");
        ds.meta.example_id = Some(spec.id.to_string());
        ds.meta.seed = Some(seed);
        out.push(ds);
    }
    let test = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, test))
}

fn rng_for(seed: u64, what: &str) -> Rng {
    seed::rng_from(seed, what, &[])
}

/// Uniform draws from `{x : a ≤ ‖Σ^{1/2} x‖ ≤ b}` (`Σ = I` if `sigma` is `None`).
pub fn gen_uniform_shell(
    n: usize,
    d: usize,
    a: f64,
    b: f64,
    sigma: Option<&Array2<f64>>,
    seed: u64,
) -> Result<Array2<f64>, SimError> {
    if !(a >= 0.0 && b >= a && b.is_finite()) {
        return Err(SimError::BadInterval { a, b });
    }
    let chol = match sigma {
        Some(s) => Some(chol(s)?),
        None => None,
    };
    let dist = Dist::Shell {
        a,
        b,
        center: Array1::zeros(d),
        chol,
    };
    sample_law(&Law::single(dist), n, d, &mut rng_for(seed, "shell"))
}

pub fn gen_mvnormal(
    n: usize,
    mean: &Array1<f64>,
    cov: &Array2<f64>,
    seed: u64,
) -> Result<Array2<f64>, SimError> {
    let dist = Dist::Normal {
        mean: mean.clone(),
        chol: chol(cov)?,
    };
    sample_law(&Law::single(dist), n, mean.len(), &mut rng_for(seed, "normal"))
}

pub fn gen_mvt(
    n: usize,
    df: f64,
    loc: &Array1<f64>,
    scatter: &Array2<f64>,
    seed: u64,
) -> Result<Array2<f64>, SimError> {
    if !(df > 0.0) {
        return Err(SimError::BadParameters(format!("df must be positive, got {df}")));
    }
    let dist = Dist::T {
        df,
        loc: loc.clone(),
        chol: chol(scatter)?,
    };
    sample_law(&Law::single(dist), n, loc.len(), &mut rng_for(seed, "t"))
}

pub fn gen_cauchy(
    n: usize,
    loc: &Array1<f64>,
    scatter: &Array2<f64>,
    seed: u64,
) -> Result<Array2<f64>, SimError> {
    gen_mvt(n, 1.0, loc, scatter, seed)
}

pub fn gen_laplace_iid(
    n: usize,
    d: usize,
    loc: &Array1<f64>,
    scale: f64,
    seed: u64,
) -> Result<Array2<f64>, SimError> {
    if !(scale > 0.0) || loc.len() != d {
        return Err(SimError::BadParameters("Laplace needs scale > 0 and d locations".into()));
    }
    let dist = Dist::LaplaceIid {
        loc: loc.clone(),
        scale,
    };
    sample_law(&Law::single(dist), n, d, &mut rng_for(seed, "laplace"))
}

pub fn gen_exponential_iid(n: usize, d: usize, mean: f64, seed: u64) -> Result<Array2<f64>, SimError> {
    if !(mean > 0.0) {
        return Err(SimError::BadParameters(format!("mean must be positive, got {mean}")));
    }
    sample_law(&Law::single(Dist::ExpIid { mean }), n, d, &mut rng_for(seed, "exp"))
}

pub fn gen_spherical_radius(
    n: usize,
    d: usize,
    law: &RadiusLaw,
    seed: u64,
) -> Result<Array2<f64>, SimError> {
    let dist = Dist::Spherical { law: law.clone() };
    sample_law(&Law::single(dist), n, d, &mut rng_for(seed, "spherical"))
}

/// `argmax_j π_j f_j(x)` with equal priors.
#[derive(Debug, Clone)]
pub struct BayesRule {
    laws: Vec<Law>,
    log_priors: Vec<f64>,
}

impl BayesRule {
    pub fn new(laws: Vec<Law>, priors: &[f64]) -> Self {
        assert_eq!(laws.len(), priors.len());
        Self {
            laws,
            log_priors: priors.iter().map(|p| p.ln()).collect(),
        }
    }

    /// Label `1..=J`; ties (including points outside every support) go to the
    /// lowest label.
    pub fn classify(&self, x: &Array1<f64>) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (j, law) in self.laws.iter().enumerate() {
            let v = self.log_priors[j] + law.ln_density(x);
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        best + 1
    }

    pub fn classify_rows(&self, rows: ArrayView2<f64>) -> Vec<usize> {
        rows.outer_iter().map(|r| self.classify(&r.to_owned())).collect()
    }

    pub fn error_rate(&self, data: &Dataset) -> f64 {
        let pred = self.classify_rows(data.rows());
        misclassification(&pred, data.labels())
    }
}

/// The Bayes rule for balanced classes of an example.
pub fn bayes_oracle(id: ExampleId, d: usize) -> Result<BayesRule, SimError> {
    let laws = class_laws(id, d)?;
    let j = laws.len();
    Ok(BayesRule::new(laws, &vec![1.0 / j as f64; j]))
}

/// Fraction of positions where `pred` and `truth` differ.
pub fn misclassification(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / pred.len() as f64
}
