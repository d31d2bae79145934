//! Textual model format.

use ndarray::Array1;

use super::{BasisKind, Convergence, GamError, GamModel, SplineBasis};
use crate::features::FeatureKind;
use crate::textfmt::{fmt_f64, KvDoc, KvWriter, TextError};

pub(crate) const HEADER: &str = "mdgam-gam 1";

pub fn encode_kind(kind: FeatureKind) -> String {
    match kind {
        FeatureKind::Md => "md".into(),
        FeatureKind::MdSquaredScaled => "md2d".into(),
        FeatureKind::Lmd { h } => format!("lmd {}", fmt_f64(h)),
        FeatureKind::LmdScaled { h } => format!("lmd2d {}", fmt_f64(h)),
    }
}

pub fn decode_kind(s: &str) -> Option<FeatureKind> {
    let mut parts = s.split_whitespace();
    match (parts.next()?, parts.next(), parts.next()) {
        ("md", None, _) => Some(FeatureKind::Md),
        ("md2d", None, _) => Some(FeatureKind::MdSquaredScaled),
        ("lmd", Some(h), None) => h.parse().ok().map(|h| FeatureKind::Lmd { h }),
        ("lmd2d", Some(h), None) => h.parse().ok().map(|h| FeatureKind::LmdScaled { h }),
        _ => None,
    }
}

fn bad(key: &str, message: &str) -> GamError {
    GamError::Format(TextError::BadValue {
        key: key.into(),
        message: message.into(),
    })
}

impl GamModel {
    /// Writes the model entries under `prefix` (used when embedding).
    pub fn write_entries(&self, w: &mut KvWriter, prefix: &str) {
        w.usize(&format!("{prefix}n_classes"), self.n_classes);
        w.str(&format!("{prefix}feature_kind"), &encode_kind(self.feature_kind));
        w.f64(&format!("{prefix}lambda"), self.lambda);
        for (k, (b, z)) in self.bases.iter().zip(&self.constraints).enumerate() {
            let kind = match b.kind() {
                BasisKind::Cubic => "cubic",
                BasisKind::Linear => "linear",
            };
            let (lo, hi) = b.boundary();
            w.str(&format!("{prefix}basis.{k}.kind"), kind);
            w.vec(&format!("{prefix}basis.{k}.boundary"), &[lo, hi]);
            w.vec(&format!("{prefix}basis.{k}.knots"), b.knots());
            w.matrix(&format!("{prefix}basis.{k}.constraint"), z);
        }
        w.matrix(&format!("{prefix}coefficients"), &self.coefficients);
        w.vec(&format!("{prefix}prior_shift"), self.prior_shift.as_slice().unwrap());
        let c = &self.convergence;
        w.usize(&format!("{prefix}iterations"), c.iterations);
        w.f64(&format!("{prefix}deviance"), c.deviance);
        w.f64(&format!("{prefix}penalized_deviance"), c.penalized_deviance);
        w.usize(&format!("{prefix}converged"), c.converged as usize);
        w.usize(&format!("{prefix}separated"), c.separated as usize);
        w.usizes(&format!("{prefix}fallback_columns"), &c.fallback_columns);
    }

    pub fn read_entries(doc: &KvDoc, prefix: &str) -> Result<Self, GamError> {
        let key = |s: &str| format!("{prefix}{s}");
        let n_classes = doc.usize(&key("n_classes"))?;
        if n_classes < 2 {
            return Err(bad(&key("n_classes"), "need at least two classes"));
        }
        let kind_key = key("feature_kind");
        let feature_kind =
            decode_kind(doc.str(&kind_key)?).ok_or_else(|| bad(&kind_key, "unknown kind"))?;
        let lambda = doc.f64(&key("lambda"))?;
        let mut bases = Vec::with_capacity(n_classes);
        let mut constraints = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let kk = key(&format!("basis.{k}.kind"));
            let kind = match doc.str(&kk)? {
                "cubic" => BasisKind::Cubic,
                "linear" => BasisKind::Linear,
                _ => return Err(bad(&kk, "unknown basis kind")),
            };
            let bk = key(&format!("basis.{k}.boundary"));
            let bnd = doc.vec(&bk)?;
            if bnd.len() != 2 {
                return Err(bad(&bk, "expected two values"));
            }
            let knots = doc.vec(&key(&format!("basis.{k}.knots")))?;
            let b = SplineBasis::from_parts(kind, bnd[0], bnd[1], knots)
                .ok_or_else(|| bad(&bk, "inconsistent basis"))?;
            let ck = key(&format!("basis.{k}.constraint"));
            let z = doc.matrix(&ck)?;
            if z.nrows() != b.n_basis() || z.ncols() + 1 != b.n_basis() {
                return Err(bad(&ck, "constraint shape does not match basis"));
            }
            bases.push(b);
            constraints.push(z);
        }
        let coef_key = key("coefficients");
        let coefficients = doc.matrix(&coef_key)?;
        let p = 1 + constraints.iter().map(|z| z.ncols()).sum::<usize>();
        if coefficients.nrows() != n_classes - 1 || coefficients.ncols() != p {
            return Err(bad(&coef_key, "coefficient shape does not match bases"));
        }
        let shift_key = key("prior_shift");
        let prior_shift = Array1::from(doc.vec(&shift_key)?);
        if prior_shift.len() != n_classes - 1 {
            return Err(bad(&shift_key, "wrong length"));
        }
        let convergence = Convergence {
            iterations: doc.usize(&key("iterations"))?,
            deviance: doc.f64(&key("deviance"))?,
            penalized_deviance: doc.f64(&key("penalized_deviance"))?,
            converged: doc.usize(&key("converged"))? != 0,
            separated: doc.usize(&key("separated"))? != 0,
            trace: Vec::new(),
            gcv: Vec::new(),
            fallback_columns: doc.usizes(&key("fallback_columns"))?,
        };
        Ok(GamModel {
            n_classes,
            feature_kind,
            bases,
            constraints,
            coefficients,
            prior_shift,
            lambda,
            convergence,
        })
    }

    /// Serializes the model as a standalone text document.
    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new(HEADER);
        self.write_entries(&mut w, "");
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<Self, GamError> {
        let doc = KvDoc::parse(text)?;
        doc.expect_header(HEADER)?;
        Self::read_entries(&doc, "")
    }
}
