//! Flat `key = value` text documents used for model files.
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly. Vectors are space-separated; matrices are written as
//! `rows cols v11 v12 ...` in row-major order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("unsupported header `{0}`")]
    Header(String),
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Ordered writer; keys are emitted in insertion order.
#[derive(Debug, Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new(header: &str) -> Self {
        Self {
            out: format!("{header}\n"),
        }
    }

    pub fn str(&mut self, key: &str, value: &str) {
        let _ = writeln!(self.out, "{key} = {value}");
    }

    pub fn usize(&mut self, key: &str, value: usize) {
        self.str(key, &value.to_string());
    }

    pub fn f64(&mut self, key: &str, value: f64) {
        self.str(key, &fmt_f64(value));
    }

    pub fn vec(&mut self, key: &str, values: &[f64]) {
        let s: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        self.str(key, &s.join(" "));
    }

    pub fn usizes(&mut self, key: &str, values: &[usize]) {
        let s: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.str(key, &s.join(" "));
    }

    pub fn matrix(&mut self, key: &str, m: &Array2<f64>) {
        let mut s = format!("{} {}", m.nrows(), m.ncols());
        for v in m.iter() {
            s.push(' ');
            s.push_str(&fmt_f64(*v));
        }
        self.str(key, &s);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Parsed document.
#[derive(Debug, Clone)]
pub struct KvDoc {
    header: String,
    entries: BTreeMap<String, String>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        let header = lines
            .next()
            .map(|(_, l)| l.trim().to_string())
            .unwrap_or_default();
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or(TextError::Malformed { line: i + 1 })?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(TextError::Malformed { line: i + 1 });
            }
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(TextError::Duplicate(k));
            }
        }
        Ok(Self { header, entries })
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn expect_header(&self, want: &str) -> Result<(), TextError> {
        if self.header != want {
            return Err(TextError::Header(self.header.clone()));
        }
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Result<&str, TextError> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| TextError::Missing(key.to_string()))
    }

    fn bad(key: &str, message: impl Into<String>) -> TextError {
        TextError::BadValue {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, TextError> {
        self.str(key)?
            .parse()
            .map_err(|e: std::num::ParseIntError| Self::bad(key, e.to_string()))
    }

    pub fn f64(&self, key: &str) -> Result<f64, TextError> {
        self.str(key)?
            .parse()
            .map_err(|e: std::num::ParseFloatError| Self::bad(key, e.to_string()))
    }

    pub fn vec(&self, key: &str) -> Result<Vec<f64>, TextError> {
        self.str(key)?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Self::bad(key, format!("bad number `{t}`"))))
            .collect()
    }

    pub fn array1(&self, key: &str) -> Result<Array1<f64>, TextError> {
        self.vec(key).map(Array1::from)
    }

    pub fn usizes(&self, key: &str) -> Result<Vec<usize>, TextError> {
        self.str(key)?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Self::bad(key, format!("bad integer `{t}`"))))
            .collect()
    }

    pub fn matrix(&self, key: &str) -> Result<Array2<f64>, TextError> {
        let v = self.vec(key)?;
        if v.len() < 2 {
            return Err(Self::bad(key, "missing matrix shape"));
        }
        let (r, c) = (v[0] as usize, v[1] as usize);
        if v[0] != r as f64 || v[1] != c as f64 || v.len() != 2 + r * c {
            return Err(Self::bad(key, "matrix shape does not match entry count"));
        }
        Array2::from_shape_vec((r, c), v[2..].to_vec()).map_err(|e| Self::bad(key, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE];
        let m = array![[1.0 / 7.0, 2.0], [3.0, -0.0]];
        let mut w = KvWriter::new("test 1");
        w.vec("v", &vals);
        w.matrix("m", &m);
        w.usize("n", 42);
        w.str("name", "lmd");
        let doc = KvDoc::parse(&w.finish()).unwrap();
        doc.expect_header("test 1").unwrap();
        let back = doc.vec("v").unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(doc.matrix("m").unwrap(), m);
        assert_eq!(doc.usize("n").unwrap(), 42);
        assert_eq!(doc.str("name").unwrap(), "lmd");
        assert!(matches!(doc.f64("nope"), Err(TextError::Missing(_))));
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KvDoc::parse("h\na = 1\na = 2\n"),
            Err(TextError::Duplicate(_))
        ));
        assert!(matches!(
            KvDoc::parse("h\njunk\n"),
            Err(TextError::Malformed { line: 2 })
        ));
    }
}
