//! Classifier manifest: configuration, diagnostics, per-class scatter models
//! and retained rows, followed by the embedded additive model.

use super::{
    BootstrapParams, ClassifierError, Diagnostics, FeatureChoice, FittedClassifier, GridParams,
    Result, ScatterChoice, TrainConfig,
};
use crate::estimators::{McdOptions, ScatterMode, ScatterModel};
use crate::gam::{decode_kind, encode_kind, GamModel, GamOptions};
use crate::textfmt::{KvDoc, KvWriter, TextError};

const HEADER: &str = "mdgam-classifier 1";

fn bad(key: &str, message: &str) -> ClassifierError {
    ClassifierError::Format(TextError::BadValue {
        key: key.into(),
        message: message.into(),
    })
}

fn mode_from(doc: &KvDoc, key: &str) -> Result<ScatterMode> {
    ScatterMode::parse(doc.str(key)?).ok_or_else(|| bad(key, "unknown scatter mode"))
}

impl FittedClassifier {
    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new(HEADER);
        let c = &self.config;
        w.usize("n_classes", self.n_classes());
        w.usize("d", self.dim());
        w.str("scatter_mode", self.scatter_mode().name());
        w.str("feature_kind", &encode_kind(self.feature_kind));
        w.str("config.scatter", c.scatter.name());
        w.str("config.feature", c.feature.name());
        w.f64("config.grid.percentile", c.grid.percentile);
        w.f64("config.grid.shrink", c.grid.shrink);
        w.f64("config.grid.k0", c.grid.k0);
        w.f64("config.grid.r_stop", c.grid.r_stop);
        w.usize("config.grid.max_points", c.grid.max_points);
        w.usize("config.bootstrap.b", c.bootstrap.b);
        w.str("config.bootstrap.seed", &c.bootstrap.seed.to_string());
        w.usize("config.hdlss_b", c.hdlss_b);
        w.f64("config.mcd.coverage", c.mcd.coverage);
        w.usize("config.mcd.n_starts", c.mcd.n_starts);
        w.usize("config.mcd.max_c_steps", c.mcd.max_c_steps);
        w.usize("config.gam.n_interior_knots", c.gam.n_interior_knots.unwrap_or(0));
        w.vec("config.gam.lambda_grid", &c.gam.lambda_grid);
        w.usize("config.gam.max_iter", c.gam.max_iter);
        w.f64("config.gam.tol", c.gam.tol);
        w.f64("config.gam.coef_bound", c.gam.coef_bound);
        let dg = &self.diagnostics;
        w.vec("diag.h_grid", &dg.h_grid);
        w.vec("diag.bootstrap_errors", &dg.bootstrap_errors);
        w.usize("diag.skipped_resamples", dg.skipped_resamples);
        w.usize("diag.degenerate_grid", dg.degenerate_grid as usize);
        let modes: Vec<&str> = dg.mode_errors.iter().map(|(m, _)| m.name()).collect();
        w.str("diag.mode_names", &modes.join(" "));
        let errs: Vec<f64> = dg.mode_errors.iter().map(|(_, e)| *e).collect();
        w.vec("diag.mode_errors", &errs);
        for (j, (m, rows)) in self.models.iter().zip(&self.class_rows).enumerate() {
            w.vec(&format!("class.{j}.location"), m.location.as_slice().expect("contiguous"));
            w.matrix(&format!("class.{j}.scatter"), &m.scatter);
            w.matrix(&format!("class.{j}.rows"), rows);
        }
        self.gam.write_entries(&mut w, "gam.");
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        doc.expect_header(HEADER)?;
        let n_classes = doc.usize("n_classes")?;
        let d = doc.usize("d")?;
        if n_classes < 2 || d == 0 {
            return Err(bad("n_classes", "need two classes and d ≥ 1"));
        }
        let mode = mode_from(&doc, "scatter_mode")?;
        let feature_kind =
            decode_kind(doc.str("feature_kind")?).ok_or_else(|| bad("feature_kind", "unknown kind"))?;
        let knots = doc.usize("config.gam.n_interior_knots")?;
        let config = TrainConfig {
            scatter: ScatterChoice::parse(doc.str("config.scatter")?)
                .ok_or_else(|| bad("config.scatter", "unknown choice"))?,
            feature: FeatureChoice::parse(doc.str("config.feature")?)
                .ok_or_else(|| bad("config.feature", "unknown feature"))?,
            grid: GridParams {
                percentile: doc.f64("config.grid.percentile")?,
                shrink: doc.f64("config.grid.shrink")?,
                k0: doc.f64("config.grid.k0")?,
                r_stop: doc.f64("config.grid.r_stop")?,
                max_points: doc.usize("config.grid.max_points")?,
            },
            bootstrap: BootstrapParams {
                b: doc.usize("config.bootstrap.b")?,
                seed: doc
                    .str("config.bootstrap.seed")?
                    .parse()
                    .map_err(|_| bad("config.bootstrap.seed", "not an integer"))?,
            },
            hdlss_b: doc.usize("config.hdlss_b")?,
            gam: GamOptions {
                n_interior_knots: (knots > 0).then_some(knots),
                lambda_grid: doc.vec("config.gam.lambda_grid")?,
                max_iter: doc.usize("config.gam.max_iter")?,
                tol: doc.f64("config.gam.tol")?,
                coef_bound: doc.f64("config.gam.coef_bound")?,
            },
            mcd: McdOptions {
                coverage: doc.f64("config.mcd.coverage")?,
                n_starts: doc.usize("config.mcd.n_starts")?,
                max_c_steps: doc.usize("config.mcd.max_c_steps")?,
                seed: 0,
            },
        };
        let names = doc.str("diag.mode_names")?;
        let errs = doc.vec("diag.mode_errors")?;
        let mut mode_errors = Vec::new();
        for (name, e) in names.split_whitespace().zip(errs) {
            let m = ScatterMode::parse(name).ok_or_else(|| bad("diag.mode_names", "unknown mode"))?;
            mode_errors.push((m, e));
        }
        let diagnostics = Diagnostics {
            h_grid: doc.vec("diag.h_grid")?,
            bootstrap_errors: doc.vec("diag.bootstrap_errors")?,
            skipped_resamples: doc.usize("diag.skipped_resamples")?,
            degenerate_grid: doc.usize("diag.degenerate_grid")? != 0,
            chosen_mode: Some(mode),
            mode_errors,
        };
        let mut models = Vec::with_capacity(n_classes);
        let mut class_rows = Vec::with_capacity(n_classes);
        for j in 0..n_classes {
            let lk = format!("class.{j}.location");
            let location = doc.array1(&lk)?;
            let sk = format!("class.{j}.scatter");
            let scatter = doc.matrix(&sk)?;
            let rk = format!("class.{j}.rows");
            let rows = doc.matrix(&rk)?;
            if location.len() != d || scatter.dim() != (d, d) || rows.ncols() != d || rows.nrows() == 0 {
                return Err(bad(&lk, "class entry shapes do not match d"));
            }
            models.push(
                ScatterModel::from_parts(j + 1, location, scatter, mode)
                    .map_err(|e| bad(&sk, &e.to_string()))?,
            );
            class_rows.push(rows);
        }
        let gam = GamModel::read_entries(&doc, "gam.")?;
        if gam.n_classes() != n_classes || gam.feature_kind() != feature_kind {
            return Err(bad("gam.n_classes", "embedded model does not match manifest"));
        }
        Ok(Self {
            models,
            class_rows,
            feature_kind,
            gam,
            config,
            diagnostics,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("file", &format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}
