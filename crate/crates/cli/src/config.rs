//! `key = value` override files for the training configuration.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mdgam_core::TrainConfig;

/// Keys accepted in a config file.
pub const KEYS: &[&str] = &[
    "grid.percentile",
    "grid.shrink",
    "grid.k0",
    "grid.r_stop",
    "grid.max_points",
    "bootstrap.b",
    "bootstrap.seed",
    "hdlss_b",
    "gam.n_interior_knots",
    "gam.lambda_grid",
    "gam.max_iter",
    "gam.tol",
    "gam.coef_bound",
    "mcd.coverage",
    "mcd.n_starts",
    "mcd.max_c_steps",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow!("{key}: cannot parse `{v}`"))
}

/// Applies one override.
pub fn apply(cfg: &mut TrainConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "grid.percentile" => cfg.grid.percentile = num(key, v)?,
        "grid.shrink" => cfg.grid.shrink = num(key, v)?,
        "grid.k0" => cfg.grid.k0 = num(key, v)?,
        "grid.r_stop" => cfg.grid.r_stop = num(key, v)?,
        "grid.max_points" => cfg.grid.max_points = num(key, v)?,
        "bootstrap.b" => cfg.bootstrap.b = num(key, v)?,
        "bootstrap.seed" => cfg.bootstrap.seed = num(key, v)?,
        "hdlss_b" => cfg.hdlss_b = num(key, v)?,
        "gam.n_interior_knots" => {
            let k: usize = num(key, v)?;
            cfg.gam.n_interior_knots = (k > 0).then_some(k);
        }
        "gam.lambda_grid" => {
            cfg.gam.lambda_grid = v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect::<Result<_>>()?;
        }
        "gam.max_iter" => cfg.gam.max_iter = num(key, v)?,
        "gam.tol" => cfg.gam.tol = num(key, v)?,
        "gam.coef_bound" => cfg.gam.coef_bound = num(key, v)?,
        "mcd.coverage" => cfg.mcd.coverage = num(key, v)?,
        "mcd.n_starts" => cfg.mcd.n_starts = num(key, v)?,
        "mcd.max_c_steps" => cfg.mcd.max_c_steps = num(key, v)?,
        other => bail!("unknown config key `{other}` (known: {})", KEYS.join(", ")),
    }
    Ok(())
}

/// Parses override text; `#` starts a comment.
pub fn parse_into(cfg: &mut TrainConfig, text: &str) -> Result<()> {
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
        apply(cfg, k.trim(), v.trim()).with_context(|| format!("line {}", i + 1))?;
    }
    Ok(())
}

pub fn load_into(cfg: &mut TrainConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_into(cfg, &text).with_context(|| format!("in {}", path.display()))
}
