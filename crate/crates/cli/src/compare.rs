//! Cross-run comparison of result bundles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::output::{load_summary, LoadError};

pub const COMPARE_SCHEMA: &str = "or-verify/compare/v1";

#[derive(Debug)]
pub enum CompareError {
    TooFew(usize),
    Load(LoadError),
}

impl std::fmt::Display for CompareError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CompareError::TooFew(n) => write!(f, "compare needs at least 2 result bundles, got {n}"),
            CompareError::Load(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CompareError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub path: String,
    pub name: String,
    pub config_hash: String,
    pub rho: Option<f64>,
    pub rho_stderr: Option<f64>,
    pub eigenvalue: Option<f64>,
    pub p_nu_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema: String,
    pub rows: Vec<CompareRow>,
    pub max_delta_rho: Option<f64>,
    pub max_delta_eigenvalue: Option<f64>,
    pub max_delta_p_nu_hat: Option<f64>,
    /// Every pair of `ρ` values within `max(3·hypot(σᵢ, σⱼ), 1e−6)`.
    pub rho_consistent: Option<bool>,
}

impl Comparison {
    pub fn write_csv(&self) -> csv::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "name", "config_hash", "rho", "rho_stderr", "eigenvalue", "p_nu_hat"])?;
        let f = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.path.clone(),
                r.name.clone(),
                r.config_hash.clone(),
                f(r.rho),
                f(r.rho_stderr),
                f(r.eigenvalue),
                f(r.p_nu_hat),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn max_delta(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    (v.len() >= 2).then(|| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    })
}

/// Loads each path (a results directory or a summary file) and compares
/// the headline numbers.
pub fn compare_runs<P: AsRef<Path>>(paths: &[P]) -> Result<Comparison, CompareError> {
    if paths.len() < 2 {
        return Err(CompareError::TooFew(paths.len()));
    }
    let mut rows = Vec::new();
    for p in paths {
        let p: PathBuf = p.as_ref().to_path_buf();
        let s = load_summary(&p).map_err(CompareError::Load)?;
        rows.push(CompareRow {
            path: p.display().to_string(),
            name: s.name,
            config_hash: s.config_hash,
            rho: s.headline.rho,
            rho_stderr: s.headline.rho_stderr,
            eigenvalue: s.headline.eigenvalue,
            p_nu_hat: s.headline.p_nu_hat,
        });
    }
    let pick = |f: fn(&CompareRow) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    let with_rho: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.rho?, r.rho_stderr.unwrap_or(0.0)))).collect();
    let rho_consistent = (with_rho.len() >= 2).then(|| {
        with_rho.iter().enumerate().all(|(i, a)| {
            with_rho[i + 1..]
                .iter()
                .all(|b| (a.0 - b.0).abs() <= (3.0 * a.1.hypot(b.1)).max(1e-6))
        })
    });
    Ok(Comparison {
        schema: COMPARE_SCHEMA.into(),
        max_delta_rho: max_delta(&pick(|r| r.rho)),
        max_delta_eigenvalue: max_delta(&pick(|r| r.eigenvalue)),
        max_delta_p_nu_hat: max_delta(&pick(|r| r.p_nu_hat)),
        rho_consistent,
        rows,
    })
}
