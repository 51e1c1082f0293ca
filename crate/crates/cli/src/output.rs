//! Writing and loading result bundles.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::pipeline::{Bundle, Summary, SUMMARY_SCHEMA};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug)]
pub enum LoadError {
    Io(PathBuf, io::Error),
    Parse(PathBuf, serde_json::Error),
    Schema { path: PathBuf, found: String },
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            LoadError::Parse(p, e) => write!(f, "{}:{}:{}: {e}", p.display(), e.line(), e.column()),
            LoadError::Schema { path, found } => {
                write!(f, "{}: schema mismatch: expected {SUMMARY_SCHEMA}, found {found}", path.display())
            }
        }
    }
}

impl std::error::Error for LoadError {}

/// Pretty JSON with a trailing newline.
pub fn summary_json(s: &Summary) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("summary serializes");
    text.push('\n');
    text
}

/// Writes `summary.json` and, when `csv` is set, every table. Returns the
/// paths written.
pub fn write_bundle(bundle: &Bundle, dir: &Path, csv: bool) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, summary_json(&bundle.summary))?;
    written.push(path);
    if csv {
        for t in &bundle.tables {
            let path = dir.join(&t.file);
            fs::write(&path, &t.csv)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Resolves a results directory to its summary file.
pub fn summary_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(SUMMARY_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Loads a summary from a file or a results directory, checking the schema
/// tag before the body.
pub fn load_summary(path: &Path) -> Result<Summary, LoadError> {
    let path = summary_path(path);
    let text = fs::read_to_string(&path).map_err(|e| LoadError::Io(path.clone(), e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| LoadError::Parse(path.clone(), e))?;
    match value.get("schema").and_then(Value::as_str) {
        Some(SUMMARY_SCHEMA) => {}
        other => {
            return Err(LoadError::Schema {
                path,
                found: other.unwrap_or("<none>").to_string(),
            })
        }
    }
    serde_json::from_str(&text).map_err(|e| LoadError::Parse(path, e))
}
