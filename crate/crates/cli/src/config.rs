//! Experiment configuration: parsing with field diagnostics, validation,
//! seed resolution and hashing.

use std::fmt;
use std::path::Path;

use or_core::billiard::BilliardConfig;
use or_core::escape::{EscapeMethod, EscapeSettings, MIN_MC_SAMPLES};
use or_core::pressure::{CandidateOptions, PressureOptions};
use or_core::systems::{HoleSpec, OpenSystem};
use or_core::tower::TowerSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A configuration problem, located by file position or by field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn field_error(location: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Drives every stochastic stage; `OR_SEED` overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Thread count (`0` = all cores); never changes the results.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub system: Option<OpenSystem>,
    #[serde(default)]
    pub escape: EscapeSettings,
    /// Further escape routes compared with `escape`.
    #[serde(default)]
    pub cross_checks: Vec<EscapeSettings>,
    /// Holes swept with the `escape` route on the same map.
    #[serde(default)]
    pub sweep: Vec<HoleSpec>,
    #[serde(default)]
    pub ulam: Option<UlamSettings>,
    #[serde(default)]
    pub tower: Option<TowerSettings>,
    #[serde(default)]
    pub pressure: Option<PressureSettings>,
    #[serde(default)]
    pub balls: Option<BallSettings>,
    #[serde(default)]
    pub billiard: Option<BilliardSettings>,
    #[serde(default)]
    pub outputs: OutputSettings,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UlamSettings {
    pub resolution: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Steps of the Lebesgue-to-`μ*` convergence check.
    pub invariance_steps: usize,
}

impl Default for UlamSettings {
    fn default() -> Self {
        Self {
            resolution: 64,
            tol: 1e-14,
            max_iters: 100_000,
            invariance_steps: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerSettings {
    pub spec: TowerSpec,
    pub c_bar: f64,
    pub theta_bar: f64,
    pub gibbs_depth: usize,
    pub gurevich_n: usize,
    /// Branch index the Gurevich cylinder sums run through.
    pub gurevich_branch: usize,
}

impl Default for TowerSettings {
    fn default() -> Self {
        Self {
            spec: TowerSpec::golden_mean(),
            c_bar: 2.0 * std::f64::consts::LN_2,
            theta_bar: 0.7,
            gibbs_depth: 6,
            gurevich_n: 20,
            gurevich_branch: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureSettings {
    pub options: PressureOptions,
    pub candidates: CandidateOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallSettings {
    pub eps: f64,
    pub horizons: Vec<usize>,
    pub centers: usize,
    pub proposals: usize,
    /// Allowance over the Lyapunov sum for the fitted slopes.
    pub slack: f64,
    pub triangle_triples: usize,
    pub triangle_singular: Vec<f64>,
    /// Sample points of `ν̂` for a Brin–Katok estimate; `0` skips it.
    pub brin_katok_points: usize,
    pub seed: u64,
}

impl Default for BallSettings {
    fn default() -> Self {
        Self {
            eps: 0.1,
            horizons: vec![2, 6, 10, 14, 18],
            centers: 100,
            proposals: 4_000,
            slack: 0.1,
            triangle_triples: 1_000_000,
            triangle_singular: vec![1.0 / 3.0],
            brin_katok_points: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilliardSettings {
    pub experiment: BilliardConfig,
    #[serde(default)]
    pub stationarity: StationaritySettings,
    #[serde(default)]
    pub reversal: ReversalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaritySettings {
    pub samples: usize,
    pub steps: usize,
    pub r_bins: usize,
    pub theta_bins: usize,
    /// Smallest accepted p-value.
    pub alpha: f64,
}

impl Default for StationaritySettings {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            steps: 3,
            r_bins: 8,
            theta_bins: 8,
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReversalSettings {
    pub states: usize,
    pub steps: usize,
    pub tolerance: f64,
}

impl Default for ReversalSettings {
    fn default() -> Self {
        Self {
            states: 2_000,
            steps: 20,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub csv: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { csv: true }
    }
}

/// Parses JSON text; syntax and schema errors carry `line:column`.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg = serde_path_to_error::deserialize(&mut de).map_err(|e| json_error(origin, e.inner(), &e.path().to_string()))?;
    de.end().map_err(|e| json_error(origin, &e, "."))?;
    Ok(cfg)
}

fn from_value(value: Value, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    // re-serialize so schema errors still point at a line of the document
    let text = serde_json::to_string_pretty(&value).expect("values serialize");
    parse_config(&text, origin)
}

fn json_error(origin: &str, inner: &serde_json::Error, path: &str) -> ConfigError {
    let message = inner.to_string();
    let mut message = match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message,
    };
    if path != "." {
        message = format!("{path}: {message}");
    }
    field_error(&format!("{origin}:{}:{}", inner.line(), inner.column()), message)
}

/// Reads a config file and applies `key.path=value` overrides before the
/// typed parse, so flags mirror config keys exactly.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| field_error(&origin, e.to_string()))?;
    if overrides.is_empty() {
        return parse_config(&text, &origin);
    }
    let mut value: Value = serde_json::from_str(&text).map_err(|e| json_error(&origin, &e, "."))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    from_value(value, &format!("{origin} (with overrides)"))
}

/// Sets `a.b.c` to a JSON literal, or to a string if the value is not JSON.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| field_error("--set", format!("expected key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(field_error("--set", format!("empty key in `{path}`")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(field_error(path, format!("`{key}` is not inside an object")));
        }
        node = node
            .as_object_mut()
            .expect("checked")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| field_error(path, "parent is not an object"))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Reads `OR_SEED`; unset means no override.
pub fn seed_from_env() -> Result<Option<u64>, ConfigError> {
    match std::env::var("OR_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| field_error("OR_SEED", format!("`{s}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl ExperimentConfig {
    /// Applies the seed and worker overrides and hands the top-level seed to
    /// every stage. Cross-check routes get consecutive seeds so their Monte
    /// Carlo draws are independent of the primary route.
    pub fn resolve(mut self, seed: Option<u64>, workers: Option<usize>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(w) = workers {
            self.workers = w;
        }
        let s = self.seed;
        self.escape.seed = s;
        for (i, c) in self.cross_checks.iter_mut().enumerate() {
            c.seed = s.wrapping_add(i as u64 + 1);
        }
        if let Some(p) = &mut self.pressure {
            p.options.seed = s;
            p.candidates.seed = s;
        }
        if let Some(b) = &mut self.balls {
            b.seed = s;
        }
        if let Some(b) = &mut self.billiard {
            b.experiment.seed = s;
        }
        self
    }

    /// SHA-256 of the canonical JSON of the config with `workers` cleared,
    /// since the worker count does not affect any output.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(field_error("name", "must not be empty"));
        }
        let needs_system = self.ulam.is_some() || self.pressure.is_some() || self.balls.is_some() || !self.sweep.is_empty();
        if needs_system && self.system.is_none() {
            return Err(field_error("system", "required by the escape, ulam, pressure, balls and sweep stages"));
        }
        if self.system.is_none() && self.tower.is_none() && self.billiard.is_none() {
            return Err(field_error("system", "nothing to run: configure system, tower or billiard"));
        }
        if self.system.is_some() {
            validate_escape("escape", &self.escape)?;
            for (i, c) in self.cross_checks.iter().enumerate() {
                validate_escape(&format!("cross_checks[{i}]"), c)?;
            }
        }
        if let Some(u) = &self.ulam {
            if u.resolution == 0 {
                return Err(field_error("ulam.resolution", "must be positive"));
            }
            if !(u.tol > 0.0) || u.max_iters == 0 {
                return Err(field_error("ulam.tol", "tol and max_iters must be positive"));
            }
        }
        if let Some(t) = &self.tower {
            t.spec.validate().map_err(|e| field_error("tower.spec", e.to_string()))?;
            if !(t.theta_bar > 0.0 && t.theta_bar < 1.0) {
                return Err(field_error("tower.theta_bar", "must lie in (0, 1)"));
            }
            if !(t.c_bar > 0.0) {
                return Err(field_error("tower.c_bar", "must be positive"));
            }
            if t.gibbs_depth == 0 || t.gurevich_n == 0 {
                return Err(field_error("tower.gibbs_depth", "gibbs_depth and gurevich_n must be positive"));
            }
        }
        if let Some(b) = &self.balls {
            if !(b.eps > 0.0) {
                return Err(field_error("balls.eps", "must be positive"));
            }
            if b.horizons.len() < 2 || b.horizons.windows(2).any(|w| w[0] >= w[1]) || b.horizons[0] == 0 {
                return Err(field_error("balls.horizons", "need at least two increasing positive horizons"));
            }
            if b.centers == 0 || b.proposals == 0 {
                return Err(field_error("balls.centers", "centers and proposals must be positive"));
            }
        }
        if let Some(b) = &self.billiard {
            let e = &b.experiment;
            if e.holes.is_empty() {
                return Err(field_error("billiard.experiment.holes", "must list at least one hole"));
            }
            if e.samples < MIN_MC_SAMPLES {
                return Err(field_error(
                    "billiard.experiment.samples",
                    format!("at least {MIN_MC_SAMPLES} required"),
                ));
            }
            if e.n_max < 4 {
                return Err(field_error("billiard.experiment.n_max", "must be at least 4"));
            }
            if b.stationarity.r_bins == 0 || b.stationarity.theta_bins == 0 {
                return Err(field_error("billiard.stationarity", "bin counts must be positive"));
            }
        }
        Ok(())
    }
}

fn validate_escape(at: &str, e: &EscapeSettings) -> Result<(), ConfigError> {
    if e.n_max < 2 {
        return Err(field_error(&format!("{at}.n_max"), "must be at least 2"));
    }
    if let Some(w) = e.window {
        if w.n_min < 1 || w.n_min >= w.n_max || w.n_max > e.n_max {
            return Err(field_error(
                &format!("{at}.window"),
                format!("need 1 <= n_min < n_max <= {}", e.n_max),
            ));
        }
    }
    match e.method {
        EscapeMethod::Grid if e.resolution == 0 => Err(field_error(&format!("{at}.resolution"), "must be positive")),
        EscapeMethod::MonteCarlo if e.samples < MIN_MC_SAMPLES => Err(field_error(
            &format!("{at}.samples"),
            format!("at least {MIN_MC_SAMPLES} required"),
        )),
        EscapeMethod::WordCount if e.word_level == 0 => Err(field_error(&format!("{at}.word_level"), "must be positive")),
        _ => Ok(()),
    }
}
