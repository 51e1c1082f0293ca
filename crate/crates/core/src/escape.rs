//! Escape-rate estimators.
//!
//! Each route produces the survival curve `m(Mⁿ)`, `n = 0..=n_max`, and
//! fits `ρ` as the least-squares slope of `log m(Mⁿ)` over a window. The
//! window skips transient prefactors; its default `[max(1, n_max/4), n_max]`
//! is a heuristic. `rho_lower`/`rho_upper` are the extreme slopes of the
//! running fits over `[n_min, n]` for `n` in the window, the full window
//! included, so they bracket `rho` and expose slopes that keep drifting.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeasure};
use crate::sampling::{sharded, Lebesgue, PointSampler};
use crate::systems::{MapModel, OpenSystem, Survival, SymbolicHole};
use crate::ulam::{build_ulam, UlamOperator};

/// Masses below this make the logarithmic fit meaningless.
pub const UNDERFLOW: f64 = 1e-300;
pub const MIN_MC_SAMPLES: usize = 10_000;
pub const MIN_SURVIVORS: u64 = 100;
/// Monte Carlo fits stop at the last step with at least this many survivors.
const FIT_SURVIVORS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeMethod {
    Grid,
    MonteCarlo,
    WordCount,
}

/// Inclusive range of steps used by the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub n_min: usize,
    pub n_max: usize,
}

impl Window {
    pub fn new(n_min: usize, n_max: usize) -> Self {
        Self { n_min, n_max }
    }

    pub fn default_for(n_max: usize) -> Self {
        Self {
            n_min: (n_max / 4).max(1),
            n_max,
        }
    }

    pub(crate) fn validate(self, n_max: usize) -> Result<Self> {
        if self.n_min < 1 || self.n_max > n_max || self.n_min >= self.n_max {
            return Err(Error::Config(format!(
                "fit window [{}, {}] must satisfy 1 <= n_min < n_max <= {n_max}",
                self.n_min, self.n_max
            )));
        }
        Ok(self)
    }
}

/// Route and parameters of one escape-rate estimate, as read from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeSettings {
    pub method: EscapeMethod,
    pub n_max: usize,
    pub window: Option<Window>,
    /// Cells per axis for the grid route.
    pub resolution: usize,
    /// Draws for the Monte Carlo route.
    pub samples: usize,
    /// Cylinder level of the survivor subshift for the word-count route.
    pub word_level: usize,
    pub seed: u64,
}

impl Default for EscapeSettings {
    fn default() -> Self {
        Self {
            method: EscapeMethod::Grid,
            n_max: 60,
            window: None,
            resolution: 64,
            samples: 1_000_000,
            word_level: 2,
            seed: 0,
        }
    }
}

impl EscapeSettings {
    /// Runs the selected route from Lebesgue measure.
    pub fn estimate(&self, sys: &OpenSystem) -> Result<EscapeEstimate> {
        let dim = sys.map.dimension();
        match self.method {
            EscapeMethod::Grid => {
                let grid = if dim == 1 { Grid::line(self.resolution) } else { Grid::square(self.resolution) };
                escape_rate_grid(sys, &GridMeasure::lebesgue(grid), self.n_max, self.window)
            }
            EscapeMethod::MonteCarlo => escape_rate_mc(sys, &Lebesgue { dim }, self.n_max, self.samples, self.seed, self.window),
            EscapeMethod::WordCount => escape_rate_words(sys, self.word_level, self.n_max, self.window),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    /// Fitted `ρ = lim (1/n) log m(Mⁿ)`; the escape rate is `−ρ`.
    pub rho: f64,
    pub stderr: f64,
    pub method: EscapeMethod,
    /// Window actually fitted.
    pub window: Window,
    /// `(n, m(Mⁿ))` for `n = 0..=n_max`.
    pub per_n_mass: Vec<(usize, f64)>,
    pub rho_lower: f64,
    pub rho_upper: f64,
    /// Standard error of the running fit attaining `rho_lower`.
    pub rho_lower_stderr: f64,
    /// Root-mean-square residual of the fit of `log m(Mⁿ)`.
    pub fit_residual: f64,
    /// Orbits discarded for reaching the singularity set (Monte Carlo).
    pub singular_hits: u64,
}

impl EscapeEstimate {
    /// `exp(ρ)`, to compare with a leading eigenvalue.
    pub fn survival_ratio(&self) -> f64 {
        self.rho.exp()
    }

    /// Writes `n, mass, log_mass, cumulative_slope` where the last column is
    /// `(1/n) log m(Mⁿ)` (empty at `n = 0`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "mass", "log_mass", "cumulative_slope"])?;
        for &(n, m) in &self.per_n_mass {
            let slope = if n == 0 { String::new() } else { format!("{:?}", m.ln() / n as f64) };
            w.write_record([n.to_string(), format!("{m:?}"), format!("{:?}", m.ln()), slope])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the `(n, mass)` columns back from [`EscapeEstimate::write_csv`] output.
pub fn read_survival_csv<R: Read>(input: R) -> Result<Vec<(usize, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let n = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config("bad n column".into()))?;
        let m = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config("bad mass column".into()))?;
        out.push((n, m));
    }
    Ok(out)
}

struct LineFit {
    slope: f64,
    residual: f64,
    /// Regression standard error of the slope.
    slope_stderr: f64,
    /// Weights `b_k` with `slope = Σ b_k d_k`, `d_k = log m(k+1) − log m(k)`,
    /// for `k = n_min..n_max`.
    increment_weights: Vec<f64>,
}

fn line_fit(mass: &[f64], window: Window) -> LineFit {
    let ns: Vec<usize> = (window.n_min..=window.n_max).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = ns.iter().map(|&n| mass[n].ln()).collect();
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let a: Vec<f64> = xs.iter().map(|x| (x - xbar) / sxx).collect();
    let slope: f64 = a.iter().zip(&ys).map(|(a, y)| a * y).sum();
    let intercept = ybar - slope * xbar;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // slope = Σ_n a_n y_n = Σ_k d_k Σ_{n>k} a_n, since Σ a_n = 0
    let increment_weights = (0..ns.len() - 1).map(|k| a[k + 1..].iter().sum()).collect();
    LineFit {
        slope,
        residual: (sse / k).sqrt(),
        slope_stderr: if xs.len() > 2 { (sse / (k - 2.0) / sxx).sqrt() } else { 0.0 },
        increment_weights,
    }
}

struct Fit {
    full: LineFit,
    /// Running fits over `[n_min, n]` with the smallest and largest slope.
    lower: LineFit,
    upper: LineFit,
}

fn fit(mass: &[f64], window: Window) -> Result<Fit> {
    if let Some(n) = (window.n_min..=window.n_max).find(|&n| mass[n] < UNDERFLOW) {
        return Err(Error::DegenerateFit(format!(
            "m(M^{n}) = {:e} underflows inside the window",
            mass[n]
        )));
    }
    let full = line_fit(mass, window);
    let start = (window.n_min + 2).min(window.n_max);
    let running: Vec<LineFit> = (start..window.n_max)
        .map(|e| line_fit(mass, Window::new(window.n_min, e)))
        .collect();
    let pick = |better: fn(f64, f64) -> bool| {
        running
            .iter()
            .filter(|f| better(f.slope, full.slope))
            .fold(None::<&LineFit>, |best, f| match best {
                Some(b) if !better(f.slope, b.slope) => Some(b),
                _ => Some(f),
            })
            .map(|f| LineFit {
                increment_weights: f.increment_weights.clone(),
                ..*f
            })
    };
    let lower = pick(|a, b| a < b).unwrap_or_else(|| line_fit(mass, window));
    let upper = pick(|a, b| a > b).unwrap_or_else(|| line_fit(mass, window));
    Ok(Fit { full, lower, upper })
}

/// Binomial standard error of a slope with the given increment weights.
fn binomial_stderr(weights: &[f64], survivors: &[u64], n_min: usize) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let n = n_min + k;
            let (s0, s1) = (survivors[n] as f64, survivors[n + 1] as f64);
            let q = s1 / s0;
            b * b * (1.0 - q) / (s0 * q)
        })
        .sum::<f64>()
        .sqrt()
}

fn curve(mass: &[f64]) -> Vec<(usize, f64)> {
    mass.iter().copied().enumerate().collect()
}

/// Escape rate from the survival curve of the Ulam operator at the
/// resolution of `m`.
pub fn escape_rate_grid(sys: &OpenSystem, m: &GridMeasure, n_max: usize, window: Option<Window>) -> Result<EscapeEstimate> {
    let op = build_ulam(sys, m.grid.n)?;
    escape_rate_with_operator(&op, m, n_max, window)
}

/// As [`escape_rate_grid`] with a prebuilt operator.
pub fn escape_rate_with_operator(
    op: &UlamOperator,
    m: &GridMeasure,
    n_max: usize,
    window: Option<Window>,
) -> Result<EscapeEstimate> {
    let window = window.unwrap_or(Window::default_for(n_max)).validate(n_max)?;
    let mass = op.survival_curve(m, n_max)?;
    let f = fit(&mass, window)?;
    Ok(EscapeEstimate {
        rho: f.full.slope,
        stderr: f.full.slope_stderr,
        method: EscapeMethod::Grid,
        window,
        per_n_mass: curve(&mass),
        rho_lower: f.lower.slope,
        rho_upper: f.upper.slope,
        rho_lower_stderr: f.lower.slope_stderr,
        fit_residual: f.full.residual,
        singular_hits: 0,
    })
}

/// Monte Carlo escape rate from `samples` i.i.d. draws of `sampler`.
///
/// The fit window is cut back to the last step with at least 30 survivors.
/// The standard error propagates the binomial variance of each one-step
/// survival ratio through the linear fit.
pub fn escape_rate_mc(
    sys: &OpenSystem,
    sampler: &dyn PointSampler,
    n_max: usize,
    samples: usize,
    seed: u64,
    window: Option<Window>,
) -> Result<EscapeEstimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    let window = window.unwrap_or(Window::default_for(n_max)).validate(n_max)?;
    let shards = sharded(samples, seed, |rng, count| {
        // escaped[i]: orbits escaping exactly at step i; slot n_max+1: survivors
        let mut escaped = vec![0u64; n_max + 2];
        let mut singular = 0u64;
        for _ in 0..count {
            let x = sampler.sample(rng);
            match sys.survival_time(x, n_max) {
                Survival::Escaped(i) => escaped[i] += 1,
                Survival::Singular(_) => singular += 1,
                Survival::Survived => escaped[n_max + 1] += 1,
            }
        }
        (escaped, singular)
    });
    let mut escaped = vec![0u64; n_max + 2];
    let mut singular_hits = 0;
    for (e, s) in shards {
        escaped.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        singular_hits += s;
    }
    estimate_from_counts(&escaped, singular_hits, samples as u64, window)
}

/// Fits a Monte Carlo survival curve from escape-step counts: `escaped[i]`
/// orbits escape exactly at step `i`, the final slot holds the survivors.
pub(crate) fn estimate_from_counts(escaped: &[u64], singular_hits: u64, samples: u64, window: Window) -> Result<EscapeEstimate> {
    let n_max = escaped.len() - 2;
    let valid = samples - singular_hits;
    // survivors[n] = #{orbits with escape step > n}
    let mut survivors = vec![0u64; n_max + 1];
    let mut acc = escaped[n_max + 1];
    for n in (0..=n_max).rev() {
        survivors[n] = acc;
        acc += escaped[n];
    }
    if survivors[window.n_min] < MIN_SURVIVORS {
        return Err(Error::InsufficientSurvivors {
            survivors: survivors[window.n_min],
            step: window.n_min,
            required: MIN_SURVIVORS,
        });
    }
    let last = (window.n_min..=window.n_max)
        .rev()
        .find(|&n| survivors[n] >= FIT_SURVIVORS)
        .unwrap_or(window.n_min);
    if last <= window.n_min {
        return Err(Error::InsufficientSurvivors {
            survivors: survivors[window.n_min + 1],
            step: window.n_min + 1,
            required: FIT_SURVIVORS,
        });
    }
    let window = Window::new(window.n_min, last);
    let mass: Vec<f64> = survivors.iter().map(|&s| s as f64 / valid as f64).collect();
    let f = fit(&mass, window)?;
    Ok(EscapeEstimate {
        rho: f.full.slope,
        stderr: binomial_stderr(&f.full.increment_weights, &survivors, window.n_min),
        method: EscapeMethod::MonteCarlo,
        window,
        per_n_mass: curve(&mass),
        rho_lower: f.lower.slope,
        rho_upper: f.upper.slope,
        rho_lower_stderr: binomial_stderr(&f.lower.increment_weights, &survivors, window.n_min),
        fit_residual: f.full.residual,
        singular_hits,
    })
}

/// Exact escape rate `log(λ_A / m)` of a Markov hole, where `λ_A` is the
/// Perron root of the survivor transition matrix at level `k`. The survival
/// curve is the Lebesgue measure of the admitted cylinders.
pub fn escape_rate_words(sys: &OpenSystem, k: usize, n_max: usize, window: Option<Window>) -> Result<EscapeEstimate> {
    let hole = SymbolicHole::from_system(sys, k)?;
    let window = window.unwrap_or(Window::default_for(n_max)).validate(n_max)?;
    let l = hole.hole_level().max(1);
    let mass: Vec<f64> = (0..=n_max).map(|n| hole.cylinder_mass(n + l)).collect();
    let f = fit(&mass, window)?;
    let lambda = hole.perron_root();
    if lambda <= 0.0 {
        return Err(Error::DegenerateFit("survivor shift is empty".into()));
    }
    let rho = (lambda / hole.base as f64).ln();
    Ok(EscapeEstimate {
        rho,
        stderr: 0.0,
        method: EscapeMethod::WordCount,
        window,
        per_n_mass: curve(&mass),
        rho_lower: f.lower.slope.min(rho),
        rho_upper: f.upper.slope.max(rho),
        rho_lower_stderr: 0.0,
        fit_residual: f.full.residual,
        singular_hits: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{HoleSpec, Model};

    const GOLDEN_RHO: f64 = -0.211_935_355_500_341_8;

    fn golden() -> OpenSystem {
        OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0))
    }

    #[test]
    fn triadic_grid_rate_is_exact() {
        let sys = OpenSystem::new(Model::triadic(), HoleSpec::cylinders(3, &[&[1]]).unwrap());
        let e = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(27)), 40, None).unwrap();
        assert!((e.rho - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(e.rho_lower <= e.rho && e.rho <= e.rho_upper);
    }

    #[test]
    fn golden_grid_and_word_rates() {
        let g = escape_rate_grid(&golden(), &GridMeasure::lebesgue(Grid::line(64)), 200, None).unwrap();
        assert!((g.rho - GOLDEN_RHO).abs() < 1e-6, "{}", g.rho);
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::cylinders(2, &[&[1, 1]]).unwrap());
        let w = escape_rate_words(&sys, 2, 200, None).unwrap();
        assert!((w.rho - GOLDEN_RHO).abs() < 1e-12);
        for (a, b) in g.per_n_mass.iter().zip(&w.per_n_mass) {
            assert!((a.1 - b.1).abs() <= 1e-14 * a.1.max(1e-300), "{a:?} {b:?}");
        }
    }

    #[test]
    fn word_rates_of_trivial_holes() {
        let t = OpenSystem::new(Model::triadic(), HoleSpec::cylinders(3, &[&[1]]).unwrap());
        assert!((escape_rate_words(&t, 1, 30, None).unwrap().rho - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        let h = OpenSystem::new(Model::doubling(), HoleSpec::cylinders(2, &[&[1]]).unwrap());
        assert!((escape_rate_words(&h, 1, 30, None).unwrap().rho + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_hole_has_zero_rate() {
        let sys = OpenSystem::closed(Model::doubling());
        let e = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(8)), 20, None).unwrap();
        assert_eq!(e.rho, 0.0);
        assert!(e.per_n_mass.iter().all(|(_, m)| *m == 1.0));
    }

    #[test]
    fn monte_carlo_half_hole() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.5, 1.0));
        let e = escape_rate_mc(&sys, &Lebesgue { dim: 1 }, 16, 1_000_000, 1, Some(Window::new(2, 12))).unwrap();
        assert!((e.rho + 2f64.ln()).abs() < 0.02, "{e:?}");
        assert!(e.stderr > 0.0 && e.stderr < 0.02);
        assert!(e.per_n_mass.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn monte_carlo_rejects_small_runs() {
        let sys = golden();
        assert!(matches!(escape_rate_mc(&sys, &Lebesgue { dim: 1 }, 10, 100, 1, None), Err(Error::Config(_))));
        let tiny = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.01, 1.0));
        assert!(matches!(
            escape_rate_mc(&tiny, &Lebesgue { dim: 1 }, 20, 10_000, 1, None),
            Err(Error::InsufficientSurvivors { .. })
        ));
    }

    #[test]
    fn underflow_is_a_degenerate_fit() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.5, 1.0));
        let e = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(4)), 1200, None);
        assert!(matches!(e, Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn csv_round_trip() {
        let e = escape_rate_grid(&golden(), &GridMeasure::lebesgue(Grid::line(8)), 20, None).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,mass,log_mass,cumulative_slope"));
        assert_eq!(read_survival_csv(buf.as_slice()).unwrap(), e.per_n_mass);
    }
}
