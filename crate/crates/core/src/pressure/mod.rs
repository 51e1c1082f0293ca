//! Entropy, Lyapunov sums and pressure `P_ν = h_ν − λ⁺_ν` of candidate
//! invariant measures, measure-class diagnostics, and the comparison of
//! pressures with a measured escape rate.
//!
//! For every candidate ν in the admissible classes the escape rate obeys
//! `ρ̲ ≥ P_ν`, and the survivor measure `ν̂` attains equality on systems with
//! a verified tower. [`variational_report`] checks both and reports the
//! verdict together with every per-candidate diagnostic.

mod candidates;
mod classes;
mod entropy;
mod lyapunov;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use candidates::{
    default_candidates, enlarged_hole, CandidateOptions, markov_nu_hat, periodic_candidates, periodic_orbits, random_markov_candidates, sprinkle,
    sprinkled_nu_hat,
};
pub use classes::{boundary_mass, class_membership, eps_decade, ClassFit, ClassFlags, ClassOptions, ClassStatus, PhiCheck};
pub use entropy::{entropy_brin_katok, entropy_markov, BrinKatok, BrinKatokScale, MIN_BALL_COUNT};
pub use lyapunov::{lyapunov_sum, periodic_lyapunov, LyapunovEstimate, QR_BURN_IN};

use crate::error::{Error, Result};
use crate::escape::{EscapeEstimate, EscapeMethod};
use crate::grid::GridMeasure;
use crate::markov::{MarkovChain, SymbolicSampler};
use crate::sampling::draw;
use crate::systems::{HoleKind, MapModel, OpenSystem, Point};

/// An invariant measure in one of the forms the estimators accept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureRep {
    /// Stationary Markov measure on the `base^level` cylinders; two-sided
    /// chains describe measures of the baker map.
    Markov {
        chain: MarkovChain,
        base: u32,
        level: usize,
        two_sided: bool,
    },
    /// Points sampled from the measure.
    Empirical { points: Vec<Point> },
    /// Piecewise-constant approximation on a grid.
    Grid(GridMeasure),
    /// Equidistribution on a periodic orbit, listed in orbit order.
    Periodic { orbit: Vec<Point> },
}

impl MeasureRep {
    pub fn kind(&self) -> &'static str {
        match self {
            MeasureRep::Markov { .. } => "markov_chain",
            MeasureRep::Empirical { .. } => "empirical",
            MeasureRep::Grid(_) => "grid",
            MeasureRep::Periodic { .. } => "periodic",
        }
    }

    /// Up to `count` points distributed by the measure: the stored points
    /// for empirical and periodic reps, fresh draws otherwise.
    pub fn points(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        Ok(match self {
            MeasureRep::Markov {
                chain,
                base,
                level,
                two_sided,
            } => draw(&SymbolicSampler::new(chain, *base, *level, *two_sided)?, count, seed),
            MeasureRep::Grid(g) => draw(&g.sampler(), count, seed),
            MeasureRep::Empirical { points } => points[..count.min(points.len())].to_vec(),
            MeasureRep::Periodic { orbit } => orbit.clone(),
        })
    }

    /// Whether the measure lives on the survivor set. Markov reps are checked
    /// cell by cell, periodic orbits point by point, empirical samples by
    /// following every sample `horizon` steps, and grid reps by their cell
    /// centers.
    pub fn supported_in_survivor(&self, sys: &OpenSystem, horizon: usize) -> bool {
        match self {
            MeasureRep::Markov { chain, .. } => {
                let n = chain.states();
                let x_holes: Option<Vec<(f64, f64)>> = match sys.hole.intervals() {
                    Some(iv) => Some(iv.to_vec()),
                    None => match sys.hole.kind() {
                        HoleKind::Rect { min, max } if min[1] <= 0.0 && max[1] >= 1.0 => Some(vec![(min[0], max[0])]),
                        _ => None,
                    },
                };
                let Some(holes) = x_holes else { return false };
                (0..n).filter(|&i| chain.stationary[i] > 0.0).all(|i| {
                    let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                    holes.iter().all(|&(u, v)| b <= u || a >= v)
                })
            }
            MeasureRep::Empirical { points } => points
                .par_iter()
                .all(|&p| sys.survival_time(p, horizon).in_survivor_set(horizon)),
            MeasureRep::Grid(g) => (0..g.grid.cells())
                .filter(|&i| g.masses[i] > 0.0)
                .all(|i| !sys.hole.contains(g.grid.cell_center(i))),
            MeasureRep::Periodic { orbit } => {
                let closes = orbit.iter().enumerate().all(|(i, &p)| {
                    sys.map
                        .evaluate(p)
                        .is_some_and(|q| sys.map.distance(q, orbit[(i + 1) % orbit.len()]) < 1e-9)
                });
                closes && orbit.iter().all(|&p| !sys.hole.contains(p))
            }
        }
    }
}

/// A named candidate measure; `nu_hat` marks the survivor measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub rep: MeasureRep,
    pub nu_hat: bool,
}

/// Estimator settings for [`evaluate_candidate`] and [`variational_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureOptions {
    pub class: ClassOptions,
    /// Points drawn for class fits and Brin–Katok.
    pub stat_samples: usize,
    pub lyapunov_samples: usize,
    pub lyapunov_steps: usize,
    pub bk_eps: Vec<f64>,
    pub bk_n_max: usize,
    pub bk_centers: usize,
    pub support_horizon: usize,
    /// Floor for every comparison.
    pub tolerance: f64,
    /// Multiplier of the combined standard error.
    pub sigma_factor: f64,
    /// The system has a verified tower route, so `P_ν̂ = ρ` is asserted.
    pub equality_route: bool,
    pub seed: u64,
}

impl Default for PressureOptions {
    fn default() -> Self {
        Self {
            class: ClassOptions::default(),
            stat_samples: 100_000,
            lyapunov_samples: 2_000,
            lyapunov_steps: 30,
            bk_eps: vec![0.1, 0.05],
            bk_n_max: 14,
            bk_centers: 100,
            support_horizon: 20,
            tolerance: 1e-4,
            sigma_factor: 3.0,
            equality_route: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureReport {
    pub label: String,
    pub kind: String,
    pub nu_hat: bool,
    pub supported_in_survivor: bool,
    pub entropy: f64,
    pub entropy_stderr: f64,
    pub entropy_method: String,
    pub lyapunov_sum: f64,
    pub lyapunov_stderr: f64,
    pub pressure: f64,
    /// Standard error of `pressure`.
    pub sigma: f64,
    pub rho: f64,
    pub rho_lower: f64,
    /// `|P − ρ|`.
    pub gap: f64,
    pub class_flags: ClassFlags,
    pub class_passing: bool,
    pub ruelle_ok: bool,
    /// `ρ̲ ≥ P − tol`; `None` for candidates outside the classes.
    pub inequality_ok: Option<bool>,
    /// `|P_ν̂ − ρ| < tol`; `None` unless this is `ν̂` on a tower system.
    pub equality_ok: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    pub system: String,
    pub escape_method: EscapeMethod,
    pub rho: f64,
    pub rho_lower: f64,
    pub rho_stderr: f64,
    pub reports: Vec<PressureReport>,
    pub verdict: Verdict,
    pub violations: Vec<String>,
}

/// Entropy, Lyapunov sum and class diagnostics of one candidate, before
/// comparison with an escape rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvaluation {
    pub entropy: f64,
    pub entropy_stderr: f64,
    pub entropy_method: &'static str,
    pub lyapunov: LyapunovEstimate,
    pub class_flags: ClassFlags,
    pub supported_in_survivor: bool,
}

impl CandidateEvaluation {
    pub fn pressure(&self) -> f64 {
        self.entropy - self.lyapunov.value
    }

    pub fn sigma(&self) -> f64 {
        self.entropy_stderr.hypot(self.lyapunov.stderr)
    }
}

pub fn evaluate_candidate(sys: &OpenSystem, cand: &Candidate, opts: &PressureOptions, seed: u64) -> Result<CandidateEvaluation> {
    let rep = &cand.rep;
    let points = rep.points(opts.stat_samples, seed)?;
    if points.is_empty() {
        return Err(Error::InsufficientSample(format!("candidate {} has no points", cand.label)));
    }
    let (entropy, entropy_stderr, entropy_method) = match rep {
        MeasureRep::Markov { chain, .. } => (entropy_markov(chain), 0.0, "markov"),
        MeasureRep::Periodic { .. } => (0.0, 0.0, "periodic"),
        MeasureRep::Empirical { .. } | MeasureRep::Grid(_) => {
            let bk = entropy_brin_katok(sys, &points, &opts.bk_eps, opts.bk_n_max, opts.bk_centers)?;
            (bk.entropy, bk.stderr, "brin_katok")
        }
    };
    let lyapunov = match rep {
        MeasureRep::Periodic { orbit } => LyapunovEstimate {
            value: periodic_lyapunov(&sys.map, orbit),
            stderr: 0.0,
            samples: orbit.len(),
            dropped: 0,
        },
        _ => lyapunov_sum(&sys.map, &points[..points.len().min(opts.lyapunov_samples)], opts.lyapunov_steps)?,
    };
    let class_flags = class_membership(sys, rep, &points, lyapunov.value, &opts.class);
    Ok(CandidateEvaluation {
        entropy,
        entropy_stderr,
        entropy_method,
        lyapunov,
        class_flags,
        supported_in_survivor: rep.supported_in_survivor(sys, opts.support_horizon),
    })
}

fn candidate_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Pressure of every candidate compared against an escape estimate.
///
/// Violations: `ρ̲ < P − tol` for a class-passing candidate; `|P_ν̂ − ρ| ≥ tol`
/// when `opts.equality_route` is set; `h > λ⁺ + tol` for any candidate. Here
/// `tol = max(k σ, opts.tolerance)` with `σ` combining the standard errors of
/// the pressure and of `ρ̲` or `ρ` respectively.
pub fn variational_report(
    sys: &OpenSystem,
    candidates: &[Candidate],
    escape: &EscapeEstimate,
    opts: &PressureOptions,
) -> Result<VariationalReport> {
    let evals: Vec<Result<CandidateEvaluation>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| evaluate_candidate(sys, c, opts, candidate_seed(opts.seed, i)))
        .collect();
    let mut reports = Vec::with_capacity(candidates.len());
    let mut violations = Vec::new();
    for (cand, ev) in candidates.iter().zip(evals) {
        let ev = ev?;
        let pressure = ev.pressure();
        let sigma = ev.sigma();
        let tol = (opts.sigma_factor * sigma.hypot(escape.stderr)).max(opts.tolerance);
        let lower_tol = (opts.sigma_factor * sigma.hypot(escape.rho_lower_stderr)).max(opts.tolerance);
        let class_passing = ev.supported_in_survivor && ev.class_flags.passing();
        let ruelle_tol = (opts.sigma_factor * sigma).max(opts.tolerance);
        let ruelle_ok = ev.entropy >= 0.0 && ev.entropy <= ev.lyapunov.value + ruelle_tol;
        if !ruelle_ok {
            violations.push(format!(
                "{}: entropy {} exceeds Lyapunov sum {}",
                cand.label, ev.entropy, ev.lyapunov.value
            ));
        }
        let inequality_ok = class_passing.then_some(escape.rho_lower >= pressure - lower_tol);
        if inequality_ok == Some(false) {
            violations.push(format!(
                "{}: rho_lower {} < P {} - {lower_tol:e}",
                cand.label, escape.rho_lower, pressure
            ));
        }
        let equality_ok = (cand.nu_hat && opts.equality_route).then(|| (pressure - escape.rho).abs() < tol);
        if equality_ok == Some(false) {
            violations.push(format!("{}: |P - rho| = {:e} >= {tol:e}", cand.label, (pressure - escape.rho).abs()));
        }
        reports.push(PressureReport {
            label: cand.label.clone(),
            kind: cand.rep.kind().into(),
            nu_hat: cand.nu_hat,
            supported_in_survivor: ev.supported_in_survivor,
            entropy: ev.entropy,
            entropy_stderr: ev.entropy_stderr,
            entropy_method: ev.entropy_method.into(),
            lyapunov_sum: ev.lyapunov.value,
            lyapunov_stderr: ev.lyapunov.stderr,
            pressure,
            sigma,
            rho: escape.rho,
            rho_lower: escape.rho_lower,
            gap: (pressure - escape.rho).abs(),
            class_flags: ev.class_flags,
            class_passing,
            ruelle_ok,
            inequality_ok,
            equality_ok,
        });
    }
    Ok(VariationalReport {
        system: sys.map.label(),
        escape_method: escape.method,
        rho: escape.rho,
        rho_lower: escape.rho_lower,
        rho_stderr: escape.stderr,
        verdict: if violations.is_empty() { Verdict::Pass } else { Verdict::Violated },
        reports,
        violations,
    })
}

impl VariationalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The `ν̂` report, if one was supplied.
    pub fn nu_hat(&self) -> Option<&PressureReport> {
        self.reports.iter().find(|r| r.nu_hat)
    }

    /// One row per candidate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "kind",
            "nu_hat",
            "supported",
            "entropy",
            "entropy_stderr",
            "lyapunov_sum",
            "lyapunov_stderr",
            "pressure",
            "sigma",
            "rho",
            "rho_lower",
            "gap",
            "g_h",
            "g_s",
            "g_phi",
            "e_converges",
            "class_passing",
            "ruelle_ok",
            "inequality_ok",
            "equality_ok",
        ])?;
        let opt = |b: Option<bool>| b.map(|b| b.to_string()).unwrap_or_default();
        let status = |s: ClassStatus| format!("{s:?}").to_lowercase();
        for r in &self.reports {
            w.write_record([
                r.label.clone(),
                r.kind.clone(),
                r.nu_hat.to_string(),
                r.supported_in_survivor.to_string(),
                format!("{:?}", r.entropy),
                format!("{:?}", r.entropy_stderr),
                format!("{:?}", r.lyapunov_sum),
                format!("{:?}", r.lyapunov_stderr),
                format!("{:?}", r.pressure),
                format!("{:?}", r.sigma),
                format!("{:?}", r.rho),
                format!("{:?}", r.rho_lower),
                format!("{:?}", r.gap),
                status(r.class_flags.g_h.status),
                status(r.class_flags.g_s.status),
                r.class_flags.g_phi.pass.to_string(),
                r.class_flags.e_converges.to_string(),
                r.class_passing.to_string(),
                r.ruelle_ok.to_string(),
                opt(r.inequality_ok),
                opt(r.equality_ok),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escape::escape_rate_grid;
    use crate::grid::{Grid, GridMeasure};
    use crate::systems::{HoleSpec, Model};

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn golden_mean_variational_equality() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
        let esc = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(64)), 40, None).unwrap();
        let mut cands = vec![markov_nu_hat(&sys, 6).unwrap()];
        cands.extend(periodic_candidates(&sys, 4, 0, 4));
        cands.extend(random_markov_candidates(&sys, 3, 3, 2).unwrap());
        let opts = PressureOptions {
            equality_route: true,
            stat_samples: 20_000,
            ..Default::default()
        };
        let rep = variational_report(&sys, &cands, &esc, &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.violations);
        let nu = rep.nu_hat().unwrap();
        assert!((nu.entropy - PHI.ln()).abs() < 1e-10);
        assert!((nu.pressure - (PHI.ln() - 2f64.ln())).abs() < 1e-10);
        assert!(nu.gap < 1e-6);
        assert!(rep.reports.iter().all(|r| r.class_passing), "{:#?}", rep.reports);
        // every other candidate has strictly smaller pressure
        assert!(rep.reports.iter().filter(|r| !r.nu_hat).all(|r| r.pressure < nu.pressure - 1e-3));
        let back = VariationalReport::from_json(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn triadic_middle_third_pressure() {
        let sys = OpenSystem::new(Model::triadic(), HoleSpec::interval(1.0 / 3.0, 2.0 / 3.0));
        let esc = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(27)), 30, None).unwrap();
        let cands = vec![markov_nu_hat(&sys, 2).unwrap()];
        let opts = PressureOptions {
            equality_route: true,
            stat_samples: 5_000,
            ..Default::default()
        };
        let rep = variational_report(&sys, &cands, &esc, &opts).unwrap();
        let nu = rep.nu_hat().unwrap();
        assert!((nu.pressure - (2f64.ln() - 3f64.ln())).abs() < 1e-12);
        assert!(nu.gap < 1e-12);
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn csv_has_one_row_per_candidate() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.5, 1.0));
        let esc = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(8)), 20, None).unwrap();
        let cands = periodic_candidates(&sys, 1, 0, 1);
        let rep = variational_report(&sys, &cands, &esc, &PressureOptions::default()).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
