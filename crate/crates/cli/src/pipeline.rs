//! Stage runners. Each stage records its own status, so one failing stage
//! leaves the results of the others intact.

use or_core::billiard::{
    billiard_escape_sweep, reversal_error, srb_stationarity, survival_diagnostics, BilliardHole, BilliardTable, ChiSquareTest,
    SurvivalDiagnostics,
};
use or_core::dynballs::{ball_slopes, triangle_check, TriangleReport};
use or_core::error::Error;
use or_core::escape::{EscapeEstimate, EscapeMethod};
use or_core::parallel::with_workers;
use or_core::pressure::{
    default_candidates, entropy_brin_katok, lyapunov_sum, markov_nu_hat, sprinkle, variational_report, BrinKatok, LyapunovEstimate,
    VariationalReport, Verdict,
};
use or_core::sampling::stream;
use or_core::systems::{HoleSpec, OpenSystem, Point};
use or_core::tower::{
    abramov_check, gibbs_check, gibbs_measure, gurevich_pressure, tower_eigenvalue, validate_hypotheses, AbramovReport, GibbsCheck,
    GurevichTerm, HypothesisReport,
};
use or_core::ulam::{build_ulam, conditionally_invariant_check, leading_eigenpair, survivor_measure, Assembly};
use serde::{Deserialize, Serialize};

use crate::config::{BilliardSettings, ExperimentConfig};

pub const SUMMARY_SCHEMA: &str = "or-verify/summary/v1";

/// Floor of the tolerance when comparing two escape routes.
const ROUTE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Escape,
    Ulam,
    Tower,
    Pressure,
    Balls,
    Billiard,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Escape, Stage::Ulam, Stage::Tower, Stage::Pressure, Stage::Balls, Stage::Billiard];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Escape => "escape",
            Stage::Ulam => "ulam",
            Stage::Tower => "tower",
            Stage::Pressure => "pressure",
            Stage::Balls => "balls",
            Stage::Billiard => "billiard",
        }
    }
}

/// The stages a full `verify` run executes: every configured one.
pub fn configured_stages(cfg: &ExperimentConfig) -> Vec<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| match s {
            Stage::Escape => cfg.system.is_some(),
            Stage::Ulam => cfg.ulam.is_some(),
            Stage::Tower => cfg.tower.is_some(),
            Stage::Pressure => cfg.pressure.is_some(),
            Stage::Balls => cfg.balls.is_some(),
            Stage::Billiard => cfg.billiard.is_some(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Violated,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: Stage,
    pub status: Status,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Pass,
    Violated,
    Error,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub rho: Option<f64>,
    pub rho_stderr: Option<f64>,
    pub rho_lower: Option<f64>,
    /// Leading eigenvalue `𝔯`: Ulam route if run, tower route otherwise.
    pub eigenvalue: Option<f64>,
    pub log_eigenvalue: Option<f64>,
    pub p_nu_hat: Option<f64>,
    /// `|P_ν̂ − ρ|`.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteComparison {
    pub estimate: EscapeEstimate,
    pub delta: f64,
    /// `max(3·hypot(σ₁, σ₂), 1e−6)`.
    pub tolerance: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub hole: HoleSpec,
    pub volume: f64,
    pub estimate: Option<EscapeEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeStage {
    pub primary: EscapeEstimate,
    pub cross_checks: Vec<RouteComparison>,
    pub sweep: Vec<SweepRow>,
    /// `ρ` never increases from a hole to a hole containing it; `None`
    /// when the sweep has no nested pair.
    pub sweep_monotone: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamStage {
    pub resolution: usize,
    pub assembly: Assembly,
    pub warnings: Vec<String>,
    pub eigenvalue: f64,
    pub log_eigenvalue: f64,
    pub residual: f64,
    pub left_residual: f64,
    pub gap_estimate: f64,
    pub simple: bool,
    pub invariance_one_step: f64,
    pub invariance_at_n: f64,
    pub contraction_ratio: Option<f64>,
    /// L¹ distance between the product and limit routes to `ν̂`.
    pub nu_hat_discrepancy: Option<f64>,
    pub nu_hat_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerStage {
    pub eigenvalue: f64,
    pub log_eigenvalue: f64,
    /// `(branch, ν̄₀[branch])` for each unholed branch.
    pub gibbs_weights: Vec<(usize, f64)>,
    pub gibbs: GibbsCheck,
    pub gurevich: Vec<GurevichTerm>,
    pub gurevich_max_trace: f64,
    pub abramov: AbramovReport,
    pub hypotheses: HypothesisReport,
    /// `|𝔯_tower − 𝔯_ulam|` when both routes ran.
    pub ulam_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallsStage {
    pub eps: f64,
    pub centers: usize,
    pub lyapunov: LyapunovEstimate,
    pub max_slope: f64,
    pub mean_slope: f64,
    pub bound: f64,
    pub slope_ok: bool,
    pub skipped_centers: usize,
    pub triangle: Option<TriangleReport>,
    pub brin_katok: Option<BrinKatok>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardHoleResult {
    pub hole: BilliardHole,
    pub size: f64,
    pub estimate: Option<EscapeEstimate>,
    pub diagnostics: Option<SurvivalDiagnostics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalReport {
    pub states: usize,
    /// States starting on or reaching a tangency.
    pub singular: usize,
    pub worst: f64,
    pub median: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardStage {
    pub horizon_bound: f64,
    pub max_sampled_flight: f64,
    pub holes: Vec<BilliardHoleResult>,
    /// Nested pairs are ordered by `ρ`; `None` without nested pairs.
    pub nested_monotone: Option<bool>,
    /// Within each nested chain, `ρ` rises strictly toward 0 as the hole shrinks.
    pub trend_to_zero: Option<bool>,
    pub stationarity: ChiSquareTest,
    pub stationarity_ok: bool,
    pub reversal: ReversalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub name: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub verdict: RunVerdict,
    pub headline: Headline,
    pub violations: Vec<String>,
    pub stages: Vec<StageStatus>,
    pub escape: Option<EscapeStage>,
    pub ulam: Option<UlamStage>,
    pub tower: Option<TowerStage>,
    pub pressure: Option<VariationalReport>,
    pub balls: Option<BallsStage>,
    pub billiard: Option<BilliardStage>,
}

impl Summary {
    /// 0 on success, 2 when a check is violated, 1 when any stage failed.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            RunVerdict::Pass => 0,
            RunVerdict::Violated => 2,
            RunVerdict::Error => 1,
        }
    }
}

/// One CSV output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub csv: String,
}

/// Everything a run writes: the summary plus its CSV tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub summary: Summary,
    pub tables: Vec<Table>,
}

type StageResult<T> = Result<(T, Vec<String>), String>;

fn csv_table<F>(file: &str, header: &[&str], fill: F) -> Result<Table, String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    fill(&mut w).map_err(|e| e.to_string())?;
    finish(file, w.into_inner().map_err(|e| e.to_string())?)
}

fn finish(file: &str, bytes: Vec<u8>) -> Result<Table, String> {
    Ok(Table {
        file: file.into(),
        csv: String::from_utf8(bytes).map_err(|e| e.to_string())?,
    })
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Runs `stages` (plus the escape stage when pressure needs it) on a pool of
/// `cfg.workers` threads. The config should already be resolved.
pub fn run_pipeline(cfg: &ExperimentConfig, stages: &[Stage]) -> Bundle {
    with_workers(cfg.workers, || run_stages(cfg, stages))
}

fn run_stages(cfg: &ExperimentConfig, requested: &[Stage]) -> Bundle {
    let mut stages: Vec<Stage> = requested.to_vec();
    if stages.contains(&Stage::Pressure) && !stages.contains(&Stage::Escape) {
        stages.push(Stage::Escape);
    }
    stages.sort();
    stages.dedup();

    let mut summary = Summary {
        schema: SUMMARY_SCHEMA.into(),
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        verdict: RunVerdict::Pass,
        headline: Headline::default(),
        violations: Vec::new(),
        stages: Vec::new(),
        escape: None,
        ulam: None,
        tower: None,
        pressure: None,
        balls: None,
        billiard: None,
    };
    let mut tables = Vec::new();
    for stage in stages {
        let t = &mut tables;
        let outcome = match stage {
            Stage::Escape => record(run_escape(cfg, t), &mut summary.escape),
            Stage::Ulam => record(run_ulam(cfg, t), &mut summary.ulam),
            Stage::Tower => {
                let ulam_r = summary.ulam.as_ref().map(|u| u.eigenvalue);
                record(run_tower(cfg, ulam_r, t), &mut summary.tower)
            }
            Stage::Pressure => record(run_pressure(cfg, summary.escape.as_ref(), t), &mut summary.pressure),
            Stage::Balls => record(run_balls(cfg, t), &mut summary.balls),
            Stage::Billiard => record(run_billiard(cfg, t), &mut summary.billiard),
        };
        let status = match outcome {
            Ok(v) if v.is_empty() => StageStatus { stage, status: Status::Ok, message: None },
            Ok(v) => {
                let message = v.join("; ");
                summary.violations.extend(v.into_iter().map(|m| format!("{}: {m}", stage.name())));
                StageStatus { stage, status: Status::Violated, message: Some(message) }
            }
            Err(e) => StageStatus { stage, status: Status::Error, message: Some(e) },
        };
        summary.stages.push(status);
    }
    summary.headline = headline(&summary);
    summary.verdict = if summary.stages.iter().any(|s| s.status == Status::Error) {
        RunVerdict::Error
    } else if !summary.violations.is_empty() {
        RunVerdict::Violated
    } else {
        RunVerdict::Pass
    };
    Bundle { summary, tables }
}

fn record<T>(r: StageResult<T>, slot: &mut Option<T>) -> Result<Vec<String>, String> {
    r.map(|(value, violations)| {
        *slot = Some(value);
        violations
    })
}

fn headline(s: &Summary) -> Headline {
    let mut h = Headline::default();
    if let Some(e) = &s.escape {
        h.rho = Some(e.primary.rho);
        h.rho_stderr = Some(e.primary.stderr);
        h.rho_lower = Some(e.primary.rho_lower);
    }
    h.eigenvalue = s.ulam.as_ref().map(|u| u.eigenvalue).or(s.tower.as_ref().map(|t| t.eigenvalue));
    h.log_eigenvalue = h.eigenvalue.map(f64::ln);
    if let Some(nu) = s.pressure.as_ref().and_then(|p| p.nu_hat()) {
        h.p_nu_hat = Some(nu.pressure);
        h.gap = Some(nu.gap);
    }
    h
}

fn system(cfg: &ExperimentConfig) -> Result<&OpenSystem, String> {
    cfg.system.as_ref().ok_or_else(|| "no system configured".to_string())
}

fn err(e: Error) -> String {
    e.to_string()
}

fn run_escape(cfg: &ExperimentConfig, tables: &mut Vec<Table>) -> StageResult<EscapeStage> {
    let sys = system(cfg)?;
    let primary = cfg.escape.estimate(sys).map_err(err)?;
    tables.push(survival_table("escape.csv", &primary)?);
    let mut cross_checks = Vec::new();
    for (i, c) in cfg.cross_checks.iter().enumerate() {
        let estimate = c.estimate(sys).map_err(err)?;
        tables.push(survival_table(&format!("escape_check_{i}_{}.csv", method_name(c.method)), &estimate)?);
        let delta = (estimate.rho - primary.rho).abs();
        let tolerance = (3.0 * estimate.stderr.hypot(primary.stderr)).max(ROUTE_FLOOR);
        cross_checks.push(RouteComparison {
            estimate,
            delta,
            tolerance,
            agrees: delta < tolerance,
        });
    }
    let sweep: Vec<SweepRow> = cfg
        .sweep
        .iter()
        .enumerate()
        .map(|(index, hole)| {
            let r = cfg.escape.estimate(&OpenSystem::new(sys.map.clone(), hole.clone()));
            SweepRow {
                index,
                hole: hole.clone(),
                volume: hole.volume(),
                error: r.as_ref().err().map(|e| e.to_string()),
                estimate: r.ok(),
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for a in &sweep {
        for b in &sweep {
            if let (Some(ea), Some(eb)) = (&a.estimate, &b.estimate) {
                // a ⊂ b, so ρ_b ≤ ρ_a
                if a.index != b.index && a.hole.is_subset_of(&b.hole) {
                    let tol = (3.0 * ea.stderr.hypot(eb.stderr)).max(1e-12);
                    pairs.push(eb.rho <= ea.rho + tol);
                }
            }
        }
    }
    let sweep_monotone = (!pairs.is_empty()).then(|| pairs.iter().all(|&p| p));
    if !sweep.is_empty() {
        tables.push(csv_table(
            "sweep.csv",
            &["index", "volume", "rho", "stderr", "rho_lower", "rho_upper", "error"],
            |w| {
                for r in &sweep {
                    let e = r.estimate.as_ref();
                    w.write_record([
                        r.index.to_string(),
                        num(r.volume),
                        opt(e.map(|e| e.rho)),
                        opt(e.map(|e| e.stderr)),
                        opt(e.map(|e| e.rho_lower)),
                        opt(e.map(|e| e.rho_upper)),
                        r.error.clone().unwrap_or_default(),
                    ])?;
                }
                Ok(())
            },
        )?);
    }
    Ok((
        EscapeStage {
            primary,
            cross_checks,
            sweep,
            sweep_monotone,
        },
        Vec::new(),
    ))
}

fn survival_table(file: &str, e: &EscapeEstimate) -> Result<Table, String> {
    let mut buf = Vec::new();
    e.write_csv(&mut buf).map_err(err)?;
    finish(file, buf)
}

fn run_ulam(cfg: &ExperimentConfig, tables: &mut Vec<Table>) -> StageResult<UlamStage> {
    let sys = system(cfg)?;
    let u = cfg.ulam.clone().unwrap_or_default();
    let op = build_ulam(sys, u.resolution).map_err(err)?;
    let spec = leading_eigenpair(&op, u.tol, u.max_iters).map_err(err)?;
    let inv = conditionally_invariant_check(&op, &spec, u.invariance_steps);
    let nu = survivor_measure(&op, &spec);
    tables.push(csv_table("ulam_density.csv", &["cell", "density", "left"], |w| {
        for (k, (d, l)) in spec.right.iter().zip(&spec.left).enumerate() {
            w.write_record([k.to_string(), num(*d), num(*l)])?;
        }
        Ok(())
    })?);
    Ok((
        UlamStage {
            resolution: u.resolution,
            assembly: op.assembly,
            warnings: op.warnings.clone(),
            eigenvalue: spec.eigenvalue,
            log_eigenvalue: spec.eigenvalue.ln(),
            residual: spec.residual,
            left_residual: spec.left_residual,
            gap_estimate: spec.gap_estimate,
            simple: spec.is_simple(),
            invariance_one_step: inv.one_step,
            invariance_at_n: inv.at_n(),
            contraction_ratio: inv.contraction_ratio(),
            nu_hat_discrepancy: nu.as_ref().ok().map(|m| m.discrepancy),
            nu_hat_error: nu.err().map(|e| e.to_string()),
        },
        Vec::new(),
    ))
}

fn run_tower(cfg: &ExperimentConfig, ulam_r: Option<f64>, tables: &mut Vec<Table>) -> StageResult<TowerStage> {
    let ts = cfg.tower.clone().unwrap_or_default();
    let t = &ts.spec;
    let r = tower_eigenvalue(t, 1e-15).map_err(err)?;
    let m = gibbs_measure(t, r, ts.gibbs_depth).map_err(err)?;
    let gibbs_weights = m.states.iter().map(|&i| (i, m.weight(&[i]).unwrap_or(0.0))).collect();
    let gurevich = gurevich_pressure(t, r, ts.gurevich_n, ts.gurevich_branch, 0.0).map_err(err)?;
    let gurevich_max_trace = gurevich.iter().map(|g| g.trace.abs()).fold(0.0, f64::max);
    let abramov = abramov_check(t, &m).map_err(err)?;
    tables.push(csv_table("tower_gurevich.csv", &["n", "trace", "cylinder"], |w| {
        for g in &gurevich {
            w.write_record([g.n.to_string(), num(g.trace), num(g.cylinder)])?;
        }
        Ok(())
    })?);
    Ok((
        TowerStage {
            eigenvalue: r,
            log_eigenvalue: r.ln(),
            gibbs_weights,
            gibbs: gibbs_check(t, &m),
            gurevich,
            gurevich_max_trace,
            abramov,
            hypotheses: validate_hypotheses(t, ts.c_bar, ts.theta_bar, None),
            ulam_difference: ulam_r.map(|u| (u - r).abs()),
        },
        Vec::new(),
    ))
}

fn run_pressure(cfg: &ExperimentConfig, escape: Option<&EscapeStage>, tables: &mut Vec<Table>) -> StageResult<VariationalReport> {
    let sys = system(cfg)?;
    let escape = escape.ok_or_else(|| "the escape stage did not produce an estimate".to_string())?;
    let p = cfg.pressure.clone().unwrap_or_default();
    let candidates = default_candidates(sys, &p.candidates).map_err(err)?;
    let report = variational_report(sys, &candidates, &escape.primary, &p.options).map_err(err)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(err)?;
    tables.push(finish("pressure.csv", buf)?);
    let violations = match report.verdict {
        Verdict::Pass => Vec::new(),
        Verdict::Violated => report.violations.clone(),
    };
    Ok((report, violations))
}

/// Points of `ν̂`: exact Markov samples when the hole is Markov, sprinkled
/// survivors otherwise.
fn nu_hat_points(sys: &OpenSystem, count: usize, seed: u64) -> Result<Vec<Point>, String> {
    if let Ok(c) = markov_nu_hat(sys, 6) {
        return c.rep.points(count, seed).map_err(err);
    }
    let pts: Vec<Point> = sprinkle(sys, 4 * count, 20, seed).into_iter().take(count).collect();
    if pts.len() < count {
        return Err(format!("only {} of {count} sprinkled points survive", pts.len()));
    }
    Ok(pts)
}

fn run_balls(cfg: &ExperimentConfig, tables: &mut Vec<Table>) -> StageResult<BallsStage> {
    let sys = system(cfg)?;
    let b = cfg.balls.clone().unwrap_or_default();
    let centers = nu_hat_points(sys, b.centers, b.seed)?;
    let lyapunov = lyapunov_sum(&sys.map, &centers, 30).map_err(err)?;
    let sweep = ball_slopes(sys, &centers, b.eps, &b.horizons, None, b.proposals, b.seed ^ 0xB411).map_err(err)?;
    if sweep.fitted.is_empty() {
        return Err("every ball center reached the singularity set".into());
    }
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf).map_err(err)?;
    tables.push(finish("balls.csv", buf)?);
    let bound = lyapunov.value + b.slack;
    let (max_slope, mean_slope) = (sweep.max_fitted(), sweep.mean_fitted());
    let mut violations = Vec::new();
    let slope_ok = max_slope <= bound;
    if !slope_ok {
        violations.push(format!("ball slope {max_slope} exceeds λ⁺ + slack = {bound}"));
    }
    let triangle = (b.triangle_triples > 0).then(|| triangle_check(&b.triangle_singular, b.eps, b.triangle_triples, b.seed ^ 0x7419));
    if let Some(t) = &triangle {
        if t.violations > 0 || t.intermediate_violations > 0 {
            violations.push(format!(
                "triangle check: {} violations, {} intermediate",
                t.violations, t.intermediate_violations
            ));
        }
    }
    let brin_katok = if b.brin_katok_points > 0 {
        let pts = nu_hat_points(sys, b.brin_katok_points, b.seed ^ 0xB4)?;
        Some(entropy_brin_katok(sys, &pts, &[b.eps, b.eps / 2.0], 16, 200).map_err(err)?)
    } else {
        None
    };
    Ok((
        BallsStage {
            eps: b.eps,
            centers: centers.len(),
            lyapunov,
            max_slope,
            mean_slope,
            bound,
            slope_ok,
            skipped_centers: sweep.skipped,
            triangle,
            brin_katok,
        },
        violations,
    ))
}

fn run_billiard(cfg: &ExperimentConfig, tables: &mut Vec<Table>) -> StageResult<BilliardStage> {
    let BilliardSettings {
        experiment: e,
        stationarity: st,
        reversal: rv,
    } = cfg.billiard.clone().ok_or_else(|| "no billiard experiment configured".to_string())?;
    let table = BilliardTable::new(&e.table).map_err(err)?;
    let results = billiard_escape_sweep(&table, &e.holes, e.samples, e.n_max, e.seed, e.window).map_err(err)?;
    let holes: Vec<BilliardHoleResult> = e
        .holes
        .iter()
        .zip(results)
        .map(|(&hole, r)| BilliardHoleResult {
            hole,
            size: hole.size(),
            diagnostics: r.as_ref().ok().map(survival_diagnostics),
            error: r.as_ref().err().map(|e| e.to_string()),
            estimate: r.ok(),
        })
        .collect();

    let mut pairs = Vec::new();
    for (i, a) in holes.iter().enumerate() {
        for (j, b) in holes.iter().enumerate() {
            if let (Some(ea), Some(eb)) = (&a.estimate, &b.estimate) {
                if i != j && a.hole != b.hole && a.hole.is_subset_of(&b.hole) {
                    pairs.push(eb.rho <= ea.rho);
                }
            }
        }
    }
    let nested_monotone = (!pairs.is_empty()).then(|| pairs.iter().all(|&p| p));
    let trend_to_zero = chains(&holes).map(|chains| {
        chains.iter().all(|c| {
            let rhos: Vec<f64> = c.iter().filter_map(|&k| holes[k].estimate.as_ref().map(|e| e.rho)).collect();
            rhos.len() == c.len() && rhos.windows(2).all(|w| w[0] < w[1]) && rhos.iter().all(|&r| r < 0.0)
        })
    });

    let stationarity = srb_stationarity(&table, st.samples, st.steps, st.r_bins, st.theta_bins, e.seed ^ 0x5B).map_err(err)?;
    let stationarity_ok = stationarity.p_value >= st.alpha;
    let reversal = reversal_report(&table, rv.states, rv.steps, rv.tolerance, e.seed ^ 0x4E7)?;
    let mut violations = Vec::new();
    if !reversal.ok {
        violations.push(format!("reversal error {:e} exceeds {:e}", reversal.worst, rv.tolerance));
    }

    tables.push(csv_table("billiard_survival.csv", &["hole", "n", "mass"], |w| {
        for (k, h) in holes.iter().enumerate() {
            for &(n, m) in h.estimate.iter().flat_map(|e| &e.per_n_mass) {
                w.write_record([k.to_string(), n.to_string(), num(m)])?;
            }
        }
        Ok(())
    })?);
    tables.push(csv_table(
        "billiard_holes.csv",
        &["hole", "size", "rho", "stderr", "rho_lower", "ratio_drift", "min_second_difference", "fit_residual", "error"],
        |w| {
            for (k, h) in holes.iter().enumerate() {
                let e = h.estimate.as_ref();
                let d = h.diagnostics.as_ref();
                w.write_record([
                    k.to_string(),
                    num(h.size),
                    opt(e.map(|e| e.rho)),
                    opt(e.map(|e| e.stderr)),
                    opt(e.map(|e| e.rho_lower)),
                    opt(d.map(|d| d.ratio_drift)),
                    opt(d.map(|d| d.min_second_difference)),
                    opt(d.map(|d| d.fit_residual)),
                    h.error.clone().unwrap_or_default(),
                ])?;
            }
            Ok(())
        },
    )?);
    Ok((
        BilliardStage {
            horizon_bound: table.horizon_bound,
            max_sampled_flight: table.max_sampled_flight,
            holes,
            nested_monotone,
            trend_to_zero,
            stationarity,
            stationarity_ok,
            reversal,
        },
        violations,
    ))
}

/// Maximal chains of nested holes, largest first; `None` if no hole nests
/// in another.
fn chains(holes: &[BilliardHoleResult]) -> Option<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..holes.len()).filter(|&k| holes[k].hole != BilliardHole::Empty).collect();
    order.sort_by(|&a, &b| holes[b].size.total_cmp(&holes[a].size));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for k in order {
        match out
            .iter_mut()
            .find(|c| holes[k].hole.is_subset_of(&holes[*c.last().expect("nonempty")].hole))
        {
            Some(c) => c.push(k),
            None => out.push(vec![k]),
        }
    }
    out.retain(|c| c.len() >= 2);
    (!out.is_empty()).then_some(out)
}

fn reversal_report(table: &BilliardTable, states: usize, steps: usize, tolerance: f64, seed: u64) -> Result<ReversalReport, String> {
    let mut rng = stream(seed, 0);
    let mut errors = Vec::with_capacity(states);
    let mut singular = 0;
    for _ in 0..states {
        let s = table.sample_srb(&mut rng);
        match reversal_error(table, &s, steps) {
            Ok(d) => errors.push(d),
            Err(Error::Singularity { .. }) => singular += 1,
            Err(e) => return Err(e.to_string()),
        }
    }
    if errors.is_empty() {
        return Err("every sampled state met a tangency".into());
    }
    errors.sort_by(f64::total_cmp);
    let worst = *errors.last().expect("nonempty");
    Ok(ReversalReport {
        states,
        singular,
        worst,
        median: errors[errors.len() / 2],
        ok: worst <= tolerance,
    })
}

/// Method label used in file names.
pub fn method_name(m: EscapeMethod) -> &'static str {
    match m {
        EscapeMethod::Grid => "grid",
        EscapeMethod::MonteCarlo => "monte_carlo",
        EscapeMethod::WordCount => "word_count",
    }
}
