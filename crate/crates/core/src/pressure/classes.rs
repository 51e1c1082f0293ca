use serde::{Deserialize, Serialize};

use super::MeasureRep;
use crate::grid::Grid;
use crate::systems::{MapModel, OpenSystem, Point};

/// Outcome of a power-law fit `ν(N_ε(A)) ≤ C ε^α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFit {
    pub status: ClassStatus,
    /// `None` when every neighborhood mass vanishes (any exponent works).
    pub constant: Option<f64>,
    pub alpha: Option<f64>,
    pub rms_residual: Option<f64>,
    /// `(ε, ν(N_ε(A)))`.
    pub masses: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiCheck {
    pub pass: bool,
    /// Essential infimum of the reference density on the cell `Z`.
    pub c_nu: f64,
    /// Index of `Z` in the probe grid and its rep mass.
    pub cell: usize,
    pub cell_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFlags {
    pub g_h: ClassFit,
    pub g_s: ClassFit,
    pub g_phi: PhiCheck,
    pub gamma: f64,
    /// `(ε, ν(E_{ε,γ}))` for decreasing `ε`.
    pub e_eps_gamma: Vec<(f64, f64)>,
    pub e_converges: bool,
}

impl ClassFlags {
    /// Member of `𝒢_H ∩ 𝒢_S ∩ 𝒢_φ` according to every diagnostic.
    pub fn passing(&self) -> bool {
        self.g_h.status == ClassStatus::Pass
            && self.g_s.status == ClassStatus::Pass
            && self.g_phi.pass
            && self.e_converges
    }
}

/// Settings for [`class_membership`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassOptions {
    /// Largest `ε`; fits use a decade below it.
    pub eps_max: f64,
    pub eps_points: usize,
    /// Steps checked for `E_{ε,γ}`.
    pub horizon: usize,
    /// `E_{ε,γ}` must reach this fraction at `ε = eps_max / 1000`.
    pub e_threshold: f64,
}

impl Default for ClassOptions {
    fn default() -> Self {
        Self {
            eps_max: 0.01,
            eps_points: 6,
            horizon: 20,
            e_threshold: 0.9,
        }
    }
}

const MAX_RMS: f64 = 0.3;
const MIN_ALPHA: f64 = 0.25;

/// Log-spaced `ε` from `eps_max` down to `eps_max / 10`.
pub fn eps_decade(eps_max: f64, points: usize) -> Vec<f64> {
    let k = points.max(2);
    (0..k).map(|i| eps_max * 10f64.powf(-(i as f64) / (k - 1) as f64)).collect()
}

fn fit(masses: Vec<(f64, f64)>) -> ClassFit {
    let zeros = masses.iter().filter(|m| m.1 == 0.0).count();
    let empty = |status| ClassFit {
        status,
        constant: None,
        alpha: None,
        rms_residual: None,
        masses: masses.clone(),
    };
    if zeros == masses.len() {
        return empty(ClassStatus::Pass);
    }
    if zeros > 0 {
        return empty(ClassStatus::Inconclusive);
    }
    let xs: Vec<f64> = masses.iter().map(|m| m.0.ln()).collect();
    let ys: Vec<f64> = masses.iter().map(|m| m.1.ln()).collect();
    let k = xs.len() as f64;
    let (xb, yb) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let alpha = sxy / sxx;
    let log_c = yb - alpha * xb;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - log_c - alpha * x).powi(2)).sum::<f64>() / k).sqrt();
    let status = if rms > MAX_RMS {
        ClassStatus::Inconclusive
    } else if alpha < MIN_ALPHA {
        ClassStatus::Fail
    } else {
        ClassStatus::Pass
    };
    // smallest C with the bound holding at every sampled ε
    let constant = masses.iter().map(|(e, m)| m / e.powf(alpha)).fold(0.0, f64::max);
    ClassFit {
        status,
        constant: Some(constant),
        alpha: Some(alpha),
        rms_residual: Some(rms),
        masses,
    }
}

/// `ν(N_ε(∂H))`, exact for one-dimensional grid measures with interval
/// holes and an empirical fraction otherwise.
pub fn boundary_mass(sys: &OpenSystem, rep: &MeasureRep, points: &[Point], eps: f64) -> f64 {
    if let (MeasureRep::Grid(g), Some(iv)) = (rep, sys.hole.intervals()) {
        if g.grid.dim == 1 {
            let mut ends: Vec<f64> = iv.iter().flat_map(|&(a, b)| [a, b]).filter(|&e| e > 0.0 && e < 1.0).collect();
            ends.sort_by(f64::total_cmp);
            ends.dedup();
            let mut spans: Vec<(f64, f64)> = Vec::new();
            for e in ends {
                let (a, b) = ((e - eps).max(0.0), (e + eps).min(1.0));
                match spans.last_mut() {
                    Some(last) if a <= last.1 => last.1 = b,
                    _ => spans.push((a, b)),
                }
            }
            return spans.iter().map(|&(a, b)| g.interval_mass(a, b)).sum::<f64>() / g.total();
        }
    }
    fraction(points, |p| sys.hole.boundary_distance(p) < eps)
}

fn fraction(points: &[Point], pred: impl Fn(Point) -> bool) -> f64 {
    points.iter().filter(|&&p| pred(p)).count() as f64 / points.len() as f64
}

fn in_e_set(sys: &OpenSystem, x: Point, eps: f64, gamma: f64, horizon: usize) -> bool {
    let mut p = x;
    for i in 0..=horizon {
        let r = eps * (-gamma * i as f64).exp();
        if sys.hole.contains(p) || sys.hole.boundary_distance(p) < r || sys.map.singularity_distance(p) < r {
            return false;
        }
        if i < horizon {
            match sys.map.evaluate(p) {
                Some(q) => p = q,
                None => return false,
            }
        }
    }
    true
}

/// Membership diagnostics for `𝒢_H`, `𝒢_S` and `𝒢_φ`.
///
/// `points` are ν-distributed samples (the orbit itself for periodic
/// measures) and `lambda_plus` sets `γ = 0.05 λ⁺` for the sets `E_{ε,γ}`.
pub fn class_membership(
    sys: &OpenSystem,
    rep: &MeasureRep,
    points: &[Point],
    lambda_plus: f64,
    opts: &ClassOptions,
) -> ClassFlags {
    let eps = eps_decade(opts.eps_max, opts.eps_points);
    let g_h = fit(eps.iter().map(|&e| (e, boundary_mass(sys, rep, points, e))).collect());
    let g_s = fit(
        eps.iter()
            .map(|&e| (e, fraction(points, |p| sys.map.singularity_distance(p) < e)))
            .collect(),
    );

    let probe = if sys.map.dimension() == 1 { Grid::line(64) } else { Grid::square(16) };
    let mut counts = vec![0usize; probe.cells()];
    points.iter().for_each(|&p| counts[probe.cell_of(p)] += 1);
    let cell = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0);
    let ((x0, x1), (y0, y1)) = probe.cell_bounds(cell);
    let lattice = (0..=4).flat_map(|i| {
        (0..=4).map(move |j| Point::new(x0 + (x1 - x0) * i as f64 / 4.0, y0 + (y1 - y0) * j as f64 / 4.0))
    });
    let in_cell = points.iter().copied().filter(|&p| probe.cell_of(p) == cell);
    let c_nu = lattice
        .chain(in_cell)
        .map(|p| sys.map.reference_density(p))
        .fold(f64::INFINITY, f64::min);
    let g_phi = PhiCheck {
        pass: c_nu > 0.0,
        c_nu,
        cell,
        cell_mass: counts[cell] as f64 / points.len().max(1) as f64,
    };

    let gamma = 0.05 * lambda_plus;
    let probes = &points[..points.len().min(20_000)];
    // E_{ε,γ} converges slowly near S, so it is followed three decades down
    let e_eps: Vec<f64> = (0..4).map(|k| opts.eps_max * 10f64.powi(-k)).collect();
    let e_eps_gamma: Vec<(f64, f64)> = e_eps
        .iter()
        .map(|&e| (e, fraction(probes, |p| in_e_set(sys, p, e, gamma, opts.horizon))))
        .collect();
    let e_converges = e_eps_gamma.last().is_some_and(|l| l.1 >= opts.e_threshold)
        && e_eps_gamma.windows(2).all(|w| w[1].1 >= w[0].1 - 0.02);
    ClassFlags {
        g_h,
        g_s,
        g_phi,
        gamma,
        e_eps_gamma,
        e_converges,
    }
}
