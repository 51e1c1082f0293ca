//! Dynamical balls `B(x, n, g) = {y : d(fⁱx, fⁱy) < g(fⁱx), i ≤ n} ∩ Mⁿ`,
//! their masses, and the counting constructions built on them.
//!
//! Ball masses are estimated by importance sampling: proposals are uniform in
//! a box around `x` aligned with the singular vectors of `Dfⁿ(x)`, with
//! half-widths twice the linearized ball extent, capped by the step-0 radius.
//! The estimate is the box volume times the mean of `1_B · dm/dLeb` over the
//! proposals, which is unbiased whenever the box contains the ball.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMeasure;
use crate::sampling::{sharded, stream, unit};
use crate::systems::{Jacobian, MapModel, OpenSystem, PhaseSpace, Point, SINGULARITY_GUARD};

/// Fewer hits than this make a ball-mass estimate unusable.
pub const MIN_HITS: u64 = 30;

/// Radius rule along the orbit of the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BallMode {
    /// `g_ε = (1/3) min(ε, d(·, S))`, intersected with `Mⁿ`.
    GEps { eps: f64 },
    /// Radii `ε e^{−γ i}`, no survival condition.
    Star { eps: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub n: usize,
    pub mode: BallMode,
}

/// `g_ε(p) = (1/3) min(ε, d(p, S))`.
pub fn g_eps(sys: &OpenSystem, p: Point, eps: f64) -> f64 {
    eps.min(sys.map.singularity_distance(p)) / 3.0
}

/// The orbit of the center with the radius at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct BallTube {
    pub spec: BallSpec,
    pub orbit: Vec<Point>,
    pub radii: Vec<f64>,
}

impl BallTube {
    /// Fails when the orbit of the center reaches the singularity set.
    pub fn new(sys: &OpenSystem, spec: BallSpec) -> Result<Self> {
        let mut orbit = Vec::with_capacity(spec.n + 1);
        let mut p = spec.center;
        for i in 0..=spec.n {
            if sys.map.singularity_distance(p) < SINGULARITY_GUARD {
                return Err(Error::Singularity { step: i });
            }
            orbit.push(p);
            if i < spec.n {
                p = sys.map.evaluate(p).ok_or(Error::Singularity { step: i + 1 })?;
            }
        }
        let radii = orbit
            .iter()
            .enumerate()
            .map(|(i, &q)| match spec.mode {
                BallMode::GEps { eps } => g_eps(sys, q, eps),
                BallMode::Star { eps, gamma } => eps * (-gamma * i as f64).exp(),
            })
            .collect();
        Ok(Self { spec, orbit, radii })
    }

    /// Membership of `y`. Points whose orbit reaches the singularity set are
    /// outside `Mⁿ` and so outside the ball.
    pub fn contains(&self, sys: &OpenSystem, y: Point) -> bool {
        let survive = matches!(self.spec.mode, BallMode::GEps { .. });
        let mut q = y;
        for i in 0..=self.spec.n {
            if sys.map.distance(self.orbit[i], q) >= self.radii[i] {
                return false;
            }
            if survive && sys.hole.contains(q) {
                return false;
            }
            if i < self.spec.n {
                match sys.map.evaluate(q) {
                    Some(next) if sys.map.singularity_distance(next) >= SINGULARITY_GUARD => q = next,
                    _ => return false,
                }
            }
        }
        true
    }
}

pub fn ball_member(sys: &OpenSystem, spec: BallSpec, y: Point) -> Result<bool> {
    Ok(BallTube::new(sys, spec)?.contains(sys, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub mass: f64,
    pub stderr: f64,
    pub hits: u64,
    pub proposals: usize,
}

fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Right singular vectors and singular values of a 2x2 matrix.
fn svd2(a: [[f64; 2]; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
    // eigen-decomposition of AᵀA
    let p = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    let q = a[0][0] * a[0][1] + a[1][0] * a[1][1];
    let r = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    let mean = 0.5 * (p + r);
    let dev = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let (l1, l2) = (mean + dev, (mean - dev).max(0.0));
    let theta = 0.5 * (2.0 * q).atan2(p - r);
    let (c, s) = (theta.cos(), theta.sin());
    ([[c, -s], [s, c]], [l1.sqrt(), l2.sqrt()])
}

/// Proposal box: directions (columns) and half-widths.
fn proposal_box(sys: &OpenSystem, tube: &BallTube) -> ([[f64; 2]; 2], [f64; 2]) {
    let g0 = tube.radii[0];
    let gn = tube.radii[tube.spec.n];
    let n = tube.spec.n;
    if sys.map.dimension() == 1 {
        let d: f64 = tube.orbit[..n]
            .iter()
            .map(|&p| match sys.map.derivative(p) {
                Jacobian::Scalar(d) => d.abs(),
                Jacobian::Matrix(_) => unreachable!(),
            })
            .product();
        let w = if d > 0.0 { (gn / d).min(g0) } else { g0 };
        return ([[1.0, 0.0], [0.0, 1.0]], [(2.0 * w).min(g0), 0.0]);
    }
    let prod = tube.orbit[..n].iter().fold([[1.0, 0.0], [0.0, 1.0]], |acc, &p| {
        let j = match sys.map.derivative(p) {
            Jacobian::Matrix(m) => m,
            Jacobian::Scalar(d) => [[d, 0.0], [0.0, 1.0]],
        };
        matmul(j, acc)
    });
    let (v, s) = svd2(prod);
    let w = |sk: f64| if sk > 0.0 { (2.0 * (gn / sk).min(g0)).min(g0) } else { g0 };
    (v, [w(s[0]), w(s[1])])
}

/// Mass of the ball under `m` (Lebesgue when `None`) from `proposals`
/// importance samples. Errors with fewer than 30 hits.
pub fn ball_measure(
    sys: &OpenSystem,
    spec: BallSpec,
    m: Option<&GridMeasure>,
    proposals: usize,
    seed: u64,
) -> Result<BallMass> {
    let tube = BallTube::new(sys, spec)?;
    let (dirs, half) = proposal_box(sys, &tube);
    let dim = sys.map.dimension();
    let space = sys.map.space();
    let volume = if dim == 1 { 2.0 * half[0] } else { 4.0 * half[0] * half[1] };
    let shards = sharded(proposals, seed, |rng, count| {
        let (mut hits, mut sum, mut sum2) = (0u64, 0.0, 0.0);
        for _ in 0..count {
            let a = (2.0 * unit(rng) - 1.0) * half[0];
            let raw = if dim == 1 {
                Point::line(spec.center.x + a)
            } else {
                let b = (2.0 * unit(rng) - 1.0) * half[1];
                Point::new(
                    spec.center.x + a * dirs[0][0] + b * dirs[0][1],
                    spec.center.y + a * dirs[1][0] + b * dirs[1][1],
                )
            };
            if space == PhaseSpace::Interval && !(0.0..=1.0).contains(&raw.x) {
                continue;
            }
            let y = space.wrap(raw);
            if tube.contains(sys, y) {
                let w = m.map_or(1.0, |g| g.density_at(y) / g.total());
                hits += 1;
                sum += w;
                sum2 += w * w;
            }
        }
        (hits, sum, sum2)
    });
    let (hits, sum, sum2) = shards
        .into_iter()
        .fold((0, 0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    if hits < MIN_HITS {
        return Err(Error::InsufficientSample(format!(
            "{hits} of {proposals} proposals hit the ball (need {MIN_HITS})"
        )));
    }
    let k = proposals as f64;
    let mean = sum / k;
    let var = (sum2 / k - mean * mean).max(0.0);
    Ok(BallMass {
        mass: volume * mean,
        stderr: volume * (var / k).sqrt(),
        hits,
        proposals,
    })
}

/// One CSV row of a slope sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub center_id: usize,
    pub n: usize,
    pub mass: f64,
    /// `−(1/n) log mass`.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSweep {
    pub rows: Vec<SlopeRow>,
    /// Least-squares slope of `−log mass` in `n`, per center.
    pub fitted: Vec<f64>,
    /// Centers skipped for reaching the singularity set.
    pub skipped: usize,
}

impl SlopeSweep {
    pub fn max_fitted(&self) -> f64 {
        self.fitted.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_fitted(&self) -> f64 {
        self.fitted.iter().sum::<f64>() / self.fitted.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["center_id", "n", "mass", "slope"])?;
        for r in &self.rows {
            w.write_record([r.center_id.to_string(), r.n.to_string(), format!("{:?}", r.mass), format!("{:?}", r.slope)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ball masses of `g_ε` balls at each `n` in `ns` around every center, and
/// the per-center slope of `−log mass` against `n`.
pub fn ball_slopes(
    sys: &OpenSystem,
    centers: &[Point],
    eps: f64,
    ns: &[usize],
    m: Option<&GridMeasure>,
    proposals: usize,
    seed: u64,
) -> Result<SlopeSweep> {
    if ns.len() < 2 {
        return Err(Error::Config("a slope sweep needs at least two horizons".into()));
    }
    let per_center: Vec<Result<Option<Vec<SlopeRow>>>> = centers
        .par_iter()
        .enumerate()
        .map(|(c, &x)| {
            let mut rows = Vec::with_capacity(ns.len());
            for (k, &n) in ns.iter().enumerate() {
                let spec = BallSpec {
                    center: x,
                    n,
                    mode: BallMode::GEps { eps },
                };
                let s = seed ^ ((c * ns.len() + k) as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                match ball_measure(sys, spec, m, proposals, s) {
                    Ok(b) => rows.push(SlopeRow {
                        center_id: c,
                        n,
                        mass: b.mass,
                        slope: if n == 0 { f64::NAN } else { -b.mass.ln() / n as f64 },
                    }),
                    Err(Error::Singularity { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(rows))
        })
        .collect();
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    let mut skipped = 0;
    for r in per_center {
        let Some(r) = r? else {
            skipped += 1;
            continue;
        };
        let xs: Vec<f64> = r.iter().map(|row| row.n as f64).collect();
        let ys: Vec<f64> = r.iter().map(|row| -row.mass.ln()).collect();
        let k = xs.len() as f64;
        let (xb, yb) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
        fitted.push(sxy / sxx);
        rows.extend(r);
    }
    Ok(SlopeSweep { rows, fitted, skipped })
}

/// Result of checking `d(x, y) ≤ 3 g_ε(x)` on triples with
/// `d(x, z) ≤ g_ε(x)` and `d(z, y) ≤ g_ε(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub triples: usize,
    pub violations: usize,
    /// Triples breaking `d(y, S) ≤ 2 d(x, S)`.
    pub intermediate_violations: usize,
    /// Largest observed `d(x, y) / g_ε(x)`.
    pub max_ratio: f64,
}

/// Triangle check on `[0, 1]` with a finite singular set `s`. A quarter of
/// the triples start within `ε` of `S`; `y` is drawn by rejection from the
/// `ε/3`-neighborhood of `z`.
pub fn triangle_check(s: &[f64], eps: f64, triples: usize, seed: u64) -> TriangleReport {
    let dist_s = |p: f64| s.iter().map(|q| (p - q).abs()).fold(f64::INFINITY, f64::min);
    let g = |p: f64| eps.min(dist_s(p)) / 3.0;
    let shards = sharded(triples, seed, |rng, count| {
        let mut rep = TriangleReport {
            triples: count,
            violations: 0,
            intermediate_violations: 0,
            max_ratio: 0.0,
        };
        let mut done = 0;
        while done < count {
            let x = if !s.is_empty() && done % 4 == 0 {
                let c = s[(unit(rng) * s.len() as f64) as usize % s.len()];
                (c + (2.0 * unit(rng) - 1.0) * eps).clamp(0.0, 1.0)
            } else {
                unit(rng)
            };
            let gx = g(x);
            if gx <= 0.0 {
                continue;
            }
            let z = (x + (2.0 * unit(rng) - 1.0) * gx).clamp(0.0, 1.0);
            let y = loop {
                let y = (z + (2.0 * unit(rng) - 1.0) * eps / 3.0).clamp(0.0, 1.0);
                if (z - y).abs() <= g(y) {
                    break Some(y);
                }
                if g(z) == 0.0 {
                    break None;
                }
            };
            let Some(y) = y else { continue };
            done += 1;
            let ratio = (x - y).abs() / gx;
            rep.max_ratio = rep.max_ratio.max(ratio);
            if (x - y).abs() > 3.0 * gx * (1.0 + 1e-12) {
                rep.violations += 1;
            }
            if dist_s(y) > 2.0 * dist_s(x) * (1.0 + 1e-12) {
                rep.intermediate_violations += 1;
            }
        }
        rep
    });
    shards.into_iter().fold(
        TriangleReport {
            triples: 0,
            violations: 0,
            intermediate_violations: 0,
            max_ratio: 0.0,
        },
        |a, b| TriangleReport {
            triples: a.triples + b.triples,
            violations: a.violations + b.violations,
            intermediate_violations: a.intermediate_violations + b.intermediate_violations,
            max_ratio: a.max_ratio.max(b.max_ratio),
        },
    )
}

/// Sizes of greedy maximal `(n, g_ε)`-separated subsets of `points`, for
/// `n = 0..=n_max`. Points are scanned in order; a point joins when some
/// `i ≤ n` has `d(fⁱx, fⁱc) ≥ g_ε(fⁱc)` for every member `c`. Points leaving
/// `Mⁿ` are skipped at that `n`.
pub fn separated_set_sizes(sys: &OpenSystem, points: &[Point], eps: f64, n_max: usize) -> Vec<usize> {
    let orbits: Vec<Vec<Point>> = points
        .par_iter()
        .map(|&x| match sys.iterate(x, n_max) {
            Ok(t) if t.escape_step.is_none() && t.singular_step.is_none() => t.points,
            Ok(t) => t.points[..t.points.len() - 1].to_vec(),
            Err(_) => Vec::new(),
        })
        .collect();
    (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let mut members: Vec<usize> = Vec::new();
            for (j, o) in orbits.iter().enumerate() {
                if o.len() <= n {
                    continue;
                }
                let separated = members.iter().all(|&c| {
                    let oc = &orbits[c];
                    (0..=n).any(|i| sys.map.distance(o[i], oc[i]) >= g_eps(sys, oc[i], eps))
                });
                if separated {
                    members.push(j);
                }
            }
            members.len()
        })
        .collect()
}

/// Checks that star balls sit inside `g_ε` balls for centers in `E_{ε,γ}`:
/// returns the number of `(x, y)` pairs with `y` in the star ball of radius
/// `ε/3` but some `d(fⁱx, fⁱy) ≥ g_ε(fⁱx)`.
pub fn star_inclusion_violations(sys: &OpenSystem, centers: &[Point], eps: f64, gamma: f64, n: usize, seed: u64) -> usize {
    centers
        .par_iter()
        .enumerate()
        .map(|(c, &x)| {
            let Ok(star) = BallTube::new(
                sys,
                BallSpec {
                    center: x,
                    n,
                    mode: BallMode::Star { eps: eps / 3.0, gamma },
                },
            ) else {
                return 0;
            };
            // only centers whose orbit keeps distance εe^{−γi} from S
            let in_e = star
                .orbit
                .iter()
                .enumerate()
                .all(|(i, &p)| sys.map.singularity_distance(p) >= eps * (-gamma * i as f64).exp());
            if !in_e {
                return 0;
            }
            let g: Vec<f64> = star.orbit.iter().map(|&p| g_eps(sys, p, eps)).collect();
            let mut rng = stream(seed, c as u64);
            let mut bad = 0;
            for _ in 0..200 {
                let r = star.radii[0];
                let y = sys.map.space().wrap(Point::new(
                    x.x + (2.0 * unit(&mut rng) - 1.0) * r,
                    x.y + (2.0 * unit(&mut rng) - 1.0) * r * (sys.map.dimension() - 1) as f64,
                ));
                if !star.contains(sys, y) {
                    continue;
                }
                let mut q = y;
                for i in 0..=n {
                    if sys.map.distance(star.orbit[i], q) >= g[i] {
                        bad += 1;
                        break;
                    }
                    if i < n {
                        q = sys.map.evaluate(q).unwrap_or(q);
                    }
                }
            }
            bad
        })
        .sum()
}
