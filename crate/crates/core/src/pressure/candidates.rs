//! Constructors for candidate invariant measures on the survivor set.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Candidate, MeasureRep};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::markov::MarkovChain;
use crate::sampling::{sharded, stream, Lebesgue, PointSampler};
use crate::systems::{HoleKind, HoleSpec, MapModel, Model, OpenSystem, Point, SINGULARITY_GUARD};
use crate::ulam::{build_ulam, leading_eigenpair, survivor_chain, survivor_measure};

/// Samples approximating `ν̂`: Lebesgue points whose orbits survive `2 burn`
/// steps, pushed forward by `burn` steps. The outputs are in shard order and
/// survive at least `burn` further steps.
pub fn sprinkle(sys: &OpenSystem, draws: usize, burn: usize, seed: u64) -> Vec<Point> {
    let leb = Lebesgue { dim: sys.map.dimension() };
    sharded(draws, seed, |rng, count| {
        let mut out = Vec::new();
        for _ in 0..count {
            let x = leb.sample(rng);
            if let Ok(t) = sys.iterate(x, 2 * burn) {
                if t.escape_step.is_none() && t.singular_step.is_none() {
                    out.push(t.points[burn]);
                }
            }
        }
        out
    })
    .concat()
}

fn avoids_hole(sys: &OpenSystem, orbit: &[Point]) -> bool {
    orbit.iter().all(|&p| {
        !sys.hole.contains(p) && sys.hole.boundary_distance(p) > 1e-12 && sys.map.singularity_distance(p) > SINGULARITY_GUARD
    })
}

/// Orbit of `k` under `k ↦ m k mod d`, stopping at the first return.
fn residue_orbit(k: u64, m: u64, d: u64) -> Vec<u64> {
    let mut out = vec![k];
    let mut c = (k * m) % d;
    while c != k {
        out.push(c);
        c = (c * m) % d;
    }
    out
}

/// Periodic orbits of period at most `max_period` that stay a positive
/// distance from the hole and the singularity set, listed in orbit order and
/// sorted by period. Orbits are exact rationals (m-adic, baker, cat on the
/// lattices `(1/q) Z²` with `q ≤ lattice`) or images of them under the
/// conjugacy `x = sin²(πθ)` for the logistic map at `r = 4`.
pub fn periodic_orbits(sys: &OpenSystem, max_period: usize, lattice: u64) -> Vec<Vec<Point>> {
    let mut found: Vec<Vec<Point>> = Vec::new();
    match sys.map {
        Model::Madic { .. } | Model::Logistic { .. } => {
            let m = match sys.map {
                Model::Madic { base } => base as u64,
                Model::Logistic { r } if r == 4.0 => 2,
                _ => return found,
            };
            let mut seen = BTreeSet::new();
            // a period-p logistic orbit may come from a period-2p angle orbit
            let reach = if m == 2 && matches!(sys.map, Model::Logistic { .. }) { 2 * max_period } else { max_period };
            for p in 1..=reach as u32 {
                let Some(d) = m.checked_pow(p).map(|v| v - 1).filter(|&d| d < 1 << 22) else { break };
                for k in 0..d {
                    let ks = residue_orbit(k, m, d);
                    if ks.len() != p as usize || ks.iter().min() != Some(&k) {
                        continue;
                    }
                    let orbit: Vec<Point> = match sys.map {
                        Model::Madic { .. } => ks.iter().map(|&c| Point::line(c as f64 / d as f64)).collect(),
                        _ => {
                            let xs: Vec<f64> = ks
                                .iter()
                                .map(|&c| (std::f64::consts::PI * c as f64 / d as f64).sin().powi(2))
                                .collect();
                            // θ and 1 − θ give the same x; keep the primitive period
                            let q = (1..xs.len()).find(|&q| (xs[q] - xs[0]).abs() < 1e-12).unwrap_or(xs.len());
                            xs[..q].iter().map(|&x| Point::line(x)).collect()
                        }
                    };
                    let key: Vec<i64> = {
                        let mut v: Vec<i64> = orbit.iter().map(|p| (p.x * 1e9).round() as i64).collect();
                        v.sort();
                        v
                    };
                    if orbit.len() <= max_period && seen.insert(key) && avoids_hole(sys, &orbit) {
                        found.push(orbit);
                    }
                }
            }
        }
        Model::Baker => {
            for p in 1..=max_period.min(20) as u32 {
                let d = (1u64 << p) - 1;
                for k in 1..d {
                    let ks = residue_orbit(k, 2, d);
                    if ks.len() != p as usize || ks.iter().min() != Some(&k) {
                        continue;
                    }
                    let rev = |c: u64| (0..p).fold(0u64, |acc, b| (acc << 1) | ((c >> b) & 1));
                    let orbit: Vec<Point> = ks
                        .iter()
                        .map(|&c| Point::new(c as f64 / d as f64, rev(c) as f64 / d as f64))
                        .collect();
                    if avoids_hole(sys, &orbit) {
                        found.push(orbit);
                    }
                }
            }
        }
        Model::Cat { matrix: a } => {
            for q in 2..=lattice as i64 {
                let mut visited = vec![false; (q * q) as usize];
                for start in 0..q * q {
                    if visited[start as usize] {
                        continue;
                    }
                    let (a0, b0) = (start % q, start / q);
                    if gcd(gcd(a0, b0), q) != 1 {
                        continue;
                    }
                    let mut orbit = Vec::new();
                    let (mut u, mut v) = (a0, b0);
                    loop {
                        visited[(u + q * v) as usize] = true;
                        orbit.push(Point::new(u as f64 / q as f64, v as f64 / q as f64));
                        let nu = (a[0][0] * u + a[0][1] * v).rem_euclid(q);
                        let nv = (a[1][0] * u + a[1][1] * v).rem_euclid(q);
                        (u, v) = (nu, nv);
                        if (u, v) == (a0, b0) || orbit.len() > max_period {
                            break;
                        }
                    }
                    if orbit.len() <= max_period && avoids_hole(sys, &orbit) {
                        found.push(orbit);
                    }
                }
            }
        }
    }
    found.sort_by_key(|o| o.len());
    found
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Intervals of the first coordinate whose removal the hole amounts to, for
/// interval holes and for rectangles spanning the whole `y` range.
fn x_intervals(hole: &HoleSpec) -> Option<Vec<(f64, f64)>> {
    if let Some(iv) = hole.intervals() {
        return Some(iv.to_vec());
    }
    match hole.kind() {
        HoleKind::Rect { min, max } if min[1] <= 0.0 && max[1] >= 1.0 => Some(vec![(min[0], max[0])]),
        _ => None,
    }
}

fn cell_allowed(i: usize, cells: usize, holes: &[(f64, f64)]) -> bool {
    let (a, b) = (i as f64 / cells as f64, (i + 1) as f64 / cells as f64);
    holes.iter().all(|&(u, v)| b <= u || a >= v)
}

/// Random stationary Markov measures on the level-`level` survivor subshift of
/// an m-adic map or the baker map, with independent uniform edge weights in
/// `[0.05, 1)`.
pub fn random_markov_candidates(sys: &OpenSystem, level: usize, count: usize, seed: u64) -> Result<Vec<Candidate>> {
    let base = sys.map.markov_base().ok_or_else(|| Error::IncompatibleHole("map has no Markov partition".into()))?;
    let holes = x_intervals(&sys.hole).ok_or_else(|| Error::IncompatibleHole("hole is not a union of x-intervals".into()))?;
    let m = base as usize;
    let n = m.pow(level as u32);
    let mut allowed: Vec<bool> = (0..n).map(|i| cell_allowed(i, n, &holes)).collect();
    // drop cells whose every successor is removed, until none are left
    loop {
        let dead: Vec<usize> = (0..n)
            .filter(|&i| allowed[i] && !(0..m).any(|d| allowed[(i % (n / m)) * m + d]))
            .collect();
        if dead.is_empty() {
            break;
        }
        dead.into_iter().for_each(|i| allowed[i] = false);
    }
    if !allowed.contains(&true) {
        return Err(Error::IncompatibleHole("survivor subshift is empty at this level".into()));
    }
    let mut rng = stream(seed, 0);
    let mut out = Vec::new();
    for c in 0..count {
        let rows = (0..n)
            .map(|i| {
                if !allowed[i] {
                    return Vec::new();
                }
                let stem = (i % (n / m)) * m;
                (stem..stem + m)
                    .filter(|&j| allowed[j])
                    .map(|j| (j, 0.05 + 0.95 * rng.random::<f64>()))
                    .collect()
            })
            .collect();
        let chain = MarkovChain::from_weights(&CsrMatrix::from_rows(n, rows))?;
        out.push(Candidate {
            label: format!("markov_{level}_{c}"),
            rep: MeasureRep::Markov {
                chain,
                base,
                level,
                two_sided: sys.map.dimension() == 2,
            },
            nu_hat: false,
        });
    }
    Ok(out)
}

/// `ν̂` as an exact Markov measure, from the survivor chain of a Markov Ulam
/// matrix. Available for m-adic maps and the baker map with holes that are
/// unions of cells at `level`.
pub fn markov_nu_hat(sys: &OpenSystem, level: usize) -> Result<Candidate> {
    let base = sys.map.markov_base().ok_or_else(|| Error::IncompatibleHole("map has no Markov partition".into()))?;
    let holes = x_intervals(&sys.hole).ok_or_else(|| Error::IncompatibleHole("hole is not a union of x-intervals".into()))?;
    let line = OpenSystem::new(Model::madic(base), HoleSpec::new(HoleKind::IntervalUnion { intervals: holes })?);
    let n = (base as usize).pow(level as u32);
    let op = build_ulam(&line, n)?;
    if !op.warnings.is_empty() {
        return Err(Error::IncompatibleHole(op.warnings.join("; ")));
    }
    let spec = leading_eigenpair(&op, 1e-14, 100_000)?;
    survivor_measure(&op, &spec)?;
    let chain = survivor_chain(&op, &spec)?;
    Ok(Candidate {
        label: "nu_hat".into(),
        rep: MeasureRep::Markov {
            chain,
            base,
            level,
            two_sided: sys.map.dimension() == 2,
        },
        nu_hat: true,
    })
}

/// `ν̂` approximated by [`sprinkle`].
pub fn sprinkled_nu_hat(sys: &OpenSystem, draws: usize, burn: usize, seed: u64) -> Result<Candidate> {
    let points = sprinkle(sys, draws, burn, seed);
    if points.is_empty() {
        return Err(Error::InsufficientSample("no sprinkled orbit survived".into()));
    }
    Ok(Candidate {
        label: "nu_hat".into(),
        rep: MeasureRep::Empirical { points },
        nu_hat: true,
    })
}

/// Hole grown by `factor` about its center (balls) or about each interval's
/// midpoint, clipped to `[0, 1]`.
pub fn enlarged_hole(hole: &HoleSpec, factor: f64) -> Result<HoleSpec> {
    let kind = match hole.kind().clone() {
        HoleKind::Ball { center, radius } => HoleKind::Ball { center, radius: radius * factor },
        HoleKind::Rect { min, max } => {
            let grow = |a: f64, b: f64| {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a) * factor);
                ((c - h).max(0.0), (c + h).min(1.0))
            };
            let (x, y) = (grow(min[0], max[0]), grow(min[1], max[1]));
            let y = if min[1] <= 0.0 && max[1] >= 1.0 { (0.0, 1.0) } else { y };
            HoleKind::Rect { min: [x.0, y.0], max: [x.1, y.1] }
        }
        HoleKind::Empty => HoleKind::Empty,
        _ => HoleKind::IntervalUnion {
            intervals: hole
                .intervals()
                .unwrap_or(&[])
                .iter()
                .map(|&(a, b)| {
                    let (c, h) = (0.5 * (a + b), 0.5 * (b - a) * factor);
                    ((c - h).max(0.0), (c + h).min(1.0))
                })
                .collect(),
        },
    };
    HoleSpec::new(kind)
}

/// Periodic orbits as candidates, at most `count` of them.
pub fn periodic_candidates(sys: &OpenSystem, max_period: usize, lattice: u64, count: usize) -> Vec<Candidate> {
    periodic_orbits(sys, max_period, lattice)
        .into_iter()
        .take(count)
        .enumerate()
        .map(|(i, orbit)| Candidate {
            label: format!("periodic_{}_{i}", orbit.len()),
            rep: MeasureRep::Periodic { orbit },
            nu_hat: false,
        })
        .collect()
}

/// Settings for [`default_candidates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateOptions {
    pub max_period: usize,
    /// Largest denominator searched for cat-map periodic points.
    pub lattice: u64,
    pub periodic_count: usize,
    pub random_count: usize,
    pub random_level: usize,
    /// Largest symbolic level tried for an exact `ν̂`.
    pub max_level: usize,
    pub sprinkle_draws: usize,
    pub sprinkle_burn: usize,
    /// Growth factor of the enlarged hole whose `ν̂` serves as a candidate.
    pub enlarge_factor: f64,
    pub seed: u64,
}

impl Default for CandidateOptions {
    fn default() -> Self {
        Self {
            max_period: 4,
            lattice: 8,
            periodic_count: 4,
            random_count: 3,
            random_level: 3,
            max_level: 12,
            sprinkle_draws: 400_000,
            sprinkle_burn: 20,
            enlarge_factor: 1.5,
            seed: 0,
        }
    }
}

/// `ν̂` (exact when the hole is Markov for the map, sprinkled otherwise),
/// periodic-orbit measures, and either random Markov measures on the survivor
/// subshift or the sprinkled `ν̂` of an enlarged hole.
pub fn default_candidates(sys: &OpenSystem, opts: &CandidateOptions) -> Result<Vec<Candidate>> {
    let markov = sys.map.markov_base().is_some() && x_intervals(&sys.hole).is_some();
    let exact = markov
        .then(|| {
            let base = sys.map.markov_base().unwrap_or(2) as usize;
            (1..=opts.max_level)
                .filter(|&l| base.pow(l as u32) >= 16 || l == opts.max_level)
                .find_map(|l| markov_nu_hat(sys, l).ok())
        })
        .flatten();
    let mut out = vec![match exact {
        Some(c) => c,
        None => sprinkled_nu_hat(sys, opts.sprinkle_draws, opts.sprinkle_burn, opts.seed)?,
    }];
    out.extend(periodic_candidates(sys, opts.max_period, opts.lattice, opts.periodic_count));
    if markov {
        out.extend(random_markov_candidates(sys, opts.random_level, opts.random_count, opts.seed)?);
    } else if !sys.hole.is_empty() {
        let bigger = OpenSystem::new(sys.map.clone(), enlarged_hole(&sys.hole, opts.enlarge_factor)?);
        let mut c = sprinkled_nu_hat(&bigger, opts.sprinkle_draws, opts.sprinkle_burn, opts.seed ^ 0x5EED)?;
        c.label = "nu_hat_enlarged".into();
        c.nu_hat = false;
        out.push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_orbits_avoiding_golden_hole() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
        let orbits = periodic_orbits(&sys, 4, 0);
        // words avoiding 11 cyclically: 0, 01, 001, 0001, 0010 + rotations
        let periods: Vec<usize> = orbits.iter().map(|o| o.len()).collect();
        assert_eq!(periods, vec![1, 2, 3, 4]);
        assert_eq!(orbits[1], vec![Point::line(1.0 / 3.0), Point::line(2.0 / 3.0)]);
    }

    #[test]
    fn logistic_low_periods() {
        let sys = OpenSystem::closed(Model::logistic(4.0));
        let orbits = periodic_orbits(&sys, 2, 0);
        let fixed: Vec<f64> = orbits.iter().filter(|o| o.len() == 1).map(|o| o[0].x).collect();
        assert!(fixed.iter().any(|x| x.abs() < 1e-15));
        assert!(fixed.iter().any(|x| (x - 0.75).abs() < 1e-12));
        let two: Vec<&Vec<Point>> = orbits.iter().filter(|o| o.len() == 2).collect();
        assert_eq!(two.len(), 1);
        let s5 = 5f64.sqrt();
        let mut xs: Vec<f64> = two[0].iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - (5.0 - s5) / 8.0).abs() < 1e-12 && (xs[1] - (5.0 + s5) / 8.0).abs() < 1e-12);
        let f = sys.map.evaluate(two[0][0]).unwrap();
        assert!((f.x - two[0][1].x).abs() < 1e-12);
    }

    #[test]
    fn cat_lattice_orbits_are_periodic() {
        let sys = OpenSystem::new(Model::cat(), HoleSpec::ball([0.5, 0.5], 0.05).unwrap());
        let orbits = periodic_orbits(&sys, 3, 4);
        assert!(orbits.iter().any(|o| o.len() == 3));
        for o in &orbits {
            for (i, &p) in o.iter().enumerate() {
                let q = sys.map.evaluate(p).unwrap();
                assert!(sys.map.distance(q, o[(i + 1) % o.len()]) < 1e-12);
            }
        }
    }

    #[test]
    fn baker_orbits_commute_with_the_map() {
        let sys = OpenSystem::closed(Model::Baker);
        for o in periodic_orbits(&sys, 5, 0) {
            for (i, &p) in o.iter().enumerate() {
                let q = sys.map.evaluate(p).unwrap();
                assert!(sys.map.distance(q, o[(i + 1) % o.len()]) < 1e-12, "{o:?}");
            }
        }
    }

    #[test]
    fn sprinkled_points_survive() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
        let pts = sprinkle(&sys, 20_000, 10, 1);
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|&p| sys.survival_time(p, 10).in_survivor_set(10)));
    }

    #[test]
    fn random_chains_live_on_the_survivor_shift() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
        for c in random_markov_candidates(&sys, 3, 3, 9).unwrap() {
            let MeasureRep::Markov { chain, .. } = &c.rep else { panic!() };
            assert!(chain.stationarity_defect() < 1e-12, "{}", chain.stationarity_defect());
            // 110 and 111 lie in the hole and 011 can only move into it
            assert_eq!(chain.stationary[3], 0.0);
            assert_eq!(chain.stationary[6], 0.0);
            assert_eq!(chain.stationary[7], 0.0);
        }
    }
}
