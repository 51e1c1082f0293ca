use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::systems::{MapModel, OpenSystem, Point};

/// Balls holding fewer sample points than this are not used.
pub const MIN_BALL_COUNT: usize = 30;

/// Entropy rate of a stationary Markov chain.
pub fn entropy_markov(chain: &MarkovChain) -> f64 {
    chain.entropy()
}

/// Brin–Katok estimate at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrinKatokScale {
    pub eps: f64,
    pub valid_centers: usize,
    /// Mean over centers of the slope of `−log ν(B̂(x, n, ĝ_ε))` in `n`.
    pub entropy: f64,
    /// Standard deviation of the per-center slopes.
    pub dispersion: f64,
    pub stderr: f64,
    /// Mean ball count at each `n` over valid centers.
    pub mean_counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrinKatok {
    pub scales: Vec<BrinKatokScale>,
    /// Value at the smallest usable scale.
    pub entropy: f64,
    /// Statistical error combined with the change between the two smallest
    /// usable scales.
    pub stderr: f64,
    /// The two smallest scales agree to within 0.05.
    pub stabilized: bool,
}

/// Counts, for each `n`, the sample points `y ≠ x` with
/// `d(fⁱx, fⁱy) < ĝ_ε(fⁱx)` for all `i ≤ n`. Returns `None` when the center
/// orbit reaches the singularity set.
fn ball_counts(sys: &OpenSystem, points: &[Point], center: usize, eps: f64, n_max: usize) -> Option<Vec<usize>> {
    let map = &sys.map;
    let g = |p: Point| eps.min(map.singularity_distance(p));
    let mut x = points[center];
    let radius = g(x);
    let mut members: Vec<Point> = points
        .iter()
        .enumerate()
        .filter(|&(j, &y)| j != center && map.distance(x, y) < radius)
        .map(|(_, &y)| y)
        .collect();
    let mut counts = vec![members.len()];
    for _ in 1..=n_max {
        x = map.evaluate(x)?;
        let radius = g(x);
        members = members
            .into_iter()
            .filter_map(|y| map.evaluate(y))
            .filter(|&y| map.distance(x, y) < radius)
            .collect();
        counts.push(members.len());
    }
    Some(counts)
}

fn slope(ns: &[f64], ys: &[f64]) -> f64 {
    let k = ns.len() as f64;
    let nb = ns.iter().sum::<f64>() / k;
    let yb = ys.iter().sum::<f64>() / k;
    let sxy: f64 = ns.iter().zip(ys).map(|(n, y)| (n - nb) * (y - yb)).sum();
    let sxx: f64 = ns.iter().map(|n| (n - nb).powi(2)).sum();
    sxy / sxx
}

/// Brin–Katok entropy of the empirical measure of `points`, which should be
/// typical for an invariant measure. Each of the first `centers` points is
/// a ball center; its ball is counted among the other points
/// (leave-one-out), and the entropy at scale `ε` is the mean slope of
/// `−log count` over `n ∈ [1, n_x]`, where `n_x` is the last step with at
/// least 30 points in the ball.
pub fn entropy_brin_katok(
    sys: &OpenSystem,
    points: &[Point],
    eps_list: &[f64],
    n_max: usize,
    centers: usize,
) -> Result<BrinKatok> {
    if points.len() < 2 * MIN_BALL_COUNT {
        return Err(Error::InsufficientSample(format!("{} sample points", points.len())));
    }
    let centers = centers.min(points.len());
    let mut scales = Vec::new();
    for &eps in eps_list {
        let per_center: Vec<Option<Vec<usize>>> = (0..centers)
            .into_par_iter()
            .map(|c| ball_counts(sys, points, c, eps, n_max))
            .collect();
        let mut slopes = Vec::new();
        let mut sums = vec![0.0; n_max + 1];
        for counts in per_center.iter().flatten() {
            let last = counts.iter().rposition(|&c| c >= MIN_BALL_COUNT);
            let Some(last) = last else { continue };
            if last < 3 || counts[..=last].iter().any(|&c| c < MIN_BALL_COUNT) {
                continue;
            }
            let ns: Vec<f64> = (1..=last).map(|n| n as f64).collect();
            let ys: Vec<f64> = (1..=last).map(|n| -(counts[n] as f64).ln()).collect();
            slopes.push(slope(&ns, &ys));
            sums.iter_mut().zip(counts).for_each(|(s, &c)| *s += c as f64);
        }
        if slopes.len() * 2 < centers {
            continue;
        }
        let k = slopes.len() as f64;
        let mean = slopes.iter().sum::<f64>() / k;
        let dispersion = (slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
        scales.push(BrinKatokScale {
            eps,
            valid_centers: slopes.len(),
            entropy: mean,
            dispersion,
            stderr: dispersion / k.sqrt(),
            mean_counts: sums.into_iter().map(|s| s / k).collect(),
        });
    }
    let last = scales.last().ok_or_else(|| {
        Error::InsufficientSample(format!(
            "fewer than {MIN_BALL_COUNT} points per ball for most centers at every scale"
        ))
    })?;
    let drift = if scales.len() >= 2 { (last.entropy - scales[scales.len() - 2].entropy).abs() } else { 0.0 };
    Ok(BrinKatok {
        entropy: last.entropy.max(0.0),
        stderr: last.stderr.hypot(drift),
        stabilized: scales.len() >= 2 && drift < 0.05,
        scales,
    })
}
