//! Finite Markov chains and symbolic samplers built from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{l1_distance, power_iteration, CsrMatrix};
use crate::sampling::{PointSampler, SampleRng};
use crate::systems::Point;

/// Row-stochastic chain with its stationary vector. Rows of states with zero
/// stationary mass may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    pub transitions: CsrMatrix,
    pub stationary: Vec<f64>,
}

impl MarkovChain {
    pub fn new(transitions: CsrMatrix, stationary: Vec<f64>) -> Result<Self> {
        let n = transitions.n_rows();
        if transitions.n_cols() != n || stationary.len() != n {
            return Err(Error::Domain("chain dimensions disagree".into()));
        }
        for (i, s) in transitions.row_sums().iter().enumerate() {
            let ok = (s - 1.0).abs() < 1e-9 || (*s == 0.0 && stationary[i] == 0.0);
            if !ok {
                return Err(Error::Domain(format!("row {i} of the chain sums to {s}")));
            }
        }
        Ok(Self {
            transitions,
            stationary,
        })
    }

    /// Normalizes the rows of a nonnegative weight matrix and finds the
    /// stationary vector by power iteration on the lazy chain `(I + Q)/2`,
    /// which converges for periodic chains too. Rows with zero weight stay
    /// empty.
    pub fn from_weights(weights: &CsrMatrix) -> Result<Self> {
        let n = weights.n_rows();
        let sums = weights.row_sums();
        let rows = (0..n)
            .map(|i| weights.row(i).map(|(j, w)| (j, w / sums[i])).collect())
            .collect();
        let q = CsrMatrix::from_rows(n, rows);
        let qt = q.transpose();
        let start = vec![1.0 / n as f64; n];
        let lazy = |v: &[f64]| qt.mul_col(v).iter().zip(v).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut pi = power_iteration(lazy, start, 1e-15, 100_000)?.vector;
        for (p, s) in pi.iter_mut().zip(&sums) {
            if *s == 0.0 {
                if *p > 1e-9 {
                    return Err(Error::Domain("weights leak mass through a state with no successors".into()));
                }
                *p = 0.0;
            }
        }
        let t: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= t);
        Self::new(q, pi)
    }

    pub fn states(&self) -> usize {
        self.stationary.len()
    }

    /// `π Q` as a row vector.
    pub fn push(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, vi) in v.iter().enumerate() {
            for (j, q) in self.transitions.row(i) {
                out[j] += vi * q;
            }
        }
        out
    }

    /// `‖π Q − π‖₁`.
    pub fn stationarity_defect(&self) -> f64 {
        l1_distance(&self.push(&self.stationary), &self.stationary)
    }

    /// Entropy rate `−Σᵢ πᵢ Σⱼ Qᵢⱼ log Qᵢⱼ`.
    pub fn entropy(&self) -> f64 {
        let mut h = 0.0;
        for (i, pi) in self.stationary.iter().enumerate() {
            if *pi == 0.0 {
                continue;
            }
            let row: f64 = self
                .transitions
                .row(i)
                .filter(|(_, q)| *q > 0.0)
                .map(|(_, q)| -q * q.ln())
                .sum();
            h += pi * row;
        }
        h
    }

    /// Stationary average of `f(i, j)` over transitions.
    pub fn transition_average<F: Fn(usize, usize) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        for (i, pi) in self.stationary.iter().enumerate() {
            for (j, q) in self.transitions.row(i) {
                acc += pi * q * f(i, j);
            }
        }
        acc
    }
}

fn cumulative(entries: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut acc = 0.0;
    entries
        .filter(|(_, w)| *w > 0.0)
        .map(|(j, w)| {
            acc += w;
            (j, acc)
        })
        .collect()
}

fn draw(row: &[(usize, f64)], rng: &mut SampleRng) -> usize {
    let total = row.last().map(|r| r.1).unwrap_or(0.0);
    let u = rng.random::<f64>() * total;
    let k = row.partition_point(|(_, c)| *c <= u).min(row.len() - 1);
    row[k].0
}

/// Exact sampler for a stationary Markov measure on the cylinders of an
/// m-adic expansion.
///
/// States are the `base^level` words of length `level`; a transition from
/// `w` may only go to a word `w'` with `w'` equal to `w` shifted left by one
/// symbol. A sampled path `c₀ c₁ …` spells the digits of `x`; with
/// `two_sided`, a path run backwards from `c₀` under the time-reversed chain
/// spells the digits of `y`, which is the invariant measure of the baker map
/// lifted from the chain.
#[derive(Debug, Clone)]
pub struct SymbolicSampler {
    base: u32,
    level: usize,
    start: Vec<(usize, f64)>,
    forward: Vec<Vec<(usize, f64)>>,
    backward: Option<Vec<Vec<(usize, f64)>>>,
    digits: usize,
}

impl SymbolicSampler {
    pub fn new(chain: &MarkovChain, base: u32, level: usize, two_sided: bool) -> Result<Self> {
        let n = (base as usize).pow(level as u32);
        if chain.states() != n || level == 0 {
            return Err(Error::Domain(format!(
                "chain has {} states, expected {n} words of length {level}",
                chain.states()
            )));
        }
        let m = base as usize;
        for i in 0..n {
            for (j, q) in chain.transitions.row(i) {
                if q > 0.0 && j / m != i % (n / m) {
                    return Err(Error::Domain(format!("transition {i} -> {j} is not a shift")));
                }
            }
        }
        let forward: Vec<_> = (0..n).map(|i| cumulative(chain.transitions.row(i))).collect();
        let backward = two_sided.then(|| {
            let t = chain.transitions.transpose();
            (0..n)
                .map(|j| {
                    let pj = chain.stationary[j];
                    cumulative(t.row(j).map(|(i, q)| (i, if pj > 0.0 { chain.stationary[i] * q / pj } else { 0.0 })))
                })
                .collect()
        });
        let digits = (60.0 / (base as f64).log2()).ceil() as usize + 1;
        Ok(Self {
            base,
            level,
            start: cumulative(chain.stationary.iter().copied().enumerate()),
            forward,
            backward,
            digits,
        })
    }

    fn horner(&self, digits: &[u8]) -> f64 {
        let m = self.base as f64;
        digits.iter().rev().fold(0.0, |acc, &d| (acc + d as f64) / m)
    }
}

impl PointSampler for SymbolicSampler {
    fn sample(&self, rng: &mut SampleRng) -> Point {
        let m = self.base as usize;
        let c0 = draw(&self.start, rng);
        let mut xs = Vec::with_capacity(self.digits);
        let mut id = c0;
        let mut word = vec![0u8; self.level];
        for slot in word.iter_mut().rev() {
            *slot = (id % m) as u8;
            id /= m;
        }
        xs.extend_from_slice(&word);
        let mut c = c0;
        while xs.len() < self.digits {
            c = draw(&self.forward[c], rng);
            xs.push((c % m) as u8);
        }
        let x = self.horner(&xs);
        match &self.backward {
            None => Point::line(x),
            Some(back) => {
                let lead = m.pow(self.level as u32 - 1);
                let mut ys = Vec::with_capacity(self.digits);
                let mut c = c0;
                while ys.len() < self.digits {
                    c = draw(&back[c], rng);
                    ys.push((c / lead) as u8);
                }
                Point::new(x, self.horner(&ys))
            }
        }
    }
}
