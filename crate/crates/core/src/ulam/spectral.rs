use serde::{Deserialize, Serialize};

use super::UlamOperator;
use crate::error::{Error, Result};
use crate::grid::GridMeasure;
use crate::linalg::{deflated_second_modulus, dot, l1_distance, norm1, power_iteration};

/// Dominant eigendata of an Ulam operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Leading eigenvalue `𝔯`.
    pub eigenvalue: f64,
    /// Row fixed point `h P = 𝔯 h`: cell masses of the conditionally
    /// invariant measure, total mass 1.
    pub right: Vec<f64>,
    /// Column fixed point `P e = 𝔯 e`, scaled so that `e · h = 1`.
    pub left: Vec<f64>,
    /// `‖h P − 𝔯 h‖₁`.
    pub residual: f64,
    /// `‖P e − 𝔯 e‖₁ / ‖e‖₁`.
    pub left_residual: f64,
    /// `|λ₂| / 𝔯` from deflated power iteration.
    pub gap_estimate: f64,
    pub iterations: usize,
}

impl SpectralData {
    /// The dominant eigenvalue is treated as simple when the gap estimate is
    /// bounded away from 1.
    pub fn is_simple(&self) -> bool {
        self.gap_estimate < 1.0 - 1e-6
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spectral data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Both dominant eigenvectors of `P` by power iteration.
pub fn leading_eigenpair(op: &UlamOperator, tol: f64, max_iters: usize) -> Result<SpectralData> {
    let n = op.dim();
    if op.matrix.forward.nnz() == 0 {
        return Err(Error::Domain("Ulam matrix is zero: every cell lies in the hole".into()));
    }
    let start = vec![1.0 / n as f64; n];
    let right = power_iteration(|v| op.push(v), start.clone(), tol, max_iters)?;
    let left = power_iteration(|e| op.pull(e), vec![1.0; n], tol, max_iters)?;
    let r = right.eigenvalue;
    let h = right.vector;
    let hp = op.push(&h);
    let residual = hp.iter().zip(&h).map(|(a, b)| (a - r * b).abs()).sum::<f64>();
    if residual >= tol {
        return Err(Error::NoConvergence {
            iterations: right.iterations,
            residual,
        });
    }
    let scale = dot(&left.vector, &h);
    if scale <= 0.0 {
        return Err(Error::Domain("left and right eigenvectors are orthogonal".into()));
    }
    let e: Vec<f64> = left.vector.iter().map(|x| x / scale).collect();
    let pe = op.pull(&e);
    let left_residual = pe.iter().zip(&e).map(|(a, b)| (a - r * b).abs()).sum::<f64>() / norm1(&e);
    let iters = 400.min(20 * n).max(50);
    let gap_estimate = deflated_second_modulus(|v| op.push(v), r, &h, &e, iters) / r;
    Ok(SpectralData {
        eigenvalue: r,
        right: h,
        left: e,
        residual,
        left_residual,
        gap_estimate,
        iterations: right.iterations.max(left.iterations),
    })
}

/// Distances to the conditionally invariant density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalInvariance {
    /// `‖normalize(h P) − h‖₁`.
    pub one_step: f64,
    /// `‖m⁽ᵏ⁾ − h‖₁` for `k = 1..=n`, where `m⁽ᵏ⁾` is the normalized
    /// surviving Lebesgue mass.
    pub from_lebesgue: Vec<f64>,
}

impl ConditionalInvariance {
    pub fn at_n(&self) -> f64 {
        *self.from_lebesgue.last().unwrap_or(&0.0)
    }

    /// Geometric mean ratio of successive distances over the second half of
    /// the trajectory, skipping distances at roundoff level.
    pub fn contraction_ratio(&self) -> Option<f64> {
        let d: Vec<f64> = self.from_lebesgue.iter().copied().filter(|x| *x > 1e-13).collect();
        if d.len() < 4 {
            return None;
        }
        let tail = &d[d.len() / 2..];
        let steps = (tail.len() - 1) as f64;
        Some((tail[tail.len() - 1] / tail[0]).powf(1.0 / steps))
    }
}

/// Pushes `h` one step and the Lebesgue measure `n` steps through the open
/// system on the grid, renormalizing, and measures both against `h`.
pub fn conditionally_invariant_check(op: &UlamOperator, spec: &SpectralData, n: usize) -> ConditionalInvariance {
    let normalize = |mut v: Vec<f64>| {
        let t = norm1(&v);
        if t > 0.0 {
            v.iter_mut().for_each(|x| *x /= t);
        }
        v
    };
    let one_step = l1_distance(&normalize(op.push(&spec.right)), &spec.right);
    let mut v = GridMeasure::lebesgue(op.grid).masses;
    let mut from_lebesgue = Vec::with_capacity(n);
    for _ in 0..n {
        v = normalize(op.push(&v));
        from_lebesgue.push(l1_distance(&v, &spec.right));
    }
    ConditionalInvariance {
        one_step,
        from_lebesgue,
    }
}
