use serde::{Deserialize, Serialize};

use super::{SpectralData, UlamOperator};
use crate::error::{Error, Result};
use crate::grid::GridMeasure;
use crate::linalg::{l1_distance, norm1, CsrMatrix};
use crate::markov::MarkovChain;

/// Route (ii) stops once successive estimates move less than this.
const LIMIT_TOL: f64 = 1e-8;
const LIMIT_CAP: usize = 200;
/// Largest tolerated L¹ gap between the two routes.
const AGREEMENT_TOL: f64 = 1e-4;

/// The invariant measure `ν̂` on the survivor set, on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorMeasure {
    /// Cellwise product `hᵢ eᵢ`, normalized.
    pub measure: GridMeasure,
    /// `𝔯⁻ⁿ μ*(Bᵢ ∩ Mⁿ)`, normalized, at the stopping step.
    pub limit: GridMeasure,
    /// L¹ distance between the two.
    pub discrepancy: f64,
    pub limit_steps: usize,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let t = norm1(&v);
    if t > 0.0 {
        v.into_iter().map(|x| x / t).collect()
    } else {
        v
    }
}

/// Computes `ν̂` by the eigenvector product and by the limit formula, and
/// fails if they disagree.
pub fn survivor_measure(op: &UlamOperator, spec: &SpectralData) -> Result<SurvivorMeasure> {
    let product = normalized(spec.right.iter().zip(&spec.left).map(|(h, e)| h * e).collect());
    let r = spec.eigenvalue;
    let mut w = op.survivor_indicator();
    let mut prev = normalized(spec.right.iter().zip(&w).map(|(h, s)| h * s).collect());
    let mut steps = 0;
    for n in 1..=LIMIT_CAP {
        w = op.pull(&w).into_iter().map(|x| x / r).collect();
        let next = normalized(spec.right.iter().zip(&w).map(|(h, x)| h * x).collect());
        let moved = l1_distance(&next, &prev);
        prev = next;
        steps = n;
        if moved < LIMIT_TOL {
            break;
        }
    }
    let discrepancy = l1_distance(&product, &prev);
    if discrepancy > AGREEMENT_TOL {
        return Err(Error::NonAgreement(discrepancy));
    }
    Ok(SurvivorMeasure {
        measure: GridMeasure::new(op.grid, product)?,
        limit: GridMeasure::new(op.grid, prev)?,
        discrepancy,
        limit_steps: steps,
    })
}

/// The closed dynamics on the survivor set as a Markov chain on cells:
/// `Qᵢⱼ = Pᵢⱼ eⱼ / (𝔯 eᵢ)`, stationary vector `ν̂`.
pub fn survivor_chain(op: &UlamOperator, spec: &SpectralData) -> Result<MarkovChain> {
    let r = spec.eigenvalue;
    let e = &spec.left;
    let n = op.dim();
    let rows = (0..n)
        .map(|i| {
            if e[i] <= 0.0 {
                return Vec::new();
            }
            op.matrix
                .forward
                .row(i)
                .filter(|(j, _)| e[*j] > 0.0)
                .map(|(j, p)| (j, p * e[j] / (r * e[i])))
                .collect()
        })
        .collect();
    let q = CsrMatrix::from_rows(n, rows);
    // renormalize rows against roundoff in e
    let sums = q.row_sums();
    let rows = (0..n)
        .map(|i| q.row(i).map(|(j, v)| (j, v / sums[i])).collect())
        .collect();
    let pi = normalized(spec.right.iter().zip(e).map(|(h, e)| h * e).collect());
    MarkovChain::new(CsrMatrix::from_rows(n, rows), pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{HoleSpec, Model, OpenSystem};
    use crate::ulam::{build_ulam, leading_eigenpair};

    const PHI: f64 = 1.618_033_988_749_895;

    fn nu(sys: &OpenSystem, res: usize) -> (UlamOperator, SpectralData, SurvivorMeasure) {
        let op = build_ulam(sys, res).unwrap();
        let s = leading_eigenpair(&op, 1e-13, 10_000).unwrap();
        let m = survivor_measure(&op, &s).unwrap();
        (op, s, m)
    }

    #[test]
    fn golden_mean_parry_masses() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
        let (_, _, m) = nu(&sys, 64);
        let pi0 = PHI * PHI / (1.0 + PHI * PHI);
        assert!((m.measure.interval_mass(0.0, 0.5) - pi0).abs() < 1e-9);
        assert!((m.measure.interval_mass(0.5, 0.75) - (1.0 - pi0)).abs() < 1e-9);
        assert!(m.measure.interval_mass(0.75, 1.0) < 1e-12);
        assert!(m.discrepancy < 1e-6);
    }

    #[test]
    fn half_hole_concentrates_at_zero() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.5, 1.0));
        let (_, _, m) = nu(&sys, 32);
        assert!((m.measure.masses[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_hole_gives_lebesgue() {
        let (_, _, m) = nu(&OpenSystem::closed(Model::triadic()), 27);
        assert!(m.measure.masses.iter().all(|x| (x - 1.0 / 27.0).abs() < 1e-14));
    }

    #[test]
    fn survivor_chain_is_stationary_and_has_parry_entropy() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
        let (op, s, m) = nu(&sys, 32);
        let chain = survivor_chain(&op, &s).unwrap();
        assert!(chain.stationarity_defect() < 1e-8);
        assert!(l1_distance(&chain.stationary, &m.measure.masses) < 1e-14);
        assert!((chain.entropy() - PHI.ln()).abs() < 1e-10);
    }
}
