//! Ulam discretization of the open transfer operator.
//!
//! `P[i][j] = m(B_i ∩ f⁻¹B_j ∩ (M \ H)) / m(B_i)` for the cells `B_i` of a
//! uniform grid and Lebesgue `m`. Masses are row vectors pushed by `v ↦ vP`.

mod spectral;
mod survivor;

pub use spectral::{conditionally_invariant_check, leading_eigenpair, ConditionalInvariance, SpectralData};
pub use survivor::{survivor_chain, survivor_measure, SurvivorMeasure};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeasure};
use crate::linalg::{CsrMatrix, TransferMatrix};
use crate::systems::{HoleKind, MapModel, Model, OpenSystem, Point};

/// Sample points per cell axis for quadrature assembly.
pub const DEFAULT_QUADRATURE: usize = 8;

/// Points per cell used in one dimension (at least 64).
const QUADRATURE_1D: usize = 64;

/// How the matrix entries were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assembly {
    /// Exact interval geometry of a piecewise-linear map.
    Exact,
    /// Midpoint rule with `points_per_axis` samples per cell axis.
    Quadrature { points_per_axis: usize },
}

/// Sparse substochastic matrix on a uniform grid.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    pub grid: Grid,
    pub matrix: TransferMatrix,
    /// Cells whose row is zero because they lie in the hole.
    pub hole_cells: Vec<usize>,
    pub assembly: Assembly,
    pub warnings: Vec<String>,
}

impl UlamOperator {
    pub fn dim(&self) -> usize {
        self.grid.cells()
    }

    pub fn push(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.push(v)
    }

    pub fn pull(&self, e: &[f64]) -> Vec<f64> {
        self.matrix.pull(e)
    }

    /// Indicator of the cells outside the hole.
    pub fn survivor_indicator(&self) -> Vec<f64> {
        let mut s = vec![1.0; self.dim()];
        for &i in &self.hole_cells {
            s[i] = 0.0;
        }
        s
    }

    /// Surviving mass `m(Mⁿ)` for `n = 0..=n_max`, starting from `m`.
    pub fn survival_curve(&self, m: &GridMeasure, n_max: usize) -> Result<Vec<f64>> {
        if m.grid != self.grid {
            return Err(Error::Domain("initial measure lives on a different grid".into()));
        }
        let mut v = m.masses.clone();
        let mut out = Vec::with_capacity(n_max + 1);
        for _ in 0..=n_max {
            v = self.push(&v);
            out.push(v.iter().sum());
        }
        Ok(out)
    }
}

/// Assembles the Ulam matrix at `resolution` cells per axis. Piecewise-linear
/// m-adic maps and the baker map with one-dimensional holes use exact
/// geometry; everything else uses quadrature.
pub fn build_ulam(sys: &OpenSystem, resolution: usize) -> Result<UlamOperator> {
    build_ulam_with(sys, resolution, DEFAULT_QUADRATURE)
}

/// As [`build_ulam`], with an explicit quadrature density for the 2-D
/// quadrature path (1-D quadrature uses `max(64, q²)` points).
pub fn build_ulam_with(sys: &OpenSystem, resolution: usize, quadrature: usize) -> Result<UlamOperator> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be positive".into()));
    }
    let dim = sys.map.dimension();
    let grid = if dim == 1 {
        Grid::line(resolution)
    } else {
        Grid::square(resolution)
    };
    let exact = match (&sys.map, sys.hole.intervals()) {
        (Model::Madic { .. }, Some(_)) => true,
        (Model::Baker, Some(_)) => resolution.is_multiple_of(2),
        _ => false,
    };
    let mut warnings = Vec::new();
    if let HoleKind::CylinderUnion { .. } | HoleKind::IntervalUnion { .. } = sys.hole.kind() {
        let n = resolution as f64;
        for &(a, b) in sys.hole.intervals().unwrap_or(&[]) {
            for e in [a, b] {
                if ((e * n) - (e * n).round()).abs() > 1e-9 {
                    warnings.push(format!(
                        "hole endpoint {e} is not a cell boundary at resolution {resolution}; cells straddle the hole"
                    ));
                }
            }
        }
    }
    let (rows, assembly) = if exact {
        (exact_rows(sys, grid), Assembly::Exact)
    } else {
        let q = if dim == 1 { QUADRATURE_1D.max(quadrature * quadrature) } else { quadrature };
        (quadrature_rows(sys, grid, q), Assembly::Quadrature { points_per_axis: q })
    };
    let hole_cells = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| r.is_empty() && sys.hole.contains(grid.cell_center(*i)))
        .map(|(i, _)| i)
        .collect();
    let matrix = TransferMatrix::new(CsrMatrix::from_rows(grid.cells(), rows));
    Ok(UlamOperator {
        grid,
        matrix,
        hole_cells,
        assembly,
        warnings,
    })
}

/// Hole intervals in cell units, snapped to the nearest cell boundary when
/// within rounding distance of one.
fn scaled_hole(sys: &OpenSystem, n: usize) -> Vec<(f64, f64)> {
    let snap = |t: f64| if (t - t.round()).abs() < 1e-9 { t.round() } else { t };
    sys.hole
        .intervals()
        .unwrap_or(&[])
        .iter()
        .map(|&(a, b)| (snap(a * n as f64), snap(b * n as f64)))
        .collect()
}

/// Pieces of `[lo, hi)` outside the hole intervals.
fn surviving_pieces(lo: f64, hi: f64, hole: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pieces = vec![(lo, hi)];
    for &(a, b) in hole {
        pieces = pieces
            .into_iter()
            .flat_map(|(u, v)| {
                let mut out = Vec::with_capacity(2);
                if a.min(v) > u {
                    out.push((u, a.min(v)));
                }
                if b.max(u) < v {
                    out.push((b.max(u), v));
                }
                out
            })
            .filter(|(u, v)| v > u)
            .collect();
    }
    pieces
}

/// Distributes the image `[lo, hi)` (cell units, unwrapped) over the cells
/// of a circle of `n` cells, weighting each overlap by `scale`.
fn spread(lo: f64, hi: f64, n: usize, scale: f64, out: &mut Vec<(usize, f64)>) {
    let mut k = lo.floor();
    while k < hi {
        let overlap = hi.min(k + 1.0) - lo.max(k);
        if overlap > 0.0 {
            let j = (k as i64).rem_euclid(n as i64) as usize;
            out.push((j, overlap * scale));
        }
        k += 1.0;
    }
}

fn exact_rows(sys: &OpenSystem, grid: Grid) -> Vec<Vec<(usize, f64)>> {
    let n = grid.n;
    let hole = scaled_hole(sys, n);
    let branches = match sys.map {
        Model::Madic { base } => base as f64,
        _ => 2.0,
    };
    let baker = matches!(sys.map, Model::Baker);
    (0..grid.cells())
        .into_par_iter()
        .map(|cell| {
            let (ix, iy) = (cell % n, cell / n);
            let mut row = Vec::new();
            for (u, v) in surviving_pieces(ix as f64, (ix + 1) as f64, &hole) {
                // x-part: t ↦ b t mod n in cell units, Jacobian b
                let mut xs = Vec::new();
                spread(branches * u, branches * v, n, 1.0 / branches, &mut xs);
                if baker {
                    // the y-cell is contracted into a single cell chosen by
                    // the branch digit of x (cells never straddle 1/2)
                    let digit = if 2 * ix >= n { n } else { 0 };
                    let jy = (iy + digit) / 2;
                    row.extend(xs.into_iter().map(|(jx, w)| (jx + n * jy, w)));
                } else {
                    row.extend(xs);
                }
            }
            row
        })
        .collect()
}

fn quadrature_rows(sys: &OpenSystem, grid: Grid, q: usize) -> Vec<Vec<(usize, f64)>> {
    let weight = if grid.dim == 1 { 1.0 / q as f64 } else { 1.0 / (q * q) as f64 };
    (0..grid.cells())
        .into_par_iter()
        .map(|cell| {
            let ((x0, x1), (y0, y1)) = grid.cell_bounds(cell);
            let mut row = Vec::new();
            let mut visit = |p: Point| {
                if sys.hole.contains(p) {
                    return;
                }
                if let Some(image) = sys.map.evaluate(p) {
                    row.push((grid.cell_of(image), weight));
                }
            };
            for a in 0..q {
                let x = x0 + (x1 - x0) * (a as f64 + 0.5) / q as f64;
                if grid.dim == 1 {
                    visit(Point::line(x));
                } else {
                    for b in 0..q {
                        let y = y0 + (y1 - y0) * (b as f64 + 0.5) / q as f64;
                        visit(Point::new(x, y));
                    }
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::HoleSpec;

    fn golden() -> OpenSystem {
        OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0))
    }

    #[test]
    fn golden_mean_matrix_at_resolution_four() {
        let op = build_ulam(&golden(), 4).unwrap();
        assert_eq!(op.assembly, Assembly::Exact);
        let dense = op.matrix.forward.to_dense();
        let expected = [
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ];
        for (row, exp) in dense.iter().zip(expected) {
            assert_eq!(row.as_slice(), exp.as_slice());
        }
        assert_eq!(op.hole_cells, vec![3]);
        assert!(op.warnings.is_empty());
    }

    #[test]
    fn markov_entries_are_exactly_one_over_m() {
        let sys = OpenSystem::new(Model::triadic(), HoleSpec::cylinders(3, &[&[1]]).unwrap());
        let op = build_ulam(&sys, 27).unwrap();
        for r in 0..27 {
            for (_, v) in op.matrix.forward.row(r) {
                assert_eq!(v, 1.0 / 3.0);
            }
        }
        let sums = op.matrix.forward.row_sums();
        assert!(sums.iter().all(|s| *s <= 1.0 + 1e-12));
    }

    #[test]
    fn closed_triadic_is_stochastic() {
        let op = build_ulam(&OpenSystem::closed(Model::triadic()), 3).unwrap();
        for s in op.matrix.forward.row_sums() {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn straddling_holes_warn() {
        let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.7, 1.0));
        assert!(!build_ulam(&sys, 8).unwrap().warnings.is_empty());
    }

    #[test]
    fn baker_exact_matches_quadrature() {
        let sys = OpenSystem::new(Model::Baker, HoleSpec::cylinders(2, &[&[1, 1]]).unwrap());
        let exact = build_ulam(&sys, 8).unwrap();
        assert_eq!(exact.assembly, Assembly::Exact);
        let quad = CsrMatrix::from_rows(64, quadrature_rows(&sys, Grid::square(8), 8));
        let (a, b) = (exact.matrix.forward.to_dense(), quad.to_dense());
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cat_map_quadrature_rows_are_substochastic() {
        let sys = OpenSystem::new(Model::cat(), HoleSpec::ball([0.31, 0.77], 0.05).unwrap());
        let op = build_ulam(&sys, 64).unwrap();
        let sums = op.matrix.forward.row_sums();
        assert!(sums.iter().all(|s| (0.0..=1.0 + 1e-12).contains(s)));
        let deficit: f64 = sums.iter().map(|s| 1.0 - s).sum::<f64>() / sums.len() as f64;
        assert!((deficit - std::f64::consts::PI * 0.05 * 0.05).abs() < 2e-3);
    }

    #[test]
    fn survival_curve_of_golden_mean() {
        let op = build_ulam(&golden(), 16).unwrap();
        let curve = op.survival_curve(&GridMeasure::lebesgue(op.grid), 10).unwrap();
        let fib = |k: usize| {
            let (mut a, mut b) = (0u64, 1u64);
            for _ in 0..k {
                (a, b) = (b, a + b);
            }
            a as f64
        };
        for (n, m) in curve.iter().enumerate() {
            assert!((m - fib(n + 4) / 2f64.powi(n as i32 + 2)).abs() < 1e-15);
        }
    }
}
