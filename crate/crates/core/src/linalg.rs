//! Sparse nonnegative matrices and the dominant-eigenpair machinery shared by
//! the Ulam and symbolic routes.
//!
//! Matrices act on *row* vectors of masses, `v -> v P`, which is how a
//! transfer operator pushes densities forward. The "right" eigenvector of the
//! transfer operator is therefore the row fixed point `h P = r h`, and the
//! "left" eigenfunctional is the column fixed point `P e = r e`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row entry lists. Entries of each row are sorted and
    /// duplicate columns summed; explicit zeros are dropped.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < n_cols, "column {c} out of range");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        Self::from_rows(n_cols, rows)
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let n_cols = dense.first().map_or(0, |r| r.len());
        let rows = dense
            .iter()
            .map(|r| r.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(c, &v)| (c, v)).collect())
            .collect();
        Self::from_rows(n_cols, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|e| e.1).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        Self::from_rows(self.n_rows, rows)
    }

    /// `P x` for a column vector `x`. Rows are independent, so the parallel
    /// result is identical to the sequential one.
    pub fn mul_col(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .into_par_iter()
            .with_min_len(1024)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Coordinate triplet text: a header line `rows cols nnz` followed by one
    /// `row col value` line per nonzero, values in shortest round-trip form.
    pub fn to_triplet_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_rows, self.n_cols, self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                s.push_str(&format!("{r} {c} {v:?}\n"));
            }
        }
        s
    }

    pub fn from_triplet_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Config("empty triplet file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Config(format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        let [n_rows, n_cols, nnz] = dims[..] else {
            return Err(Error::Config(format!("bad header `{header}`")));
        };
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("bad triplet line `{line}`"));
            if t.len() != 3 {
                return Err(bad());
            }
            let r: usize = t[0].parse().map_err(|_| bad())?;
            let c: usize = t[1].parse().map_err(|_| bad())?;
            let v: f64 = t[2].parse().map_err(|_| bad())?;
            if r >= n_rows || c >= n_cols {
                return Err(bad());
            }
            triplets.push((r, c, v));
        }
        if triplets.len() != nnz {
            return Err(Error::Config(format!("expected {nnz} triplets, found {}", triplets.len())));
        }
        Ok(Self::from_triplets(n_rows, n_cols, &triplets))
    }
}

/// A square nonnegative operator with both actions precomputed.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    /// `P`; rows are source cells.
    pub forward: CsrMatrix,
    /// `P^T`, so that `v P` is a row-parallel product.
    pub backward: CsrMatrix,
}

impl TransferMatrix {
    pub fn new(p: CsrMatrix) -> Self {
        assert_eq!(p.n_rows(), p.n_cols(), "transfer matrix must be square");
        let backward = p.transpose();
        Self { forward: p, backward }
    }

    pub fn dim(&self) -> usize {
        self.forward.n_rows()
    }

    /// Pushes a row vector of masses one step: `v P`.
    pub fn push(&self, v: &[f64]) -> Vec<f64> {
        self.backward.mul_col(v)
    }

    /// Pulls a column function back one step: `P e`.
    pub fn pull(&self, e: &[f64]) -> Vec<f64> {
        self.forward.mul_col(e)
    }
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of a power iteration.
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub eigenvalue: f64,
    /// Eigenvector with unit 1-norm.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration for the dominant eigenpair of a nonnegative operator,
/// with 1-norm normalization. Convergence is `‖Av − λv‖₁ < tol·λ`. If the plain iteration stalls (an imprimitive
/// matrix oscillates), it continues with the shifted operator `A + r I`,
/// which has the same dominant eigenvector and no peripheral partners.
pub fn power_iteration<F>(apply: F, start: Vec<f64>, tol: f64, max_iters: usize) -> Result<PowerResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut v = start;
    let n0 = norm1(&v);
    if n0 == 0.0 {
        return Err(Error::Domain("power iteration started from the zero vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= n0);
    let mut residual = f64::INFINITY;
    let switch_at = max_iters / 2;
    let mut shift = 0.0;
    for it in 1..=max_iters {
        let w = apply(&v);
        let r = norm1(&w);
        if r == 0.0 {
            return Err(Error::Domain("operator annihilates the iterate (nilpotent on this start)".into()));
        }
        residual = w.iter().zip(&v).map(|(a, b)| (a - r * b).abs()).sum::<f64>();
        if residual < tol * r {
            let vector = w.iter().map(|x| x / r).collect();
            return Ok(PowerResult {
                eigenvalue: r,
                vector,
                residual,
                iterations: it,
            });
        }
        if it == switch_at {
            shift = r;
        }
        v = if shift > 0.0 {
            let s: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + shift * b).collect();
            let ns = norm1(&s);
            s.into_iter().map(|x| x / ns).collect()
        } else {
            w.into_iter().map(|x| x / r).collect()
        };
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

/// Magnitude of the second eigenvalue, by power iteration on the operator
/// deflated with the dominant pair: `D v = A v - r (v . e) h` with
/// `e . h = 1`. The growth rate is averaged geometrically over the tail so
/// complex pairs do not bias it.
pub fn deflated_second_modulus<F>(apply: F, eigenvalue: f64, right: &[f64], left: &[f64], iters: usize) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = right.len();
    let scale = dot(left, right);
    if scale == 0.0 || n < 2 {
        return 0.0;
    }
    // deterministic, non-symmetric start
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 * 0.618_033_988_75).fract() - 0.5) + 1e-3).collect();
    let deflate = |w: &mut Vec<f64>| {
        let c = dot(w, left) / scale;
        w.iter_mut().zip(right).for_each(|(x, h)| *x -= c * h);
    };
    deflate(&mut v);
    let n0 = norm1(&v);
    if n0 == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= n0);
    let burn_in = iters / 2;
    let mut log_growth = 0.0;
    let mut counted = 0usize;
    for it in 0..iters {
        let mut w = apply(&v);
        deflate(&mut w);
        let g = norm1(&w);
        if g < 1e-300 * eigenvalue.max(1e-300) || !g.is_finite() {
            return 0.0;
        }
        if it >= burn_in {
            log_growth += g.ln();
            counted += 1;
        }
        v = w.into_iter().map(|x| x / g).collect();
    }
    (log_growth / counted.max(1) as f64).exp()
}

/// Spectral radius of a small dense nonnegative matrix, robust to
/// reducibility and periodicity: the radius is the maximum over strongly
/// connected components, each computed on the primitive matrix `B + I`.
/// Returns NaN if a component fails to converge.
pub fn spectral_radius_nonneg(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let comps = strongly_connected_components(n, |i, j| a[i][j] > 0.0);
    let mut best: f64 = 0.0;
    for comp in comps {
        if comp.len() == 1 {
            best = best.max(a[comp[0]][comp[0]]);
            continue;
        }
        let k = comp.len();
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..k)
                .map(|i| v[i] + comp.iter().enumerate().map(|(j, &cj)| a[comp[i]][cj] * v[j]).sum::<f64>())
                .collect()
        };
        match power_iteration(apply, vec![1.0; k], 1e-14, 100_000) {
            Ok(res) => best = best.max(res.eigenvalue - 1.0),
            Err(_) => return f64::NAN,
        }
    }
    best
}

/// Tarjan's algorithm on an implicit dense graph.
pub fn strongly_connected_components<E>(n: usize, edge: E) -> Vec<Vec<usize>>
where
    E: Fn(usize, usize) -> bool,
{
    struct State {
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit<E: Fn(usize, usize) -> bool>(v: usize, n: usize, edge: &E, s: &mut State) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for w in 0..n {
            if !edge(v, w) {
                continue;
            }
            match s.index[w] {
                None => {
                    visit(w, n, edge, s);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = s.stack.pop() {
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.out.push(comp);
        }
    }
    let mut s = State {
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(v, n, &edge, &mut s);
        }
    }
    s.out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn golden_mean_radius() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        assert!((spectral_radius_nonneg(&a) - PHI).abs() < 1e-12);
    }

    #[test]
    fn reducible_and_periodic_radii() {
        // Jordan-like block, radius 1
        let a = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        assert!((spectral_radius_nonneg(&a) - 1.0).abs() < 1e-12);
        // period-2 cycle
        let a = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        assert!((spectral_radius_nonneg(&a) - 2.0).abs() < 1e-12);
        // nilpotent
        let a = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(spectral_radius_nonneg(&a), 0.0);
    }

    #[test]
    fn csr_round_trips_through_triplet_text() {
        let m = CsrMatrix::from_dense(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0 / 3.0], vec![0.0; 3]]);
        let text = m.to_triplet_text();
        assert!(text.starts_with("3 3 3\n"));
        assert_eq!(CsrMatrix::from_triplet_text(&text).unwrap(), m);
        assert!(CsrMatrix::from_triplet_text("2 2 1\n0 5 1.0\n").is_err());
    }

    #[test]
    fn transfer_matrix_push_is_row_vector_product() {
        let p = CsrMatrix::from_dense(&[vec![0.5, 0.5], vec![1.0, 0.0]]);
        let t = TransferMatrix::new(p);
        assert_eq!(t.push(&[1.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(t.push(&[0.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(t.pull(&[1.0, 1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn power_iteration_on_golden_matrix() {
        let p = TransferMatrix::new(CsrMatrix::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.0]]));
        let r = power_iteration(|v| p.push(v), vec![1.0, 1.0], 1e-14, 1000).unwrap();
        assert!((r.eigenvalue - PHI / 2.0).abs() < 1e-12);
        let e = power_iteration(|v| p.pull(v), vec![1.0, 1.0], 1e-14, 1000).unwrap();
        let second = deflated_second_modulus(|v| p.push(v), r.eigenvalue, &r.vector, &e.vector, 200);
        // eigenvalues of [[1,1],[1,0]]/2 are phi/2 and (1-phi)/2
        assert!((second - (PHI - 1.0) / 2.0).abs() < 1e-6, "{second}");
    }

    #[test]
    fn power_iteration_recovers_from_periodicity() {
        let p = TransferMatrix::new(CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        let r = power_iteration(|v| p.push(v), vec![1.0, 0.0], 1e-12, 200).unwrap();
        assert!((r.eigenvalue - 1.0).abs() < 1e-12);
        assert!((r.vector[0] - 0.5).abs() < 1e-12);
    }
}
