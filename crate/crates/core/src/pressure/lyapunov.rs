use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{Jacobian, MapModel, Model, Point};

/// Steps discarded before accumulating in two dimensions, so the frame
/// aligns with the Oseledets splitting.
pub const QR_BURN_IN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Sum of the positive exponents.
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Orbits dropped for reaching the singularity set or a critical point.
    pub dropped: usize,
}

fn mat(j: Jacobian) -> [[f64; 2]; 2] {
    match j {
        Jacobian::Scalar(d) => [[d, 0.0], [0.0, 1.0]],
        Jacobian::Matrix(m) => m,
    }
}

fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Gram–Schmidt QR of a 2x2 matrix; returns `Q` and the diagonal of `R`.
fn qr(a: [[f64; 2]; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
    let (c0, c1) = ([a[0][0], a[1][0]], [a[0][1], a[1][1]]);
    let r00 = c0[0].hypot(c0[1]);
    let q0 = [c0[0] / r00, c0[1] / r00];
    let r01 = q0[0] * c1[0] + q0[1] * c1[1];
    let w = [c1[0] - r01 * q0[0], c1[1] - r01 * q0[1]];
    let r11 = w[0].hypot(w[1]);
    let q1 = [w[0] / r11, w[1] / r11];
    ([[q0[0], q1[0]], [q0[1], q1[1]]], [r00, r11])
}

/// Sum of positive Lyapunov exponents along the orbit of `x` over `n` steps.
fn orbit_sum(map: &Model, x: Point, n: usize) -> Option<f64> {
    let mut p = x;
    if map.dimension() == 1 {
        let mut acc = 0.0;
        for _ in 0..n {
            let Jacobian::Scalar(d) = map.derivative(p) else { unreachable!() };
            let l = d.abs().ln();
            if !l.is_finite() {
                return None;
            }
            acc += l;
            p = map.evaluate(p)?;
        }
        return Some((acc / n as f64).max(0.0));
    }
    let mut q = [[1.0, 0.0], [0.0, 1.0]];
    let mut acc = [0.0; 2];
    for i in 0..QR_BURN_IN + n {
        let (nq, r) = qr(matmul(mat(map.derivative(p)), q));
        q = nq;
        if i >= QR_BURN_IN {
            acc[0] += r[0].ln();
            acc[1] += r[1].ln();
        }
        p = map.evaluate(p)?;
        if map.singularity_distance(p) < crate::systems::SINGULARITY_GUARD {
            return None;
        }
    }
    Some(acc.iter().map(|a| (a / n as f64).max(0.0)).sum())
}

/// Time average of the positive exponent sum along `n`-step orbits of the
/// sample points; the error is the standard error across orbits.
pub fn lyapunov_sum(map: &Model, points: &[Point], n: usize) -> Result<LyapunovEstimate> {
    if n == 0 {
        return Err(Error::Domain("Lyapunov horizon must be positive".into()));
    }
    let vals: Vec<Option<f64>> = points.par_iter().map(|&x| orbit_sum(map, x, n)).collect();
    let good: Vec<f64> = vals.iter().flatten().copied().collect();
    if good.len() < 2 {
        return Err(Error::InsufficientSample(format!("{} usable orbits", good.len())));
    }
    let k = good.len() as f64;
    let mean = good.iter().sum::<f64>() / k;
    let var = good.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(LyapunovEstimate {
        value: mean,
        stderr: (var / k).sqrt(),
        samples: good.len(),
        dropped: points.len() - good.len(),
    })
}

/// Exact positive exponent sum of the invariant measure on a periodic orbit
/// listed in order.
pub fn periodic_lyapunov(map: &Model, orbit: &[Point]) -> f64 {
    let p = orbit.len() as f64;
    if map.dimension() == 1 {
        let s: f64 = orbit
            .iter()
            .map(|&x| match map.derivative(x) {
                Jacobian::Scalar(d) => d.abs().ln(),
                Jacobian::Matrix(_) => unreachable!(),
            })
            .sum();
        return (s / p).max(0.0);
    }
    let prod = orbit
        .iter()
        .fold([[1.0, 0.0], [0.0, 1.0]], |acc, &x| matmul(mat(map.derivative(x)), acc));
    let tr = prod[0][0] + prod[1][1];
    let det = prod[0][0] * prod[1][1] - prod[0][1] * prod[1][0];
    let disc = tr * tr - 4.0 * det;
    let moduli = if disc >= 0.0 {
        let s = disc.sqrt();
        [((tr + s) / 2.0).abs(), ((tr - s) / 2.0).abs()]
    } else {
        [det.abs().sqrt(); 2]
    };
    moduli.iter().map(|m| (m.ln() / p).max(0.0)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{draw, Lebesgue};

    #[test]
    fn cat_map_exponent() {
        let pts = draw(&Lebesgue { dim: 2 }, 200, 1);
        let l = lyapunov_sum(&Model::cat(), &pts, 50).unwrap();
        let exact = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((l.value - exact).abs() < 1e-9, "{l:?}");
    }

    #[test]
    fn baker_and_doubling_have_log_two() {
        let pts = draw(&Lebesgue { dim: 2 }, 100, 2);
        let l = lyapunov_sum(&Model::Baker, &pts, 30).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-12);
        let pts = draw(&Lebesgue { dim: 1 }, 100, 2);
        let l = lyapunov_sum(&Model::doubling(), &pts, 30).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logistic_acim_exponent_is_log_two() {
        // arcsine law via x = sin²(πu/2)
        let pts: Vec<Point> = draw(&Lebesgue { dim: 1 }, 20_000, 3)
            .into_iter()
            .map(|p| Point::line((std::f64::consts::FRAC_PI_2 * p.x).sin().powi(2)))
            .collect();
        let l = lyapunov_sum(&Model::logistic(4.0), &pts, 20).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 5.0 * l.stderr + 0.01, "{l:?}");
    }

    #[test]
    fn periodic_orbit_exponents() {
        let fixed = [Point::line(0.75)];
        assert!((periodic_lyapunov(&Model::logistic(4.0), &fixed) - 2f64.ln()).abs() < 1e-15);
        let s5 = 5f64.sqrt();
        let two = [Point::line((5.0 - s5) / 8.0), Point::line((5.0 + s5) / 8.0)];
        assert!((periodic_lyapunov(&Model::logistic(4.0), &two) - 2f64.ln()).abs() < 1e-14);
        let cat = periodic_lyapunov(&Model::cat(), &[Point::new(0.0, 0.0)]);
        assert!((cat - ((3.0 + s5) / 2.0).ln()).abs() < 1e-14);
    }
}
