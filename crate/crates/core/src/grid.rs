use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{PointSampler, SampleRng};
use crate::systems::Point;
use rand::Rng;

/// Uniform partition of `[0,1)` into `n` cells, or of the torus into `n x n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    /// Cells per axis.
    pub n: usize,
}

impl Grid {
    pub fn line(n: usize) -> Self {
        Self { dim: 1, n }
    }

    pub fn square(n: usize) -> Self {
        Self { dim: 2, n }
    }

    pub fn cells(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    fn axis(&self, t: f64) -> usize {
        ((t * self.n as f64).floor() as isize).clamp(0, self.n as isize - 1) as usize
    }

    /// Cells are numbered `ix + n * iy`.
    pub fn cell_of(&self, p: Point) -> usize {
        if self.dim == 1 {
            self.axis(p.x)
        } else {
            self.axis(p.x) + self.n * self.axis(p.y)
        }
    }

    /// `((x0, x1), (y0, y1))`; the y-range is `(0, 1)` in one dimension.
    pub fn cell_bounds(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let h = 1.0 / self.n as f64;
        if self.dim == 1 {
            ((i as f64 * h, (i + 1) as f64 * h), (0.0, 1.0))
        } else {
            let (ix, iy) = (i % self.n, i / self.n);
            ((ix as f64 * h, (ix + 1) as f64 * h), (iy as f64 * h, (iy + 1) as f64 * h))
        }
    }

    pub fn cell_center(&self, i: usize) -> Point {
        let ((x0, x1), (y0, y1)) = self.cell_bounds(i);
        if self.dim == 1 {
            Point::line(0.5 * (x0 + x1))
        } else {
            Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1))
        }
    }
}

/// Piecewise-constant measure on a [`Grid`], stored as cell masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub grid: Grid,
    pub masses: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: Grid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.cells() {
            return Err(Error::Domain(format!(
                "{} masses for a grid of {} cells",
                masses.len(),
                grid.cells()
            )));
        }
        if masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(Error::Domain("grid masses must be finite and nonnegative".into()));
        }
        Ok(Self { grid, masses })
    }

    pub fn lebesgue(grid: Grid) -> Self {
        let c = grid.cells();
        Self {
            grid,
            masses: vec![1.0 / c as f64; c],
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn normalized(mut self) -> Self {
        let t = self.total();
        if t > 0.0 {
            self.masses.iter_mut().for_each(|m| *m /= t);
        }
        self
    }

    pub fn density(&self, i: usize) -> f64 {
        self.masses[i] / self.grid.cell_volume()
    }

    pub fn density_at(&self, p: Point) -> f64 {
        self.density(self.grid.cell_of(p))
    }

    pub fn l1_distance(&self, other: &GridMeasure) -> f64 {
        crate::linalg::l1_distance(&self.masses, &other.masses)
    }

    /// Mass of the first-coordinate interval `[a, b)` (1-D grids).
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        assert_eq!(self.grid.dim, 1, "interval_mass is for 1-D grids");
        let (a, b) = (a.max(0.0), b.min(1.0));
        if a >= b {
            return 0.0;
        }
        let h = 1.0 / self.grid.n as f64;
        let lo = self.grid.axis(a);
        let hi = self.grid.axis(b - 1e-300).min(self.grid.n - 1);
        (lo..=hi)
            .map(|i| {
                let (c0, c1) = (i as f64 * h, (i + 1) as f64 * h);
                let overlap = (b.min(c1) - a.max(c0)).max(0.0);
                self.masses[i] * overlap / h
            })
            .sum()
    }

    /// Sampler drawing a cell by mass, then a uniform point inside it.
    pub fn sampler(&self) -> GridSampler {
        let mut cumulative = Vec::with_capacity(self.masses.len());
        let mut acc = 0.0;
        for m in &self.masses {
            acc += m;
            cumulative.push(acc);
        }
        GridSampler {
            grid: self.grid,
            cumulative,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSampler {
    grid: Grid,
    cumulative: Vec<f64>,
}

impl PointSampler for GridSampler {
    fn sample(&self, rng: &mut SampleRng) -> Point {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|c| *c <= u).min(self.cumulative.len() - 1);
        let ((x0, x1), (y0, y1)) = self.grid.cell_bounds(i);
        let x = x0 + (x1 - x0) * rng.random::<f64>();
        if self.grid.dim == 1 {
            Point::line(x)
        } else {
            Point::new(x, y0 + (y1 - y0) * rng.random::<f64>())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::stream;

    #[test]
    fn cell_indexing() {
        let g = Grid::square(4);
        let p = Point::new(0.3, 0.8);
        let i = g.cell_of(p);
        assert_eq!(i, 1 + 4 * 3);
        let ((x0, x1), (y0, y1)) = g.cell_bounds(i);
        assert!(x0 <= p.x && p.x < x1 && y0 <= p.y && p.y < y1);
        assert_eq!(Grid::line(8).cell_of(Point::line(0.999_999)), 7);
    }

    #[test]
    fn interval_mass_of_lebesgue() {
        let m = GridMeasure::lebesgue(Grid::line(8));
        assert!((m.interval_mass(0.1, 0.35) - 0.25).abs() < 1e-14);
        assert!((m.interval_mass(0.0, 1.0) - 1.0).abs() < 1e-14);
        assert_eq!(m.interval_mass(0.5, 0.5), 0.0);
    }

    #[test]
    fn sampler_respects_masses() {
        let m = GridMeasure::new(Grid::line(4), vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        let s = m.sampler();
        let mut rng = stream(7, 0);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[m.grid.cell_of(s.sample(&mut rng))] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 40_000.0 - 0.5).abs() < 0.02);
    }
}
