use serde::{Deserialize, Serialize};

use super::hole::HoleSpec;
use super::model::{MapModel, Model, Point, SINGULARITY_GUARD};
use crate::error::{Error, Result};

/// A map together with a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSystem {
    pub map: Model,
    pub hole: HoleSpec,
}

/// Orbit record returned by [`OpenSystem::iterate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x, f x, ...`, including the point that entered the hole.
    pub points: Vec<Point>,
    pub escape_step: Option<usize>,
    /// Step at which the orbit came within the guard band of the singularity set.
    pub singular_step: Option<usize>,
}

/// Outcome of following an orbit up to a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Survival {
    /// First `i` with `f^i x` in the hole.
    Escaped(usize),
    /// Reached the singularity guard band at this step before escaping.
    Singular(usize),
    /// No escape up to and including the horizon.
    Survived,
}

impl Survival {
    /// `true` iff the orbit lies in `M^n`. Singular orbits are excluded.
    pub fn in_survivor_set(self, n: usize) -> bool {
        match self {
            Survival::Escaped(i) => i > n,
            Survival::Singular(_) => false,
            Survival::Survived => true,
        }
    }
}

impl OpenSystem {
    pub fn new(map: Model, hole: HoleSpec) -> Self {
        Self { map, hole }
    }

    pub fn closed(map: Model) -> Self {
        Self::new(map, HoleSpec::empty())
    }

    fn near_singularity(&self, p: Point) -> bool {
        self.map.singularity_distance(p) < SINGULARITY_GUARD
    }

    /// Orbit of `x` up to `n` steps, truncated at the first entry into the
    /// hole or the first approach to the singularity set.
    pub fn iterate(&self, x: Point, n: usize) -> Result<Trajectory> {
        let space = self.map.space();
        let mut p = space.wrap(x);
        if self.near_singularity(p) {
            return Err(Error::Domain(format!("{x:?} lies on the singularity set")));
        }
        let mut points = Vec::with_capacity(n + 1);
        for i in 0..=n {
            points.push(p);
            if self.hole.contains(p) {
                return Ok(Trajectory {
                    points,
                    escape_step: Some(i),
                    singular_step: None,
                });
            }
            if i == n {
                break;
            }
            match self.map.evaluate(p) {
                Some(q) if !self.near_singularity(q) => p = q,
                _ => {
                    return Ok(Trajectory {
                        points,
                        escape_step: None,
                        singular_step: Some(i + 1),
                    })
                }
            }
        }
        Ok(Trajectory {
            points,
            escape_step: None,
            singular_step: None,
        })
    }

    /// First escape step within `horizon`, without recording the orbit.
    pub fn survival_time(&self, x: Point, horizon: usize) -> Survival {
        let mut p = x;
        if self.near_singularity(p) {
            return Survival::Singular(0);
        }
        for i in 0..=horizon {
            if self.hole.contains(p) {
                return Survival::Escaped(i);
            }
            if i == horizon {
                break;
            }
            match self.map.evaluate(p) {
                Some(q) if !self.near_singularity(q) => p = q,
                _ => return Survival::Singular(i + 1),
            }
        }
        Survival::Survived
    }

    /// `true` iff `f^i x` avoids the hole for `0 <= i <= n`.
    ///
    /// Orbits reaching the singularity set first return an error; estimators
    /// count them separately and exclude them from `M^n`.
    pub fn survivor_indicator(&self, x: Point, n: usize) -> Result<bool> {
        match self.survival_time(x, n) {
            Survival::Singular(step) => Err(Error::Singularity { step }),
            s => Ok(s.in_survivor_set(n)),
        }
    }
}
