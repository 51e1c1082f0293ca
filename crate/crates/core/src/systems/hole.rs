use serde::{Deserialize, Serialize};

use super::model::{circle_gap, Point};
use crate::error::{Error, Result};

/// Structural description of a hole. Every hole is an open set; points on
/// its boundary are treated as outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HoleKind {
    /// No hole.
    Empty,
    /// Union of level-`level` cylinders of the base-`base` expansion of the
    /// first coordinate. Words are digit strings, most significant first.
    CylinderUnion {
        base: u32,
        level: usize,
        words: Vec<Vec<u8>>,
    },
    /// Union of open intervals of the first coordinate.
    IntervalUnion { intervals: Vec<(f64, f64)> },
    /// Open Euclidean ball on the torus.
    Ball { center: [f64; 2], radius: f64 },
    /// Open axis-aligned rectangle on the torus (no wrap-around).
    Rect { min: [f64; 2], max: [f64; 2] },
}

/// A hole together with precomputed membership data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HoleKind", into = "HoleKind")]
pub struct HoleSpec {
    kind: HoleKind,
    /// Merged open intervals of the first coordinate, for 1-D kinds.
    intervals: Vec<(f64, f64)>,
    /// Sorted cylinder indices, for `CylinderUnion`.
    cylinder_ids: Vec<u64>,
}

impl TryFrom<HoleKind> for HoleSpec {
    type Error = String;

    fn try_from(kind: HoleKind) -> std::result::Result<Self, Self::Error> {
        HoleSpec::new(kind).map_err(|e| e.to_string())
    }
}

impl From<HoleSpec> for HoleKind {
    fn from(h: HoleSpec) -> Self {
        h.kind
    }
}

impl HoleSpec {
    pub fn new(kind: HoleKind) -> Result<Self> {
        let mut cylinder_ids = Vec::new();
        let intervals = match &kind {
            HoleKind::Empty | HoleKind::Ball { .. } | HoleKind::Rect { .. } => Vec::new(),
            HoleKind::CylinderUnion { base, level, words } => {
                if *base < 2 {
                    return Err(Error::Config("cylinder base must be at least 2".into()));
                }
                let size = (*base as u64)
                    .checked_pow(*level as u32)
                    .filter(|s| *s <= 1 << 52)
                    .ok_or_else(|| Error::Config("cylinder level too deep".into()))?;
                for w in words {
                    if w.len() != *level {
                        return Err(Error::Config(format!(
                            "cylinder word {w:?} has length {} but level is {level}",
                            w.len()
                        )));
                    }
                    if w.iter().any(|&d| d as u32 >= *base) {
                        return Err(Error::Config(format!("cylinder word {w:?} has a digit >= {base}")));
                    }
                    cylinder_ids.push(word_index(w, *base));
                }
                cylinder_ids.sort_unstable();
                cylinder_ids.dedup();
                let s = size as f64;
                merge(cylinder_ids.iter().map(|&i| (i as f64 / s, (i + 1) as f64 / s)).collect())
            }
            HoleKind::IntervalUnion { intervals } => {
                for &(a, b) in intervals {
                    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
                        return Err(Error::Config(format!("bad hole interval ({a}, {b})")));
                    }
                }
                merge(intervals.clone())
            }
        };
        if let HoleKind::Ball { radius, .. } = &kind {
            if !(*radius > 0.0 && *radius < 0.5) {
                return Err(Error::Config(format!("ball radius must lie in (0, 1/2), got {radius}")));
            }
        }
        Ok(Self {
            kind,
            intervals,
            cylinder_ids,
        })
    }

    pub fn empty() -> Self {
        Self::new(HoleKind::Empty).expect("empty hole")
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self::new(HoleKind::IntervalUnion {
            intervals: vec![(a, b)],
        })
        .expect("valid interval hole")
    }

    pub fn cylinders(base: u32, words: &[&[u8]]) -> Result<Self> {
        let level = words.first().map_or(0, |w| w.len());
        Self::new(HoleKind::CylinderUnion {
            base,
            level,
            words: words.iter().map(|w| w.to_vec()).collect(),
        })
    }

    pub fn ball(center: [f64; 2], radius: f64) -> Result<Self> {
        Self::new(HoleKind::Ball { center, radius })
    }

    pub fn kind(&self) -> &HoleKind {
        &self.kind
    }

    pub fn is_empty(&self) -> bool {
        match &self.kind {
            HoleKind::Empty => true,
            HoleKind::CylinderUnion { .. } | HoleKind::IntervalUnion { .. } => self.intervals.is_empty(),
            _ => false,
        }
    }

    /// Merged open intervals of the first coordinate, for 1-D hole kinds.
    pub fn intervals(&self) -> Option<&[(f64, f64)]> {
        match &self.kind {
            HoleKind::CylinderUnion { .. } | HoleKind::IntervalUnion { .. } => Some(&self.intervals),
            HoleKind::Empty => Some(&[]),
            _ => None,
        }
    }

    /// Membership in the (open) hole.
    pub fn contains(&self, p: Point) -> bool {
        match &self.kind {
            HoleKind::Empty => false,
            HoleKind::CylinderUnion { base, level, .. } => {
                let id = cylinder_index(p.x, *base, *level);
                self.cylinder_ids.binary_search(&id).is_ok() && self.boundary_distance(p) > 0.0
            }
            HoleKind::IntervalUnion { .. } => self.intervals.iter().any(|&(a, b)| inside(p.x, a, b)),
            HoleKind::Ball { center, radius } => torus_dist(p, center) < *radius,
            HoleKind::Rect { min, max } => p.x > min[0] && p.x < max[0] && p.y > min[1] && p.y < max[1],
        }
    }

    /// Distance to the boundary of the hole. For 1-D holes the ends `0` and
    /// `1` of the phase interval are edges of phase space and do not count as
    /// hole boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        match &self.kind {
            HoleKind::Empty => f64::INFINITY,
            HoleKind::CylinderUnion { .. } | HoleKind::IntervalUnion { .. } => self
                .intervals
                .iter()
                .flat_map(|&(a, b)| [a, b])
                .filter(|&e| e > 0.0 && e < 1.0)
                .map(|e| (p.x - e).abs())
                .fold(f64::INFINITY, f64::min),
            HoleKind::Ball { center, radius } => (torus_dist(p, center) - radius).abs(),
            HoleKind::Rect { min, max } => {
                let inside = p.x > min[0] && p.x < max[0] && p.y > min[1] && p.y < max[1];
                if inside {
                    (p.x - min[0]).min(max[0] - p.x).min(p.y - min[1]).min(max[1] - p.y)
                } else {
                    let dx = (min[0] - p.x).max(0.0).max(p.x - max[0]);
                    let dy = (min[1] - p.y).max(0.0).max(p.y - max[1]);
                    dx.hypot(dy)
                }
            }
        }
    }

    /// Lebesgue measure of the hole.
    pub fn volume(&self) -> f64 {
        match &self.kind {
            HoleKind::Empty => 0.0,
            HoleKind::CylinderUnion { .. } | HoleKind::IntervalUnion { .. } => {
                self.intervals.iter().map(|(a, b)| b - a).sum()
            }
            HoleKind::Ball { radius, .. } => std::f64::consts::PI * radius * radius,
            HoleKind::Rect { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
        }
    }

    /// `true` when `self` is contained in `other` as a set (checked
    /// structurally for 1-D holes and balls with a common center).
    pub fn is_subset_of(&self, other: &HoleSpec) -> bool {
        if self.is_empty() {
            return true;
        }
        match (self.intervals(), other.intervals()) {
            (Some(a), Some(b)) => a
                .iter()
                .all(|&(x, y)| b.iter().any(|&(u, v)| u <= x && y <= v)),
            _ => match (&self.kind, &other.kind) {
                (HoleKind::Ball { center: c1, radius: r1 }, HoleKind::Ball { center: c2, radius: r2 }) => {
                    torus_dist(Point::new(c1[0], c1[1]), c2) + r1 <= *r2
                }
                _ => false,
            },
        }
    }
}

fn inside(x: f64, a: f64, b: f64) -> bool {
    (x > a || a <= 0.0) && x < b
}

fn torus_dist(p: Point, c: &[f64; 2]) -> f64 {
    circle_gap(p.x, c[0]).hypot(circle_gap(p.y, c[1]))
}

fn merge(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Integer value of a digit word read in base `base`.
pub fn word_index(word: &[u8], base: u32) -> u64 {
    word.iter().fold(0u64, |acc, &d| acc * base as u64 + d as u64)
}

/// Index of the level-`level` base-`base` cylinder containing `x`.
pub fn cylinder_index(x: f64, base: u32, level: usize) -> u64 {
    let size = (base as u64).pow(level as u32);
    ((x * size as f64).floor() as u64).min(size - 1)
}

/// The first `level` base-`base` digits of `x`.
pub fn digits(x: f64, base: u32, level: usize) -> Vec<u8> {
    let mut id = cylinder_index(x, base, level);
    let mut out = vec![0u8; level];
    for slot in out.iter_mut().rev() {
        *slot = (id % base as u64) as u8;
        id /= base as u64;
    }
    out
}
