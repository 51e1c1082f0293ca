//! Periodic Lorentz gas: the collision map of a dispersing billiard on the
//! unit torus with disjoint circular scatterers, and Monte Carlo escape
//! through holes under the SRB measure `c cos θ dr dθ`.
//!
//! A collision state is `(scatterer, r, θ)`: `r` is arclength measured
//! counterclockwise from the point `center + (radius, 0)`, and `θ` is the
//! angle from the outward normal to the outgoing velocity. Flights have unit
//! speed.
//!
//! Hole conventions follow the map case: a state at step `i` lies in the
//! hole when its collision point is inside the arc (Type I) or when its
//! outgoing flight meets the disk (Type II).

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::escape::{estimate_from_counts, EscapeEstimate, Window};
use crate::sampling::{sharded, unit, SampleRng};
use twofloat::TwoFloat;

/// Minimal gap between scatterers, and between a Type II hole and scatterers.
pub const CLEARANCE: f64 = 1e-3;
/// States with `|θ| > π/2 − TANGENCY_GUARD` are tangential collisions.
pub const TANGENCY_GUARD: f64 = 1e-9;
pub const HORIZON_RAYS: usize = 1_000_000;
/// Tables whose sampled free flights reach this length are rejected.
pub const MAX_HORIZON: f64 = 1.5;
/// Safety factor between the longest sampled flight and the search reach.
const HORIZON_MARGIN: f64 = 1.25;
/// Reach of the exhaustive search used while validating the horizon.
const PROBE_REACH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Scatterer {
    pub fn length(&self) -> f64 {
        TAU * self.radius
    }
}

/// JSON form of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub scatterers: Vec<Scatterer>,
    #[serde(default = "default_rays")]
    pub horizon_rays: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_rays() -> usize {
    HORIZON_RAYS
}

impl Default for TableSpec {
    /// Radius 0.44 at the lattice points and 0.20 at the cell centers.
    fn default() -> Self {
        Self {
            scatterers: vec![
                Scatterer { center: [0.0, 0.0], radius: 0.44 },
                Scatterer { center: [0.5, 0.5], radius: 0.20 },
            ],
            horizon_rays: HORIZON_RAYS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DiskCopy {
    id: usize,
    center: [f64; 2],
    radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BilliardTable {
    pub scatterers: Vec<Scatterer>,
    /// Longest free flight among the validation rays.
    pub max_sampled_flight: f64,
    /// `τ_max`: flights longer than this are treated as errors.
    pub horizon_bound: f64,
    /// Disk copies reachable by a flight leaving each scatterer.
    #[serde(skip)]
    copies: Vec<Vec<DiskCopy>>,
}

fn torus_delta(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = |t: f64| t - t.round();
    [d(b[0] - a[0]), d(b[1] - a[1])]
}

fn wrap(t: f64) -> f64 {
    let f = t - t.floor();
    if f >= 1.0 { 0.0 } else { f }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Copies of the disks `(id, center, radius)` meeting `[−reach, 1+reach]²`.
fn copies_within(disks: &[(usize, [f64; 2], f64)], reach: f64) -> Vec<DiskCopy> {
    let mut out = Vec::new();
    let k = reach.ceil() as i64 + 2;
    for &(id, c, radius) in disks {
        for i in -k..=k {
            for j in -k..=k {
                let center = [c[0] + i as f64, c[1] + j as f64];
                let lo = -reach - radius;
                let hi = 1.0 + reach + radius;
                if center.iter().all(|&t| t >= lo && t <= hi) {
                    out.push(DiskCopy { id, center, radius });
                }
            }
        }
    }
    out
}

/// Field operations used by the collision step, which needs no
/// transcendental functions and so runs in `f64` or double-double.
pub trait Real:
    Copy + PartialOrd + From<f64> + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
    fn quot(self, d: Self) -> Self;
    fn sqrt(self) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    fn quot(self, d: Self) -> Self {
        self / d
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for TwoFloat {
    /// Long division by residual correction; `TwoFloat`'s own quotient of
    /// two exact doubles keeps only the leading word.
    fn quot(self, d: Self) -> Self {
        let q1 = self.hi() / d.hi();
        let r = self - d * TwoFloat::from(q1);
        let q2 = r.hi() / d.hi();
        let r = r - d * TwoFloat::from(q2);
        TwoFloat::from(q1) + TwoFloat::from(q2) + TwoFloat::from(r.hi() / d.hi())
    }
    fn sqrt(self) -> Self {
        TwoFloat::sqrt(self)
    }
    fn to_f64(self) -> f64 {
        self.hi() + self.lo()
    }
}

fn vdot<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// Rescales to unit length; the ray–circle root assumes unit speed and
/// otherwise the drift feeds back through the expanding dynamics.
fn normalized<T: Real>(a: [T; 2]) -> [T; 2] {
    let norm = vdot(a, a).sqrt();
    [a[0].quot(norm), a[1].quot(norm)]
}

/// Collision state as the unit outward normal and outgoing velocity.
#[derive(Debug, Clone, Copy)]
struct Frame<T> {
    id: usize,
    n: [T; 2],
    v: [T; 2],
}

/// For each scatterer, the copies of every disk whose boundary lies within
/// `reach` of it.
fn reachable(disks: &[(usize, [f64; 2], f64)], reach: f64) -> Vec<Vec<DiskCopy>> {
    let all = copies_within(disks, reach + disks.iter().map(|d| d.2).fold(0.0, f64::max));
    disks
        .iter()
        .map(|&(_, c, r)| {
            all.iter()
                .filter(|d| {
                    let w = [d.center[0] - c[0], d.center[1] - c[1]];
                    dot(w, w).sqrt() <= r + reach + d.radius
                })
                .copied()
                .collect()
        })
        .collect()
}

/// First forward hit of the ray `q + t v`, `t > 0`, among `copies`.
fn first_hit<T: Real>(copies: &[DiskCopy], q: [T; 2], v: [T; 2]) -> Option<(T, &DiskCopy)> {
    let zero = T::from(0.0);
    let mut best: Option<(T, &DiskCopy)> = None;
    for d in copies {
        let w = [q[0] - T::from(d.center[0]), q[1] - T::from(d.center[1])];
        let b = vdot(v, w);
        if b >= zero {
            continue;
        }
        let rr = T::from(d.radius);
        let disc = b * b - (vdot(w, w) - rr * rr);
        if disc <= zero {
            continue;
        }
        let t = zero - b - disc.sqrt();
        if t > zero && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, d));
        }
    }
    best
}

/// One collision in frame form: the next frame, the flight start and length.
fn advance<T: Real>(table: &BilliardTable, f: &Frame<T>) -> Option<(Frame<T>, [T; 2], T)> {
    let d = &table.scatterers[f.id];
    let (c, r) = ([T::from(d.center[0]), T::from(d.center[1])], T::from(d.radius));
    let q = [c[0] + r * f.n[0], c[1] + r * f.n[1]];
    let (t, hit) = first_hit(&table.copies[f.id], q, f.v)?;
    let (hc, hr) = ([T::from(hit.center[0]), T::from(hit.center[1])], T::from(hit.radius));
    let n = normalized([(q[0] + t * f.v[0] - hc[0]).quot(hr), (q[1] + t * f.v[1] - hc[1]).quot(hr)]);
    let two_vn = T::from(2.0) * vdot(f.v, n);
    let v = normalized([f.v[0] - two_vn * n[0], f.v[1] - two_vn * n[1]]);
    Some((Frame { id: hit.id, n, v }, q, t))
}

impl BilliardTable {
    /// Validates disjointness and clearance, then estimates the horizon from
    /// `spec.horizon_rays` rays leaving the scatterers in uniformly random
    /// directions.
    pub fn new(spec: &TableSpec) -> Result<Self> {
        let s = &spec.scatterers;
        if s.is_empty() {
            return Err(Error::Config("a table needs at least one scatterer".into()));
        }
        for (i, a) in s.iter().enumerate() {
            if !(a.radius > 0.0) || a.center.iter().any(|c| !(0.0..1.0).contains(c)) {
                return Err(Error::Config(format!("scatterer {i}: need radius > 0 and center in [0,1)^2")));
            }
            if 1.0 - 2.0 * a.radius < CLEARANCE {
                return Err(Error::Config(format!("scatterer {i} overlaps its own periodic copies")));
            }
            for (j, b) in s.iter().enumerate().skip(i + 1) {
                let d = torus_delta(a.center, b.center);
                let gap = dot(d, d).sqrt() - a.radius - b.radius;
                if gap < CLEARANCE {
                    return Err(Error::Config(format!("scatterers {i} and {j} are {gap:.3e} apart")));
                }
            }
        }
        if spec.horizon_rays == 0 {
            return Err(Error::Config("horizon_rays must be positive".into()));
        }
        let disks: Vec<_> = s.iter().enumerate().map(|(i, d)| (i, d.center, d.radius)).collect();
        let mut table = Self {
            scatterers: s.clone(),
            max_sampled_flight: 0.0,
            horizon_bound: PROBE_REACH,
            copies: reachable(&disks, PROBE_REACH),
        };
        let lengths = sharded(spec.horizon_rays, spec.seed, |rng, count| {
            let mut longest = 0.0f64;
            for _ in 0..count {
                let mut state = table.sample_boundary(rng);
                state.theta = (unit(rng) - 0.5) * PI;
                match advance(&table, &table.frame::<f64>(&state)) {
                    Some((_, _, t)) => longest = longest.max(t),
                    None => return None,
                }
            }
            Some(longest)
        });
        let mut longest = 0.0f64;
        for l in lengths {
            match l {
                Some(l) => longest = longest.max(l),
                None => {
                    return Err(Error::Domain(format!(
                        "infinite horizon: a ray travels farther than {PROBE_REACH} without a collision"
                    )))
                }
            }
        }
        if longest >= MAX_HORIZON {
            return Err(Error::Domain(format!(
                "free flight {longest:.4} reaches the horizon limit {MAX_HORIZON}"
            )));
        }
        table.max_sampled_flight = longest;
        table.horizon_bound = (HORIZON_MARGIN * longest).min(MAX_HORIZON);
        table.copies = reachable(&disks, table.horizon_bound);
        Ok(table)
    }

    pub fn default_table() -> Result<Self> {
        Self::new(&TableSpec::default())
    }

    /// Half-width beyond the unit square covered by the collision search.
    fn search_reach(&self) -> f64 {
        self.horizon_bound + self.scatterers.iter().map(|d| d.radius).fold(0.0, f64::max)
    }

    fn frame<T: Real>(&self, s: &CollisionState) -> Frame<T> {
        let phi = s.r / self.scatterers[s.id].radius;
        let a = phi + s.theta;
        Frame {
            id: s.id,
            n: normalized([T::from(phi.cos()), T::from(phi.sin())]),
            v: normalized([T::from(a.cos()), T::from(a.sin())]),
        }
    }

    fn state<T: Real>(&self, f: &Frame<T>) -> CollisionState {
        let (n, v) = (f.n.map(T::to_f64), f.v.map(T::to_f64));
        let len = self.scatterers[f.id].length();
        let mut phi = n[1].atan2(n[0]);
        if phi < 0.0 {
            phi += TAU;
        }
        CollisionState {
            id: f.id,
            r: (phi * self.scatterers[f.id].radius).min(len * (1.0 - f64::EPSILON)),
            theta: (n[0] * v[1] - n[1] * v[0]).atan2(dot(n, v)),
        }
    }

    pub fn total_length(&self) -> f64 {
        self.scatterers.iter().map(Scatterer::length).sum()
    }

    /// Point of the unit square where the state sits.
    pub fn position(&self, s: &CollisionState) -> [f64; 2] {
        let d = &self.scatterers[s.id];
        let phi = s.r / d.radius;
        [
            wrap(d.center[0] + d.radius * phi.cos()),
            wrap(d.center[1] + d.radius * phi.sin()),
        ]
    }

    pub fn velocity(&self, s: &CollisionState) -> [f64; 2] {
        let a = s.r / self.scatterers[s.id].radius + s.theta;
        [a.cos(), a.sin()]
    }

    /// Uniform point on the boundary, `θ = 0`.
    fn sample_boundary(&self, rng: &mut SampleRng) -> CollisionState {
        let mut u = unit(rng) * self.total_length();
        let last = self.scatterers.len() - 1;
        for (id, d) in self.scatterers.iter().enumerate() {
            if u < d.length() || id == last {
                return CollisionState { id, r: u.min(d.length() * (1.0 - f64::EPSILON)), theta: 0.0 };
            }
            u -= d.length();
        }
        unreachable!()
    }

    /// Draw from the SRB measure: uniform in arclength, density `cos θ / 2`.
    pub fn sample_srb(&self, rng: &mut SampleRng) -> CollisionState {
        let mut s = self.sample_boundary(rng);
        s.theta = (2.0 * unit(rng) - 1.0).asin();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionState {
    pub id: usize,
    pub r: f64,
    pub theta: f64,
}

impl CollisionState {
    /// The state with reversed velocity; `F⁻¹ = I ∘ F ∘ I`.
    pub fn reversed(self) -> Self {
        Self { theta: -self.theta, ..self }
    }

    pub fn is_tangential(&self) -> bool {
        self.theta.abs() > FRAC_PI_2 - TANGENCY_GUARD
    }
}

/// Straight segment travelled between two collisions. The start lies
/// within one scatterer radius of the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flight {
    pub start: [f64; 2],
    pub dir: [f64; 2],
    pub length: f64,
}

fn tangential(f: &Frame<f64>) -> bool {
    // cos θ = n·v, and cos(π/2 − g) = g to double precision
    dot(f.n, f.v) < TANGENCY_GUARD
}

fn step(table: &BilliardTable, f: &Frame<f64>) -> Result<(Frame<f64>, Flight)> {
    let (next, start, length) = advance(table, f)
        .ok_or_else(|| Error::Domain(format!("no collision within the horizon bound {}", table.horizon_bound)))?;
    if tangential(&next) {
        return Err(Error::Singularity { step: 1 });
    }
    Ok((next, Flight { start, dir: f.v, length }))
}

/// One application of the billiard map.
///
/// Errors with [`Error::Singularity`] at tangential collisions, and with
/// [`Error::Domain`] if no scatterer is met within the horizon bound.
pub fn collision_map(table: &BilliardTable, s: &CollisionState) -> Result<(CollisionState, Flight)> {
    if s.is_tangential() {
        return Err(Error::Singularity { step: 0 });
    }
    let (next, flight) = step(table, &table.frame(s))?;
    Ok((table.state(&next), flight))
}

/// Type I (`arc`) or Type II (`disk`) hole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BilliardHole {
    Empty,
    /// Open arc `start < r < end` on one scatterer.
    Arc { scatterer: usize, start: f64, end: f64 },
    /// Open disk in the table, closure away from the scatterers.
    Disk { center: [f64; 2], radius: f64 },
}

impl BilliardHole {
    /// Arc covering `fraction` of the scatterer's boundary, starting at `r = 0`.
    pub fn arc_fraction(table: &BilliardTable, scatterer: usize, fraction: f64) -> Self {
        Self::Arc { scatterer, start: 0.0, end: fraction * table.scatterers[scatterer].length() }
    }

    /// Arc length or disk radius.
    pub fn size(&self) -> f64 {
        match *self {
            Self::Empty => 0.0,
            Self::Arc { start, end, .. } => end - start,
            Self::Disk { radius, .. } => radius,
        }
    }

    pub fn validate(&self, table: &BilliardTable) -> Result<()> {
        match *self {
            Self::Empty => Ok(()),
            Self::Arc { scatterer, start, end } => {
                let d = table
                    .scatterers
                    .get(scatterer)
                    .ok_or_else(|| Error::Config(format!("arc on missing scatterer {scatterer}")))?;
                if !(0.0 <= start && start < end && end <= d.length()) {
                    return Err(Error::Config(format!(
                        "arc ({start}, {end}) must satisfy 0 <= start < end <= {}",
                        d.length()
                    )));
                }
                Ok(())
            }
            Self::Disk { center, radius } => {
                if !(radius > 0.0) || center.iter().any(|c| !(0.0..1.0).contains(c)) {
                    return Err(Error::Config("disk hole needs radius > 0 and center in [0,1)^2".into()));
                }
                for (i, s) in table.scatterers.iter().enumerate() {
                    let d = torus_delta(center, s.center);
                    let gap = dot(d, d).sqrt() - s.radius - radius;
                    if gap < CLEARANCE {
                        return Err(Error::Config(format!("disk hole is {gap:.3e} from scatterer {i}")));
                    }
                }
                Ok(())
            }
        }
    }

    fn contains(&self, s: &CollisionState) -> bool {
        matches!(*self, Self::Arc { scatterer, start, end } if s.id == scatterer && s.r > start && s.r < end)
    }

    /// Set inclusion; disks are compared as subsets of the torus.
    pub fn is_subset_of(&self, other: &BilliardHole) -> bool {
        match (*self, *other) {
            (Self::Empty, _) => true,
            (Self::Arc { scatterer: a, start: s0, end: e0 }, Self::Arc { scatterer: b, start: s1, end: e1 }) => {
                a == b && s1 <= s0 && e0 <= e1
            }
            (Self::Disk { center: c0, radius: r0 }, Self::Disk { center: c1, radius: r1 }) => {
                let d = torus_delta(c0, c1);
                dot(d, d).sqrt() + r0 <= r1
            }
            _ => false,
        }
    }
}

/// Disk hole with its periodic copies near the unit square.
struct DiskTarget {
    copies: Vec<[f64; 2]>,
    radius: f64,
}

impl DiskTarget {
    fn hit(&self, f: &Flight) -> bool {
        let r2 = self.radius * self.radius;
        self.copies.iter().any(|c| {
            let w = [c[0] - f.start[0], c[1] - f.start[1]];
            let u = dot(w, f.dir).clamp(0.0, f.length);
            let p = [w[0] - u * f.dir[0], w[1] - u * f.dir[1]];
            dot(p, p) < r2
        })
    }
}

enum Target<'a> {
    None,
    Arc(&'a BilliardHole),
    Disk(DiskTarget),
}

fn targets<'a>(table: &BilliardTable, holes: &'a [BilliardHole]) -> Vec<Target<'a>> {
    holes
        .iter()
        .map(|h| match *h {
            BilliardHole::Empty => Target::None,
            BilliardHole::Arc { .. } => Target::Arc(h),
            BilliardHole::Disk { center, radius } => Target::Disk(DiskTarget {
                copies: copies_within(&[(0, center, radius)], table.search_reach())
                    .into_iter()
                    .map(|c| c.center)
                    .collect(),
                radius,
            }),
        })
        .collect()
}

/// Escape step of `x` for each hole (`n_max + 1` = survived), or `None`
/// when the orbit meets a tangency first.
fn escape_steps(table: &BilliardTable, targets: &[Target], x: CollisionState, n_max: usize) -> Result<Option<Vec<usize>>> {
    let survived = n_max + 1;
    let mut steps = vec![survived; targets.len()];
    let mut open = targets.iter().filter(|t| !matches!(t, Target::None)).count();
    if x.is_tangential() {
        return Ok(None);
    }
    let arcs = targets.iter().any(|t| matches!(t, Target::Arc(_)));
    let mut f = table.frame::<f64>(&x);
    for i in 0..=n_max {
        if open == 0 {
            break;
        }
        if arcs {
            let s = if i == 0 { x } else { table.state(&f) };
            for (k, t) in targets.iter().enumerate() {
                if let Target::Arc(h) = t {
                    if steps[k] == survived && h.contains(&s) {
                        steps[k] = i;
                        open -= 1;
                    }
                }
            }
            if open == 0 {
                break;
            }
        }
        let (next, flight) = match step(table, &f) {
            Ok(b) => b,
            Err(Error::Singularity { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        for (k, t) in targets.iter().enumerate() {
            if let Target::Disk(d) = t {
                if steps[k] == survived && d.hit(&flight) {
                    steps[k] = i;
                    open -= 1;
                }
            }
        }
        f = next;
    }
    Ok(Some(steps))
}

/// Escape estimates for several holes from the same SRB trajectories.
///
/// Pathwise, an orbit escapes a hole no later than any hole it contains, so
/// nested holes give nested survivor counts.
pub fn billiard_escape_sweep(
    table: &BilliardTable,
    holes: &[BilliardHole],
    samples: usize,
    n_max: usize,
    seed: u64,
    window: Option<Window>,
) -> Result<Vec<Result<EscapeEstimate>>> {
    for h in holes {
        h.validate(table)?;
    }
    if samples < crate::escape::MIN_MC_SAMPLES {
        return Err(Error::Config(format!(
            "Monte Carlo needs at least {} samples, got {samples}",
            crate::escape::MIN_MC_SAMPLES
        )));
    }
    let window = window.unwrap_or(Window::default_for(n_max)).validate(n_max)?;
    let targets = targets(table, holes);
    let k = holes.len();
    let shards = sharded(samples, seed, |rng, count| -> Result<(Vec<Vec<u64>>, u64)> {
        let mut escaped = vec![vec![0u64; n_max + 2]; k];
        let mut singular = 0u64;
        for _ in 0..count {
            let x = table.sample_srb(rng);
            match escape_steps(table, &targets, x, n_max)? {
                Some(steps) => steps.iter().zip(&mut escaped).for_each(|(&i, e)| e[i] += 1),
                None => singular += 1,
            }
        }
        Ok((escaped, singular))
    });
    let mut escaped = vec![vec![0u64; n_max + 2]; k];
    let mut singular = 0u64;
    for shard in shards {
        let (e, s) = shard?;
        for (a, b) in escaped.iter_mut().zip(e) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        singular += s;
    }
    Ok(escaped
        .iter()
        .zip(holes)
        .map(|(e, h)| {
            if *h == BilliardHole::Empty {
                return Ok(empty_estimate(n_max, window, singular));
            }
            let half = n_max / 2;
            let alive: u64 = e[half + 1..].iter().sum();
            if alive < crate::escape::MIN_SURVIVORS {
                return Err(Error::InsufficientSurvivors {
                    survivors: alive,
                    step: half,
                    required: crate::escape::MIN_SURVIVORS,
                });
            }
            estimate_from_counts(e, singular, samples as u64, window)
        })
        .collect())
}

fn empty_estimate(n_max: usize, window: Window, singular_hits: u64) -> EscapeEstimate {
    EscapeEstimate {
        rho: 0.0,
        stderr: 0.0,
        method: crate::escape::EscapeMethod::MonteCarlo,
        window,
        per_n_mass: (0..=n_max).map(|n| (n, 1.0)).collect(),
        rho_lower: 0.0,
        rho_upper: 0.0,
        rho_lower_stderr: 0.0,
        fit_residual: 0.0,
        singular_hits,
    }
}

/// Monte Carlo escape rate of one hole under the SRB measure.
pub fn billiard_escape(
    table: &BilliardTable,
    hole: &BilliardHole,
    samples: usize,
    n_max: usize,
    seed: u64,
) -> Result<EscapeEstimate> {
    billiard_escape_sweep(table, std::slice::from_ref(hole), samples, n_max, seed, None)?
        .pop()
        .expect("one hole")
}

/// Shape checks on a survival curve inside its fit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDiagnostics {
    /// `m(Mⁿ⁺¹) / m(Mⁿ)` for `n` in the window.
    pub step_ratios: Vec<f64>,
    /// Mean ratio over the second half of the window minus the first half.
    pub ratio_drift: f64,
    /// Smallest second difference of `log m(Mⁿ)`; negative values break log-convexity.
    pub min_second_difference: f64,
    pub fit_residual: f64,
}

pub fn survival_diagnostics(e: &EscapeEstimate) -> SurvivalDiagnostics {
    let w = e.window;
    let mass: Vec<f64> = e.per_n_mass.iter().map(|p| p.1).collect();
    let step_ratios: Vec<f64> = (w.n_min..w.n_max).map(|n| mass[n + 1] / mass[n]).collect();
    let half = step_ratios.len() / 2;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let ratio_drift = if half == 0 {
        0.0
    } else {
        mean(&step_ratios[step_ratios.len() - half..]) - mean(&step_ratios[..half])
    };
    let min_second_difference = (w.n_min + 1..w.n_max)
        .map(|n| mass[n + 1].ln() - 2.0 * mass[n].ln() + mass[n - 1].ln())
        .fold(f64::INFINITY, f64::min);
    SurvivalDiagnostics {
        step_ratios,
        ratio_drift,
        min_second_difference: if min_second_difference.is_finite() { min_second_difference } else { 0.0 },
        fit_residual: e.fit_residual,
    }
}

/// Pearson χ² test of the pushed-forward SRB histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub samples: u64,
    /// Orbits dropped at tangencies.
    pub discarded: u64,
}

/// Draws SRB states, applies `steps` collisions without a hole, and tests
/// the result against the `cos θ` density on a grid of scatterer × `r` ×
/// `θ` cells.
pub fn srb_stationarity(
    table: &BilliardTable,
    samples: usize,
    steps: usize,
    r_bins: usize,
    theta_bins: usize,
    seed: u64,
) -> Result<ChiSquareTest> {
    let cells = table.scatterers.len() * r_bins * theta_bins;
    let cell = |s: &CollisionState| {
        let len = table.scatterers[s.id].length();
        let rb = ((s.r / len * r_bins as f64) as usize).min(r_bins - 1);
        let tb = (((s.theta + FRAC_PI_2) / PI * theta_bins as f64) as usize).min(theta_bins - 1);
        (s.id * r_bins + rb) * theta_bins + tb
    };
    let shards = sharded(samples, seed, |rng, count| -> Result<(Vec<u64>, u64)> {
        let mut hist = vec![0u64; cells];
        let mut dropped = 0;
        'orbit: for _ in 0..count {
            let mut s = table.sample_srb(rng);
            for _ in 0..steps {
                match collision_map(table, &s) {
                    Ok((n, _)) => s = n,
                    Err(Error::Singularity { .. }) => {
                        dropped += 1;
                        continue 'orbit;
                    }
                    Err(e) => return Err(e),
                }
            }
            hist[cell(&s)] += 1;
        }
        Ok((hist, dropped))
    });
    let mut hist = vec![0u64; cells];
    let mut discarded = 0;
    for sh in shards {
        let (h, d) = sh?;
        hist.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        discarded += d;
    }
    let total: u64 = hist.iter().sum();
    let total_len = table.total_length();
    let mut statistic = 0.0;
    for (id, d) in table.scatterers.iter().enumerate() {
        for rb in 0..r_bins {
            for tb in 0..theta_bins {
                let a = -FRAC_PI_2 + PI * tb as f64 / theta_bins as f64;
                let b = -FRAC_PI_2 + PI * (tb + 1) as f64 / theta_bins as f64;
                let p = d.length() / total_len / r_bins as f64 * (b.sin() - a.sin()) / 2.0;
                let expected = p * total as f64;
                let observed = hist[(id * r_bins + rb) * theta_bins + tb] as f64;
                statistic += (observed - expected).powi(2) / expected;
            }
        }
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
        samples: total,
        discarded,
    })
}

fn reverse<T: Real>(f: Frame<T>) -> Frame<T> {
    // outgoing velocity mirrored through the normal line, then negated
    let two_vn = T::from(2.0) * vdot(f.v, f.n);
    Frame { v: [two_vn * f.n[0] - f.v[0], two_vn * f.n[1] - f.v[1]], ..f }
}

fn round_trip<T: Real>(table: &BilliardTable, s: &CollisionState, steps: usize) -> Result<CollisionState> {
    let lost = || Error::Domain(format!("no collision within the horizon bound {}", table.horizon_bound));
    let mut f = table.frame::<T>(s);
    for _ in 0..steps {
        f = advance(table, &f).ok_or_else(lost)?.0;
    }
    f = reverse(f);
    for _ in 0..steps {
        f = advance(table, &f).ok_or_else(lost)?.0;
    }
    Ok(table.state(&reverse(f)))
}

fn state_distance(table: &BilliardTable, a: &CollisionState, b: &CollisionState) -> f64 {
    if a.id != b.id {
        return f64::INFINITY;
    }
    let len = table.scatterers[a.id].length();
    let dr = (a.r - b.r).rem_euclid(len);
    dr.min(len - dr).max((a.theta - b.theta).abs())
}

/// Distance between `s` and the state obtained by `steps` collisions
/// forward, a velocity reversal, `steps` collisions, and a second reversal.
///
/// The orbit is computed in double-double arithmetic, so the result measures
/// the reversibility of the collision step itself. Roundoff in `f64` grows
/// with the expansion along the orbit; [`reversal_error_f64`] reports it.
pub fn reversal_error(table: &BilliardTable, s: &CollisionState, steps: usize) -> Result<f64> {
    Ok(state_distance(table, s, &round_trip::<TwoFloat>(table, s, steps)?))
}

/// As [`reversal_error`] in `f64` arithmetic.
pub fn reversal_error_f64(table: &BilliardTable, s: &CollisionState, steps: usize) -> Result<f64> {
    Ok(state_distance(table, s, &round_trip::<f64>(table, s, steps)?))
}

/// JSON run description for the billiard experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilliardConfig {
    #[serde(default)]
    pub table: TableSpec,
    pub holes: Vec<BilliardHole>,
    pub samples: usize,
    pub n_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub window: Option<Window>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::stream;
    use std::sync::OnceLock;

    fn table() -> &'static BilliardTable {
        static T: OnceLock<BilliardTable> = OnceLock::new();
        T.get_or_init(|| BilliardTable::new(&TableSpec { horizon_rays: 100_000, ..TableSpec::default() }).unwrap())
    }

    #[test]
    fn default_table_has_finite_horizon() {
        let t = table();
        assert!(t.max_sampled_flight > 0.0 && t.max_sampled_flight < MAX_HORIZON && t.horizon_bound <= MAX_HORIZON, "{t:?}");
    }

    #[test]
    fn overlapping_tables_are_rejected() {
        let spec = TableSpec {
            scatterers: vec![
                Scatterer { center: [0.0, 0.0], radius: 0.45 },
                Scatterer { center: [0.5, 0.5], radius: 0.35 },
            ],
            ..TableSpec::default()
        };
        assert!(matches!(BilliardTable::new(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn open_corridors_are_rejected() {
        let spec = TableSpec {
            scatterers: vec![Scatterer { center: [0.5, 0.5], radius: 0.1 }],
            horizon_rays: 10_000,
            seed: 0,
        };
        assert!(matches!(BilliardTable::new(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn diameter_orbit_has_period_two() {
        let t = table();
        let s = CollisionState { id: 0, r: 0.44 * PI / 4.0, theta: 0.0 };
        let (a, f) = collision_map(t, &s).unwrap();
        assert_eq!(a.id, 1);
        assert!((a.r - 0.2 * 5.0 * PI / 4.0).abs() < 1e-12 && a.theta.abs() < 1e-12);
        assert!((f.length - (0.5f64.sqrt() - 0.64)).abs() < 1e-12);
        let (b, _) = collision_map(t, &a).unwrap();
        assert_eq!(b.id, 0);
        assert!((b.r - s.r).abs() < 1e-12 && b.theta.abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetric_bounce() {
        // reflection y -> -y fixes scatterer 0 at r = 0 and maps the table to itself
        let t = table();
        for delta in [0.1, 0.4, 1.0] {
            let (a, fa) = collision_map(t, &CollisionState { id: 0, r: 0.0, theta: delta }).unwrap();
            let (b, fb) = collision_map(t, &CollisionState { id: 0, r: 0.0, theta: -delta }).unwrap();
            let len = t.scatterers[a.id].length();
            assert_eq!(a.id, b.id);
            assert!(((a.r + b.r) % len).min(len - (a.r + b.r) % len) < 1e-12);
            assert!((a.theta + b.theta).abs() < 1e-12);
            assert!((fa.length - fb.length).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_speed_and_valid_angles() {
        let t = table();
        let mut rng = stream(3, 0);
        for _ in 0..2_000 {
            let s = t.sample_srb(&mut rng);
            let (n, f) = collision_map(t, &s).unwrap();
            assert!((f.dir[0].hypot(f.dir[1]) - 1.0).abs() < 1e-15);
            assert!(n.theta.abs() < FRAC_PI_2 && f.length > 0.0 && f.length <= t.horizon_bound);
        }
    }

    #[test]
    fn reversibility_over_ten_collisions() {
        let t = table();
        let mut rng = stream(4, 0);
        let mut worst = 0.0f64;
        let mut plain = Vec::new();
        for _ in 0..2_000 {
            let s = t.sample_srb(&mut rng);
            worst = worst.max(reversal_error(t, &s, 10).unwrap());
            plain.push(reversal_error_f64(t, &s, 10).unwrap());
        }
        assert!(worst < 1e-9, "{worst:e}");
        plain.sort_by(f64::total_cmp);
        assert!(plain[plain.len() / 2] < 1e-10, "{:e}", plain[plain.len() / 2]);
    }

    #[test]
    fn srb_is_stationary() {
        let c = srb_stationarity(table(), 200_000, 1, 8, 10, 5).unwrap();
        assert!(c.p_value > 0.01, "{c:?}");
    }

    #[test]
    fn wrong_density_fails_the_chi_square() {
        // uniform θ instead of cos θ, pushed zero steps
        let t = table();
        let mut rng = stream(6, 0);
        let mut hist = [0.0; 10];
        for _ in 0..50_000 {
            let th = (unit(&mut rng) - 0.5) * PI;
            hist[(((th + FRAC_PI_2) / PI * 10.0) as usize).min(9)] += 1.0;
        }
        let stat: f64 = (0..10)
            .map(|b| {
                let (lo, hi) = (-FRAC_PI_2 + PI * b as f64 / 10.0, -FRAC_PI_2 + PI * (b + 1) as f64 / 10.0);
                let e = 50_000.0 * (hi.sin() - lo.sin()) / 2.0;
                (hist[b] - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);
        assert!(p < 1e-6);
        let _ = t;
    }

    #[test]
    fn empty_hole_never_escapes() {
        let e = billiard_escape(table(), &BilliardHole::Empty, 20_000, 10, 1).unwrap();
        assert_eq!(e.rho, 0.0);
        assert!(e.per_n_mass.iter().all(|p| p.1 == 1.0));
    }

    #[test]
    fn hole_validation() {
        let t = table();
        assert!(BilliardHole::Disk { center: [0.2, 0.5], radius: 0.09 }.validate(t).is_ok());
        assert!(BilliardHole::Disk { center: [0.2, 0.5], radius: 0.098 }.validate(t).is_err());
        assert!(BilliardHole::Arc { scatterer: 2, start: 0.0, end: 0.1 }.validate(t).is_err());
        assert!(BilliardHole::Arc { scatterer: 1, start: 0.0, end: 2.0 }.validate(t).is_err());
    }

    #[test]
    fn nested_holes_have_nested_rates() {
        let t = table();
        let holes: Vec<_> = [0.1, 0.05].iter().map(|&f| BilliardHole::arc_fraction(t, 0, f)).collect();
        let r = billiard_escape_sweep(t, &holes, 100_000, 24, 2, None).unwrap();
        let (big, small) = (r[0].as_ref().unwrap(), r[1].as_ref().unwrap());
        assert!(big.rho < small.rho && small.rho < 0.0, "{} {}", big.rho, small.rho);
        for (a, b) in big.per_n_mass.iter().zip(&small.per_n_mass) {
            assert!(a.1 <= b.1);
        }
        assert!(holes[1].is_subset_of(&holes[0]) && !holes[0].is_subset_of(&holes[1]));
        let disk = |r| BilliardHole::Disk { center: [0.2, 0.5], radius: r };
        assert!(disk(0.02).is_subset_of(&disk(0.04)) && !disk(0.04).is_subset_of(&disk(0.02)));
        assert!(BilliardHole::Empty.is_subset_of(&holes[1]) && !holes[1].is_subset_of(&disk(0.04)));
        let d = survival_diagnostics(big);
        assert!(d.ratio_drift.abs() < 0.01 && d.step_ratios.iter().all(|&q| q > 0.8 && q < 1.0), "{d:?}");
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{"holes": [{"kind": "arc", "scatterer": 0, "start": 0.0, "end": 0.1},
                                 {"kind": "disk", "center": [0.2, 0.5], "radius": 0.02}],
                       "samples": 100000, "n_max": 30}"#;
        let c: BilliardConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.table, TableSpec::default());
        let back: BilliardConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<BilliardConfig>(r#"{"holes": [], "samples": 1, "n_max": 2, "extra": 0}"#).is_err());
    }
}
