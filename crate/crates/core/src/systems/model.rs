use serde::{Deserialize, Serialize};

/// Orbits are aborted when they come within this distance of the singularity set.
pub const SINGULARITY_GUARD: f64 = 1e-12;

/// A point of phase space. One-dimensional models ignore `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub const fn line(x: f64) -> Self {
        Self { x, y: 0.0 }
    }
}

/// Derivative of a map at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jacobian {
    Scalar(f64),
    /// Row-major 2x2 matrix.
    Matrix([[f64; 2]; 2]),
}

impl Jacobian {
    /// Absolute value of the determinant; the volume expansion factor.
    pub fn abs_det(&self) -> f64 {
        match *self {
            Jacobian::Scalar(d) => d.abs(),
            Jacobian::Matrix(m) => (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs(),
        }
    }
}

/// Geometry of the phase space, used for every distance computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSpace {
    /// `[0, 1)` with endpoints identified.
    Circle,
    /// `[0, 1]` with the ordinary metric.
    Interval,
    /// The unit 2-torus with the flat metric.
    Torus,
}

impl PhaseSpace {
    pub fn dimension(self) -> usize {
        match self {
            PhaseSpace::Circle | PhaseSpace::Interval => 1,
            PhaseSpace::Torus => 2,
        }
    }

    pub fn distance(self, a: Point, b: Point) -> f64 {
        match self {
            PhaseSpace::Circle => circle_gap(a.x, b.x),
            PhaseSpace::Interval => (a.x - b.x).abs(),
            PhaseSpace::Torus => circle_gap(a.x, b.x).hypot(circle_gap(a.y, b.y)),
        }
    }

    /// Reduces coordinates into the fundamental domain.
    pub fn wrap(self, p: Point) -> Point {
        match self {
            PhaseSpace::Circle => Point::line(frac(p.x)),
            PhaseSpace::Interval => Point::line(p.x.clamp(0.0, 1.0)),
            PhaseSpace::Torus => Point::new(frac(p.x), frac(p.y)),
        }
    }

    /// Displacement from `a` to `b`, taking the shortest representative on
    /// periodic coordinates.
    pub fn displacement(self, a: Point, b: Point) -> [f64; 2] {
        let d = |u: f64, v: f64, periodic: bool| {
            let t = v - u;
            if periodic {
                t - t.round()
            } else {
                t
            }
        };
        match self {
            PhaseSpace::Circle => [d(a.x, b.x, true), 0.0],
            PhaseSpace::Interval => [d(a.x, b.x, false), 0.0],
            PhaseSpace::Torus => [d(a.x, b.x, true), d(a.y, b.y, true)],
        }
    }
}

/// Fractional part in `[0, 1)`, robust to the `-0.0` and `1.0 - ulp` round-off cases.
pub fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

pub(crate) fn circle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 1.0;
    d.min(1.0 - d)
}

/// JSON-facing description of a model from the zoo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Doubling {},
    Triadic {},
    Madic { base: u32 },
    Logistic { r: f64 },
    Cat { matrix: [[i64; 2]; 2] },
    Baker {},
}

/// The fixed model zoo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapSpec", into = "MapSpec")]
pub enum Model {
    /// `x -> m x mod 1` on the circle.
    Madic { base: u32 },
    /// `x -> r x (1 - x)` on `[0, 1]`; nonlinear and not Markov, diagnostics only.
    Logistic { r: f64 },
    /// Linear toral automorphism with integer entries and determinant ±1.
    Cat { matrix: [[i64; 2]; 2] },
    /// Baker map on the torus; discontinuous along `x = 0` and `x = 1/2`.
    Baker,
}

impl TryFrom<MapSpec> for Model {
    type Error = String;

    fn try_from(spec: MapSpec) -> Result<Self, Self::Error> {
        match spec {
            MapSpec::Doubling {} => Ok(Model::doubling()),
            MapSpec::Triadic {} => Ok(Model::madic(3)),
            MapSpec::Madic { base } => {
                if base < 2 {
                    Err(format!("m-adic base must be at least 2, got {base}"))
                } else {
                    Ok(Model::madic(base))
                }
            }
            MapSpec::Logistic { r } => {
                if !(0.0..=4.0).contains(&r) {
                    Err(format!("logistic parameter must lie in [0, 4], got {r}"))
                } else {
                    Ok(Model::Logistic { r })
                }
            }
            MapSpec::Cat { matrix } => {
                let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
                if det.abs() != 1 {
                    Err(format!("toral automorphism needs determinant ±1, got {det}"))
                } else {
                    Ok(Model::Cat { matrix })
                }
            }
            MapSpec::Baker {} => Ok(Model::Baker),
        }
    }
}

impl From<Model> for MapSpec {
    fn from(model: Model) -> Self {
        match model {
            Model::Madic { base: 2 } => MapSpec::Doubling {},
            Model::Madic { base: 3 } => MapSpec::Triadic {},
            Model::Madic { base } => MapSpec::Madic { base },
            Model::Logistic { r } => MapSpec::Logistic { r },
            Model::Cat { matrix } => MapSpec::Cat { matrix },
            Model::Baker => MapSpec::Baker {},
        }
    }
}

/// An evaluable dynamical system.
pub trait MapModel: Send + Sync {
    fn space(&self) -> PhaseSpace;

    fn dimension(&self) -> usize {
        self.space().dimension()
    }

    /// Image of `p`; `None` exactly on the singularity set.
    fn evaluate(&self, p: Point) -> Option<Point>;

    fn derivative(&self, p: Point) -> Jacobian;

    /// Distance to the singularity set, `+inf` when it is empty.
    fn singularity_distance(&self, p: Point) -> f64;

    /// Density of the initial distribution with respect to volume.
    fn reference_density(&self, _p: Point) -> f64 {
        1.0
    }

    fn label(&self) -> String;
}

impl Model {
    pub fn doubling() -> Self {
        Model::Madic { base: 2 }
    }

    pub fn triadic() -> Self {
        Model::Madic { base: 3 }
    }

    pub fn madic(base: u32) -> Self {
        Model::Madic { base }
    }

    pub fn cat() -> Self {
        Model::Cat {
            matrix: [[2, 1], [1, 1]],
        }
    }

    pub fn logistic(r: f64) -> Self {
        Model::Logistic { r }
    }

    /// Number of full linear branches along the expanding coordinate, for the
    /// models that are Markov with respect to their m-adic partition.
    pub fn markov_base(&self) -> Option<u32> {
        match self {
            Model::Madic { base } => Some(*base),
            Model::Baker => Some(2),
            _ => None,
        }
    }

    pub fn is_piecewise_linear(&self) -> bool {
        !matches!(self, Model::Logistic { .. })
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        self.space().distance(a, b)
    }
}

impl MapModel for Model {
    fn space(&self) -> PhaseSpace {
        match self {
            Model::Madic { .. } => PhaseSpace::Circle,
            Model::Logistic { .. } => PhaseSpace::Interval,
            Model::Cat { .. } | Model::Baker => PhaseSpace::Torus,
        }
    }

    fn evaluate(&self, p: Point) -> Option<Point> {
        match *self {
            Model::Madic { base } => Some(Point::line(frac(base as f64 * p.x))),
            Model::Logistic { r } => Some(Point::line((r * p.x * (1.0 - p.x)).clamp(0.0, 1.0))),
            Model::Cat { matrix: m } => {
                let x = m[0][0] as f64 * p.x + m[0][1] as f64 * p.y;
                let y = m[1][0] as f64 * p.x + m[1][1] as f64 * p.y;
                Some(Point::new(frac(x), frac(y)))
            }
            Model::Baker => {
                if p.x == 0.0 || p.x == 0.5 {
                    return None;
                }
                if p.x < 0.5 {
                    Some(Point::new(2.0 * p.x, 0.5 * p.y))
                } else {
                    Some(Point::new(frac(2.0 * p.x - 1.0), 0.5 * (p.y + 1.0)))
                }
            }
        }
    }

    fn derivative(&self, p: Point) -> Jacobian {
        match *self {
            Model::Madic { base } => Jacobian::Scalar(base as f64),
            Model::Logistic { r } => Jacobian::Scalar(r * (1.0 - 2.0 * p.x)),
            Model::Cat { matrix: m } => Jacobian::Matrix([
                [m[0][0] as f64, m[0][1] as f64],
                [m[1][0] as f64, m[1][1] as f64],
            ]),
            Model::Baker => Jacobian::Matrix([[2.0, 0.0], [0.0, 0.5]]),
        }
    }

    fn singularity_distance(&self, p: Point) -> f64 {
        match self {
            Model::Baker => circle_gap(p.x, 0.0).min((p.x - 0.5).abs()),
            _ => f64::INFINITY,
        }
    }

    fn label(&self) -> String {
        match self {
            Model::Madic { base: 2 } => "doubling".into(),
            Model::Madic { base: 3 } => "triadic".into(),
            Model::Madic { base } => format!("madic{base}"),
            Model::Logistic { r } => format!("logistic(r={r})"),
            Model::Cat { matrix: m } => {
                format!("cat[[{},{}],[{},{}]]", m[0][0], m[0][1], m[1][0], m[1][1])
            }
            Model::Baker => "baker".into(),
        }
    }
}
