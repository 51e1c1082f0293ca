//! Numerical toolkit for open dynamical systems ("systems with holes").
//!
//! The crate estimates escape rates of maps with holes, approximates their
//! transfer operators to obtain the conditionally invariant density and the
//! invariant measure on the survivor set, computes entropy, Lyapunov
//! exponents and pressure of invariant measures, and checks the identity
//! `escape rate = -(entropy - positive exponents)` on exactly solvable
//! examples: m-adic maps with Markov holes, toral automorphisms, explicit
//! Young towers, and a periodic Lorentz gas with holes.

pub mod billiard;
pub mod dynballs;
pub mod error;
pub mod escape;
pub mod grid;
pub mod linalg;
pub mod markov;
pub mod parallel;
pub mod pressure;
pub mod sampling;
pub mod systems;
pub mod tower;
pub mod ulam;
pub mod zoo;

pub use error::{Error, Result};
pub use billiard::{BilliardConfig, BilliardHole, BilliardTable, CollisionState, TableSpec};
pub use escape::{EscapeEstimate, EscapeMethod, EscapeSettings, Window};
pub use grid::{Grid, GridMeasure};
pub use pressure::{Candidate, MeasureRep, PressureOptions, PressureReport, VariationalReport, Verdict};
pub use systems::{HoleKind, HoleSpec, MapModel, Model, OpenSystem, Point};
pub use tower::{TowerBranch, TowerMeasure, TowerSpec};
pub use ulam::{SpectralData, UlamOperator};
pub use zoo::{zoo, ZooEntry};
