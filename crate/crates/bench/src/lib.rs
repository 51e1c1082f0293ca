//! Benchmark fixtures shared by the criterion targets.

use or_core::systems::{HoleSpec, Model, OpenSystem};

/// Doubling map with the hole `[3/4, 1)`.
pub fn golden() -> OpenSystem {
    OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0))
}

/// Cat map with a small ball hole.
pub fn cat_ball(radius: f64) -> OpenSystem {
    OpenSystem::new(Model::cat(), HoleSpec::ball([0.31, 0.77], radius).expect("valid ball"))
}
