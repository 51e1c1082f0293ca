//! Dynamical systems, holes, and the survival dynamics shared by every other module.
//!
//! Systems are built from JSON of the form
//!
//! ```json
//! {"map": {"name": "doubling", "params": {}},
//!  "hole": {"kind": "interval_union", "intervals": [[0.75, 1.0]]}}
//! ```
//!
//! Map names: `doubling`, `triadic`, `madic {base}`, `logistic {r}`,
//! `cat {matrix}`, `baker`. Hole kinds: `empty`, `cylinder_union {base, level,
//! words}`, `interval_union {intervals}`, `ball {center, radius}`,
//! `rect {min, max}`. Unknown keys are rejected.

mod hole;
mod model;
mod open;
mod words;

pub use hole::{cylinder_index, digits, word_index, HoleKind, HoleSpec};
pub use model::{frac, Jacobian, MapModel, MapSpec, Model, PhaseSpace, Point, SINGULARITY_GUARD};
pub use open::{OpenSystem, Survival, Trajectory};
pub use words::{markov_word_count, markov_words, SymbolicHole};

use crate::error::Result;

impl OpenSystem {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("systems serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_json() {
        let sys = OpenSystem::from_json(
            r#"{"map": {"name": "doubling", "params": {}},
                "hole": {"kind": "interval_union", "intervals": [[0.75, 1.0]]}}"#,
        )
        .unwrap();
        assert_eq!(sys, OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0)));
        assert_eq!(OpenSystem::from_json(&sys.to_json()).unwrap(), sys);
        assert!(OpenSystem::from_json(
            r#"{"map": {"name": "doubling", "params": {}}, "hole": {"kind": "empty"}, "seed": 3}"#
        )
        .is_err());
    }
}
