//! The fixed model/hole zoo on which the escape-rate inequality is checked,
//! with the escape route and candidate family used for each entry.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::escape::{EscapeEstimate, EscapeMethod, EscapeSettings};
use crate::pressure::{default_candidates, variational_report, CandidateOptions, PressureOptions, VariationalReport};
use crate::systems::{HoleKind, HoleSpec, Model, OpenSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub name: String,
    pub system: OpenSystem,
    pub escape: EscapeSettings,
    pub candidates: CandidateOptions,
    /// `P_ν̂ = ρ` is asserted (Markov holes with an exact tower route).
    pub equality_route: bool,
}

fn grid(resolution: usize, n_max: usize) -> EscapeSettings {
    EscapeSettings {
        method: EscapeMethod::Grid,
        resolution,
        n_max,
        ..Default::default()
    }
}

fn monte_carlo(samples: usize, n_max: usize, seed: u64) -> EscapeSettings {
    EscapeSettings {
        method: EscapeMethod::MonteCarlo,
        samples,
        n_max,
        seed,
        ..Default::default()
    }
}

/// Markov holes on the m-adic and baker maps, a small ball on the cat map,
/// and an interval hole for the logistic map.
pub fn zoo(seed: u64) -> Vec<ZooEntry> {
    let cand = CandidateOptions {
        seed,
        ..Default::default()
    };
    let markov = |name: &str, system: OpenSystem, resolution: usize| ZooEntry {
        name: name.into(),
        system,
        escape: grid(resolution, 60),
        candidates: cand.clone(),
        equality_route: true,
    };
    let strip = HoleSpec::new(HoleKind::Rect {
        min: [0.75, 0.0],
        max: [1.0, 1.0],
    })
    .expect("valid strip");
    vec![
        markov("doubling_golden", OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0)), 64),
        markov(
            "doubling_010",
            OpenSystem::new(Model::doubling(), HoleSpec::cylinders(2, &[&[0, 1, 0]]).expect("valid cylinder")),
            64,
        ),
        markov(
            "triadic_middle",
            OpenSystem::new(Model::triadic(), HoleSpec::cylinders(3, &[&[1]]).expect("valid cylinder")),
            27,
        ),
        markov(
            "madic5_center",
            OpenSystem::new(Model::madic(5), HoleSpec::cylinders(5, &[&[2]]).expect("valid cylinder")),
            25,
        ),
        markov("baker_strip", OpenSystem::new(Model::Baker, strip), 32),
        ZooEntry {
            name: "cat_ball".into(),
            system: OpenSystem::new(Model::cat(), HoleSpec::ball([0.31, 0.77], 0.05).expect("valid ball")),
            escape: monte_carlo(1_000_000, 40, seed),
            candidates: cand.clone(),
            equality_route: false,
        },
        ZooEntry {
            name: "logistic_center".into(),
            system: OpenSystem::new(Model::logistic(4.0), HoleSpec::interval(0.45, 0.55)),
            escape: monte_carlo(1_000_000, 30, seed),
            candidates: cand,
            equality_route: false,
        },
    ]
}

/// Escape estimate, candidate family and variational report of one entry.
pub fn check_entry(entry: &ZooEntry, opts: &PressureOptions) -> Result<(EscapeEstimate, VariationalReport)> {
    let escape = entry.escape.estimate(&entry.system)?;
    let candidates = default_candidates(&entry.system, &entry.candidates)?;
    let opts = PressureOptions {
        equality_route: entry.equality_route,
        ..opts.clone()
    };
    let report = variational_report(&entry.system, &candidates, &escape, &opts)?;
    Ok((escape, report))
}
