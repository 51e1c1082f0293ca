use or_core::escape::{escape_rate_grid, escape_rate_mc, escape_rate_words, Window};
use or_core::grid::{Grid, GridMeasure};
use or_core::parallel::with_workers;
use or_core::sampling::Lebesgue;
use or_core::systems::{HoleSpec, Model, OpenSystem};
use proptest::prelude::*;

fn golden() -> OpenSystem {
    OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0))
}

/// log(φ/2) from the Perron root of [[1,1],[1,0]], cross-checked against
/// Fibonacci word counts F_{n+2} / 2ⁿ.
fn golden_oracle() -> f64 {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let rho = (phi / 2.0).ln();
    let (mut a, mut b) = (1u128, 2u128);
    for _ in 0..60 {
        (a, b) = (b, a + b);
    }
    // a = F_62, b = F_63: counts of admitted words of lengths 60 and 61
    let ratio = (b as f64 / a as f64 / 2.0).ln();
    assert!((ratio - rho).abs() < 1e-12);
    rho
}

#[test]
fn three_routes_agree_on_the_golden_mean_hole() {
    let rho = golden_oracle();
    let g = escape_rate_grid(&golden(), &GridMeasure::lebesgue(Grid::line(64)), 100, None).unwrap();
    let sys_w = OpenSystem::new(Model::doubling(), HoleSpec::cylinders(2, &[&[1, 1]]).unwrap());
    let w = escape_rate_words(&sys_w, 2, 100, None).unwrap();
    let mc = escape_rate_mc(&golden(), &Lebesgue { dim: 1 }, 30, 1_000_000, 7, Some(Window::new(5, 25))).unwrap();
    assert!((g.rho - rho).abs() < 1e-6);
    assert!((w.rho - rho).abs() < 1e-6);
    assert!((mc.rho - rho).abs() < 0.01, "{}", mc.rho);
    assert!((mc.rho - g.rho).abs() < 3.0 * mc.stderr.max(1e-12), "{} ± {}", mc.rho, mc.stderr);
}

#[test]
fn nested_cylinder_holes_are_monotone() {
    // H_k = [1 − 2^{-k}, 1), each a superset of the next
    let m = GridMeasure::lebesgue(Grid::line(128));
    let rhos: Vec<f64> = (1..=6)
        .map(|k| {
            let hole = HoleSpec::interval(1.0 - 0.5f64.powi(k), 1.0);
            escape_rate_grid(&OpenSystem::new(Model::doubling(), hole), &m, 120, None).unwrap().rho
        })
        .collect();
    assert!(rhos.windows(2).all(|p| p[0] < p[1]), "{rhos:?}");
    assert!((rhos[0] + 2f64.ln()).abs() < 1e-12);
    assert!((rhos[1] - golden_oracle()).abs() < 1e-6);
}

#[test]
fn monte_carlo_is_worker_invariant() {
    let run = |workers| {
        with_workers(workers, || {
            escape_rate_mc(&golden(), &Lebesgue { dim: 1 }, 24, 200_000, 11, None).unwrap()
        })
    };
    let a = run(1);
    for workers in [2, 3, 8] {
        let b = run(workers);
        assert_eq!(a.per_n_mass.len(), b.per_n_mass.len());
        for (x, y) in a.per_n_mass.iter().zip(&b.per_n_mass) {
            assert_eq!(x.1.to_bits(), y.1.to_bits());
        }
        assert_eq!(a.rho.to_bits(), b.rho.to_bits());
    }
}

#[test]
fn independent_seeds_agree_within_three_sigma() {
    let e: Vec<_> = [1u64, 2, 3]
        .iter()
        .map(|&s| escape_rate_mc(&golden(), &Lebesgue { dim: 1 }, 24, 400_000, s, None).unwrap())
        .collect();
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            let sigma = e[i].stderr.hypot(e[j].stderr);
            assert!((e[i].rho - e[j].rho).abs() < 3.0 * sigma, "{} {} {sigma}", e[i].rho, e[j].rho);
        }
    }
}

#[test]
fn cat_map_small_ball_escapes_slowly() {
    let sys = OpenSystem::new(Model::cat(), HoleSpec::ball([0.31, 0.77], 0.02).unwrap());
    let mc = escape_rate_mc(&sys, &Lebesgue { dim: 2 }, 40, 10_000_000, 5, None).unwrap();
    assert!(mc.rho < 0.0 && mc.rho > -0.05, "{mc:?}");
    // coarse grid cross-check: the ball covers ~π·0.02² of the torus
    let g = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::square(256)), 40, None).unwrap();
    assert!(g.rho < 0.0 && g.rho > -0.05, "{}", g.rho);
    assert!((g.rho - mc.rho).abs() < 0.2 * mc.rho.abs(), "{} {}", g.rho, mc.rho);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn survival_curves_are_monotone_with_ordered_running_fits(a in 0u32..60, len in 1u32..8, base in 2u32..4) {
        // dyadic or triadic interval hole aligned with the grid
        let cells = base.pow(4) as usize;
        let lo = a.min(cells as u32 - len) as f64 / cells as f64;
        let hi = lo + len as f64 / cells as f64;
        let sys = OpenSystem::new(Model::madic(base), HoleSpec::interval(lo, hi));
        let e = escape_rate_grid(&sys, &GridMeasure::lebesgue(Grid::line(cells)), 40, None).unwrap();
        prop_assert!(e.per_n_mass.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12)));
        prop_assert!(e.rho_lower <= e.rho + 1e-12 && e.rho <= e.rho_upper + 1e-12);
        prop_assert!(e.rho <= 1e-12);
    }

    #[test]
    fn enlarging_a_hole_never_increases_rho(a in 0u32..32, len in 1u32..8, grow in 1u32..8) {
        let cells = 64usize;
        let lo = a.min(cells as u32 - len - grow);
        let rho = |l: u32| {
            let hole = HoleSpec::interval(lo as f64 / 64.0, (lo + l) as f64 / 64.0);
            escape_rate_grid(&OpenSystem::new(Model::doubling(), hole), &GridMeasure::lebesgue(Grid::line(cells)), 60, None)
                .unwrap()
                .rho
        };
        prop_assert!(rho(len + grow) <= rho(len) + 1e-9);
    }
}
