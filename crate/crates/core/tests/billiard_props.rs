use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use or_core::billiard::*;
use or_core::escape::read_survival_csv;
use or_core::parallel::with_workers;
use proptest::prelude::*;

fn table() -> &'static BilliardTable {
    static T: OnceLock<BilliardTable> = OnceLock::new();
    T.get_or_init(|| BilliardTable::default_table().unwrap())
}

fn arcs(fractions: &[f64]) -> Vec<BilliardHole> {
    fractions.iter().map(|&f| BilliardHole::arc_fraction(table(), 0, f)).collect()
}

fn disks(radii: &[f64]) -> Vec<BilliardHole> {
    radii.iter().map(|&r| BilliardHole::Disk { center: [0.2, 0.5], radius: r }).collect()
}

fn rhos(holes: &[BilliardHole], samples: usize, seed: u64) -> Vec<f64> {
    billiard_escape_sweep(table(), holes, samples, 30, seed, None)
        .unwrap()
        .into_iter()
        .map(|e| e.unwrap().rho)
        .collect()
}

#[test]
fn nested_arcs_and_disks_escape_monotonically() {
    for holes in [arcs(&[0.1, 0.05, 0.025, 0.0125]), disks(&[0.08, 0.04, 0.02, 0.01])] {
        let r = rhos(&holes, 200_000, 7);
        assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
        assert!(r.iter().all(|&x| x < 0.0));
        // halving the hole roughly halves the rate
        assert!(r[3].abs() < 0.7 * r[2].abs(), "{r:?}");
    }
}

#[test]
fn survivor_counts_are_pathwise_nested() {
    let r = billiard_escape_sweep(table(), &disks(&[0.04, 0.02]), 50_000, 20, 3, None).unwrap();
    let (a, b) = (r[0].as_ref().unwrap(), r[1].as_ref().unwrap());
    assert!(a.per_n_mass.iter().zip(&b.per_n_mass).all(|(x, y)| x.1 <= y.1));
}

#[test]
fn five_percent_arc_rate_is_small_and_negative() {
    let e = billiard_escape(table(), &arcs(&[0.05])[0], 500_000, 40, 11).unwrap();
    assert!(e.rho > -0.08 && e.rho < 0.0, "{}", e.rho);
    let d = survival_diagnostics(&e);
    assert!(d.ratio_drift.abs() < 2e-3 && d.fit_residual < 5e-3, "{d:?}");
}

#[test]
fn worker_count_does_not_change_results() {
    let holes = arcs(&[0.05]);
    let a = with_workers(1, || billiard_escape_sweep(table(), &holes, 40_000, 20, 5, None).unwrap());
    let b = with_workers(3, || billiard_escape_sweep(table(), &holes, 40_000, 20, 5, None).unwrap());
    assert_eq!(a[0].as_ref().unwrap(), b[0].as_ref().unwrap());
}

#[test]
fn survival_csv_matches_escape_schema() {
    let e = billiard_escape(table(), &disks(&[0.04])[0], 30_000, 20, 2).unwrap();
    let mut buf = Vec::new();
    e.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("n,mass,log_mass,cumulative_slope\n"));
    assert_eq!(read_survival_csv(buf.as_slice()).unwrap(), e.per_n_mass);
}

#[test]
fn too_large_a_hole_reports_insufficient_survivors() {
    let big = BilliardHole::Arc { scatterer: 0, start: 0.0, end: table().scatterers[0].length() };
    assert!(billiard_escape(table(), &big, 20_000, 40, 1).is_err());
}

#[test]
fn pushed_srb_sample_keeps_the_cos_density() {
    let c = srb_stationarity(table(), 300_000, 3, 8, 10, 9).unwrap();
    assert!(c.p_value > 0.01, "{c:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collisions_keep_unit_speed_and_admissible_angles(id in 0usize..2, u in 0.0f64..1.0, th in -1.5f64..1.5) {
        let t = table();
        let s = CollisionState { id, r: u * t.scatterers[id].length(), theta: th };
        let (n, f) = collision_map(t, &s).unwrap();
        prop_assert!((f.dir[0].hypot(f.dir[1]) - 1.0).abs() < 1e-14);
        prop_assert!(n.theta.abs() < FRAC_PI_2 && f.length > 0.0 && f.length <= t.horizon_bound);
        prop_assert!(n.r >= 0.0 && n.r < t.scatterers[n.id].length());
    }

    #[test]
    fn time_reversal_returns_the_start(id in 0usize..2, u in 0.0f64..1.0, th in -1.4f64..1.4) {
        let t = table();
        let s = CollisionState { id, r: u * t.scatterers[id].length(), theta: th };
        prop_assert!(reversal_error(t, &s, 10).unwrap() < 1e-9);
    }
}
