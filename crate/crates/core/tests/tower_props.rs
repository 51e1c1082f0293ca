use or_core::systems::{HoleSpec, Model, OpenSystem};
use or_core::tower::*;
use or_core::ulam::{build_ulam, leading_eigenpair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tower(rs: &[u32], js: &[f64], holed_last: bool) -> TowerSpec {
    let n = rs.len();
    let branches = rs
        .iter()
        .zip(js)
        .enumerate()
        .map(|(i, (&r, &j))| TowerBranch::new(r, j, 1.0 / n as f64, holed_last && i == n - 1))
        .collect();
    TowerSpec::new(branches, 1.0, 0.9).unwrap()
}

prop_compose! {
    fn tower_and_eps()(k in 2usize..5, seed in 0u64..1_000_000, eps in 0.0f64..0.2)
        -> (TowerSpec, f64, u64)
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs: Vec<u32> = (0..k).map(|_| rng.random_range(1..6)).collect();
        let js: Vec<f64> = (0..k).map(|_| rng.random_range(2.0..8.0)).collect();
        (random_tower(&rs, &js, true), eps, seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gibbs_bound_holds_under_distortion((mut t, eps, seed) in tower_and_eps()) {
        let k = t.branches.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        t.distortion = Some((0..k).map(|_| (0..k).map(|_| rng.random_range(-eps..=eps)).collect()).collect());
        // eigenvector ratios add at most 2ε on each side of Sₙφ
        t.c1 = 4.0 * eps;
        let r = tower_eigenvalue(&t, 1e-15).unwrap();
        let m = gibbs_measure(&t, r, 5).unwrap();
        let g = gibbs_check(&t, &m);
        prop_assert!(g.holds, "{g:?}");
        prop_assert!(m.kolmogorov_defect() < 1e-12);
    }

    #[test]
    fn tower_gibbs_measure_maximizes_pressure(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..5);
        let rs: Vec<u32> = (0..k).map(|_| rng.random_range(1..6)).collect();
        let js: Vec<f64> = (0..k).map(|_| rng.random_range(2.0..8.0)).collect();
        let t = random_tower(&rs, &js, true);
        let r = tower_eigenvalue(&t, 1e-15).unwrap();
        let gibbs: Vec<f64> = t.unholed().iter().map(|&i| t.weight(i, r)).collect();
        prop_assert!((bernoulli_pressure(&t, &gibbs) - r.ln()).abs() < 1e-12);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..gibbs.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|x| x / s).collect();
            prop_assert!(bernoulli_pressure(&t, &q) <= r.ln() + 1e-12);
        }
    }

    #[test]
    fn shifted_potential_shifts_gurevich_pressure(c in -1.0f64..1.0) {
        let t = TowerSpec::golden_mean();
        let r = tower_eigenvalue(&t, 1e-15).unwrap();
        for term in gurevich_pressure(&t, r, 20, 0, c).unwrap() {
            prop_assert!((term.trace - c).abs() < 1e-10);
        }
    }
}

#[test]
fn level_masses_decay_on_long_towers() {
    for rs in [[1u32, 3, 5, 7], [2, 5, 6, 9], [1, 2, 5, 5]] {
        let js = [3.0, 6.0, 20.0, 60.0];
        let branches: Vec<TowerBranch> = rs
            .iter()
            .zip(js)
            .enumerate()
            .map(|(i, (&r, j))| TowerBranch::new(r, j, 0.5f64.powi(i as i32 + 1), i == 3))
            .collect();
        let mut t = TowerSpec::new(branches, 1.0, 0.9).unwrap();
        t.c0 = 2.0;
        assert!(t.max_return_time() >= 5);
        assert!(tail_check(&t).pass);
        let r = tower_eigenvalue(&t, 1e-15).unwrap();
        let m = gibbs_measure(&t, r, 4).unwrap();
        let d = level_decay(&t, &m);
        assert!(d.witness.is_none(), "{d:?} {:?}", m.level_masses);
    }
}

#[test]
fn condition_star_tracks_the_quadratic_log_jacobian_threshold() {
    // m{R = n} = 2^-n with J = 2^{n²}, n ≤ 30 so J stays finite in f64.
    // Along these branches (*) holds iff C̄ ≥ max_n n² log 2 · θ̄ⁿ.
    let top = 30u32;
    let branches: Vec<TowerBranch> = (1..=top)
        .map(|n| TowerBranch::new(n, 2f64.powi((n * n) as i32), 0.5f64.powi(n as i32), false))
        .collect();
    let t = TowerSpec::new(branches, 1.0, 0.5).unwrap();
    let r = tower_eigenvalue(&t, 1e-15).unwrap();
    let threshold = |theta: f64| {
        (1..=top)
            .map(|n| (n * n) as f64 * 2f64.ln() * theta.powi(n as i32))
            .fold(0.0, f64::max)
    };
    let mut failures = 0;
    for theta_bar in [0.6, 0.8, 0.9, 0.95, 0.999] {
        if theta_bar <= t.theta0 / r {
            continue;
        }
        let c_star = threshold(theta_bar);
        for c_bar in [1.0, 10.0, 100.0, 1e3, 1e6] {
            let expected = c_bar >= c_star * (1.0 + 1e-12);
            if (c_bar - c_star).abs() < 1e-9 * c_star {
                continue;
            }
            let got = star_check(&t, r, c_bar, theta_bar);
            assert_eq!(got.pass, expected, "theta {theta_bar} C {c_bar} threshold {c_star}");
            failures += usize::from(!got.pass);
        }
        assert!(!star_check(&t, r, 0.5 * c_star, theta_bar).pass);
        assert!(star_check(&t, r, 2.0 * c_star, theta_bar).pass);
    }
    assert!(failures > 0);
    let golden = TowerSpec::golden_mean();
    let rg = tower_eigenvalue(&golden, 1e-15).unwrap();
    assert!(star_check(&golden, rg, 2f64.ln() * 2.0, 0.7).pass);
}

#[test]
fn tower_and_ulam_eigenvalues_agree() {
    let t = tower_eigenvalue(&TowerSpec::golden_mean(), 1e-15).unwrap();
    let sys = OpenSystem::new(Model::doubling(), HoleSpec::interval(0.75, 1.0));
    let op = build_ulam(&sys, 64).unwrap();
    let spec = leading_eigenpair(&op, 1e-14, 100_000).unwrap();
    assert!((t - spec.eigenvalue).abs() < 1e-9, "{t} {}", spec.eigenvalue);
}
