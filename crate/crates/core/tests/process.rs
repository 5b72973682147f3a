use std::sync::Arc;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use witten_core::eigen::{lowest_eigenpairs, DEFAULT_TOL};
use witten_core::lattice::{assemble_witten, build_box};
use witten_core::process::*;
use witten_core::{Error, PotentialSpec};

fn double_well(eps: f64, seed: u64, n: usize) -> SimConfig {
    SimConfig::between(PotentialSpec::double_well_1d(), eps, &[-1.0], &[1.0], seed, 1e6, n).unwrap()
}

fn lambda2_generator(eps: f64) -> f64 {
    let lat = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
    let op = assemble_witten(&PotentialSpec::double_well_1d(), lat).unwrap();
    lowest_eigenpairs(&op, 3, DEFAULT_TOL, None).unwrap().eigenvalues[1] / eps
}

#[test]
fn flat_landscape_holding_times() {
    let eps = 0.1;
    let mut rng = trajectory_rng(3, 0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| holding_time(&mut rng, 2.0 / eps)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    assert!((mean - eps / 2.0).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean}");
}

#[test]
fn flat_landscape_walk_needs_three_steps() {
    // the nearest target site 0.3 is three jumps from 0; the symmetric walk is
    // recurrent, so most (not all: heavy tail) runs hit before max_time
    let cfg = SimConfig {
        potential: PotentialSpec::poly_1d("flat", &[0.0]),
        eps: 0.1,
        start: vec![0],
        target_center: vec![0.5],
        target_radius: 0.25,
        seed: 11,
        max_time: 1e4,
        n_trajectories: 200,
    };
    let recs = simulate(&cfg).unwrap();
    assert!(recs.iter().filter(|r| r.hit).all(|r| r.steps >= 3 && r.time <= cfg.max_time));
    assert!(recs.iter().filter(|r| !r.hit).all(|r| r.time == cfg.max_time));
    assert!(recs.iter().filter(|r| r.hit).count() > 180);
}

#[test]
fn same_seed_same_records() {
    let cfg = double_well(0.3, 42, 64);
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    assert_eq!(a, b);
    let one = simulate_trajectory(&cfg, 17).unwrap();
    assert_eq!(one, a[17]);
    assert!(a.iter().enumerate().all(|(i, r)| r.traj_index == i as u64 && r.seed == 42));
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let cfg = double_well(0.3, 9, 128);
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| simulate(&cfg)).unwrap();
    let b = wide.install(|| simulate(&cfg)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_validation() {
    let p = PotentialSpec::double_well_1d();
    // radius must exceed 2 eps
    let mut cfg = double_well(0.3, 1, 10);
    cfg.target_radius = 0.5;
    assert!(matches!(cfg.validate(), Err(Error::InvalidInput(_))));
    // start inside the target
    assert!(SimConfig::between(p, 0.3, &[1.0], &[1.0], 1, 10.0, 1).is_err());
}

#[test]
fn rate_overflow_is_reported() {
    // a walker started far out on a steep quartic sees exponents beyond the clamp
    let cfg = SimConfig {
        potential: PotentialSpec::double_well_1d(),
        eps: 0.01,
        start: vec![-900],
        target_center: vec![1.0],
        target_radius: 0.1,
        seed: 0,
        max_time: 1.0,
        n_trajectories: 1,
    };
    assert!(matches!(simulate_trajectory(&cfg, 0), Err(Error::RateOverflow { .. })));
}

#[test]
fn hitting_statistics_on_exponential_samples() {
    // synthetic Exp(2) times
    let mut rng = trajectory_rng(5, 0);
    let recs: Vec<HittingRecord> = (0..20_000)
        .map(|i| HittingRecord { seed: 5, traj_index: i, hit: true, time: holding_time(&mut rng, 2.0), steps: 1 })
        .collect();
    let s = mean_hitting_time(&recs).unwrap();
    assert!((s.mean - 0.5).abs() < 3.0 * s.stderr);
    assert!((s.exponentiality - 1.0).abs() < 0.05, "{}", s.exponentiality);
    assert_eq!(s.n_censored, 0);

    let censored = HittingRecord { seed: 0, traj_index: 0, hit: false, time: 1.0, steps: 4 };
    assert!(matches!(mean_hitting_time(&[censored; 3]), Err(Error::AllCensored(3))));
    let hit = HittingRecord { hit: true, ..censored };
    assert!(matches!(mean_hitting_time(&[hit, censored]), Err(Error::InsufficientData(1))));
}

#[test]
fn censoring_is_monotone_in_max_time() {
    let mut cfg = double_well(0.3, 77, 200);
    let mut last = 0;
    for max_time in [5.0, 20.0, 80.0, 320.0] {
        cfg.max_time = max_time;
        let hits = simulate(&cfg).unwrap().iter().filter(|r| r.hit).count();
        assert!(hits >= last, "{hits} < {last} at {max_time}");
        last = hits;
    }
}

#[test]
fn occupation_matches_boltzmann_weights() {
    let eps = 0.5;
    let p = PotentialSpec::double_well_1d();
    let lat = build_box(1, eps, &[0.0], &[2.5]).unwrap();
    let n_samples = 20_000;
    let counts = occupation_counts(&p, &lat, lat.nearest_site(&[-1.0]), 2024, 25.0, n_samples).unwrap();
    let w: Vec<f64> = (0..lat.len()).map(|i| (-p.eval(&lat.site(i)) / eps).exp()).collect();
    let z: f64 = w.iter().sum();
    // pool sites with small expected counts into one bin
    let (mut chi2, mut bins) = (0.0, 0);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (c, wi) in counts.iter().zip(&w) {
        let e = n_samples as f64 * wi / z;
        if e < 5.0 {
            pooled_obs += *c as f64;
            pooled_exp += e;
        } else {
            chi2 += (*c as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    let pval = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
    assert!(pval > 0.01, "chi2 {chi2} on {bins} bins, p = {pval}");
}

#[test]
fn simulated_mean_matches_linear_solve() {
    // eps = 0.3: the walker never leaves [-2.5, 2.5] in practice
    let eps = 0.3;
    let cfg = double_well(eps, 2718, 4000);
    let lat = build_box(1, eps, &[0.0], &[2.5]).unwrap();
    let exact = exact_mean_hitting_time(&cfg, &lat).unwrap();
    let s = mean_hitting_time(&simulate(&cfg).unwrap()).unwrap();
    assert_eq!(s.n_censored, 0);
    assert!((s.mean - exact).abs() < 3.5 * s.stderr, "{} +- {} vs {exact}", s.mean, s.stderr);
}

// frozen: mean hitting time from x = -0.9 to |x - 1| <= r times lambda2(-L) at eps = 0.3
#[test]
fn exact_hitting_time_against_the_gap() {
    let eps = 0.3;
    let l2 = lambda2_generator(eps);
    let lat = build_box(1, eps, &[0.0], &[2.5]).unwrap();
    let product = |r: f64| {
        let mut cfg = double_well(eps, 0, 1);
        cfg.target_radius = r;
        exact_mean_hitting_time(&cfg, &lat).unwrap() * l2
    };
    assert!((product(0.9) - 1.727).abs() < 5e-3, "{}", product(0.9));
    // r = 0.2 is below 2 eps and rejected; 0.61 is just above it
    assert!((product(0.61) - 2.0).abs() < 0.05, "{}", product(0.61));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn records_depend_only_on_seed_and_index(seed in any::<u64>(), idx in 0u64..1000) {
        let cfg = double_well(0.35, seed, 1);
        let a = simulate_trajectory(&cfg, idx).unwrap();
        let b = simulate_trajectory(&cfg, idx).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.hit);
        prop_assert!(a.steps >= 1);
    }
}
