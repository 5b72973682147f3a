use std::sync::Arc;

use witten_core::eigen::{lowest_eigenpairs, SolverPath, DEFAULT_TOL};
use witten_core::lattice::{assemble_neg_generator, assemble_witten, build_box};
use witten_core::{PotentialSpec, Warning};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// 50-digit reference values for the double well on [-2.5, 2.5]
const DOUBLE_WELL: [(f64, f64, f64); 5] = [
    (0.2, 0.0024069412647705886, 0.67009944980220859),
    (0.15, 0.00034290641208656819, 0.52623686453148618),
    (0.1, 8.2028884948221047e-6, 0.37560930425276077),
    (0.07, 7.9123951596662032e-8, 0.27103615830464557),
    (0.05, 1.8635209719069053e-10, 0.19615346247932131),
];

#[test]
fn double_well_matches_reference() {
    let p = PotentialSpec::double_well_1d();
    for &(eps, l2, l3) in &DOUBLE_WELL {
        let lat = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
        let op = assemble_witten(&p, lat).unwrap();
        let s = lowest_eigenpairs(&op, 3, DEFAULT_TOL, None).unwrap();
        eprintln!("eps {eps}: {:?} iters {}", s.eigenvalues, s.iterations);
        assert!(s.eigenvalues[0].abs() < 1e-12 * l3);
        assert!(rel(s.eigenvalues[1], l2) < 1e-8, "{} vs {l2}", s.eigenvalues[1]);
        assert!(rel(s.eigenvalues[2], l3) < 1e-8);
    }
}

#[test]
fn generator_shares_the_spectrum() {
    let p = PotentialSpec::double_well_1d();
    let (eps, l2, l3) = DOUBLE_WELL[2];
    let lat = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
    let op = assemble_neg_generator(&p, lat).unwrap();
    let s = lowest_eigenpairs(&op, 3, DEFAULT_TOL, None).unwrap();
    assert!(rel(s.eigenvalues[1], l2) < 1e-8, "{:?}", s.eigenvalues);
    assert!(rel(s.eigenvalues[2], l3) < 1e-8);
}

#[test]
fn triple_well_has_three_small_eigenvalues() {
    let p = PotentialSpec::triple_well_1d();
    let reference = [
        (0.1, [0.0016891940382658929, 0.0034463670576335838, 0.30159013110840737, 0.43747901325226016]),
        (0.08, [0.00045689482268470688, 0.00092052775464010483, 0.24911425761879453, 0.34705748199805228]),
    ];
    for (eps, vals) in reference {
        let lat = Arc::new(build_box(1, eps, &[0.0], &[2.0]).unwrap());
        let op = assemble_witten(&p, lat).unwrap();
        let s = lowest_eigenpairs(&op, 5, DEFAULT_TOL, None).unwrap();
        for (got, want) in s.eigenvalues[1..].iter().zip(vals) {
            assert!(rel(*got, want) < 1e-8, "{got} vs {want}");
        }
    }
}

fn dense_eigs(op: &witten_core::SparseOperator) -> Vec<f64> {
    let a = op.to_dense();
    let n = a.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn path_laplacian_closed_form() {
    let flat = PotentialSpec::poly_1d("flat", &[0.0]);
    let lat = Arc::new(build_box(1, 1.0, &[0.0], &[5.0]).unwrap());
    assert_eq!(lat.len(), 11);
    let op = assemble_witten(&flat, lat.clone()).unwrap();
    let s = lowest_eigenpairs(&op, 3, DEFAULT_TOL, None).unwrap();
    // boxes always have an odd site count, so n = 11
    for (k, l) in s.eigenvalues.iter().enumerate() {
        let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 12.0).cos();
        assert!(rel(*l, want) < 1e-12, "{l} vs {want}");
    }
    // matvec on (0, 1, 0)
    let three = Arc::new(build_box(1, 1.0, &[0.0], &[1.0]).unwrap());
    let op3 = assemble_witten(&flat, three).unwrap();
    assert_eq!(op3.apply(&[0.0, 1.0, 0.0]), vec![-1.0, 2.0, -1.0]);
    // k = n on five sites
    let five = Arc::new(build_box(1, 1.0, &[0.0], &[2.0]).unwrap());
    let op5 = assemble_witten(&flat, five).unwrap();
    let s5 = lowest_eigenpairs(&op5, 5, DEFAULT_TOL, None).unwrap();
    for (a, b) in s5.eigenvalues.iter().zip(dense_eigs(&op5)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn dense_oracle_on_moderate_operators() {
    // operators whose low spectrum a dense solver resolves to 1e-9 relative
    let cases: Vec<(PotentialSpec, usize, f64, f64)> = vec![
        (PotentialSpec::double_well_1d(), 1, 0.2, 1.4),
        (PotentialSpec::double_well_1d(), 1, 0.1, 1.3),
        (PotentialSpec::triple_well_1d(), 1, 0.1, 1.3),
        (PotentialSpec::single_well_1d(), 1, 0.1, 1.5),
        (PotentialSpec::double_well_aniso_2d(2.0), 2, 0.2, 1.4),
    ];
    for (p, d, eps, half) in cases {
        let lat = Arc::new(build_box(d, eps, &vec![0.0; d], &vec![half; d]).unwrap());
        assert!(lat.len() <= 500);
        let dense = dense_eigs(&assemble_witten(&p, lat.clone()).unwrap());
        for op in [assemble_witten(&p, lat.clone()).unwrap(), assemble_neg_generator(&p, lat.clone()).unwrap()] {
            let s = lowest_eigenpairs(&op, 6, DEFAULT_TOL, None).unwrap();
            for (a, b) in s.eigenvalues.iter().zip(&dense) {
                assert!(rel(*a, *b) < 1e-9, "{} eps {eps}: {a} vs {b}", p.name);
            }
        }
    }
}

#[test]
fn result_invariants_and_deflation() {
    let p = PotentialSpec::double_well_1d();
    let lat = Arc::new(build_box(1, 0.1, &[0.0], &[2.5]).unwrap());
    let op = assemble_witten(&p, lat.clone()).unwrap();
    let s = lowest_eigenpairs(&op, 4, DEFAULT_TOL, None).unwrap();
    assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    for (r, l) in s.residuals.iter().zip(&s.eigenvalues) {
        assert!(*r <= 1e-9 * l.abs().max(1.0), "{r}");
    }
    for i in 0..4 {
        for j in 0..4 {
            let ip = s.eigenvectors[i].inner(&s.eigenvectors[j]).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-8, "{i} {j} {ip}");
        }
    }
    // deflating the ground state shifts the list by one
    let d = lowest_eigenpairs(&op, 2, DEFAULT_TOL, Some(&s.eigenvectors[..1])).unwrap();
    assert!(rel(d.eigenvalues[0], s.eigenvalues[1]) < 1e-8);
    assert!(rel(d.eigenvalues[1], s.eigenvalues[2]) < 1e-8);
    // bad requests
    assert!(lowest_eigenpairs(&op, 0, DEFAULT_TOL, None).is_err());
    assert!(lowest_eigenpairs(&op, 3, 0.0, None).is_err());
    let other = Arc::new(build_box(1, 0.1, &[0.0], &[2.0]).unwrap());
    let foreign = witten_core::LatticeVector::zeros(other);
    assert!(matches!(
        lowest_eigenpairs(&op, 2, DEFAULT_TOL, Some(&[foreign])),
        Err(witten_core::Error::ShapeMismatch)
    ));
}

#[test]
fn separable_2d_spectrum() {
    // f = (x^2 - 1)^2 + 2 y^2 splits: H = H_x (x) I + I (x) H_y on the square box
    let eps = 0.1;
    let lat2 = Arc::new(build_box(2, eps, &[0.0, 0.0], &[2.5, 2.5]).unwrap());
    let lat1 = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
    let s2 = lowest_eigenpairs(&assemble_witten(&PotentialSpec::double_well_aniso_2d(2.0), lat2).unwrap(), 4, DEFAULT_TOL, None)
        .unwrap();
    let sx = lowest_eigenpairs(&assemble_witten(&PotentialSpec::double_well_1d(), lat1.clone()).unwrap(), 4, DEFAULT_TOL, None)
        .unwrap();
    let sy = lowest_eigenpairs(&assemble_witten(&PotentialSpec::poly_1d("y", &[0.0, 0.0, 2.0]), lat1).unwrap(), 3, DEFAULT_TOL, None)
        .unwrap();
    let mut sums: Vec<f64> =
        sx.eigenvalues.iter().flat_map(|a| sy.eigenvalues.iter().map(move |b| a + b)).collect();
    sums.sort_by(f64::total_cmp);
    for (a, b) in s2.eigenvalues[1..].iter().zip(&sums[1..]) {
        assert!(rel(*a, *b) < 1e-8, "{a} vs {b}");
    }
    assert!(s2.eigenvalues[0].abs() < 1e-10);
}

#[test]
fn counting_small_eigenvalues() {
    use witten_core::eigen::count_small_eigenvalues;
    use witten_core::landscape::{builtin_region, find_critical_points, harmonic_threshold};
    let cases = [
        (PotentialSpec::single_well_1d(), "single_well_1d", 0.1, 1),
        (PotentialSpec::double_well_1d(), "double_well_1d", 0.1, 2),
        (PotentialSpec::triple_well_1d(), "triple_well_1d", 0.08, 3),
    ];
    for (p, name, eps, want) in cases {
        let region = builtin_region(name).unwrap();
        let cps = find_critical_points(&p, &region, 0.05, 1e-10).unwrap();
        let threshold = harmonic_threshold(&cps.minima(), eps);
        let lat = Arc::new(build_box(1, eps, &region.center, &region.half_widths).unwrap());
        let s = lowest_eigenpairs(&assemble_witten(&p, lat).unwrap(), want + 2, DEFAULT_TOL, None).unwrap();
        let g = count_small_eigenvalues(&s, threshold, None).unwrap();
        assert_eq!(g.n_small, want, "{name}");
        assert!(g.separated);
    }
    // threshold sitting on an eigenvalue
    let lat = Arc::new(build_box(1, 0.1, &[0.0], &[2.5]).unwrap());
    let s = lowest_eigenpairs(&assemble_witten(&PotentialSpec::double_well_1d(), lat).unwrap(), 3, DEFAULT_TOL, None).unwrap();
    assert!(matches!(
        count_small_eigenvalues(&s, s.eigenvalues[2] * 1.05, None),
        Err(witten_core::Error::NotSeparatedSpectrum { .. })
    ));
    assert!(count_small_eigenvalues(&s, 10.0, None).is_err());
}

#[test]
fn harmonic_oscillator_reference() {
    use nalgebra::DMatrix;
    use witten_core::eigen::harmonic_reference;
    let one = DMatrix::from_element(1, 1, 1.0);
    for eps in [0.1, 0.05, 0.02] {
        let h = harmonic_reference(&one, eps, 3.0).unwrap();
        assert_eq!((h.lambda0_pred, h.lambda1_pred), (1.0, 3.0));
        assert!((h.lambda0_num - 1.0).abs() <= eps.powf(0.2));
        assert!((h.lambda1_num - 3.0).abs() <= eps.powf(0.2));
    }
    let two = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
    let h = harmonic_reference(&two, 0.1, 3.0).unwrap();
    assert!(rel(h.lambda0_pred, 3.0) < 1e-14 && rel(h.lambda1_pred, 5.0) < 1e-14);
    assert!((h.lambda0_num - 3.0).abs() <= 3.0 * 0.1f64.powf(0.2));
    assert!(harmonic_reference(&(-one), 0.1, 3.0).is_err());
}

#[test]
fn rate_fit() {
    use witten_core::eigen::exponential_rate_fit;
    let synth: Vec<(f64, f64)> = [0.2f64, 0.1, 0.05].iter().map(|&e| (e, e * 2.0 * (-0.7 / e).exp())).collect();
    let f = exponential_rate_fit(&synth).unwrap();
    assert!((f.e_fit - 0.7).abs() < 1e-10 && (f.a_fit - 2.0).abs() < 1e-10);
    let sweep: Vec<(f64, f64)> = DOUBLE_WELL.iter().map(|&(e, l2, _)| (e, l2)).collect();
    let f = exponential_rate_fit(&sweep).unwrap();
    assert!((f.e_fit - 1.0).abs() < 0.05, "{}", f.e_fit);
    assert!((f.a_fit / 1.800632 - 1.0).abs() < 0.25, "{}", f.a_fit);
    assert!(matches!(
        exponential_rate_fit(&[(0.1, 1e-5), (0.1, 1e-5), (0.1, 1e-5)]),
        Err(witten_core::Error::DegenerateFit(_))
    ));
    assert!(exponential_rate_fit(&synth[..2]).is_err());
}

#[test]
fn gap_stays_exponentially_small() {
    // ln l2 + E / eps - ln eps stays bounded along the sweep
    let v: Vec<f64> = DOUBLE_WELL.iter().map(|&(e, l2, _)| l2.ln() + 1.0 / e - e.ln()).collect();
    let spread = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.5, "{v:?}");
}

#[test]
fn zero_mode_is_simple_and_positive() {
    use witten_core::lattice::{ground_state_transform, Direction};
    for (p, d, half) in [
        (PotentialSpec::double_well_1d(), 1, 2.5),
        (PotentialSpec::triple_well_1d(), 1, 2.0),
        (PotentialSpec::single_well_1d(), 1, 4.0),
        (PotentialSpec::double_well_aniso_2d(2.0), 2, 2.5),
    ] {
        for eps in [0.2, 0.1, 0.05] {
            let lat = Arc::new(build_box(d, eps, &vec![0.0; d], &vec![half; d]).unwrap());
            let op = assemble_witten(&p, lat).unwrap();
            let s = lowest_eigenpairs(&op, 2, DEFAULT_TOL, None).unwrap();
            assert!(s.eigenvalues[0].abs() <= 1e-10, "{} {eps}: {}", p.name, s.eigenvalues[0]);
            assert!(s.eigenvalues[1] > 10.0 * s.eigenvalues[0].abs(), "{:?}", s.eigenvalues);
            let u = ground_state_transform(&s.eigenvectors[0], &p, Direction::Inverse).vector;
            assert!(u.values.iter().all(|&x| x >= 0.0), "{} {eps}", p.name);
        }
    }
}

#[test]
fn coarse_boxes_resolve_every_requested_mode() {
    // 11 to 17 sites with boundary diagonals up to 1e7: the weighted solve
    // stalls on the upper modes and the symmetric fallback must finish the job
    for (p, h, eps, k) in [
        (PotentialSpec::double_well_1d(), 2.5, 0.4, 8),
        (PotentialSpec::double_well_1d(), 2.5, 0.3, 8),
        (PotentialSpec::triple_well_1d(), 2.0, 0.4, 8),
    ] {
        let lat = Arc::new(build_box(1, eps, &[0.0], &[h]).unwrap());
        let op = assemble_witten(&p, lat).unwrap();
        let s = lowest_eigenpairs(&op, k, DEFAULT_TOL, None).unwrap();
        let dense = dense_eigs(&op);
        // eigenvalues move by at most the backward error of a symmetric solve
        let floor = 16.0 * f64::EPSILON * op.norm_one();
        for (i, (a, b)) in s.eigenvalues.iter().zip(&dense).enumerate() {
            assert!((a - b).abs() <= 1e-9 * b.abs() + floor, "{eps} mode {i}: {a} vs {b}");
        }
        for (r, l) in s.residuals.iter().zip(&s.eigenvalues) {
            assert!(*r <= 2.0 * (DEFAULT_TOL * l.abs().max(1.0)).max(floor), "{r} at {l}, floor {floor}");
        }
        assert_eq!(s.path, SolverPath::Shifted);
        assert!(s.warnings.iter().any(|w| matches!(w, Warning::ShiftedFallback { .. })));
    }
    // the generator has no symmetric form to fall back on
    let lat = Arc::new(build_box(1, 0.4, &[0.0], &[2.5]).unwrap());
    let gen = assemble_neg_generator(&PotentialSpec::double_well_1d(), lat).unwrap();
    assert!(lowest_eigenpairs(&gen, 3, DEFAULT_TOL, None).is_ok());
}
