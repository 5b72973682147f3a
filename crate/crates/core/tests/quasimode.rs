use std::sync::Arc;

use nalgebra::DMatrix;
use witten_core::eigen::{lowest_eigenpairs, DEFAULT_TOL};
use witten_core::landscape::{analyze, builtin_region, harmonic_threshold, Landscape, Region};
use witten_core::lattice::{assemble_witten, build_box, LatticeVector};
use witten_core::quasimode::*;
use witten_core::{PotentialSpec, Warning};

struct Fixture {
    p: PotentialSpec,
    region: Region,
    land: Landscape,
    cfg: QuasimodeConfig,
}

fn double_well() -> Fixture {
    let p = PotentialSpec::double_well_1d();
    let region = builtin_region("double_well_1d").unwrap();
    let land = analyze(&p, &region).unwrap();
    let cfg = QuasimodeConfig::new(&p, &region, &land, None).unwrap();
    Fixture { p, region, land, cfg }
}

impl Fixture {
    fn report(&self, cfg: &QuasimodeConfig, eps: f64) -> (QuasimodeReport, Vec<f64>) {
        let lat = Arc::new(build_box(self.region.dim(), eps, &self.region.center, &self.region.half_widths).unwrap());
        let op = assemble_witten(&self.p, lat).unwrap();
        let mins: Vec<_> = self.land.minima.iter().collect();
        let tau = harmonic_threshold(&mins, eps);
        let r = evaluate(&self.p, &op, cfg, &self.land.prediction, tau).unwrap();
        let s = lowest_eigenpairs(&op, 3, DEFAULT_TOL, None).unwrap();
        (r, s.eigenvalues)
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = points.iter().map(|&(x, y)| (x.ln() - mx) * (y.ln() - my)).sum();
    num / points.iter().map(|&(x, _)| (x.ln() - mx).powi(2)).sum::<f64>()
}

#[test]
fn reaction_coordinates() {
    let f = double_well();
    let s = &f.cfg.saddles[0];
    assert_eq!(s.tau, vec![1.0]);
    assert_eq!(reaction_coordinate(s, s.location()), 0.0);
    assert!((reaction_coordinate(s, &[0.3]) - 0.3).abs() < 1e-12);

    let p2 = PotentialSpec::double_well_aniso_2d(2.0);
    let land2 = analyze(&p2, &builtin_region("double_well_aniso_2d").unwrap()).unwrap();
    let s2 = &land2.saddles[0];
    assert!((s2.tau[0].abs() - 1.0).abs() < 1e-12 && s2.tau[1].abs() < 1e-12);
    let xi = reaction_coordinate(s2, &[0.2, 5.0]);
    assert!((xi.abs() - 0.2).abs() < 1e-12);
}

#[test]
fn kappa_constant() {
    let f = double_well();
    let s = &f.cfg.saddles[0];
    assert_eq!(s.mu, -4.0);
    let c = kappa_normalization(s, &f.cfg, 0.05).unwrap();
    assert!((c.asymptotic - 7.1365).abs() < 1e-4, "{c:?}");
    // the plateau ends at 2.7 standard deviations, so the cutoff shows at 2e-4
    assert!((c.exact / c.asymptotic - 1.0).abs() < 1e-3, "{c:?}");
    // C sqrt(eps) settles to 2 sqrt(|mu| / 2 pi)
    let lim = 2.0 * (4.0 / (2.0 * std::f64::consts::PI)).sqrt();
    let far = kappa_normalization(s, &f.cfg, 0.01).unwrap();
    assert!((far.exact * 0.1 - lim).abs() < 1e-10 * lim);
    assert!(kappa_normalization(s, &f.cfg, 0.0).is_err());
}

#[test]
fn construction_on_the_double_well() {
    let f = double_well();
    let eps = 0.1;
    let lat = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
    let q = build_quasimode(&f.p, lat.clone(), &f.cfg, eps).unwrap();
    assert!(q.ortho_defect <= 1e-12 * q.ortho_scale);
    let v = &q.psi.values;
    let n = v.len();
    let peak = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for i in 0..n {
        assert!((v[i] + v[n - 1 - i]).abs() <= 1e-12 * peak, "site {i}");
    }
    // theta kappa = +-1 at the well bottoms and psi / g is flat near x = 1
    let g = |x: f64| (-f.p.eval(&[x]) / (2.0 * eps)).exp();
    let at = |x: f64| v[lat.nearest_site(&[x])];
    let flat: Vec<f64> = [0.8, 0.9, 1.0, 1.1, 1.2].iter().map(|&x| at(x) / g(x)).collect();
    assert!(flat.iter().all(|r| (r - 0.5 * (1.0 - q.projection)).abs() < 1e-12), "{flat:?}");
    assert!((at(-1.0) / g(-1.0) - 0.5 * (-1.0 - q.projection)).abs() < 1e-12);
    // only the projection term -c g / 2 reaches the boundary, and g is negligible there
    let edge = v[0].abs().max(v[n - 1].abs());
    assert!(edge <= 1e-50 * peak, "{edge}");
    assert!(build_quasimode(&f.p, lat, &f.cfg, 0.2).is_err());
}

#[test]
fn norm_and_dirichlet_examples() {
    let f = double_well();
    let (r, l) = f.report(&f.cfg, 0.1);
    // sqrt(0.2 pi) / (2 sqrt 8)
    assert!((r.norm_sq_predicted - 0.1401248).abs() < 1e-6, "{}", r.norm_sq_predicted);
    assert!((r.dirichlet_predicted / 1.14550e-6 - 1.0).abs() < 1e-5, "{}", r.dirichlet_predicted);
    assert!((r.rayleigh_quotient / (r.dirichlet_measured / r.norm_sq_measured) - 1.0).abs() < 1e-13);
    assert!((r.dirichlet_form / r.dirichlet_measured - 1.0).abs() < 1e-10);
    assert!(r.dirichlet_measured >= l[1] * r.norm_sq_measured);
    // Cauchy-Schwarz
    assert!(r.residual_sq_measured >= r.dirichlet_measured.powi(2) / r.norm_sq_measured);
}

#[test]
fn norm_ignores_the_far_box() {
    let f = double_well();
    let eps = 0.1;
    let small = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
    let big = Arc::new(build_box(1, eps, &[0.0], &[5.0]).unwrap());
    let a = build_quasimode(&f.p, small, &f.cfg, eps).unwrap().psi.norm_sq();
    let b = build_quasimode(&f.p, big, &f.cfg, eps).unwrap().psi.norm_sq();
    assert!((a / b - 1.0).abs() < 1e-10);
}

#[test]
fn estimate_ratios() {
    let f = double_well();
    let (r1, _) = f.report(&f.cfg, 0.1);
    let (r2, _) = f.report(&f.cfg, 0.05);
    for (r, band) in [(r1, 0.3), (r2, 0.2)] {
        let n = r.norm_sq_measured / r.norm_sq_predicted;
        let d = r.dirichlet_measured / r.dirichlet_predicted;
        assert!((n - 1.0).abs() <= band && (d - 1.0).abs() <= band, "eps {}: {n} {d}", r.eps);
    }
}

#[test]
fn residual_scaling_and_sandwich() {
    let f = double_well();
    let ek = &f.land.prediction;
    let mut pts = Vec::new();
    let mut k_fit: f64 = 0.0;
    for eps in [0.2, 0.15, 0.1, 0.07, 0.05] {
        let (r, l) = f.report(&f.cfg, eps);
        assert!(r.lower_bound <= l[1] + 1e-12, "eps {eps}: {} > {}", r.lower_bound, l[1]);
        assert!(l[1] <= r.rayleigh_quotient * (1.0 + 1e-12), "eps {eps}");
        pts.push((eps, r.residual_sq_measured * (f.land.prediction.h_star / eps).exp()));
        k_fit = k_fit.max((r.rayleigh_quotient / ek.gap(eps) - 1.0).abs() / eps.sqrt());
    }
    let three: Vec<_> = pts.iter().copied().filter(|&(e, _)| [0.2, 0.1, 0.05].contains(&e)).collect();
    assert!(slope(&three) >= 2.7, "{three:?}");
    assert!(k_fit <= 2.0, "{k_fit}");
}

#[test]
fn rho_perturbation() {
    let f = double_well();
    for eps in [0.1, 0.05] {
        let (base, _) = f.report(&f.cfg, eps);
        for scale in [0.9, 1.1] {
            let cfg = QuasimodeConfig::new(&f.p, &f.region, &f.land, Some(f.cfg.rho * scale)).unwrap();
            let (r, _) = f.report(&cfg, eps);
            let change = (r.rayleigh_quotient / base.rayleigh_quotient - 1.0).abs();
            assert!(change <= 5.0 * eps.sqrt(), "eps {eps} scale {scale}: {change}");
        }
    }
}

#[test]
fn lower_bound_arithmetic() {
    let b = abstract_lower_bound(1e-6, 1e-10, 1.0, 0.05).unwrap();
    assert!((b.r - 0.0447214).abs() < 1e-6);
    assert!((b.value - 9.5528e-7).abs() < 1e-10, "{}", b.value);
    assert!(b.warning.is_none());
    // R = 1 when ||Tu||^2 = tau <Tu,u>
    let edge = abstract_lower_bound(1e-3, 0.05 * 1e-3, 1.0, 0.05).unwrap();
    assert_eq!(edge.value, 0.0);
    assert!(matches!(edge.warning, Some(Warning::Quality { .. })));
    assert!(abstract_lower_bound(0.0, 1.0, 1.0, 1.0).is_err());
    assert!(abstract_lower_bound(1.0, 1.0, 1.0, -1.0).is_err());
}

#[test]
fn lower_bound_on_a_toy_operator() {
    // T = diag(0, 1, 3) restricted to the complement of its kernel; tau = 3
    let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 3.0]));
    let lambda2 = t.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, |a, b| if b > 1e-12 { a.min(b) } else { a });
    for a in [0.05f64, 0.2, 0.5] {
        let u = nalgebra::DVector::from_vec(vec![0.0, a.cos(), a.sin()]);
        let tu = &t * &u;
        let b = abstract_lower_bound(tu.dot(&u), tu.norm_squared(), 1.0, 3.0).unwrap();
        assert!(b.value <= lambda2, "{a}: {}", b.value);
    }
}

#[test]
fn exact_eigenvector_residual() {
    let f = double_well();
    let lat = Arc::new(build_box(1, 0.1, &[0.0], &[2.5]).unwrap());
    let op = assemble_witten(&f.p, lat).unwrap();
    let s = lowest_eigenpairs(&op, 2, 1e-12, None).unwrap();
    let v: &LatticeVector = &s.eigenvectors[1];
    let r = quasimode_residual(v, &op, 1.0).unwrap();
    let want = s.eigenvalues[1].powi(2) * v.norm_sq();
    assert!((r.measured_sq - want).abs() <= 1e-6 * want, "{} vs {want}", r.measured_sq);
}

#[test]
fn rough_quasimodes_are_exponentially_small() {
    let f = double_well();
    let mut rates = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let lat = Arc::new(build_box(1, eps, &[0.0], &[2.5]).unwrap());
        let op = assemble_witten(&f.p, lat.clone()).unwrap();
        for m in [-1.0, 1.0] {
            let v = rough_quasimode(&f.p, lat.clone(), &[m], 0.9);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            let rq = rayleigh_quotient(&op, &v).unwrap();
            assert!(rq > 0.0);
            if m == -1.0 {
                rates.push(-eps * rq.ln());
            }
        }
    }
    // -eps ln RQ stays bounded below by a positive constant
    assert!(rates.iter().all(|&c| c > 0.3), "{rates:?}");
}

#[test]
fn anisotropic_quasimode() {
    let p = PotentialSpec::double_well_aniso_2d(2.0);
    let region = builtin_region("double_well_aniso_2d").unwrap();
    let land = analyze(&p, &region).unwrap();
    let cfg = QuasimodeConfig::new(&p, &region, &land, None).unwrap();
    let f = Fixture { p, region, land, cfg };
    let (r, l) = f.report(&f.cfg, 0.1);
    let n = r.norm_sq_measured / r.norm_sq_predicted;
    let d = r.dirichlet_measured / r.dirichlet_predicted;
    assert!((n - 1.0).abs() <= 0.3 && (d - 1.0).abs() <= 0.3, "{n} {d}");
    assert!(r.lower_bound <= l[1] + 1e-12 && l[1] <= r.rayleigh_quotient * (1.0 + 1e-12));
    assert!(r.ortho_defect <= 1e-12 * r.ortho_scale);
}
