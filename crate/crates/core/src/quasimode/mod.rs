//! Quasimode for the spectral gap: error-function profile across each
//! saddle, cut off by a sublevel cutoff and projected off the ground state.

mod config;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

pub use config::{reaction_coordinate, Part, QuasimodeConfig, RHO_HALVINGS, RHO_START_FRACTION};

use crate::error::{Error, Result, Warning};
use crate::landscape::{dist, CriticalPoint, EKPrediction, PotentialSpec, SaddleData};
use crate::lattice::{weighted_gradient_form, LatticeBox, LatticeVector, SparseOperator};
use crate::smooth::{integrate, plateau, smooth_step};

const QUAD_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KappaNormalization {
    /// `[int_0^inf chi(eta) exp(-|mu| eta^2 / 2 eps) d eta]^{-1}` by quadrature.
    pub exact: f64,
    /// `2 sqrt(|mu| / (2 pi eps))`.
    pub asymptotic: f64,
}

fn profile_integral(cfg: &QuasimodeConfig, mu: f64, eps: f64, upto: f64) -> f64 {
    let a = mu.abs() / (2.0 * eps);
    let g = |eta: f64| cfg.chi(eta) * (-a * eta * eta).exp();
    let split = cfg.rho / 3.0;
    let end = upto.abs().min(2.0 * cfg.rho / 3.0);
    let v = if end <= split {
        integrate(g, 0.0, end, QUAD_RTOL)
    } else {
        integrate(g, 0.0, split, QUAD_RTOL) + integrate(g, split, end, QUAD_RTOL)
    };
    v.copysign(upto)
}

pub fn kappa_normalization(s: &SaddleData, cfg: &QuasimodeConfig, eps: f64) -> Result<KappaNormalization> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let half = profile_integral(cfg, s.mu, eps, f64::INFINITY);
    Ok(KappaNormalization {
        exact: 1.0 / half,
        asymptotic: 2.0 * (s.mu.abs() / (2.0 * PI * eps)).sqrt(),
    })
}

/// Sublevel cutoff in the `f` variable.
fn theta(cfg: &QuasimodeConfig, fx: f64) -> f64 {
    let [lo, hi] = cfg.theta_levels;
    1.0 - smooth_step((fx - lo) / (hi - lo))
}

#[derive(Debug, Clone)]
pub struct Quasimode {
    pub psi: LatticeVector,
    /// `<theta kappa, e^{-f/eps}> / ||e^{-f/2eps}||^2`.
    pub projection: f64,
    pub kappa_constants: Vec<KappaNormalization>,
    /// `|<psi, e^{-f/2eps}>|` after the final projection.
    pub ortho_defect: f64,
    /// `||psi|| * ||e^{-f/2eps}||`, the scale for `ortho_defect`.
    pub ortho_scale: f64,
}

/// `psi = (theta kappa / 2 - c / 2) e^{-f/2eps}` with `c` making it orthogonal
/// to `e^{-f/2eps}` in `l^2(eps Z^d)`.
pub fn build_quasimode(
    p: &PotentialSpec,
    lattice: Arc<LatticeBox>,
    cfg: &QuasimodeConfig,
    eps: f64,
) -> Result<Quasimode> {
    if (lattice.eps - eps).abs() > 1e-15 * eps {
        return Err(Error::InvalidInput("lattice spacing differs from eps".into()));
    }
    let n = lattice.len();
    let consts: Vec<KappaNormalization> =
        cfg.saddles.iter().map(|s| kappa_normalization(s, cfg, eps)).collect::<Result<_>>()?;
    let mut x = vec![0.0; lattice.dim];
    let mut f = vec![0.0; n];
    let mut tk = vec![0.0; n];
    for i in 0..n {
        lattice.site_into(i, &mut x);
        f[i] = p.eval(&x);
        let th = theta(cfg, f[i]);
        if th == 0.0 {
            continue;
        }
        let kappa = match cfg.classify(&x) {
            Some(Part::Well(0)) => -1.0,
            Some(Part::Well(_)) => 1.0,
            Some(Part::Tube(k)) => {
                let s = &cfg.saddles[k];
                let xi = reaction_coordinate(s, &x);
                (consts[k].exact * profile_integral(cfg, s.mu, eps, xi)).clamp(-1.0, 1.0)
            }
            None => return Err(Error::ComponentAmbiguous { site: i }),
        };
        tk[i] = th * kappa;
    }
    // projection coefficient with weights shifted by the lowest value
    let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = f.iter().map(|v| (-(v - fmin) / eps).exp()).collect();
    let projection = tk.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();

    let g: Vec<f64> = f.iter().map(|v| (-v / (2.0 * eps)).exp()).collect();
    let values: Vec<f64> = tk.iter().zip(&g).map(|(t, gi)| 0.5 * (t - projection) * gi).collect();
    let mut psi = LatticeVector { lattice: lattice.clone(), values };
    let ground = LatticeVector { lattice, values: g };
    // second pass removes what rounding left behind
    let gg = ground.norm_sq();
    let a = psi.inner(&ground)? / gg;
    psi.axpy(-a, &ground)?;
    let ortho_defect = psi.inner(&ground)?.abs();
    let ortho_scale = psi.norm() * gg.sqrt();
    Ok(Quasimode { psi, projection, kappa_constants: consts, ortho_defect, ortho_scale })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub measured: f64,
    pub predicted: f64,
}

impl Estimate {
    pub fn ratio(&self) -> f64 {
        self.measured / self.predicted
    }
}

/// `||psi||^2` against `(2 pi eps)^{d/2} J e^{-h_low / eps}`.
pub fn quasimode_norm(psi: &LatticeVector, ek: &EKPrediction, minima: &[CriticalPoint; 2]) -> Estimate {
    let eps = psi.lattice.eps;
    let d = psi.lattice.dim as i32;
    let dets = [minima[0].det(), minima[1].det()];
    let j = if ek.degenerate_case {
        1.0 / (dets[0].sqrt() + dets[1].sqrt())
    } else if minima[0].value < minima[1].value {
        1.0 / dets[0].sqrt()
    } else {
        1.0 / dets[1].sqrt()
    };
    Estimate {
        measured: psi.norm_sq(),
        predicted: (2.0 * PI * eps).powf(d as f64 / 2.0) * j * (-ek.h_low / eps).exp(),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DirichletEstimate {
    /// `<H psi, psi>` by sparse product.
    pub measured: f64,
    /// The same form from weighted edge differences.
    pub form: f64,
    pub predicted: f64,
}

/// `eps sum_k |mu_k| / 2 pi (2 pi eps)^{d/2} / sqrt|det Hess f(s_k)| e^{-h*/eps}`.
pub fn dirichlet_prediction(saddles: &[SaddleData], h_star: f64, eps: f64, dim: usize) -> f64 {
    let gauss = (2.0 * PI * eps).powf(dim as f64 / 2.0);
    eps * saddles
        .iter()
        .map(|s| s.mu.abs() / (2.0 * PI) * gauss / s.det_abs.sqrt())
        .sum::<f64>()
        * (-h_star / eps).exp()
}

pub fn quasimode_dirichlet(
    psi: &LatticeVector,
    op: &SparseOperator,
    p: &PotentialSpec,
    ek: &EKPrediction,
    saddles: &[SaddleData],
) -> Result<DirichletEstimate> {
    let hpsi = op.matvec(psi)?;
    Ok(DirichletEstimate {
        measured: hpsi.inner(psi)?,
        form: weighted_gradient_form(psi, p),
        predicted: dirichlet_prediction(saddles, ek.h_star, op.eps, psi.lattice.dim),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residual {
    pub measured_sq: f64,
    /// `eps^3 e^{-h*/eps}`.
    pub scale: f64,
}

pub fn quasimode_residual(psi: &LatticeVector, op: &SparseOperator, h_star: f64) -> Result<Residual> {
    let eps = op.eps;
    Ok(Residual {
        measured_sq: op.matvec(psi)?.norm_sq(),
        scale: eps.powi(3) * (-h_star / eps).exp(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub r: f64,
    pub warning: Option<Warning>,
}

/// `<Tu,u> (1 - R)` with `R^2 = ||Tu||^2 / (tau <Tu,u>)` for `u = psi / ||psi||`.
pub fn abstract_lower_bound(dirichlet: f64, residual_sq: f64, norm_sq: f64, tau: f64) -> Result<LowerBound> {
    if !(dirichlet > 0.0 && residual_sq > 0.0 && norm_sq > 0.0 && tau > 0.0) {
        return Err(Error::InvalidInput("lower bound inputs must be positive".into()));
    }
    let form = dirichlet / norm_sq;
    let r = (residual_sq / norm_sq / (tau * form)).sqrt();
    if r >= 1.0 {
        return Ok(LowerBound { value: 0.0, r, warning: Some(Warning::Quality { r }) });
    }
    Ok(LowerBound { value: form * (1.0 - r), r, warning: None })
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasimodeReport {
    pub eps: f64,
    pub norm_sq_measured: f64,
    pub norm_sq_predicted: f64,
    pub dirichlet_measured: f64,
    pub dirichlet_form: f64,
    pub dirichlet_predicted: f64,
    pub residual_sq_measured: f64,
    pub residual_scale: f64,
    pub rayleigh_quotient: f64,
    pub lower_bound: f64,
    pub lower_bound_r: f64,
    pub tau: f64,
    pub ortho_defect: f64,
    pub ortho_scale: f64,
    pub projection: f64,
    pub kappa_constants: Vec<KappaNormalization>,
    pub config: QuasimodeConfig,
    /// How the cutoff between the two theta levels is shaped.
    pub theta_profile: &'static str,
    pub warnings: Vec<Warning>,
}

/// Builds the quasimode on `op`'s box and evaluates every estimate;
/// `tau` is the spectral threshold fed to the lower bound.
pub fn evaluate(
    p: &PotentialSpec,
    op: &SparseOperator,
    cfg: &QuasimodeConfig,
    ek: &EKPrediction,
    tau: f64,
) -> Result<QuasimodeReport> {
    let eps = op.eps;
    let q = build_quasimode(p, op.lattice.clone(), cfg, eps)?;
    let norm = quasimode_norm(&q.psi, ek, &cfg.minima);
    let dir = quasimode_dirichlet(&q.psi, op, p, ek, &cfg.saddles)?;
    let res = quasimode_residual(&q.psi, op, ek.h_star)?;
    let lb = abstract_lower_bound(dir.measured, res.measured_sq, norm.measured, tau)?;
    Ok(QuasimodeReport {
        eps,
        norm_sq_measured: norm.measured,
        norm_sq_predicted: norm.predicted,
        dirichlet_measured: dir.measured,
        dirichlet_form: dir.form,
        dirichlet_predicted: dir.predicted,
        residual_sq_measured: res.measured_sq,
        residual_scale: res.scale,
        rayleigh_quotient: dir.measured / norm.measured,
        lower_bound: lb.value,
        lower_bound_r: lb.r,
        tau,
        ortho_defect: q.ortho_defect,
        ortho_scale: q.ortho_scale,
        projection: q.projection,
        kappa_constants: q.kappa_constants,
        config: cfg.clone(),
        theta_profile: "exp(-1/t) smooth step in f between the two levels",
        warnings: lb.warning.into_iter().collect(),
    })
}

/// `chi(|x - m|) e^{-f/2eps}` normalized, with `chi = 1` up to `radius / 2`
/// and `0` beyond `radius`.
pub fn rough_quasimode(p: &PotentialSpec, lattice: Arc<LatticeBox>, minimum: &[f64], radius: f64) -> LatticeVector {
    let eps = lattice.eps;
    let fm = p.eval(minimum);
    let mut v = LatticeVector::from_fn(lattice, |x| {
        plateau(dist(x, minimum), 0.5 * radius, radius) * (-(p.eval(x) - fm) / (2.0 * eps)).exp()
    });
    let nrm = v.norm();
    v.scale(1.0 / nrm);
    v
}

/// `<A v, v> / <v, v>`.
pub fn rayleigh_quotient(op: &SparseOperator, v: &LatticeVector) -> Result<f64> {
    Ok(op.matvec(v)?.inner(v)? / v.norm_sq())
}
