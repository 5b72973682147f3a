//! Pointwise potential, ground-state transform, weighted gradient form and IMS defect.

use std::sync::Arc;

use super::LatticeVector;
use crate::error::{Error, Result, Warning};
use crate::landscape::PotentialSpec;
use crate::smooth::smooth_step;
use crate::EXP_CLAMP;

/// `V_eps(x) = sum_v [exp(-grad_eps f(x, v) / 2) - 1]`, with the clamp flag.
pub fn potential_term_checked(p: &PotentialSpec, x: &[f64], eps: f64) -> (f64, bool) {
    let fx = p.eval(x);
    let mut y = x.to_vec();
    let mut v = 0.0;
    let mut clamped = false;
    for k in 0..p.dim {
        for sign in [1.0, -1.0] {
            y[k] = x[k] + sign * eps;
            let mut arg = -(p.eval(&y) - fx) / (2.0 * eps);
            if arg.abs() > EXP_CLAMP {
                clamped = true;
                arg = arg.clamp(-EXP_CLAMP, EXP_CLAMP);
            }
            v += arg.exp_m1();
        }
        y[k] = x[k];
    }
    (v, clamped)
}

pub fn potential_term(p: &PotentialSpec, x: &[f64], eps: f64) -> f64 {
    potential_term_checked(p, x, eps).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Multiply by `exp(-f / 2 eps)`.
    Forward,
    /// Divide by `exp(-f / 2 eps)`.
    Inverse,
}

#[derive(Debug, Clone)]
pub struct Transformed {
    pub vector: LatticeVector,
    pub warnings: Vec<Warning>,
}

/// `Phi[psi] = exp(-f / 2 eps) psi` and its inverse. Sites whose weight
/// falls below `exp(-700)` are set to 0 and reported.
pub fn ground_state_transform(
    psi: &LatticeVector,
    p: &PotentialSpec,
    direction: Direction,
) -> Transformed {
    let lat = &psi.lattice;
    let eps = lat.eps;
    let mut x = vec![0.0; lat.dim];
    let mut under = 0;
    let values = psi
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            lat.site_into(i, &mut x);
            let arg = p.eval(&x) / (2.0 * eps);
            if arg > EXP_CLAMP {
                under += 1;
                return 0.0;
            }
            match direction {
                Direction::Forward => v * (-arg).exp(),
                Direction::Inverse => v * arg.exp(),
            }
        })
        .collect();
    let warnings = if under > 0 { vec![Warning::Underflow { sites: under }] } else { vec![] };
    Transformed { vector: LatticeVector { lattice: lat.clone(), values }, warnings }
}

/// `||grad_{f,eps} psi||^2` with the `eps^d / 2 sum_{x,v}` norm, exterior values 0.
///
/// Per undirected edge the 1-form is `exp(D/4eps) psi(y) - exp(-D/4eps) psi(x)`
/// with `D = f(y) - f(x)`; both orientations contribute, which cancels the 1/2.
pub fn weighted_gradient_form(psi: &LatticeVector, p: &PotentialSpec) -> f64 {
    let lat = &psi.lattice;
    let eps = lat.eps;
    let d = lat.dim;
    let n = lat.len();
    let mut x = vec![0.0; d];
    let f: Vec<f64> = (0..n)
        .map(|i| {
            lat.site_into(i, &mut x);
            p.eval(&x)
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..d {
            match lat.neighbor(i, k, 1) {
                Some(j) => {
                    let e = (f[j] - f[i]) / (4.0 * eps);
                    let g = e.exp() * psi.values[j] - (-e).exp() * psi.values[i];
                    total += g * g;
                }
                None => {
                    lat.site_into(i, &mut x);
                    x[k] += eps;
                    let e = (p.eval(&x) - f[i]) / (4.0 * eps);
                    let g = (-e).exp() * psi.values[i];
                    total += g * g;
                }
            }
            if lat.neighbor(i, k, -1).is_none() {
                lat.site_into(i, &mut x);
                x[k] -= eps;
                let e = (p.eval(&x) - f[i]) / (4.0 * eps);
                let g = (-e).exp() * psi.values[i];
                total += g * g;
            }
        }
    }
    lat.cell_volume() * total
}

type Piece = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Functions `chi_j` with `sum_j chi_j^2 = 1`.
#[derive(Clone)]
pub struct QuadraticPartition {
    pub pieces: Vec<Piece>,
    /// Sup norm of the Hessian of each piece.
    pub hessian_sup: Vec<f64>,
}

impl std::fmt::Debug for QuadraticPartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadraticPartition")
            .field("pieces", &self.pieces.len())
            .field("hessian_sup", &self.hessian_sup)
            .finish()
    }
}

impl QuadraticPartition {
    pub fn trivial() -> Self {
        QuadraticPartition { pieces: vec![Arc::new(|_: &[f64]| 1.0)], hessian_sup: vec![0.0] }
    }

    /// `cos(pi s / 2)`, `sin(pi s / 2)` with `s` a smooth step along `axis`
    /// over `[start, start + width]`.
    pub fn two_piece(axis: usize, start: f64, width: f64) -> Self {
        let phase = move |t: f64| 0.5 * std::f64::consts::PI * smooth_step((t - start) / width);
        let c0 = move |x: &[f64]| phase(x[axis]).cos();
        let c1 = move |x: &[f64]| phase(x[axis]).sin();
        // second differences on a fine grid across the transition
        let h = width * 1e-4;
        let sup = |g: &dyn Fn(f64) -> f64| {
            (0..=20_000)
                .map(|i| {
                    let t = start - 0.05 * width + 1.1 * width * i as f64 / 20_000.0;
                    ((g(t + h) - 2.0 * g(t) + g(t - h)) / (h * h)).abs()
                })
                .fold(0.0, f64::max)
        };
        let s0 = sup(&|t| phase(t).cos());
        let s1 = sup(&|t| phase(t).sin());
        QuadraticPartition { pieces: vec![Arc::new(c0), Arc::new(c1)], hessian_sup: vec![s0, s1] }
    }

    /// Checks `sum chi_j^2 = 1` at every site of the box.
    pub fn validate(&self, lattice: &super::LatticeBox) -> Result<()> {
        let mut x = vec![0.0; lattice.dim];
        for i in 0..lattice.len() {
            lattice.site_into(i, &mut x);
            let s: f64 = self.pieces.iter().map(|c| c(&x).powi(2)).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "partition sums to {s} at site {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn max_hessian(&self) -> f64 {
        self.hessian_sup.iter().copied().fold(0.0, f64::max)
    }
}

/// `Delta_eps psi` with exterior values 0.
fn lattice_laplacian(psi: &[f64], lat: &super::LatticeBox) -> Vec<f64> {
    let d = lat.dim;
    let inv = 1.0 / (lat.eps * lat.eps);
    (0..lat.len())
        .map(|i| {
            let mut acc = -2.0 * d as f64 * psi[i];
            for k in 0..d {
                for sign in [1, -1] {
                    if let Some(j) = lat.neighbor(i, k, sign) {
                        acc += psi[j];
                    }
                }
            }
            acc * inv
        })
        .collect()
}

/// `|| Delta_eps psi - sum_j chi_j Delta_eps (chi_j psi) ||`.
pub fn ims_defect(partition: &QuadraticPartition, psi: &LatticeVector) -> f64 {
    let lat = &psi.lattice;
    let base = lattice_laplacian(&psi.values, lat);
    let mut defect = base;
    let mut x = vec![0.0; lat.dim];
    for chi in &partition.pieces {
        let c: Vec<f64> = (0..lat.len())
            .map(|i| {
                lat.site_into(i, &mut x);
                chi(&x)
            })
            .collect();
        let cpsi: Vec<f64> = c.iter().zip(&psi.values).map(|(a, b)| a * b).collect();
        let lap = lattice_laplacian(&cpsi, lat);
        defect.iter_mut().zip(c.iter().zip(&lap)).for_each(|(dv, (ci, li))| *dv -= ci * li);
    }
    (lat.cell_volume() * defect.iter().map(|v| v * v).sum::<f64>()).sqrt()
}
