//! Assembly of the Witten operator, the generator `-eps L` and plain
//! Schrödinger operators, with sparse products and a text dump.

use std::fmt::Write as _;
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use super::{LatticeBox, LatticeVector};
use crate::error::{Error, Result, Warning};
use crate::landscape::PotentialSpec;
use crate::EXP_CLAMP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `H = -eps^2 Delta_eps + V_eps`.
    Witten,
    /// `-eps L_eps`, self-adjoint in `l^2(rho_eps)`.
    NegGenerator,
    /// `-eps^2 Delta_eps + U` for a given potential `U`.
    Schrodinger,
}

/// Data of the factorization `H = G^-1 K G^-1` with `G = exp(-f / 2 eps)`.
#[derive(Debug, Clone)]
pub struct GroundState {
    /// `-f(x) / (2 eps)` per site.
    pub log_g: Vec<f64>,
    /// `(site, -f(x + eps v) / (2 eps))` for every edge leaving the box.
    pub exits: Vec<(usize, f64)>,
    /// Sum of the jump weights leaving the box, per site.
    pub killing: Vec<f64>,
}

/// Nearest-neighbor operator with Dirichlet truncation: edges leaving the
/// box are dropped, the diagonal keeps their full contribution.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub lattice: Arc<LatticeBox>,
    pub kind: OperatorKind,
    pub eps: f64,
    pub dirichlet: bool,
    pub diagonal: Vec<f64>,
    /// Entry `(i, i + e_k)` at `i * d + k`; zero when the neighbor is outside.
    pub upper: Vec<f64>,
    /// Entry `(i + e_k, i)` when it differs from `upper`.
    pub lower: Option<Vec<f64>>,
    pub ground: Option<GroundState>,
    pub warnings: Vec<Warning>,
}

fn clamped_exp(arg: f64, clamped: &mut usize) -> f64 {
    if arg.abs() > EXP_CLAMP {
        *clamped += 1;
        arg.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
    } else {
        arg.exp()
    }
}

struct Weights {
    f: Vec<f64>,
    /// `exp(-(f(x + eps v) - f(x)) / 2 eps)` at `i * 2d + 2k` (+) and `+ 1` (-).
    w: Vec<f64>,
    exits: Vec<(usize, f64)>,
    clamped: usize,
}

fn jump_weights(p: &PotentialSpec, lattice: &LatticeBox) -> Result<Weights> {
    if p.dim != lattice.dim {
        return Err(Error::InvalidInput("potential and box dimensions differ".into()));
    }
    let n = lattice.len();
    let d = lattice.dim;
    let eps = lattice.eps;
    let site_f = |i: usize| p.eval(&lattice.site(i));
    #[cfg(feature = "parallel")]
    let f: Vec<f64> = (0..n).into_par_iter().map(site_f).collect();
    #[cfg(not(feature = "parallel"))]
    let f: Vec<f64> = (0..n).map(site_f).collect();

    let mut w = vec![0.0; n * 2 * d];
    let mut exits = Vec::new();
    let mut clamped = 0;
    let mut x = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            for (s, sign) in [(0usize, 1i8), (1, -1)] {
                let fy = match lattice.neighbor(i, k, sign) {
                    Some(j) => f[j],
                    None => {
                        lattice.site_into(i, &mut x);
                        x[k] += sign as f64 * eps;
                        let fy = p.eval(&x);
                        exits.push((i, -fy / (2.0 * eps)));
                        fy
                    }
                };
                w[i * 2 * d + 2 * k + s] = clamped_exp(-(fy - f[i]) / (2.0 * eps), &mut clamped);
            }
        }
    }
    Ok(Weights { f, w, exits, clamped })
}

fn assemble(p: &PotentialSpec, lattice: Arc<LatticeBox>, kind: OperatorKind) -> Result<SparseOperator> {
    let Weights { f, w, exits, clamped } = jump_weights(p, &lattice)?;
    let n = lattice.len();
    let d = lattice.dim;
    let eps = lattice.eps;
    let diagonal: Vec<f64> = (0..n).map(|i| w[i * 2 * d..(i + 1) * 2 * d].iter().sum()).collect();
    let mut upper = vec![0.0; n * d];
    let mut lower = (kind == OperatorKind::NegGenerator).then(|| vec![0.0; n * d]);
    for i in 0..n {
        for k in 0..d {
            if let Some(j) = lattice.neighbor(i, k, 1) {
                match &mut lower {
                    None => upper[i * d + k] = -1.0,
                    Some(lo) => {
                        upper[i * d + k] = -w[i * 2 * d + 2 * k];
                        lo[i * d + k] = -w[j * 2 * d + 2 * k + 1];
                    }
                }
            }
        }
    }
    let mut killing = vec![0.0; n];
    for i in 0..n {
        for k in 0..d {
            for (s, sign) in [(0usize, 1i8), (1, -1)] {
                if lattice.neighbor(i, k, sign).is_none() {
                    killing[i] += w[i * 2 * d + 2 * k + s];
                }
            }
        }
    }
    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(Warning::Overflow { sites: clamped });
    }
    Ok(SparseOperator {
        lattice,
        kind,
        eps,
        dirichlet: true,
        diagonal,
        upper,
        lower,
        ground: Some(GroundState {
            log_g: f.iter().map(|v| -v / (2.0 * eps)).collect(),
            exits,
            killing,
        }),
        warnings,
    })
}

/// `H_eps`: diagonal `sum_v exp(-grad_eps f(x, v) / 2) = 2d + V_eps(x)`, `-1` per edge.
pub fn assemble_witten(p: &PotentialSpec, lattice: Arc<LatticeBox>) -> Result<SparseOperator> {
    assemble(p, lattice, OperatorKind::Witten)
}

/// `-eps L_eps` with rates `r(x, y) = exp(-(f(y) - f(x)) / 2 eps) / eps`.
pub fn assemble_neg_generator(p: &PotentialSpec, lattice: Arc<LatticeBox>) -> Result<SparseOperator> {
    assemble(p, lattice, OperatorKind::NegGenerator)
}

/// `-eps^2 Delta_eps + U` with Dirichlet truncation.
pub fn assemble_schrodinger(
    lattice: Arc<LatticeBox>,
    potential: impl Fn(&[f64]) -> f64,
) -> SparseOperator {
    let n = lattice.len();
    let d = lattice.dim;
    let mut x = vec![0.0; d];
    let diagonal = (0..n)
        .map(|i| {
            lattice.site_into(i, &mut x);
            2.0 * d as f64 + potential(&x)
        })
        .collect();
    let mut upper = vec![0.0; n * d];
    for i in 0..n {
        for k in 0..d {
            if lattice.neighbor(i, k, 1).is_some() {
                upper[i * d + k] = -1.0;
            }
        }
    }
    SparseOperator {
        eps: lattice.eps,
        lattice,
        kind: OperatorKind::Schrodinger,
        dirichlet: true,
        diagonal,
        upper,
        lower: None,
        ground: None,
        warnings: Vec::new(),
    }
}

impl SparseOperator {
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower.is_none()
    }

    /// Entry `(j, i)` for the edge `i -> j = i + e_k`.
    fn lower_entry(&self, i: usize, k: usize) -> f64 {
        let d = self.lattice.dim;
        match &self.lower {
            Some(lo) => lo[i * d + k],
            None => self.upper[i * d + k],
        }
    }

    fn row(&self, i: usize, x: &[f64]) -> f64 {
        let lat = &self.lattice;
        let d = lat.dim;
        if self.kind == OperatorKind::NegGenerator {
            // difference form: constants are annihilated exactly on interior sites
            let mut acc = 0.0;
            for k in 0..d {
                if let Some(j) = lat.neighbor(i, k, 1) {
                    acc -= self.upper[i * d + k] * (x[i] - x[j]);
                }
                if let Some(j) = lat.neighbor(i, k, -1) {
                    acc -= self.lower_entry(j, k) * (x[i] - x[j]);
                }
            }
            if let Some(g) = &self.ground {
                acc += g.killing[i] * x[i];
            }
            return acc;
        }
        let mut acc = self.diagonal[i] * x[i];
        for k in 0..d {
            if let Some(j) = lat.neighbor(i, k, 1) {
                acc += self.upper[i * d + k] * x[j];
            }
            if let Some(j) = lat.neighbor(i, k, -1) {
                acc += self.lower_entry(j, k) * x[j];
            }
        }
        acc
    }

    /// Sparse product on raw values.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        #[cfg(feature = "parallel")]
        {
            if x.len() > 4096 {
                return (0..x.len()).into_par_iter().map(|i| self.row(i, x)).collect();
            }
        }
        (0..x.len()).map(|i| self.row(i, x)).collect()
    }

    pub fn matvec(&self, v: &LatticeVector) -> Result<LatticeVector> {
        if !(Arc::ptr_eq(&self.lattice, &v.lattice) || *self.lattice == *v.lattice) {
            return Err(Error::ShapeMismatch);
        }
        Ok(LatticeVector { lattice: v.lattice.clone(), values: self.apply(&v.values) })
    }

    /// Max absolute row sum.
    pub fn norm_one(&self) -> f64 {
        let lat = &self.lattice;
        let d = lat.dim;
        (0..self.len())
            .map(|i| {
                let mut s = self.diagonal[i].abs();
                for k in 0..d {
                    if lat.neighbor(i, k, 1).is_some() {
                        s += self.upper[i * d + k].abs();
                    }
                    if let Some(j) = lat.neighbor(i, k, -1) {
                        s += self.lower_entry(j, k).abs();
                    }
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Lower end of the Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        let lat = &self.lattice;
        let d = lat.dim;
        (0..self.len())
            .map(|i| {
                let mut s = 0.0;
                for k in 0..d {
                    if lat.neighbor(i, k, 1).is_some() {
                        s += self.upper[i * d + k].abs();
                    }
                    if let Some(j) = lat.neighbor(i, k, -1) {
                        s += self.lower_entry(j, k).abs();
                    }
                }
                self.diagonal[i] - s
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinate list `i j value`, 17 significant digits, sorted by `(i, j)`.
    pub fn dump(&self) -> String {
        let lat = &self.lattice;
        let d = lat.dim;
        let mut out = String::new();
        for i in 0..self.len() {
            // smaller indices come from the largest strides first
            for k in 0..d {
                if let Some(j) = lat.neighbor(i, k, -1) {
                    let _ = writeln!(out, "{i} {j} {:.16e}", self.lower_entry(j, k));
                }
            }
            let _ = writeln!(out, "{i} {i} {:.16e}", self.diagonal[i]);
            for k in (0..d).rev() {
                if let Some(j) = lat.neighbor(i, k, 1) {
                    let _ = writeln!(out, "{i} {j} {:.16e}", self.upper[i * d + k]);
                }
            }
        }
        out
    }

    /// Dense copy, row-major. Meant for small operators in tests and demos.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let lat = &self.lattice;
        let d = lat.dim;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diagonal[i];
            for k in 0..d {
                if let Some(j) = lat.neighbor(i, k, 1) {
                    a[i][j] = self.upper[i * d + k];
                    a[j][i] = self.lower_entry(i, k);
                }
            }
        }
        a
    }
}
