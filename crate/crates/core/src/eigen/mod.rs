//! Low-lying spectrum of the lattice operators.
//!
//! Operators with a ground-state form (`H_eps` and `-eps L_eps`) are solved
//! as a generalized problem `K u = lambda M u` in the coordinates
//! `psi = exp(-f / 2 eps) u`, where `K` is a graph Laplacian with conductances
//! `g(x) g(y)` plus a killing term at the box boundary and `M = diag(g^2)`.
//! In these coordinates the exponentially small eigenvalues are not swamped
//! by rounding of the `O(exp(|grad f| / 2))` diagonal near the box edge.
//! Other operators fall back to a shifted banded factorization of `A`.
//! Both paths run shift-invert subspace iteration with Rayleigh-Ritz.

mod banded;
mod report;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result, Warning};
use crate::lattice::{LatticeVector, OperatorKind, SparseOperator};

pub use banded::{Band, BandedFactor};
pub use report::{
    count_small_eigenvalues, exponential_rate_fit, harmonic_reference, GapReport,
    HarmonicReference, RateFit,
};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Seed of the random starting block.
pub const START_SEED: u64 = 0x5EED_1E55;
const MAX_ITER: usize = 1000;
/// Floor on `log g - max log g`; below it the weights would underflow.
const LOG_G_FLOOR: f64 = -340.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    GroundState,
    Shifted,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub eps: f64,
    pub eigenvalues: Vec<f64>,
    /// `||A psi - lambda psi|| / ||psi||` in the operator's own inner product.
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<LatticeVector>,
    pub iterations: usize,
    pub converged: bool,
    pub path: SolverPath,
    pub warnings: Vec<Warning>,
}

/// Generalized problem in working coordinates.
struct Problem<'a> {
    op: &'a SparseOperator,
    n: usize,
    m: Vec<f64>,
    factor: BandedFactor,
    kind: ProblemKind,
}

enum ProblemKind {
    /// Conductances per `(site, axis)` and killing mass per site.
    Laplacian { cond: Vec<f64>, kill: Vec<f64>, log_g: Vec<f64> },
    /// `A - shift I` with `M = I`.
    Shifted,
}

impl<'a> Problem<'a> {
    fn new(op: &'a SparseOperator, warnings: &mut Vec<Warning>) -> Result<Self> {
        let lat = &op.lattice;
        let n = op.len();
        let d = lat.dim;
        let bw = lat.stride(0).max(1);
        match &op.ground {
            Some(g) if op.kind != OperatorKind::Schrodinger => {
                let top = g.log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut floored = 0;
                let log_g: Vec<f64> = g
                    .log_g
                    .iter()
                    .map(|&v| {
                        let s = v - top;
                        if s < LOG_G_FLOOR {
                            floored += 1;
                            LOG_G_FLOOR
                        } else {
                            s
                        }
                    })
                    .collect();
                if floored > 0 {
                    warnings.push(Warning::Underflow { sites: floored });
                }
                let m: Vec<f64> = log_g.iter().map(|v| (2.0 * v).exp()).collect();
                let mut cond = vec![0.0; n * d];
                let mut band = Band::zeros(n, bw);
                for i in 0..n {
                    for k in 0..d {
                        if let Some(j) = lat.neighbor(i, k, 1) {
                            let c = (log_g[i] + log_g[j]).exp();
                            cond[i * d + k] = c;
                            band.add_upper(i, j, -c);
                        }
                    }
                }
                let mut kill = vec![0.0; n];
                for &(i, out) in &g.exits {
                    kill[i] += (log_g[i] + (out - top).max(LOG_G_FLOOR)).exp();
                }
                // shift well below the O(1) band, relative to the mean diagonal
                let mass: f64 = m.iter().sum();
                let diag_mean: f64 = (0..n)
                    .map(|i| kill[i] + (0..d).map(|k| cond[i * d + k]).sum::<f64>() * 2.0)
                    .sum::<f64>()
                    / mass;
                let sigma = 1e-3 * diag_mean.max(1e-300);
                let excess: Vec<f64> = (0..n).map(|i| kill[i] + sigma * m[i]).collect();
                let factor = BandedFactor::factor_laplacian(&band, &excess).ok_or_else(|| {
                    Error::InvalidInput("laplacian factorization hit a zero pivot".into())
                })?;
                Ok(Problem { op, n, m, factor, kind: ProblemKind::Laplacian { cond, kill, log_g } })
            }
            _ => Self::shifted(op),
        }
    }

    /// Plain shift-invert on `A - shift I`; needs a symmetric operator.
    fn shifted(op: &'a SparseOperator) -> Result<Self> {
        let lat = &op.lattice;
        let n = op.len();
        let d = lat.dim;
        let bw = lat.stride(0).max(1);
        if !op.is_symmetric() {
            return Err(Error::InvalidInput(
                "nonsymmetric operator without a ground-state form".into(),
            ));
        }
        let low = op.gershgorin_lower();
        let scale = op.norm_one().max(1e-300);
        let shift = low - 1e-3 * scale;
        let mut band = Band::zeros(n, bw);
        for i in 0..n {
            band.diag[i] = op.diagonal[i] - shift;
            for k in 0..d {
                if let Some(j) = lat.neighbor(i, k, 1) {
                    band.add_upper(i, j, op.upper[i * d + k]);
                }
            }
        }
        let factor = BandedFactor::factor_spd(&band).ok_or_else(|| {
            Error::InvalidInput("shifted operator is not positive definite".into())
        })?;
        Ok(Problem { op, n, m: vec![1.0; n], factor, kind: ProblemKind::Shifted })
    }

    fn path(&self) -> SolverPath {
        match self.kind {
            ProblemKind::Laplacian { .. } => SolverPath::GroundState,
            ProblemKind::Shifted => SolverPath::Shifted,
        }
    }

    /// `K u` (not `(K - shift) u`).
    fn apply_k(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            ProblemKind::Laplacian { cond, kill, .. } => {
                let lat = &self.op.lattice;
                let d = lat.dim;
                let mut out: Vec<f64> = kill.iter().zip(u).map(|(k, v)| k * v).collect();
                for i in 0..self.n {
                    for k in 0..d {
                        let c = cond[i * d + k];
                        if c != 0.0 {
                            let j = i + lat.stride(k);
                            let diff = c * (u[i] - u[j]);
                            out[i] += diff;
                            out[j] -= diff;
                        }
                    }
                }
                out
            }
            ProblemKind::Shifted => self.op.apply(u),
        }
    }

    /// `<K u, v>` from edge differences, no cancellation against the diagonal.
    fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            ProblemKind::Laplacian { cond, kill, .. } => {
                let lat = &self.op.lattice;
                let d = lat.dim;
                let mut s = 0.0;
                for i in 0..self.n {
                    s += kill[i] * u[i] * v[i];
                    for k in 0..d {
                        let c = cond[i * d + k];
                        if c != 0.0 {
                            let j = i + lat.stride(k);
                            s += c * (u[i] - u[j]) * (v[i] - v[j]);
                        }
                    }
                }
                s
            }
            ProblemKind::Shifted => dot(&self.op.apply(u), v),
        }
    }

    fn m_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.m).map(|((a, b), w)| a * b * w).sum()
    }

    /// `||K u - theta M u||_{M^-1}`, i.e. the residual in the operator's own norm.
    fn residual(&self, u: &[f64], theta: f64) -> f64 {
        let ku = self.apply_k(u);
        ku.iter()
            .zip(u)
            .zip(&self.m)
            .map(|((k, x), w)| {
                let r = k - theta * w * x;
                r * r / w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Deflation vector in working coordinates, `M`-inner products reproduce
    /// the operator's own inner product.
    fn to_working(&self, v: &LatticeVector) -> Result<Vec<f64>> {
        let lat = &self.op.lattice;
        let half = lat.cell_volume().sqrt();
        let out: Vec<f64> = match &self.kind {
            ProblemKind::Laplacian { log_g, .. } => match self.op.kind {
                OperatorKind::NegGenerator => {
                    let top = self.op.ground.as_ref().map(|g| top_log_g(&g.log_g)).unwrap_or(0.0);
                    v.values.iter().map(|x| x * half * top.exp()).collect()
                }
                _ => v.values.iter().zip(log_g).map(|(x, lg)| x * half * (-lg).exp()).collect(),
            },
            ProblemKind::Shifted => v.values.iter().map(|x| x * half).collect(),
        };
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "deflation vector is not representable in ground-state coordinates".into(),
            ));
        }
        Ok(out)
    }

    /// Back to a lattice vector of unit norm in the operator's inner product.
    fn to_lattice(&self, u: &[f64]) -> LatticeVector {
        let lat = &self.op.lattice;
        let inv_half = 1.0 / lat.cell_volume().sqrt();
        let values = match &self.kind {
            ProblemKind::Laplacian { log_g, .. } => match self.op.kind {
                OperatorKind::NegGenerator => {
                    let top = self.op.ground.as_ref().map(|g| top_log_g(&g.log_g)).unwrap_or(0.0);
                    u.iter().map(|x| x * inv_half * (-top).exp()).collect()
                }
                _ => u.iter().zip(log_g).map(|(x, lg)| x * inv_half * lg.exp()).collect(),
            },
            ProblemKind::Shifted => u.iter().map(|x| x * inv_half).collect(),
        };
        LatticeVector { lattice: lat.clone(), values }
    }
}

fn top_log_g(log_g: &[f64]) -> f64 {
    log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `M`-orthonormalizes `block` against `fixed` and itself (two passes).
/// Columns that collapse are replaced from `rng`.
fn orthonormalize(p: &Problem, fixed: &[Vec<f64>], block: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
    for c in 0..block.len() {
        for attempt in 0..4 {
            let before = p.m_inner(&block[c], &block[c]).sqrt();
            let (done, rest) = block.split_at_mut(c);
            let cur = &mut rest[0];
            for _ in 0..2 {
                for f in fixed.iter().chain(done.iter()) {
                    let a = p.m_inner(cur, f);
                    cur.iter_mut().zip(f).for_each(|(x, y)| *x -= a * y);
                }
            }
            let after = p.m_inner(&block[c], &block[c]).sqrt();
            if after > 1e-10 * before && after > 0.0 && after.is_finite() {
                block[c].iter_mut().for_each(|x| *x /= after);
                break;
            }
            if attempt == 3 {
                block[c].iter_mut().for_each(|x| *x = 0.0);
            } else {
                block[c].iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            }
        }
    }
}

/// The `k` smallest eigenpairs of `op` on the complement of `deflate`.
pub fn lowest_eigenpairs(
    op: &SparseOperator,
    k: usize,
    tol: f64,
    deflate: Option<&[LatticeVector]>,
) -> Result<SpectrumResult> {
    let n = op.len();
    let defl = deflate.unwrap_or(&[]);
    if k == 0 || k + defl.len() > n {
        return Err(Error::InvalidInput(format!("cannot compute {k} eigenpairs of a size-{n} operator")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    for v in defl {
        if !(Arc::ptr_eq(&v.lattice, &op.lattice) || *v.lattice == *op.lattice) {
            return Err(Error::ShapeMismatch);
        }
    }
    let mut warnings = op.warnings.clone();
    let p = Problem::new(op, &mut warnings)?;
    match subspace_iteration(&p, k, tol, defl, warnings.clone()) {
        // the ground-state weights can span so many decades that the higher
        // modes of a coarse box never resolve; the symmetric form still can
        Err(Error::NoConvergence { partial: Some(r), .. })
            if p.path() == SolverPath::GroundState && op.is_symmetric() =>
        {
            let worst = r.residuals.iter().copied().fold(0.0, f64::max);
            warnings.push(Warning::ShiftedFallback { residual: worst });
            subspace_iteration(&Problem::shifted(op)?, k, tol, defl, warnings)
        }
        other => other,
    }
}

fn subspace_iteration(
    p: &Problem,
    k: usize,
    tol: f64,
    defl: &[LatticeVector],
    warnings: Vec<Warning>,
) -> Result<SpectrumResult> {
    let (op, n) = (p.op, p.n);
    // backward-stable rounding level of a symmetric solve; the weighted
    // edge-difference form of the ground-state path does not need it
    let floor = match p.kind {
        ProblemKind::Shifted => 16.0 * f64::EPSILON * op.norm_one(),
        ProblemKind::Laplacian { .. } => 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut fixed: Vec<Vec<f64>> = Vec::new();
    for v in defl {
        fixed.push(p.to_working(v)?);
    }
    orthonormalize(p, &[], &mut fixed, &mut rng);

    let free = n - fixed.len();
    let b = (k + k.max(6)).min(free);
    let mut block: Vec<Vec<f64>> =
        (0..b).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    orthonormalize(p, &fixed, &mut block, &mut rng);

    let mut theta = vec![0.0; b];
    let mut res = vec![f64::INFINITY; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        // W = (K + sigma M)^-1 M V
        for col in block.iter_mut() {
            col.iter_mut().zip(&p.m).for_each(|(x, w)| *x *= w);
            p.factor.solve_in_place(col);
        }
        orthonormalize(p, &fixed, &mut block, &mut rng);

        // Rayleigh-Ritz with edge-difference forms
        let mut kp = DMatrix::zeros(b, b);
        for i in 0..b {
            for j in i..b {
                let v = p.form(&block[i], &block[j]);
                kp[(i, j)] = v;
                kp[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(kp);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let ritz: Vec<Vec<f64>> = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (r, col) in block.iter().enumerate() {
                    let a = eig.eigenvectors[(r, c)];
                    v.iter_mut().zip(col).for_each(|(x, y)| *x += a * y);
                }
                v
            })
            .collect();
        block = ritz;
        for (t, v) in theta.iter_mut().zip(&block) {
            *t = p.form(v, v) / p.m_inner(v, v);
        }
        for i in 0..k {
            res[i] = p.residual(&block[i], theta[i]) / p.m_inner(&block[i], &block[i]).sqrt();
        }
        if (0..k).all(|i| res[i] <= (tol * theta[i].abs().max(1.0)).max(floor)) {
            converged = true;
            break;
        }
    }

    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for v in block.iter().take(k) {
        let mut lv = p.to_lattice(v);
        let nrm = match op.kind {
            OperatorKind::NegGenerator => rho_norm(op, &lv),
            _ => lv.norm(),
        };
        lv.scale(1.0 / nrm);
        let peak = lv.values.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if peak < 0.0 {
            lv.scale(-1.0);
        }
        eigenvectors.push(lv);
    }
    let eigenvalues: Vec<f64> = theta[..k].to_vec();
    for (v, &lambda) in eigenvectors.iter().zip(&eigenvalues) {
        residuals.push(operator_residual(op, v, lambda));
    }
    let result = SpectrumResult {
        eps: op.eps,
        eigenvalues,
        residuals,
        eigenvectors,
        iterations,
        converged,
        path: p.path(),
        warnings,
    };
    if !converged {
        return Err(Error::NoConvergence { iterations, partial: Some(Box::new(result)) });
    }
    Ok(result)
}

/// Weights `rho = exp(-f / eps)` of the generator's inner product, per site.
pub fn rho_weights(op: &SparseOperator) -> Vec<f64> {
    match &op.ground {
        Some(g) => g.log_g.iter().map(|l| (2.0 * l).exp()).collect(),
        None => vec![1.0; op.len()],
    }
}

fn rho_norm(op: &SparseOperator, v: &LatticeVector) -> f64 {
    v.weighted_inner(v, &rho_weights(op)).unwrap_or(f64::NAN).sqrt()
}

/// `||A v - lambda v|| / ||v||` in the operator's own inner product.
pub fn operator_residual(op: &SparseOperator, v: &LatticeVector, lambda: f64) -> f64 {
    let av = op.apply(&v.values);
    let r: Vec<f64> = av.iter().zip(&v.values).map(|(a, x)| a - lambda * x).collect();
    let r = LatticeVector { lattice: v.lattice.clone(), values: r };
    match op.kind {
        OperatorKind::NegGenerator => rho_norm(op, &r) / rho_norm(op, v),
        _ => r.norm() / v.norm(),
    }
}
