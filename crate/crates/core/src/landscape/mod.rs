//! Energy landscapes: critical points, disconnecting height, relevant saddles
//! and the constants `E`, `A` of the predicted gap.

mod height;
mod prediction;
mod potential;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub use height::{disconnecting_height, Disconnection, GridSublevel};
pub use prediction::{eyring_kramers_constants, EKPrediction, SaddleContribution};
pub use potential::{
    builtin_names, builtin_region, validate_box, BoxValidation, CoeffValue, Monomial,
    PotentialFile, PotentialKind, PotentialSpec, Provenance, Region,
};

/// Relative size below which a Hessian eigenvalue counts as zero.
pub const DEGENERACY_RTOL: f64 = 1e-8;
/// Tolerance deciding whether two minima are at the same height.
pub const VALUE_TIE_TOL: f64 = 1e-9;
/// Default grid step of the sublevel sweeps.
pub const GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Saddle(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    /// Ascending.
    pub hessian_eigenvalues: Vec<f64>,
    /// Unit eigenvectors, in the order of `hessian_eigenvalues`.
    #[serde(skip)]
    pub hessian_eigenvectors: Vec<Vec<f64>>,
    pub index: usize,
    pub kind: CriticalKind,
}

impl CriticalPoint {
    pub fn det(&self) -> f64 {
        self.hessian_eigenvalues.iter().product()
    }

    pub fn is_minimum(&self) -> bool {
        self.index == 0
    }
}

/// Output of the Newton sweep.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointSearch {
    pub points: Vec<CriticalPoint>,
    /// Seeds whose Newton iteration did not converge.
    pub failed_seeds: usize,
}

impl CriticalPointSearch {
    pub fn minima(&self) -> Vec<&CriticalPoint> {
        self.points.iter().filter(|c| c.index == 0).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Symmetric eigendecomposition sorted ascending.
pub(crate) fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // first nonzero component positive
            if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
                if first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    (vals, vecs)
}

/// Classifies a point where the gradient vanishes.
pub fn classify_critical_point(
    p: &PotentialSpec,
    z: &[f64],
    newton_tol: f64,
) -> Result<CriticalPoint> {
    let g = norm(&p.grad(z));
    if g > newton_tol {
        return Err(Error::InvalidInput(format!(
            "|grad f| = {g:e} exceeds newton_tol at {z:?}"
        )));
    }
    let (vals, vecs) = sorted_eigen(p.hess(z));
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for &v in &vals {
        if scale == 0.0 || v.abs() < DEGENERACY_RTOL * scale {
            return Err(Error::NondegeneracyViolation { location: z.to_vec(), eigenvalue: v });
        }
    }
    let index = vals.iter().filter(|&&v| v < 0.0).count();
    Ok(CriticalPoint {
        location: z.to_vec(),
        value: p.eval(z),
        hessian_eigenvalues: vals,
        hessian_eigenvectors: vecs,
        index,
        kind: if index == 0 { CriticalKind::Minimum } else { CriticalKind::Saddle(index) },
    })
}

fn newton(p: &PotentialSpec, seed: &[f64], tol: f64, max_step: f64) -> Option<Vec<f64>> {
    let mut x = seed.to_vec();
    for _ in 0..100 {
        let g = p.grad(&x);
        if norm(&g) <= tol {
            // a couple of polishing steps bring equal roots to the same bits
            for _ in 0..2 {
                let step = p.hess(&x).lu().solve(&DVector::from_vec(p.grad(&x)))?;
                x.iter_mut().zip(step.iter()).for_each(|(xi, s)| *xi -= s);
            }
            return (norm(&p.grad(&x)) <= tol).then_some(x);
        }
        let step = p.hess(&x).lu().solve(&DVector::from_vec(g))?;
        let len = step.norm();
        if !len.is_finite() {
            return None;
        }
        let scale = if len > max_step { max_step / len } else { 1.0 };
        x.iter_mut().zip(step.iter()).for_each(|(xi, s)| *xi -= scale * s);
    }
    None
}

fn grid_axes(region: &Region, step: f64) -> Vec<Vec<f64>> {
    (0..region.dim())
        .map(|k| {
            let n = (2.0 * region.half_widths[k] / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| region.lo(k) + i as f64 * step).collect()
        })
        .collect()
}

fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(|a| a.len()).product();
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; axes.len()];
            for k in (0..axes.len()).rev() {
                x[k] = axes[k][idx % axes[k].len()];
                idx /= axes[k].len();
            }
            x
        })
        .collect()
}

/// Newton sweep on `grad f = 0` seeded from a uniform grid over `region`.
pub fn find_critical_points(
    p: &PotentialSpec,
    region: &Region,
    seed_grid_step: f64,
    newton_tol: f64,
) -> Result<CriticalPointSearch> {
    if !(seed_grid_step > 0.0) || !(newton_tol > 0.0) {
        return Err(Error::InvalidInput("seed_grid_step and newton_tol must be positive".into()));
    }
    if region.dim() != p.dim {
        return Err(Error::InvalidInput("region and potential dimensions differ".into()));
    }
    let seeds = grid_points(&grid_axes(region, seed_grid_step));
    let max_step = region.half_widths.iter().fold(0.0f64, |m, &h| m.max(h)) * 0.5;
    let solve = |s: &Vec<f64>| newton(p, s, newton_tol, max_step);
    #[cfg(feature = "parallel")]
    let found: Vec<Option<Vec<f64>>> = seeds.par_iter().map(solve).collect();
    #[cfg(not(feature = "parallel"))]
    let found: Vec<Option<Vec<f64>>> = seeds.iter().map(solve).collect();

    let failed_seeds = found.iter().filter(|r| r.is_none()).count();
    let mut roots: Vec<Vec<f64>> =
        found.into_iter().flatten().filter(|x| region.contains(x)).collect();
    roots.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for r in roots {
        if !unique.iter().any(|u| dist(u, &r) < 10.0 * newton_tol) {
            unique.push(r);
        }
    }
    let points = unique
        .iter()
        .map(|z| classify_critical_point(p, z, newton_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(CriticalPointSearch { points, failed_seeds })
}

/// An index-1 saddle with its unstable direction.
#[derive(Debug, Clone, Serialize)]
pub struct SaddleData {
    pub critical_point: CriticalPoint,
    pub mu: f64,
    pub tau: Vec<f64>,
    pub det_abs: f64,
}

impl SaddleData {
    pub fn from_critical_point(c: &CriticalPoint) -> Result<Self> {
        if c.index != 1 {
            return Err(Error::InvalidInput(format!(
                "point {:?} has index {}, not 1",
                c.location, c.index
            )));
        }
        Ok(SaddleData {
            critical_point: c.clone(),
            mu: c.hessian_eigenvalues[0],
            tau: c.hessian_eigenvectors[0].clone(),
            det_abs: c.det().abs(),
        })
    }

    pub fn location(&self) -> &[f64] {
        &self.critical_point.location
    }

    pub fn value(&self) -> f64 {
        self.critical_point.value
    }
}

/// Counts components of `{f < level}` among grid points of a ball.
fn ball_components(p: &PotentialSpec, center: &[f64], radius: f64, level: f64) -> usize {
    let d = center.len();
    let m = 20usize;
    let h = radius / m as f64;
    let side = 2 * m + 1;
    let total = side.pow(d as u32);
    let mut inside = vec![false; total];
    let mut x = vec![0.0; d];
    for (idx, flag) in inside.iter_mut().enumerate() {
        let mut rem = idx;
        let mut r2 = 0.0;
        for k in (0..d).rev() {
            let off = (rem % side) as f64 - m as f64;
            rem /= side;
            x[k] = center[k] + off * h;
            r2 += (off * h) * (off * h);
        }
        *flag = r2 <= radius * radius && p.eval(&x) < level;
    }
    let mut label = vec![usize::MAX; total];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..total {
        if !inside[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let mut stride = 1;
            for _ in 0..d {
                let coord = (i / stride) % side;
                if coord > 0 && inside[i - stride] && label[i - stride] == usize::MAX {
                    label[i - stride] = count;
                    stack.push(i - stride);
                }
                if coord + 1 < side && inside[i + stride] && label[i + stride] == usize::MAX {
                    label[i + stride] = count;
                    stack.push(i + stride);
                }
                stride *= side;
            }
        }
        count += 1;
    }
    count
}

/// Index-1 points at the level `h_star` that locally reconnect two sublevel components.
pub fn relevant_saddles(
    p: &PotentialSpec,
    candidates: &[CriticalPoint],
    h_star: f64,
    level_tol: f64,
) -> Result<Vec<SaddleData>> {
    if !(level_tol > 0.0) {
        return Err(Error::InvalidInput("level_tol must be positive".into()));
    }
    let mut out = Vec::new();
    for c in candidates {
        if c.index != 1 || (c.value - h_star).abs() > level_tol {
            continue;
        }
        let nearest = candidates
            .iter()
            .filter(|o| !std::ptr::eq(*o, c))
            .map(|o| dist(&o.location, &c.location))
            .fold(f64::INFINITY, f64::min);
        let r = (0.5 * nearest).min(0.25);
        let mu = c.hessian_eigenvalues[0].abs();
        let delta = 0.05 * mu * r * r;
        let above = ball_components(p, &c.location, r, c.value + delta);
        let below = ball_components(p, &c.location, r, c.value - delta);
        if above == 1 && below == 2 {
            out.push(SaddleData::from_critical_point(c)?);
        }
    }
    if out.is_empty() {
        return Err(Error::NoRelevantSaddle { h_star });
    }
    Ok(out)
}

/// Everything the spectral modules need about a two-well landscape.
#[derive(Debug, Clone, Serialize)]
pub struct Landscape {
    pub critical_points: Vec<CriticalPoint>,
    pub minima: [CriticalPoint; 2],
    pub disconnection: Disconnection,
    pub saddles: Vec<SaddleData>,
    pub prediction: EKPrediction,
}

/// Full pipeline for the two lowest minima of `p` inside `region`.
pub fn analyze(p: &PotentialSpec, region: &Region) -> Result<Landscape> {
    let search = find_critical_points(p, region, 0.1, 1e-10)?;
    let mut minima: Vec<CriticalPoint> = search.minima().into_iter().cloned().collect();
    if minima.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need two minima, found {}",
            minima.len()
        )));
    }
    minima.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut pair = [minima[0].clone(), minima[1].clone()];
    pair.sort_by(|a, b| a.location[0].total_cmp(&b.location[0]));
    let disconnection =
        disconnecting_height(p, &pair[0].location, &pair[1].location, region, GRID_STEP)?;
    let tol = (2.0 * disconnection.resolution).max(1e-3);
    let saddles = relevant_saddles(p, &search.points, disconnection.h_star, tol)?;
    let prediction = eyring_kramers_constants(&pair, &saddles, VALUE_TIE_TOL)?;
    Ok(Landscape {
        critical_points: search.points,
        minima: pair,
        disconnection,
        saddles,
        prediction,
    })
}

/// `eps * 1/2 * min_m sum_j sqrt(kappa_j)`, kappa_j the eigenvalues of `Hess f(m)/2`.
pub fn harmonic_threshold(minima: &[&CriticalPoint], eps: f64) -> f64 {
    minima
        .iter()
        .map(|m| m.hessian_eigenvalues.iter().map(|&l| (0.5 * l).sqrt()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        * 0.5
        * eps
}
