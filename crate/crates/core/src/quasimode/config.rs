//! Tube width, well components and saddle orientation for the quasimode.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::{dist, CriticalPoint, GridSublevel, Landscape, PotentialSpec, Region, SaddleData, GRID_STEP};
use crate::smooth::plateau;

/// First tube half-width tried, as a fraction of the distance from a saddle
/// to the nearest other critical point.
pub const RHO_START_FRACTION: f64 = 0.9;
/// Number of halvings before giving up.
pub const RHO_HALVINGS: usize = 6;

/// Grid classification at level `h* + rho`.
#[derive(Debug, Clone)]
struct Classification {
    grid: Arc<GridSublevel>,
    /// Component label of each grid point of `B`, `usize::MAX` elsewhere.
    labels: Vec<usize>,
    /// Labels of the components containing `m0` and `m1`.
    well_labels: [usize; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasimodeConfig {
    pub rho: f64,
    pub h_star: f64,
    /// `theta = 1` below the first level, `0` above the second.
    pub theta_levels: [f64; 2],
    /// Saddles with `tau` pointing from the `m0` side to the `m1` side.
    pub saddles: Vec<SaddleData>,
    pub minima: [CriticalPoint; 2],
    /// Halvings used by the automatic choice of `rho` (0 when given).
    pub halvings: usize,
    #[serde(skip)]
    classes: Classification,
}

/// Where a point of `S_f(h* + rho)` belongs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Well(usize),
    Tube(usize),
}

/// `<x - s, tau>`.
pub fn reaction_coordinate(s: &SaddleData, x: &[f64]) -> f64 {
    x.iter().zip(s.location()).zip(&s.tau).map(|((a, b), t)| (a - b) * t).sum()
}

impl QuasimodeConfig {
    /// Validated configuration. With `rho = None` the width starts at
    /// [`RHO_START_FRACTION`] of the saddle spacing and is halved until valid.
    pub fn new(p: &PotentialSpec, region: &Region, land: &Landscape, rho: Option<f64>) -> Result<Self> {
        let grid = Arc::new(GridSublevel::new(p, region, GRID_STEP)?);
        match rho {
            Some(r) => Self::build(p, &grid, land, r, 0),
            None => {
                let spacing = land
                    .saddles
                    .iter()
                    .map(|s| {
                        land.critical_points
                            .iter()
                            .filter(|c| dist(&c.location, s.location()) > 1e-9)
                            .map(|c| dist(&c.location, s.location()))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::INFINITY, f64::min);
                let mut r = RHO_START_FRACTION * spacing;
                let mut last = None;
                for halvings in 0..=RHO_HALVINGS {
                    match Self::build(p, &grid, land, r, halvings) {
                        Ok(cfg) => return Ok(cfg),
                        Err(e @ Error::ConfigInvalid(_)) => last = Some(e),
                        Err(e) => return Err(e),
                    }
                    r *= 0.5;
                }
                Err(last.unwrap_or_else(|| Error::ConfigInvalid("no saddles".into())))
            }
        }
    }

    fn build(
        p: &PotentialSpec,
        grid: &Arc<GridSublevel>,
        land: &Landscape,
        rho: f64,
        halvings: usize,
    ) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidInput("rho must be positive".into()));
        }
        let h_star = land.prediction.h_star;
        let level = h_star + rho;
        let n = grid.len();
        let mut mask = vec![false; n];
        for i in 0..n {
            if grid.values[i] >= level {
                continue;
            }
            if grid.on_boundary(i) {
                return Err(Error::ConfigInvalid(format!(
                    "sublevel set at h* + rho = {level} reaches the box boundary"
                )));
            }
            let x = grid.point(i);
            let mut tube = None;
            for (k, s) in land.saddles.iter().enumerate() {
                let xi = reaction_coordinate(s, &x);
                if xi.abs() <= rho {
                    if tube.is_some() {
                        return Err(Error::ConfigInvalid(format!(
                            "tubes overlap at {x:?} for rho = {rho}"
                        )));
                    }
                    tube = Some(k);
                    let phi = grid.values[i] + s.mu.abs() * xi * xi;
                    if dist(&x, s.location()) > 1e-9 && phi <= s.value() {
                        return Err(Error::ConfigInvalid(format!(
                            "f + |mu| xi^2 does not exceed f(s) at {x:?} for rho = {rho}"
                        )));
                    }
                }
            }
            mask[i] = tube.is_none();
        }
        let (labels, count) = grid.components(&mask);
        let mut well_labels = [usize::MAX; 2];
        for (w, m) in land.minima.iter().enumerate() {
            let idx = grid.nearest(&m.location);
            well_labels[w] = labels[idx];
            if labels[idx] == usize::MAX {
                return Err(Error::ConfigInvalid(format!(
                    "minimum {:?} lies inside a tube for rho = {rho}",
                    m.location
                )));
            }
        }
        if count != 2 || well_labels[0] == well_labels[1] {
            return Err(Error::ConfigInvalid(format!(
                "outside the tubes the sublevel set has {count} components, expected two wells (rho = {rho})"
            )));
        }
        let classes = Classification { grid: grid.clone(), labels, well_labels };
        let mut cfg = QuasimodeConfig {
            rho,
            h_star,
            theta_levels: [h_star + 0.5 * rho, h_star + 0.75 * rho],
            saddles: land.saddles.clone(),
            minima: land.minima.clone(),
            halvings,
            classes,
        };
        cfg.orient(p)?;
        Ok(cfg)
    }

    /// Flips `tau` so that `xi > 0` points into the `m1` well.
    fn orient(&mut self, p: &PotentialSpec) -> Result<()> {
        for k in 0..self.saddles.len() {
            let s = self.saddles[k].clone();
            let probe = |sign: f64| -> Option<usize> {
                let mut x: Vec<f64> =
                    s.location().iter().zip(&s.tau).map(|(a, t)| a + sign * 1e-3 * t).collect();
                let h = 0.25 * GRID_STEP;
                for _ in 0..200_000 {
                    if let Some(w) = self.well_at(&x) {
                        return Some(w);
                    }
                    let g = p.grad(&x);
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if gn == 0.0 {
                        return None;
                    }
                    x.iter_mut().zip(&g).for_each(|(a, b)| *a -= h * b / gn);
                }
                None
            };
            match (probe(1.0), probe(-1.0)) {
                (Some(1), Some(0)) => {}
                (Some(0), Some(1)) => {
                    self.saddles[k].tau.iter_mut().for_each(|t| *t = -*t);
                }
                other => {
                    return Err(Error::ConfigInvalid(format!(
                        "descent from saddle {:?} does not reach both wells ({other:?})",
                        s.location()
                    )))
                }
            }
        }
        Ok(())
    }

    /// Well index for a point of `B` (outside every tube), if any.
    fn well_at(&self, x: &[f64]) -> Option<usize> {
        if self.saddles.iter().any(|s| reaction_coordinate(s, x).abs() <= self.rho) {
            return None;
        }
        let label = self.classes.labels[self.classes.grid.nearest(x)];
        self.classes.well_labels.iter().position(|&l| l == label && l != usize::MAX)
    }

    /// Classifies a point of `S_f(h* + 3 rho / 4)`. Grid points near `x`
    /// (up to three cells away) settle points that fall between labels.
    pub fn classify(&self, x: &[f64]) -> Option<Part> {
        if let Some(k) = self.saddles.iter().position(|s| reaction_coordinate(s, x).abs() <= self.rho) {
            return Some(Part::Tube(k));
        }
        let grid = &self.classes.grid;
        let centre = grid.nearest(x);
        let d = grid.dim();
        let mut found: Option<usize> = None;
        let reach = 3i64;
        let side = (2 * reach + 1) as usize;
        let c = grid.coords(centre);
        for off in 0..side.pow(d as u32) {
            let mut r = off;
            let mut q = vec![0.0; d];
            let mut inside = true;
            for k in (0..d).rev() {
                let o = (r % side) as i64 - reach;
                r /= side;
                let ck = c[k] as i64 + o;
                if ck < 0 || ck >= grid.shape[k] as i64 {
                    inside = false;
                    break;
                }
                q[k] = grid.lo[k] + ck as f64 * grid.step;
            }
            if !inside {
                continue;
            }
            let label = self.classes.labels[grid.nearest(&q)];
            if let Some(w) = self.classes.well_labels.iter().position(|&l| l == label) {
                match found {
                    None => found = Some(w),
                    Some(v) if v != w => return None,
                    _ => {}
                }
            }
        }
        found.map(Part::Well)
    }

    /// The even cutoff: 1 on `[-rho/3, rho/3]`, 0 beyond `2 rho / 3`.
    pub fn chi(&self, eta: f64) -> f64 {
        plateau(eta, self.rho / 3.0, 2.0 * self.rho / 3.0)
    }
}
