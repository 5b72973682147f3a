//! Sublevel sets of `f` on a uniform grid and the disconnecting height.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use super::{PotentialSpec, Region};
use crate::error::{Error, Result};

/// Largest grid handled by the sublevel sweeps.
pub const MAX_GRID_POINTS: usize = 20_000_000;

/// `f` sampled on a uniform grid over a region, lexicographic order.
#[derive(Debug, Clone)]
pub struct GridSublevel {
    pub lo: Vec<f64>,
    pub step: f64,
    pub shape: Vec<usize>,
    strides: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridSublevel {
    pub fn new(p: &PotentialSpec, region: &Region, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidInput("grid step must be positive".into()));
        }
        let d = region.dim();
        let shape: Vec<usize> = (0..d)
            .map(|k| (2.0 * region.half_widths[k] / step + 1e-9).floor() as usize + 1)
            .collect();
        let total = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        let total = match total {
            Some(t) if t <= MAX_GRID_POINTS => t,
            _ => {
                return Err(Error::TooLarge { sites: total.unwrap_or(usize::MAX), limit: MAX_GRID_POINTS })
            }
        };
        let mut strides = vec![1; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let lo: Vec<f64> = (0..d).map(|k| region.lo(k)).collect();
        let mut grid = GridSublevel { lo, step, shape, strides, values: Vec::new() };
        let eval = |i: usize| p.eval(&grid.point(i));
        #[cfg(feature = "parallel")]
        let values = (0..total).into_par_iter().map(eval).collect();
        #[cfg(not(feature = "parallel"))]
        let values = (0..total).map(eval).collect();
        grid.values = values;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim()];
        for k in 0..self.dim() {
            c[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
        c
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx)
            .iter()
            .enumerate()
            .map(|(k, &c)| self.lo[k] + c as f64 * self.step)
            .collect()
    }

    /// Index of the grid point nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: &[f64]) -> usize {
        (0..self.dim())
            .map(|k| {
                let c = ((x[k] - self.lo[k]) / self.step).round();
                let c = c.clamp(0.0, (self.shape[k] - 1) as f64) as usize;
                c * self.strides[k]
            })
            .sum()
    }

    pub fn on_boundary(&self, idx: usize) -> bool {
        self.coords(idx).iter().zip(&self.shape).any(|(&c, &n)| c == 0 || c + 1 == n)
    }

    /// Calls `visit` for each axis neighbor inside the grid.
    pub fn for_neighbors(&self, idx: usize, mut visit: impl FnMut(usize)) {
        for k in 0..self.dim() {
            let c = (idx / self.strides[k]) % self.shape[k];
            if c > 0 {
                visit(idx - self.strides[k]);
            }
            if c + 1 < self.shape[k] {
                visit(idx + self.strides[k]);
            }
        }
    }

    /// Connected components of the masked points; unmasked points get `usize::MAX`.
    pub fn components(&self, mask: &[bool]) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.len() {
            if !mask[start] || label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(i) = stack.pop() {
                self.for_neighbors(i, |j| {
                    if mask[j] && label[j] == usize::MAX {
                        label[j] = count;
                        stack.push(j);
                    }
                });
            }
            count += 1;
        }
        (label, count)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    boundary: Vec<bool>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n], boundary: vec![false; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let flag = self.boundary[ra] || self.boundary[rb];
        let root = if self.rank[ra] < self.rank[rb] {
            self.parent[ra] = rb;
            rb
        } else {
            self.parent[rb] = ra;
            if self.rank[ra] == self.rank[rb] {
                self.rank[ra] += 1;
            }
            ra
        };
        self.boundary[root] = flag;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Disconnection {
    pub h_star: f64,
    /// Largest f-difference between the merging grid point and its neighbors.
    pub resolution: f64,
    pub merge_point: Vec<f64>,
}

/// Sorted-sweep union-find over the grid filtration of `f`.
pub fn disconnecting_height(
    p: &PotentialSpec,
    m0: &[f64],
    m1: &[f64],
    region: &Region,
    grid_step: f64,
) -> Result<Disconnection> {
    let grid = GridSublevel::new(p, region, grid_step)?;
    let (c0, c1) = (grid.nearest(m0), grid.nearest(m1));
    if c0 == c1 {
        return Err(Error::NotSeparated);
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid.values[a].total_cmp(&grid.values[b]).then(a.cmp(&b)));
    let mut uf = UnionFind::new(grid.len());
    let mut added = vec![false; grid.len()];
    for &i in &order {
        added[i] = true;
        uf.boundary[i] = grid.on_boundary(i);
        let mut nbrs = Vec::with_capacity(2 * grid.dim());
        grid.for_neighbors(i, |j| nbrs.push(j));
        for &j in &nbrs {
            if added[j] {
                uf.union(i, j);
            }
        }
        if !(added[c0] && added[c1]) {
            continue;
        }
        let r0 = uf.find(c0);
        if r0 != uf.find(c1) {
            continue;
        }
        // both wells appeared in this very step already joined
        if i == c0 || i == c1 {
            return Err(Error::NotSeparated);
        }
        let level = grid.values[i];
        if uf.boundary[r0] {
            return Err(Error::BoxTooSmall { level });
        }
        let resolution =
            nbrs.iter().map(|&j| (grid.values[j] - level).abs()).fold(0.0, f64::max);
        return Ok(Disconnection { h_star: level, resolution, merge_point: grid.point(i) });
    }
    Err(Error::NotSeparated)
}
