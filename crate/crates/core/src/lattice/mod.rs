//! Truncated lattices `eps Z^d`, lattice vectors and the nearest-neighbor operators on them.

mod forms;
mod operator;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::Region;

pub use forms::{
    ground_state_transform, ims_defect, potential_term, potential_term_checked,
    weighted_gradient_form, Direction, QuadraticPartition, Transformed,
};
pub use operator::{
    assemble_neg_generator, assemble_schrodinger, assemble_witten, GroundState, OperatorKind,
    SparseOperator,
};

/// Default cap on the number of lattice sites.
pub const MAX_SITES: usize = 5_000_000;

/// Sites `center + eps k` with `|eps k_i| <= half_widths[i]`, enumerated
/// lexicographically in `k` (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeBox {
    pub dim: usize,
    pub eps: f64,
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    /// Number of sites per axis (`2K + 1`).
    pub shape: Vec<usize>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    reach: Vec<i64>,
}

pub fn build_box(dim: usize, eps: f64, center: &[f64], half_widths: &[f64]) -> Result<LatticeBox> {
    build_box_with_limit(dim, eps, center, half_widths, MAX_SITES)
}

pub fn build_box_with_limit(
    dim: usize,
    eps: f64,
    center: &[f64],
    half_widths: &[f64],
    max_sites: usize,
) -> Result<LatticeBox> {
    if dim == 0 || center.len() != dim || half_widths.len() != dim {
        return Err(Error::InvalidInput("box dimensions are inconsistent".into()));
    }
    if !(eps > 0.0) || half_widths.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidInput("eps and half widths must be positive".into()));
    }
    let reach: Vec<i64> = half_widths.iter().map(|&h| (h / eps + 1e-9).floor() as i64).collect();
    let shape: Vec<usize> = reach.iter().map(|&k| (2 * k + 1) as usize).collect();
    let sites = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if sites > max_sites {
        return Err(Error::TooLarge { sites, limit: max_sites });
    }
    let mut strides = vec![1; dim];
    for k in (0..dim - 1).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    Ok(LatticeBox {
        dim,
        eps,
        center: center.to_vec(),
        half_widths: half_widths.to_vec(),
        shape,
        strides,
        reach,
    })
}

impl LatticeBox {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Integer coordinates `k` of site `i`.
    pub fn coords(&self, mut i: usize) -> Vec<i64> {
        let mut k = vec![0; self.dim];
        for a in 0..self.dim {
            k[a] = (i / self.strides[a]) as i64 - self.reach[a];
            i %= self.strides[a];
        }
        k
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim {
            let c = k[a] + self.reach[a];
            if c < 0 || c >= self.shape[a] as i64 {
                return None;
            }
            idx += c as usize * self.strides[a];
        }
        Some(idx)
    }

    pub fn point_of(&self, k: &[i64]) -> Vec<f64> {
        k.iter().zip(&self.center).map(|(&ki, &c)| c + self.eps * ki as f64).collect()
    }

    pub fn site(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.site_into(i, &mut x);
        x
    }

    pub fn site_into(&self, mut i: usize, x: &mut [f64]) {
        for a in 0..self.dim {
            let k = (i / self.strides[a]) as i64 - self.reach[a];
            i %= self.strides[a];
            x[a] = self.center[a] + self.eps * k as f64;
        }
    }

    /// Position along `axis` of site `i` in `0..shape[axis]`.
    pub fn axis_position(&self, i: usize, axis: usize) -> usize {
        (i / self.strides[axis]) % self.shape[axis]
    }

    /// Neighbor `i + sign e_axis`, or `None` outside the box.
    pub fn neighbor(&self, i: usize, axis: usize, sign: i8) -> Option<usize> {
        let c = self.axis_position(i, axis);
        if sign > 0 {
            (c + 1 < self.shape[axis]).then(|| i + self.strides[axis])
        } else {
            (c > 0).then(|| i - self.strides[axis])
        }
    }

    /// All 2d neighbors lie inside the box.
    pub fn is_interior(&self, i: usize) -> bool {
        (0..self.dim).all(|a| {
            let c = self.axis_position(i, a);
            c > 0 && c + 1 < self.shape[a]
        })
    }

    /// Site nearest to `x`, clamped to the box.
    pub fn nearest_site(&self, x: &[f64]) -> usize {
        (0..self.dim)
            .map(|a| {
                let k = ((x[a] - self.center[a]) / self.eps).round() as i64;
                let c = (k + self.reach[a]).clamp(0, self.shape[a] as i64 - 1);
                c as usize * self.strides[a]
            })
            .sum()
    }

    /// Measure weight `eps^d` of one site.
    pub fn cell_volume(&self) -> f64 {
        self.eps.powi(self.dim as i32)
    }

    pub fn region(&self) -> Region {
        Region::new(self.center.clone(), self.half_widths.clone())
    }
}

/// Real function on the sites of a box; inner products carry the `eps^d` weight.
#[derive(Debug, Clone)]
pub struct LatticeVector {
    pub lattice: Arc<LatticeBox>,
    pub values: Vec<f64>,
}

impl LatticeVector {
    pub fn new(lattice: Arc<LatticeBox>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::ShapeMismatch);
        }
        Ok(LatticeVector { lattice, values })
    }

    pub fn zeros(lattice: Arc<LatticeBox>) -> Self {
        let n = lattice.len();
        LatticeVector { lattice, values: vec![0.0; n] }
    }

    pub fn from_fn(lattice: Arc<LatticeBox>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; lattice.dim];
        let values = (0..lattice.len())
            .map(|i| {
                lattice.site_into(i, &mut x);
                f(&x)
            })
            .collect();
        LatticeVector { lattice, values }
    }

    pub fn same_box(&self, other: &LatticeVector) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice
    }

    pub fn inner(&self, other: &LatticeVector) -> Result<f64> {
        if !self.same_box(other) {
            return Err(Error::ShapeMismatch);
        }
        Ok(self.lattice.cell_volume() * dot(&self.values, &other.values))
    }

    pub fn norm_sq(&self) -> f64 {
        self.lattice.cell_volume() * dot(&self.values, &self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `sum_x eps^d w(x) u(x) v(x)`.
    pub fn weighted_inner(&self, other: &LatticeVector, weight: &[f64]) -> Result<f64> {
        if !self.same_box(other) || weight.len() != self.values.len() {
            return Err(Error::ShapeMismatch);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .zip(weight)
            .map(|((a, b), w)| a * b * w)
            .sum();
        Ok(self.lattice.cell_volume() * s)
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &LatticeVector) -> Result<()> {
        if !self.same_box(other) {
            return Err(Error::ShapeMismatch);
        }
        self.values.iter_mut().zip(&other.values).for_each(|(s, o)| *s += a * o);
        Ok(())
    }

    /// Zero on every site with a neighbor outside the box.
    pub fn is_interior_supported(&self) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(i, &v)| v == 0.0 || self.lattice.is_interior(i))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
