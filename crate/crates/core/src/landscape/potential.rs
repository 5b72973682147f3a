//! Polynomial landscapes with exact derivatives, plus the builtin registry.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REGISTRY: &str = include_str!("../../data/potentials.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub powers: Vec<u32>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Builtin(String),
    Polynomial,
}

/// A polynomial landscape `f: R^d -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub name: String,
    pub dim: usize,
    pub terms: Vec<Monomial>,
    pub provenance: Provenance,
}

/// Axis aligned region `center +- half_widths`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl Region {
    pub fn new(center: Vec<f64>, half_widths: Vec<f64>) -> Self {
        Region { center, half_widths }
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_widths[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + self.half_widths[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, &v)| (v - self.center[k]).abs() <= self.half_widths[k] * (1.0 + 1e-12))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Coefficient in a file: a literal or the name of a parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffValue {
    Number(f64),
    Param(String),
}

/// On-disk potential description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialFile {
    pub name: String,
    pub dim: usize,
    pub kind: PotentialKind,
    #[serde(default)]
    pub coeffs: BTreeMap<String, CoeffValue>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Builtin,
    Polynomial,
}

#[derive(Debug, Clone, Deserialize)]
struct RegistryEntry {
    dim: usize,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    coeffs: BTreeMap<String, CoeffValue>,
    #[serde(rename = "box")]
    region: Region,
}

fn registry() -> BTreeMap<String, RegistryEntry> {
    serde_json::from_str(REGISTRY).expect("builtin registry is valid json")
}

/// Names of the builtin potentials.
pub fn builtin_names() -> Vec<String> {
    registry().into_keys().collect()
}

/// Default box for a builtin potential.
pub fn builtin_region(name: &str) -> Result<Region> {
    registry()
        .remove(name)
        .map(|e| e.region)
        .ok_or_else(|| Error::InvalidInput(format!("unknown builtin potential '{name}'")))
}

fn parse_powers(key: &str, dim: usize) -> Result<Vec<u32>> {
    let powers: std::result::Result<Vec<u32>, _> =
        key.split(',').map(|s| s.trim().parse::<u32>()).collect();
    let powers =
        powers.map_err(|_| Error::InvalidInput(format!("bad multi-index '{key}'")))?;
    if powers.len() != dim {
        return Err(Error::InvalidInput(format!(
            "multi-index '{key}' has {} entries, expected {dim}",
            powers.len()
        )));
    }
    Ok(powers)
}

fn build_terms(
    dim: usize,
    coeffs: &BTreeMap<String, CoeffValue>,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<Monomial>> {
    let mut terms = Vec::with_capacity(coeffs.len());
    for (key, value) in coeffs {
        let coeff = match value {
            CoeffValue::Number(c) => *c,
            CoeffValue::Param(p) => *params
                .get(p)
                .ok_or_else(|| Error::InvalidInput(format!("unknown parameter '{p}'")))?,
        };
        if !coeff.is_finite() {
            return Err(Error::InvalidInput(format!("coefficient of '{key}' is not finite")));
        }
        if coeff != 0.0 {
            terms.push(Monomial { powers: parse_powers(key, dim)?, coeff });
        }
    }
    Ok(terms)
}

impl PotentialSpec {
    pub fn polynomial(name: &str, dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if terms.iter().any(|t| t.powers.len() != dim) {
            return Err(Error::InvalidInput("monomial length differs from dim".into()));
        }
        Ok(PotentialSpec { name: name.to_string(), dim, terms, provenance: Provenance::Polynomial })
    }

    /// 1D polynomial from coefficients `c[k]` of `x^k`.
    pub fn poly_1d(name: &str, coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(k, &c)| Monomial { powers: vec![k as u32], coeff: c })
            .collect();
        PotentialSpec { name: name.into(), dim: 1, terms, provenance: Provenance::Polynomial }
    }

    /// Builtin potential with parameter overrides (e.g. `c` for the anisotropic double well).
    pub fn builtin(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let entry = registry()
            .remove(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown builtin potential '{name}'")))?;
        let mut params = entry.params.clone();
        for (k, v) in overrides {
            if !params.contains_key(k) {
                return Err(Error::InvalidInput(format!("'{name}' has no parameter '{k}'")));
            }
            params.insert(k.clone(), *v);
        }
        let terms = build_terms(entry.dim, &entry.coeffs, &params)?;
        Ok(PotentialSpec {
            name: name.into(),
            dim: entry.dim,
            terms,
            provenance: Provenance::Builtin(name.into()),
        })
    }

    pub fn double_well_1d() -> Self {
        Self::builtin("double_well_1d", &BTreeMap::new()).expect("registered")
    }

    pub fn double_well_aniso_2d(c: f64) -> Self {
        let mut p = BTreeMap::new();
        p.insert("c".to_string(), c);
        Self::builtin("double_well_aniso_2d", &p).expect("registered")
    }

    pub fn triple_well_1d() -> Self {
        Self::builtin("triple_well_1d", &BTreeMap::new()).expect("registered")
    }

    pub fn single_well_1d() -> Self {
        Self::builtin("single_well_1d", &BTreeMap::new()).expect("registered")
    }

    pub fn from_file(file: &PotentialFile) -> Result<Self> {
        match file.kind {
            PotentialKind::Builtin => Self::builtin(&file.name, &file.params),
            PotentialKind::Polynomial => {
                let terms = build_terms(file.dim, &file.coeffs, &file.params)?;
                let mut p = Self::polynomial(&file.name, file.dim, terms)?;
                p.provenance = Provenance::Polynomial;
                Ok(p)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PotentialFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("potential file: {e}")))?;
        Self::from_file(&file)
    }

    /// Same landscape plus a constant.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.terms.push(Monomial { powers: vec![0; self.dim], coeff: c });
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(x)
                    .fold(t.coeff, |acc, (&p, &xi)| acc * xi.powi(p as i32))
            })
            .sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut g = vec![0.0; d];
        for t in &self.terms {
            for (j, gj) in g.iter_mut().enumerate() {
                let pj = t.powers[j];
                if pj == 0 {
                    continue;
                }
                let mut v = t.coeff * pj as f64;
                for (i, (&p, &xi)) in t.powers.iter().zip(x).enumerate() {
                    let e = if i == j { p - 1 } else { p };
                    v *= xi.powi(e as i32);
                }
                *gj += v;
            }
        }
        g
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut h = DMatrix::zeros(d, d);
        for t in &self.terms {
            for a in 0..d {
                for b in a..d {
                    let mut e: Vec<u32> = t.powers.clone();
                    let mut v = t.coeff;
                    if e[a] == 0 {
                        continue;
                    }
                    v *= e[a] as f64;
                    e[a] -= 1;
                    if e[b] == 0 {
                        continue;
                    }
                    v *= e[b] as f64;
                    e[b] -= 1;
                    for (i, &xi) in x.iter().enumerate() {
                        v *= xi.powi(e[i] as i32);
                    }
                    h[(a, b)] += v;
                    if a != b {
                        h[(b, a)] += v;
                    }
                }
            }
        }
        h
    }

    /// Smallest `|grad f|` over a grid on the boundary of `region`.
    pub fn min_boundary_gradient(&self, region: &Region, samples: usize) -> f64 {
        let mut best = f64::INFINITY;
        boundary_points(region, samples, |x| {
            let g = self.grad(x);
            best = best.min(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        });
        best
    }

    /// Smallest value of `f` over a grid on the boundary of `region`.
    pub fn min_boundary_value(&self, region: &Region, samples: usize) -> f64 {
        let mut best = f64::INFINITY;
        boundary_points(region, samples, |x| best = best.min(self.eval(x)));
        best
    }
}

/// Visits points of a `samples^d` grid lying on the boundary faces.
fn boundary_points(region: &Region, samples: usize, mut visit: impl FnMut(&[f64])) {
    let d = region.dim();
    let n = samples.max(2);
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut rem = idx;
        let mut on_face = false;
        for k in (0..d).rev() {
            let i = rem % n;
            rem /= n;
            if i == 0 || i == n - 1 {
                on_face = true;
            }
            x[k] = region.lo(k) + 2.0 * region.half_widths[k] * i as f64 / (n - 1) as f64;
        }
        if on_face {
            visit(&x);
        }
    }
}

/// Result of checking that a box is large enough for Dirichlet truncation.
#[derive(Debug, Clone, Serialize)]
pub struct BoxValidation {
    pub boundary_min: f64,
    pub required: f64,
    pub min_boundary_gradient: f64,
    pub ok: bool,
}

/// Boundary values of `f` must exceed `reference + margin`, where the margin
/// is `max(10 eps ln(1/eps_min), barrier)`.
pub fn validate_box(
    p: &PotentialSpec,
    region: &Region,
    reference: f64,
    barrier: f64,
    eps: f64,
    eps_min: f64,
) -> BoxValidation {
    let margin = (10.0 * eps * (1.0 / eps_min).ln()).max(barrier);
    let boundary_min = p.min_boundary_value(region, 101);
    let required = reference + margin;
    BoxValidation {
        boundary_min,
        required,
        min_boundary_gradient: p.min_boundary_gradient(region, 101),
        ok: boundary_min >= required,
    }
}
