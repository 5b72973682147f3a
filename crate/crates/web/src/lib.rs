//! Browser bindings: each export takes a potential description as JSON and
//! returns a JSON string, `{"error": ...}` on failure.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;
use witten_core::eigen::{lowest_eigenpairs, DEFAULT_TOL};
use witten_core::landscape::{analyze, builtin_region, find_critical_points, harmonic_threshold, Region};
use witten_core::lattice::{assemble_witten, build_box};
use witten_core::quasimode::{build_quasimode, evaluate, QuasimodeConfig};
use witten_core::{LatticeBox, PotentialSpec, SparseOperator};

/// Keeps a single call well under a second in the browser.
pub const MAX_DEMO_SITES: usize = 4001;

const PLOT_POINTS: usize = 401;

/// A 1D builtin by name, or `coeffs` (ascending powers of x) on `[-half_width, half_width]`.
#[derive(Debug, Clone, Deserialize)]
pub struct DemoPotential {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub half_width: Option<f64>,
}

fn default_name() -> String {
    "double_well_1d".into()
}

impl DemoPotential {
    fn resolve(&self) -> Result<(PotentialSpec, Region), String> {
        let (p, mut region) = match &self.coeffs {
            Some(c) => {
                if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
                    return Err("coefficients must be finite and non-empty".into());
                }
                (PotentialSpec::poly_1d(&self.name, c), Region::new(vec![0.0], vec![2.0]))
            }
            None => {
                let p = PotentialSpec::builtin(&self.name, &Default::default()).map_err(|e| e.to_string())?;
                (p, builtin_region(&self.name).map_err(|e| e.to_string())?)
            }
        };
        if p.dim != 1 {
            return Err(format!("'{}' is {}-dimensional; the demo plots 1D potentials", self.name, p.dim));
        }
        if let Some(h) = self.half_width {
            if !(h > 0.0 && h.is_finite()) {
                return Err("half_width must be positive".into());
            }
            region.half_widths = vec![h];
        }
        Ok((p, region))
    }
}

fn parse(potential: &str) -> Result<(PotentialSpec, Region), String> {
    let d: DemoPotential = serde_json::from_str(potential).map_err(|e| format!("potential: {e}"))?;
    d.resolve()
}

fn operator(p: &PotentialSpec, region: &Region, eps: f64) -> Result<SparseOperator, String> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err("eps must be positive".into());
    }
    let lat = build_box(1, eps, &region.center, &region.half_widths).map_err(|e| e.to_string())?;
    if lat.len() > MAX_DEMO_SITES {
        return Err(format!("{} sites; raise eps or shrink the box (limit {MAX_DEMO_SITES})", lat.len()));
    }
    assemble_witten(p, Arc::new(lat)).map_err(|e| e.to_string())
}

fn sites(lat: &LatticeBox) -> Vec<f64> {
    (0..lat.len()).map(|i| lat.site(i)[0]).collect()
}

/// Potential samples plus whatever the landscape analysis finds.
pub fn landscape_value(potential: &str) -> Result<Value, String> {
    let (p, region) = parse(potential)?;
    let (lo, hi) = (region.lo(0), region.hi(0));
    let x: Vec<f64> = (0..PLOT_POINTS).map(|i| lo + (hi - lo) * i as f64 / (PLOT_POINTS - 1) as f64).collect();
    let v: Vec<f64> = x.iter().map(|&t| p.eval(&[t])).collect();
    let cps = find_critical_points(&p, &region, 0.05, 1e-10).map_err(|e| e.to_string())?;
    let mut out = json!({ "x": x, "v": v, "critical_points": cps.points });
    match analyze(&p, &region) {
        Ok(land) => {
            out["E"] = json!(land.prediction.barrier);
            out["A"] = json!(land.prediction.prefactor);
            out["h_star"] = json!(land.prediction.h_star);
        }
        Err(e) => out["note"] = json!(e.to_string()),
    }
    Ok(out)
}

/// Lowest `k` eigenvalues and eigenvectors at `eps`, with the predicted gap when there is one.
pub fn spectrum_value(potential: &str, eps: f64, k: usize) -> Result<Value, String> {
    let (p, region) = parse(potential)?;
    let op = operator(&p, &region, eps)?;
    let k = k.clamp(1, 8).min(op.len());
    let s = lowest_eigenpairs(&op, k, DEFAULT_TOL, None).map_err(|e| e.to_string())?;
    let modes: Vec<Vec<f64>> = s.eigenvectors.iter().map(|v| unit_max(&v.values)).collect();
    let mut out = json!({
        "x": sites(&op.lattice),
        "eigenvalues": s.eigenvalues,
        "residuals": s.residuals,
        "modes": modes,
    });
    if let Ok(cps) = find_critical_points(&p, &region, 0.05, 1e-10) {
        let mins = cps.minima();
        if !mins.is_empty() {
            let tau = harmonic_threshold(&mins, eps);
            out["threshold"] = json!(tau);
            out["n_small"] = json!(s.eigenvalues.iter().filter(|&&l| l <= tau).count());
        }
    }
    if let (Ok(land), Some(&l2)) = (analyze(&p, &region), s.eigenvalues.get(1)) {
        let g = land.prediction.gap(eps);
        out["predicted"] = json!(g);
        out["ratio"] = json!(l2 / g);
    }
    Ok(out)
}

/// Quasimode next to the second eigenvector, both scaled to unit maximum.
pub fn quasimode_value(potential: &str, eps: f64) -> Result<Value, String> {
    let (p, region) = parse(potential)?;
    let land = analyze(&p, &region).map_err(|e| e.to_string())?;
    let cfg = QuasimodeConfig::new(&p, &region, &land, None).map_err(|e| e.to_string())?;
    let op = operator(&p, &region, eps)?;
    let q = build_quasimode(&p, op.lattice.clone(), &cfg, eps).map_err(|e| e.to_string())?;
    let mins: Vec<_> = land.minima.iter().collect();
    let r = evaluate(&p, &op, &cfg, &land.prediction, harmonic_threshold(&mins, eps)).map_err(|e| e.to_string())?;
    let s = lowest_eigenpairs(&op, 2, DEFAULT_TOL, None).map_err(|e| e.to_string())?;
    let mut u2 = s.eigenvectors[1].values.clone();
    let overlap: f64 = u2.iter().zip(&q.psi.values).map(|(a, b)| a * b).sum();
    if overlap < 0.0 {
        u2.iter_mut().for_each(|v| *v = -*v);
    }
    let cos = overlap.abs() / (q.psi.norm_sq() / eps).sqrt() / (s.eigenvectors[1].norm_sq() / eps).sqrt();
    Ok(json!({
        "x": sites(&op.lattice),
        "psi": unit_max(&q.psi.values),
        "eigenvector": unit_max(&u2),
        "overlap": cos,
        "lambda2": s.eigenvalues[1],
        "rayleigh_quotient": r.rayleigh_quotient,
        "lower_bound": r.lower_bound,
        "predicted": land.prediction.gap(eps),
        "norm_ratio": r.norm_sq_measured / r.norm_sq_predicted,
        "dirichlet_ratio": r.dirichlet_measured / r.dirichlet_predicted,
        "rho": cfg.rho,
    }))
}

fn unit_max(v: &[f64]) -> Vec<f64> {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / m).collect()
}

fn render(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen]
pub fn landscape(potential: &str) -> String {
    render(landscape_value(potential))
}

#[wasm_bindgen]
pub fn spectrum(potential: &str, eps: f64, k: usize) -> String {
    render(spectrum_value(potential, eps, k))
}

#[wasm_bindgen]
pub fn quasimode(potential: &str, eps: f64) -> String {
    render(quasimode_value(potential, eps))
}
