//! Barrier height and curvature prefactor of the predicted spectral gap.

use std::f64::consts::PI;

use serde::Serialize;

use super::{CriticalPoint, SaddleData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SaddleContribution {
    pub location: Vec<f64>,
    pub contribution: f64,
}

/// Predicted spectral gap `eps * A * exp(-E / eps)`.
#[derive(Debug, Clone, Serialize)]
pub struct EKPrediction {
    pub h_star: f64,
    pub h_low: f64,
    #[serde(rename = "E")]
    pub barrier: f64,
    #[serde(rename = "A")]
    pub prefactor: f64,
    pub per_saddle: Vec<SaddleContribution>,
    /// `true` when both minima sit at the same height.
    pub degenerate_case: bool,
    /// `sqrt(det Hess)` of the lower minimum, or the sum of both when tied.
    pub numerator: f64,
    pub min_dets: [f64; 2],
}

impl EKPrediction {
    pub fn gap(&self, eps: f64) -> f64 {
        eps * self.prefactor * (-self.barrier / eps).exp()
    }
}

pub fn eyring_kramers_constants(
    minima: &[CriticalPoint; 2],
    saddles: &[SaddleData],
    value_tie_tol: f64,
) -> Result<EKPrediction> {
    for m in minima {
        if m.index != 0 {
            return Err(Error::InvalidInput(format!(
                "point {:?} has index {}, not a minimum",
                m.location, m.index
            )));
        }
    }
    if saddles.is_empty() {
        return Err(Error::InvalidInput("no saddles".into()));
    }
    for s in saddles {
        if s.critical_point.index != 1 {
            return Err(Error::InvalidInput(format!(
                "saddle {:?} has index {}",
                s.location(),
                s.critical_point.index
            )));
        }
    }
    let h_star = saddles[0].value();
    if saddles.iter().any(|s| (s.value() - h_star).abs() > value_tie_tol) {
        return Err(Error::InvalidInput("saddle values are not tied".into()));
    }
    let (v0, v1) = (minima[0].value, minima[1].value);
    let degenerate_case = (v0 - v1).abs() <= value_tie_tol;
    let min_dets = [minima[0].det(), minima[1].det()];
    let numerator = if degenerate_case {
        min_dets[0].sqrt() + min_dets[1].sqrt()
    } else if v0 < v1 {
        min_dets[0].sqrt()
    } else {
        min_dets[1].sqrt()
    };
    let h_low = v0.min(v1);
    let per_saddle: Vec<SaddleContribution> = saddles
        .iter()
        .map(|s| SaddleContribution {
            location: s.location().to_vec(),
            contribution: s.mu.abs() / (2.0 * PI) * numerator / s.det_abs.sqrt(),
        })
        .collect();
    let prefactor = per_saddle.iter().map(|c| c.contribution).sum();
    let barrier = h_star - h_low;
    if !(barrier > 0.0) {
        return Err(Error::InvalidInput(format!("barrier height {barrier} is not positive")));
    }
    Ok(EKPrediction {
        h_star,
        h_low,
        barrier,
        prefactor,
        per_saddle,
        degenerate_case,
        numerator,
        min_dets,
    })
}
