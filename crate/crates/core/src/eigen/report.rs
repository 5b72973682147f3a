//! Eigenvalue counting, harmonic oscillator reference and the exponential rate fit.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{lowest_eigenpairs, SpectrumResult, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::landscape::EKPrediction;
use crate::lattice::{assemble_schrodinger, build_box};

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub n_small: usize,
    pub lambda_small: Option<f64>,
    pub lambda_next: f64,
    pub threshold: f64,
    pub separated: bool,
    pub ratio_to_prediction: Option<f64>,
}

/// Counts eigenvalues `<= threshold`; fails if one lies within 10% of it.
pub fn count_small_eigenvalues(
    spec: &SpectrumResult,
    threshold: f64,
    prediction: Option<&EKPrediction>,
) -> Result<GapReport> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput("threshold must be positive".into()));
    }
    for &l in &spec.eigenvalues {
        if (l - threshold).abs() < 0.1 * threshold {
            return Err(Error::NotSeparatedSpectrum { value: l, threshold });
        }
    }
    let n_small = spec.eigenvalues.iter().filter(|&&l| l <= threshold).count();
    if n_small == spec.eigenvalues.len() {
        return Err(Error::InvalidInput(format!(
            "all {n_small} computed eigenvalues are below the threshold; request more"
        )));
    }
    let lambda_small = n_small.checked_sub(1).map(|i| spec.eigenvalues[i]);
    let lambda_next = spec.eigenvalues[n_small];
    let ratio_to_prediction = match (prediction, spec.eigenvalues.get(1)) {
        (Some(ek), Some(&l2)) => Some(l2 / ek.gap(spec.eps)),
        _ => None,
    };
    Ok(GapReport {
        n_small,
        lambda_small,
        lambda_next,
        threshold,
        separated: lambda_small.is_none_or(|l| l < threshold) && threshold < lambda_next,
        ratio_to_prediction,
    })
}

/// Predicted and computed low levels of `-eps^2 Delta_eps + <x, M x>`, divided by `eps`.
#[derive(Debug, Clone, Serialize)]
pub struct HarmonicReference {
    pub lambda0_pred: f64,
    pub lambda1_pred: f64,
    pub lambda0_num: f64,
    pub lambda1_num: f64,
}

pub fn harmonic_reference(m: &DMatrix<f64>, eps: f64, half_width: f64) -> Result<HarmonicReference> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(Error::InvalidInput("M must be square".into()));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::InvalidInput("M is not positive definite".into()));
    }
    let kappa = m.clone().symmetric_eigenvalues();
    let roots: Vec<f64> = kappa.iter().map(|k| k.sqrt()).collect();
    let lambda0_pred: f64 = roots.iter().sum();
    let lambda1_pred = lambda0_pred + 2.0 * roots.iter().copied().fold(f64::INFINITY, f64::min);

    let lattice = Arc::new(build_box(d, eps, &vec![0.0; d], &vec![half_width; d])?);
    let mm = m.clone();
    let op = assemble_schrodinger(lattice, move |x| {
        let v = nalgebra::DVector::from_column_slice(x);
        v.dot(&(&mm * &v))
    });
    let spec = lowest_eigenpairs(&op, 2, DEFAULT_TOL, None)?;
    Ok(HarmonicReference {
        lambda0_pred,
        lambda1_pred,
        lambda0_num: spec.eigenvalues[0] / eps,
        lambda1_num: spec.eigenvalues[1] / eps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    #[serde(rename = "E_fit")]
    pub e_fit: f64,
    #[serde(rename = "A_fit")]
    pub a_fit: f64,
    /// `ln lambda2 - model` per point.
    pub residuals: Vec<f64>,
}

/// Least squares fit of `ln lambda2 = ln eps + ln A - E / eps`.
pub fn exponential_rate_fit(sweep: &[(f64, f64)]) -> Result<RateFit> {
    if sweep.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need 3", sweep.len())));
    }
    if sweep.iter().any(|&(e, l)| !(e > 0.0) || !(l > 0.0)) {
        return Err(Error::InvalidInput("eps and lambda2 must be positive".into()));
    }
    let t: Vec<f64> = sweep.iter().map(|&(e, _)| 1.0 / e).collect();
    let y: Vec<f64> = sweep.iter().map(|&(e, l)| l.ln() - e.ln()).collect();
    let (tmin, tmax) = t.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if (tmax - tmin) < 0.2 * tmax {
        return Err(Error::DegenerateFit(format!(
            "1/eps spans [{tmin}, {tmax}], less than 20%"
        )));
    }
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - tm) * (v - tm)).sum();
    let sty: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let residuals = t.iter().zip(&y).map(|(a, b)| b - (intercept + slope * a)).collect();
    Ok(RateFit { e_fit: -slope, a_fit: intercept.exp(), residuals })
}
