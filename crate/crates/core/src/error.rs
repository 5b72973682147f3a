//! Error and warning types shared by every module.

use serde::Serialize;
use thiserror::Error;

use crate::eigen::SpectrumResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("lattice box would contain {sites} sites (limit {limit})")]
    TooLarge { sites: usize, limit: usize },

    #[error("vector and operator live on different lattice boxes")]
    ShapeMismatch,

    #[error("degenerate critical point at {location:?}: hessian eigenvalue {eigenvalue:e}")]
    NondegeneracyViolation { location: Vec<f64>, eigenvalue: f64 },

    #[error("the two minima are not separated by any sublevel set on the grid")]
    NotSeparated,

    #[error("sublevel component touches the box boundary at level {level}")]
    BoxTooSmall { level: f64 },

    #[error("no index-1 saddle at level {h_star} reconnects the wells")]
    NoRelevantSaddle { h_star: f64 },

    #[error("solver did not converge in {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        partial: Option<Box<SpectrumResult>>,
    },

    #[error("eigenvalue {value:e} lies within 10% of the threshold {threshold:e}")]
    NotSeparatedSpectrum { value: f64, threshold: f64 },

    #[error("rate fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("summation radius {radius} too small for a tail below 1e-16")]
    RadiusTooSmall { radius: f64 },

    #[error("phase is not positive at {point:?} (value {value:e})")]
    PhasePositivityViolated { point: Vec<f64>, value: f64 },

    #[error("quasimode configuration invalid: {0}")]
    ConfigInvalid(String),

    #[error("lattice site {site} cannot be assigned to a well or a tube")]
    ComponentAmbiguous { site: usize },

    #[error("jump rate exponent {exponent:e} exceeds the clamp at {location:?}")]
    RateOverflow { location: Vec<f64>, exponent: f64 },

    #[error("all {0} trajectories were censored")]
    AllCensored(usize),

    #[error("need at least 2 uncensored trajectories, got {0}")]
    InsufficientData(usize),
}

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Warning {
    /// A jump exponent was clamped at the given magnitude.
    Overflow { sites: usize },
    /// Ground-state weights fell below the floating point floor.
    Underflow { sites: usize },
    /// The ground-state solve stalled at this residual; the result comes
    /// from shift-invert on the symmetric form.
    ShiftedFallback { residual: f64 },
    /// The residual ratio R(u) was at least 1; the bound was clamped to 0.
    Quality { r: f64 },
}
