//! Discrete semiclassical Witten Laplacians on truncated lattices.
//!
//! The crate builds `H = -eps^2 Delta_eps + V_eps` for a polynomial landscape
//! `f` on a box of `eps Z^d`, computes its exponentially small low spectrum
//! and compares it with the barrier-prefactor prediction `eps A e^{-E/eps}`,
//! with quasimode bounds, and with simulated hitting times of the jump process.

pub mod eigen;
pub mod error;
pub mod landscape;
pub mod laplace;
pub mod lattice;
pub mod process;
pub mod quasimode;
pub mod smooth;

pub use error::{Error, Result, Warning};
pub use landscape::PotentialSpec;
pub use lattice::{LatticeBox, LatticeVector, OperatorKind, SparseOperator};

/// Largest exponent passed to `exp` before clamping.
pub const EXP_CLAMP: f64 = 700.0;
