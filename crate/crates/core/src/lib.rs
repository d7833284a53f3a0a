//! Near-field channel modeling for uniform planar arrays.
//!
//! The crate builds spatial correlation matrices for scatterers located in the
//! radiative near field of a UPA, extracts the low-dimensional subspace that
//! every plausible channel occupies, and benchmarks reduced-subspace
//! least-squares (RS-LS) estimators against LS and MMSE.
//!
//! Conventions used throughout: angles are radians, lengths are meters, and
//! antenna indices are 1-based wherever they cross the public API.

pub mod config;
pub mod correlation;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod io;
mod linalg;
pub mod quadrature;
pub mod response;
pub mod sim;
pub mod subspace;
pub mod validate;

pub use num_complex::Complex64;

pub use crate::correlation::{
    cluster_correlation, far_field_representative_correlation, oracle_correlation,
    representative_correlation, s_factor, Cluster, ClusterSet, CorrelationMatrix,
    ScatteringRegion,
};
pub use crate::error::{Error, Result};
pub use crate::estimators::{
    dynamic_rsls_estimate, ls_estimate, mmse_estimate, rsls_estimate, DimensionPowerTracker,
    PilotObservation,
};
pub use crate::geometry::{AntennaIndex, ArrayGeometry};
pub use crate::response::{
    element_distance, exact_response, far_field_response, fresnel_response, ResponseFlavor,
    ResponseVector, SourcePoint,
};
pub use crate::sim::{run_nmse_experiment, Estimator, ExperimentConfig, NmseCurve};
pub use crate::subspace::{build_subspace, eigendecompose, EigenSpectrum, Subspace};

/// Effective-rank retention fraction: keep `1 - 1e-6` of the eigenvalue sum.
pub const DEFAULT_RANK_FRACTION: f64 = 1.0 - 1e-6;
