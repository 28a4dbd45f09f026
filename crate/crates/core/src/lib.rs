//! Numerical verification of stochastic invariance of closed sets for
//! jump-diffusions.
//!
//! Given coefficient fields `(b, C, rho, F)` with finite-activity jumps and
//! a closed domain D, the toolkit evaluates the four first-order geometric
//! conditions at sampled boundary points — jump support, jump integrability
//! against outward normals, tangency of the covariance, and inward pointing
//! of the compensated drift — and cross-validates verdicts by Monte-Carlo
//! simulation, a positive-maximum-principle probe, and a spectral identity
//! for the drift correction.

pub mod checker;
pub mod domain;
pub mod error;
pub mod field;
pub mod generator;
pub mod library;
pub mod linalg;
pub mod model;
pub mod report;
pub mod semimartingale;
pub mod simulator;
pub mod spectral;

pub use checker::{check_domain, check_point, Aggregate, CheckerConfig, InvarianceReport};
pub use domain::{ClosedDomain, NormalCone};
pub use error::{Error, Result};
pub use generator::{apply_generator, maximum_principle_probe, TestFunction};
pub use library::{build as build_library_model, LibraryModel};
pub use model::{
    column_jacobians, compensated_drift, probe_assumptions, pseudoinverse, GrowthParams,
    JumpAtom, JumpDiffusionModel, JumpSpec, PseudoinverseResult,
};
pub use semimartingale::{
    check_triplet, model_to_triplet, triplet_to_model, KernelAtom, SemimartingaleTriplet,
    TruncationFunction,
};
pub use simulator::{PathStats, Scheme, SimConfig, Simulator};
pub use spectral::{spectral_factor, verify_drift_identity, SpectralFactorization};
