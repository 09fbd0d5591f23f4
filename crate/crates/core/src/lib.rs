//! Numerical kernels for the family of (-1)-homogeneous axisymmetric
//! stationary Navier-Stokes solutions on the unit sphere minus its poles.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: graded node sets on (-1,1), chart-based differentiation,
//!   quadrature, endpoint extrapolation and serialization.
//! * [`noswirl`]: the no-swirl Riccati profiles, admissible-parameter
//!   bounds in gamma, endpoint data and region classification.
//! * [`operators`]: the linearized operator machinery around a no-swirl
//!   profile (kernel basis, right inverse, projections, weighted norms).
//! * [`swirl`]: Picard/Newton solves for nearby solutions with swirl.
//! * [`fields`]: reconstruction of physical velocity/pressure fields and
//!   residuals of the reduced equations.
//! * [`report`]: a deterministic self-check battery used by the CLI.

pub mod error;
pub mod fields;
pub mod mesh;
pub mod noswirl;
pub mod operators;
pub mod report;
pub mod swirl;

pub use error::{Error, Result};
pub use mesh::{build_mesh, GridFunction, Mesh};
pub use noswirl::{
    analyze, cbar3, classify, gamma_bounds, solve_riccati, GammaBounds, NoSwirlProfile, Params,
    RegionLabel, RiccatiOutcome,
};
pub use operators::{psi_on_mesh, KernelMode, KernelVector, NormCase, NormReport, OperatorContext, ProfilePair, WVariant};
pub use swirl::{beta_derivative_check, newton_refine, picard_solve, rigidity_probe, SwirlOptions, SwirlSolution};
pub use fields::{reconstruct, reduced_residual, profile_residual, ResidualReport, SphericalField};
pub use report::{random_residual_pair, verify, VerifyCheck, VerifyReport};
