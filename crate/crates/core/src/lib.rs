//! Localized energy balance between level sets of the Bernoulli function
//! `Q = ½|v|² + p` for smooth periodic Navier–Stokes and Euler flows.
//!
//! The crate is layered bottom-up:
//!
//! - [`field`] and [`spectral`]: periodic grids, fields and exact Fourier operators.
//! - [`flow`]: right-hand side, RK4 stepping and initial conditions.
//! - [`bernoulli`]: the Bernoulli function and the pointwise energy identity.
//! - [`levelset`]: isosurface extraction, surface and strip quadrature.
//! - [`ledger`]: strip-by-strip energy balance, sweeps and convergence studies.
//! - [`snapshot`]: on-disk velocity snapshots.

pub mod bernoulli;
pub mod error;
pub mod field;
pub mod flow;
pub mod ledger;
pub mod levelset;
pub mod snapshot;
pub mod spectral;

pub use error::{FieldError, FlowError, LedgerError, LevelSetError, SnapshotError};
pub use field::{Grid, ScalarField, VectorField};
