//! Killed diffusions and the linear SPDEs they solve on a bounded interval.
//!
//! The crate covers symbolic coefficient expressions, space and time grids,
//! seeded Wiener noise, the killed SDE with its Monte Carlo estimators, a
//! theta-scheme for the forward SPDE and its exact discrete adjoint for the
//! backward PDE.

pub mod backward_pde;
pub mod coefficients;
pub mod error;
pub mod expr;
pub mod forward_spde;
pub mod grid;
pub mod linalg;
pub mod noise;
pub mod sde;
pub mod tridiag;

pub use error::{Error, Result};
pub use expr::{parse_expr, Expression, Point};
pub use grid::{Field, NormKind, SpaceGrid, TimeGrid};
