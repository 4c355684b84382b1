//! Source imaging with a hierarchical graph prior.
//!
//! Sources `S` are estimated jointly with `K` landmark patterns `C`, a
//! minimum spanning tree `G` over the landmarks and soft assignments `R` of
//! time points to landmarks, by alternating convex search. The crate also
//! carries four classical inverse solvers (MNE, sLORETA, MCE, ℓ21), a
//! two-hemisphere simulator and the DF/RE/LE/AUC metrics.

pub mod baselines;
pub mod error;
pub mod forward;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod solvers;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
