//! Direct collocation of Bolza optimal control problems on a multiple-interval
//! Legendre-Gauss-Radau grid, with mesh refinement driven by the mismatch
//! between the collocated states and explicit simulations of the dynamics.

// index loops mirror the linear algebra; negated float comparisons are NaN-aware
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod estimate;
pub mod nlp;
pub mod ode;
pub mod problem;
pub mod refinement;
pub mod transcription;

pub use error::{Error, Result};
