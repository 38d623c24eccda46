//! Constraint energy minimizing generalized multiscale DG solver for
//! high-contrast elliptic problems, with residual-driven online enrichment.
//!
//! The core is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below fix it to `f64`.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod grid;
pub mod medium;
pub mod numkernel;
pub mod offline;
pub mod online;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = grid::GridModel<f64>;
pub type Field = medium::PermeabilityField<f64>;
pub type Forms = assembly::AssembledForms<f64>;
