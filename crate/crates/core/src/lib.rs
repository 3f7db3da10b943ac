//! Scattering theory and dispersive decay for one-dimensional discrete-time
//! quantum walks with position-dependent coins.
//!
//! Layers, bottom up: [`lattice`] value types, [`coin`] data, [`evolution`]
//! of the walk, [`dispersion`] of the constant-coin walk, [`jost`] solutions,
//! [`scattering`] data and [`dispersive`] decay experiments.

// `!(x < y)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coin;
pub mod dispersion;
pub mod dispersive;
pub mod error;
pub mod evolution;
pub mod jost;
pub mod lattice;
pub mod oracle;
pub mod par;
pub mod scattering;
pub mod wiener;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use par::Execution;

pub type Mat2 = nalgebra::Matrix2<C64>;
pub type Vec2 = nalgebra::Vector2<C64>;
