//! Geometric-optics counterexamples to unique continuation for wave operators
//! with a critically singular potential, `P = box_g + xi / sigma^2`.

pub mod aads;
pub mod assembly;
pub mod bands;
pub mod cli;
pub mod dd;
pub mod eikonal;
pub mod error;
pub mod geometry;
pub mod interference;
pub mod ode;
pub mod series;
pub mod stencil;
pub mod transport;

pub use error::{Error, Result};
