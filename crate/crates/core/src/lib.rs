//! Two-weight dyadic harmonic analysis on finite Haar grids.
//!
//! Step functions on a depth-`D` dyadic grid of `[0, 1)`, Haar transforms,
//! A2 weights, Bloom-type BMO functionals, paraproducts, the Haar shift and
//! its commutator, weighted norm estimation, Carleson embeddings and
//! stopping-time constructions.

pub mod bmo;
pub mod dyadic;
pub mod error;
pub mod experiment;
pub mod normest;
pub mod operators;
pub mod par;
pub mod stopping;
pub mod weights;

pub use bmo::{BmoReport, Supremum};
pub use dyadic::{DyadicGrid, DyadicInterval, HaarSpectrum, StepFunction};
pub use error::{Error, Result};
pub use par::Execution;
pub use weights::{EnsembleKind, EnsembleSpec, Weight};
