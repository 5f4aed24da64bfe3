//! Pulse propagation in lattices of connected one-dimensional waveguides
//! whose topology is the skeleton of an N-dimensional hypercube.
//!
//! The pipeline is: [`lattice`] generates the structure, [`scattering`]
//! supplies per-edge propagation and per-node junction coefficients,
//! [`fdsolver`] solves the coupled wave amplitudes one frequency at a time,
//! [`tdtransform`] turns the sampled frequency response into a pulse train
//! and picks arrivals, and [`oracle`] independently enumerates reverberation
//! paths to predict those arrivals. [`experiments`] wires the canonical
//! drive/assess scenarios together, including the in-vivo and in-vitro
//! variants used to isolate the returns added by each new dimension.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod compare;
pub mod error;
pub mod experiments;
pub mod fdsolver;
pub mod io;
pub mod lattice;
pub mod oracle;
pub mod plot;
pub mod scattering;
pub mod tdtransform;

pub use error::{Error, Result};
pub use lattice::{Lattice, Node, WaveguideEdge};
