//! Support vector clustering accelerated by spectral data compression.
//!
//! The data are coarsened by repeatedly merging spectrally similar k-NN
//! neighbors into pseudo-samples, an SVDD sphere is trained on the
//! pseudo-samples, clusters are found through the stable equilibrium points
//! of the trained radius function, and labels are lifted back to every
//! original point.

pub mod compression;
pub mod data;
pub mod embedding;
pub mod error;
pub mod graph;
pub mod labeling;
pub mod metrics;
pub mod pipeline;
pub mod sep;
pub mod svdd;
pub mod union_find;

pub use error::{Error, Result};
