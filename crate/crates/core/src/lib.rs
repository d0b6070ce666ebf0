//! Facial-growth-direction pipeline: landmark data, synthetic cohorts,
//! Procrustes geometry, cephalometric measurements, growth labeling,
//! feature assembly and repeated cross-validated evaluation.

pub mod analysis;
pub mod cephalometrics;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod stats;
pub mod synthgen;

pub use error::{CoreError, Result};
