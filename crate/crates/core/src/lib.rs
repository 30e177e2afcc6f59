//! Linked ICA fusion of multimodal data with subjects missing from some
//! modalities.
//!
//! The crate is organised around the pipeline: [`matrixio`] loads and saves
//! data, [`lica`] fits the shared-loading decomposition, [`filica`] recovers
//! missing subjects and hosts the comparison strategies, [`simgen`] produces
//! simulated replicates with known truth and [`eval`] scores fits against it.

pub mod error;
pub mod eval;
pub mod filica;
pub mod lica;
pub mod linalg;
pub mod matrixio;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
pub use eval::{EvalReport, EvalRow, MatchResult};
pub use filica::{FiLicaConfig, FiDelta, FusionResult, Method};
pub use lica::{Decomposition, Engine, EngineOptions, ReferenceEngine};
pub use matrixio::{DatasetManifest, MaskedModality, ModalityEntry};
pub use simgen::{Setting, SimReplicate, SimTruth};

/// Dense real matrix used throughout. Rows are voxels (or components),
/// columns are subjects.
pub type Matrix = nalgebra::DMatrix<f64>;
pub use nalgebra;
