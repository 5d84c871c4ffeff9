//! Modeling and analysis toolkit for a polarization-preserving single-photon
//! frequency converter linking a trapped ion to telecom fiber.
//!
//! Modules cover the shared qubit algebra, process tomography, the converter
//! efficiency and noise models, and the fiber link budget.

pub mod conversion;
pub mod error;
pub mod link;
pub mod linalg;
pub mod noise;
pub mod optimize;
pub mod quantum;
pub mod tomography;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use quantum::{DensityMatrix, OperatorBasis, PolarizationState, ProcessMatrix};
