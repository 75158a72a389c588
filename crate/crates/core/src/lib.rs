//! Finite-dimensional laboratory for twisted analytic torsion.
//!
//! Graded complexes, flux-twisted exterior models, the adiabatic family
//! D_t = d + Σ tⁱ H_{2i+1}, the spectral sequence of the form-degree
//! filtration, and determinant-line metrics with their comparison theorems.

pub mod error;
pub mod deformation;
pub mod exterior;
pub mod graded;
pub mod hodge;
pub mod linalg;
pub mod metric;
pub mod precise;
pub mod spectral;
pub mod superconnection;
pub mod tolerance;
pub mod torsion;

pub use error::{Error, Result};
pub use graded::{supertrace, GradedComplex, GradedSpace, GradingMode, Piece};
pub use hodge::{cohomology_dims, hodge, sdet_dstar_d, sdet_prime, CohomologyDims, HodgeData, SuperDet};
pub use metric::{adjoint, MetricStructure};
pub use tolerance::Tolerances;
