//! Exterior-algebra models of differential forms, flux forms and documents.

pub mod flux;
pub mod io;
pub mod model;

pub use flux::{random_closed_form, random_form, twisted_complex, wedge_exponential, FluxForm};
pub use io::{load_model, parse_document, save_model, save_report, Document, MatrixComplexDoc};
pub use model::{build_su2, build_su2_t2, build_torus, builtin, circle, wedge_monomials, ExteriorModel, Monomial};
