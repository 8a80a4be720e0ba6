pub mod decomp;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod marginals;
pub mod models;
pub mod nataf;
pub mod sampling;
pub mod surrogate;

pub use error::{Error, Result};
