use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} lies outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("non-finite entry assembled in cell ({cell_x}, {cell_t})")]
    Assembly { cell_x: usize, cell_t: usize },
    #[error("matrix is not positive definite: pivot {pivot} = {value:e} (check weight and mesh settings)")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    CgNoConvergence { iterations: usize, residual: f64 },
    #[error("newton iteration stagnated at time step {step} (residual {residual:e})")]
    NewtonStagnation { step: usize, residual: f64 },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
