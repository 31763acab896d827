//! Null controls for the one-dimensional semilinear heat equation
//! `y_t − ν y_xx + g(y) = f 1_ω` on `(0,1)×(0,T)`, built by a damped Newton
//! (least-squares) iteration over a Carleman-weighted space-time finite
//! element discretisation, and checked with an independent forward solver.

pub mod check;
pub mod config;
pub mod control;
pub mod discretization;
pub mod driver;
pub mod error;
pub mod fem;
pub mod forward;
pub mod linalg;
pub mod nonlinearity;
pub mod quadrature;
pub mod report;
pub mod riesz;
pub mod weights;

pub use error::{Error, Result};
pub use fem::{C1Field, Grid, QuadGrid};
pub use nonlinearity::Nonlinearity;
pub use riesz::{RieszEngine, RieszSlice};
pub use weights::{Interval, WeightBundle, WeightParams};
