//! Fixtures shared by the benchmarks.

use heatctl_core::config::ExperimentConfig;
use heatctl_core::discretization::Discretization;
use heatctl_core::Nonlinearity;

/// Default experiment on an `n × n` mesh with `u0 = beta sin(πx)`.
pub fn setup(beta: f64, n: usize) -> (ExperimentConfig, Discretization, Nonlinearity) {
    let text = format!("u0.beta = {beta}\nmesh.nx = {n}\nmesh.nt = {n}\n");
    let cfg = ExperimentConfig::parse_str(&text, std::path::Path::new("bench")).expect("valid bench config");
    let disc = cfg.discretization().expect("bench discretisation");
    let g = cfg.nonlinearity().expect("bench nonlinearity");
    (cfg, disc, g)
}
