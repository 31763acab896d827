//! Everything that stays fixed across iterations: mesh, quadrature with
//! cached weights, the Riesz engine and solver options.

use crate::error::{Error, Result};
use crate::fem::{Grid, QuadGrid};
use crate::riesz::RieszEngine;
use crate::weights::WeightParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub cg_tol: f64,
    pub cg_maxit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Direct,
            cg_tol: 1e-10,
            cg_maxit: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub quad: QuadGrid,
    pub weights: WeightParams,
    /// Diffusion coefficient `ν`.
    pub nu: f64,
    pub riesz: RieszEngine,
    pub solver: SolverOptions,
}

impl Discretization {
    pub fn new(
        weights: WeightParams,
        nu: f64,
        nx: usize,
        nt: usize,
        quad_order: usize,
        riesz_refine: usize,
        solver: SolverOptions,
    ) -> Result<Self> {
        weights.validate()?;
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Param(format!("diffusion nu = {nu} must be > 0")));
        }
        if riesz_refine == 0 {
            return Err(Error::Param("riesz.refine must be >= 1".into()));
        }
        let grid = Grid::with_weight_kink(nx, nt, weights.horizon)?;
        let quad = QuadGrid::build(grid, quad_order, &weights)?;
        let riesz = RieszEngine::new(&quad, riesz_refine)?;
        Ok(Self {
            grid,
            quad,
            weights,
            nu,
            riesz,
            solver,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon
    }
}
