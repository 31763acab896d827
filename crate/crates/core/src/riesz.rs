//! `L²(0,T; H⁻¹(0,1))` norms of sampled residual fields.
//!
//! For each time level the Riesz representative `c` of the residual solves
//! `−c″ = r` with homogeneous Dirichlet conditions on a P1 mesh finer than the
//! space-time grid; then `‖r‖²_{H⁻¹} = ∫ |c′|² = bᵀc` with `b` the load vector.
//! The levels are independent, which makes the space-time problem for `c`
//! a sequence of small tridiagonal solves.

use rayon::prelude::*;

use crate::error::Result;
use crate::fem::QuadGrid;
use crate::linalg::TridiagCholesky;

#[derive(Debug, Clone)]
pub struct RieszSlice {
    n_cells: usize,
    factor: TridiagCholesky,
    /// For every spatial sample: fine element index and quadrature weight times
    /// the two hat values.
    stencil: Vec<(usize, f64, f64)>,
}

impl RieszSlice {
    /// Slice for samples at abscissae `x` with weights `w` on `n_cells` P1 cells.
    pub fn new(x: &[f64], w: &[f64], n_cells: usize) -> Result<Self> {
        let h = 1.0 / n_cells as f64;
        let n_int = n_cells - 1;
        let factor = TridiagCholesky::new(&vec![2.0 / h; n_int], &vec![-1.0 / h; n_int.saturating_sub(1)])?;
        let stencil = x
            .iter()
            .zip(w)
            .map(|(&xs, &ws)| {
                let e = ((xs * n_cells as f64).floor() as usize).min(n_cells - 1);
                let xi = xs * n_cells as f64 - e as f64;
                (e, ws * (1.0 - xi), ws * xi)
            })
            .collect();
        Ok(Self {
            n_cells,
            factor,
            stencil,
        })
    }

    /// Slice matching the spatial samples of `quad`, refined `refine` times.
    pub fn for_quad(quad: &QuadGrid, refine: usize) -> Result<Self> {
        Self::new(&quad.x, &quad.wx, quad.grid.nx * refine.max(1))
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// `‖r‖²_{H⁻¹(0,1)}` of one slice of samples.
    pub fn hminus_norm_sq(&self, r: &[f64]) -> f64 {
        let n_int = self.n_cells - 1;
        let mut b = vec![0.0; n_int];
        for (&(e, wl, wr), &rv) in self.stencil.iter().zip(r) {
            // interior node k has unknown index k-1
            if e >= 1 {
                b[e - 1] += wl * rv;
            }
            if e + 1 <= n_int {
                b[e] += wr * rv;
            }
        }
        let mut c = b.clone();
        self.factor.solve_in_place(&mut c);
        b.iter().zip(&c).map(|(a, b)| a * b).sum()
    }
}

/// Evaluates `E = ½ Σ_levels w_t ‖r(·,t)‖²_{H⁻¹}` on a quadrature grid.
#[derive(Debug, Clone)]
pub struct RieszEngine {
    slice: RieszSlice,
    wt: Vec<f64>,
    ns: usize,
}

impl RieszEngine {
    pub fn new(quad: &QuadGrid, refine: usize) -> Result<Self> {
        Ok(Self {
            slice: RieszSlice::for_quad(quad, refine)?,
            wt: quad.wt.clone(),
            ns: quad.n_space(),
        })
    }

    pub fn slice(&self) -> &RieszSlice {
        &self.slice
    }

    /// Per-level squared norms, in level order.
    pub fn slice_norms(&self, r: &[f64]) -> Vec<f64> {
        r.par_chunks(self.ns).map(|s| self.slice.hminus_norm_sq(s)).collect()
    }

    pub fn weighted_e(&self, r: &[f64]) -> f64 {
        debug_assert_eq!(r.len(), self.ns * self.wt.len());
        let levels = self.slice_norms(r);
        0.5 * levels.iter().zip(&self.wt).map(|(v, w)| v * w).sum::<f64>()
    }

    /// Same as [`weighted_e`](Self::weighted_e) for a field produced level by
    /// level, without storing it.
    pub fn weighted_e_with(&self, fill: impl Fn(usize, &mut [f64]) + Sync) -> f64 {
        let levels: Vec<f64> = (0..self.wt.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.ns],
                |buf, lt| {
                    fill(lt, buf);
                    self.slice.hminus_norm_sq(buf)
                },
            )
            .collect();
        0.5 * levels.iter().zip(&self.wt).map(|(v, w)| v * w).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Grid;
    use crate::weights::{Interval, WeightParams};
    use std::f64::consts::PI;

    fn quad(nx: usize, nt: usize) -> QuadGrid {
        let t = 0.5;
        let w = WeightParams::new(1.0, 1.0, 1.1, t, Interval::new(0.1, 0.3).unwrap()).unwrap();
        QuadGrid::build(Grid::new(nx, nt, t).unwrap(), 5, &w).unwrap()
    }

    #[test]
    fn analytic_slices() {
        let q = quad(128, 4);
        let s = RieszSlice::for_quad(&q, 4).unwrap();
        assert_eq!(s.n_nodes(), 513);
        let zero = vec![0.0; q.n_space()];
        assert_eq!(s.hminus_norm_sq(&zero), 0.0);
        let sin: Vec<f64> = q.x.iter().map(|&x| (PI * x).sin()).collect();
        let v = s.hminus_norm_sq(&sin);
        let exact = 1.0 / (2.0 * PI * PI);
        assert!((v - exact).abs() / exact < 1e-3, "{v} vs {exact}");
        let one = vec![1.0; q.n_space()];
        let v1 = s.hminus_norm_sq(&one);
        assert!((v1 - 1.0 / 12.0).abs() * 12.0 < 1e-3, "{v1}");
    }

    #[test]
    fn weighted_e_separable_case() {
        let q = quad(32, 8);
        let e = RieszEngine::new(&q, 4).unwrap();
        let r: Vec<f64> = (0..q.len()).map(|p| (PI * q.point(p).0).sin()).collect();
        let v = e.weighted_e(&r);
        let exact = 0.5 / (4.0 * PI * PI);
        assert!((v - exact).abs() / exact < 1e-3, "{v} vs {exact}");
        assert_eq!(e.weighted_e(&vec![0.0; q.len()]), 0.0);
        let streamed = e.weighted_e_with(|lt, buf| {
            buf.copy_from_slice(&r[lt * q.n_space()..(lt + 1) * q.n_space()])
        });
        assert_eq!(streamed, v);
    }

    #[test]
    fn quadratic_scaling_and_poincare() {
        let q = quad(16, 4);
        let e = RieszEngine::new(&q, 4).unwrap();
        let r: Vec<f64> = (0..q.len())
            .map(|p| {
                let (x, t) = q.point(p);
                (7.0 * x + 3.0 * t).cos() * x.exp()
            })
            .collect();
        let base = e.weighted_e(&r);
        let scaled: Vec<f64> = r.iter().map(|v| 3.5 * v).collect();
        assert!((e.weighted_e(&scaled) - 12.25 * base).abs() <= 1e-13 * base * 12.25);
        // per-slice Poincaré bound ‖r‖²_{H⁻¹} ≤ ‖r‖²_{L²}/π²
        let s = e.slice();
        let ns = q.n_space();
        for lt in 0..q.n_time() {
            let sl = &r[lt * ns..(lt + 1) * ns];
            let l2: f64 = sl.iter().zip(&q.wx).map(|(v, w)| w * v * v).sum();
            assert!(s.hminus_norm_sq(sl) <= l2 / (PI * PI) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn refinement_is_second_order() {
        // fixed samples (nx = 64), Riesz mesh refined 1,2,4,8 times
        let q = quad(64, 4);
        let r: Vec<f64> = q.x.iter().map(|&x| (PI * x).sin()).collect();
        let exact = 1.0 / (2.0 * PI * PI);
        let errs: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&k| (RieszSlice::for_quad(&q, k).unwrap().hminus_norm_sq(&r) - exact).abs())
            .collect();
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 1.7 && o2 > 1.7, "orders {o1} {o2} from {errs:?}");
    }
}
