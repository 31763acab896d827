//! Structured space-time mesh of `(0,1)×(0,T)` with bicubic Hermite (C¹)
//! elements and tensor Gauss quadrature.
//!
//! Each grid node carries four unknowns: value, `∂x`, `∂t` and `∂xt`. The
//! value and `∂t` unknowns on the lateral boundary `x ∈ {0, 1}` are pinned to
//! zero.
//!
//! A grid may carry one *split row* across which only C⁰ continuity in time is
//! imposed: its nodes hold separate `∂t`, `∂xt` unknowns for the cells below
//! and above. The split matches the kink of `ℓ` at `t = T/4`, where the
//! weighted unknown `ρ₀⁻¹ p` has a jump in its time derivative.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_unit;
use crate::weights::{Interval, WeightBundle, WeightParams};

pub const DOFS_PER_NODE: usize = 4;
pub const LOCAL_DOFS: usize = 16;
/// Unknowns per node on the split row: `v, ∂x, ∂t⁻, ∂xt⁻, ∂t⁺, ∂xt⁺`.
pub const SPLIT_DOFS_PER_NODE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub horizon: f64,
    /// Time row with independent one-sided time derivatives.
    pub split: Option<usize>,
}

impl Grid {
    pub fn new(nx: usize, nt: usize, horizon: f64) -> Result<Self> {
        if nx < 4 || nt < 4 {
            return Err(Error::Param(format!("mesh must have at least 4x4 cells, got {nx}x{nt}")));
        }
        if !(horizon > 0.0) {
            return Err(Error::Param(format!("horizon {horizon} must be > 0")));
        }
        Ok(Self { nx, nt, horizon, split: None })
    }

    /// Same grid with a split at interior row `row`.
    pub fn with_split(mut self, row: usize) -> Result<Self> {
        if row == 0 || row >= self.nt {
            return Err(Error::Param(format!("split row {row} must lie strictly inside 0..{}", self.nt)));
        }
        self.split = Some(row);
        Ok(self)
    }

    /// Grid whose split row sits at the kink `t = T/4` of `ℓ`; requires `nt`
    /// divisible by 4.
    pub fn with_weight_kink(nx: usize, nt: usize, horizon: f64) -> Result<Self> {
        if nt % 4 != 0 {
            return Err(Error::Param(format!(
                "time cells nt = {nt} must be a multiple of 4 so that t = T/4 is a mesh line"
            )));
        }
        Self::new(nx, nt, horizon)?.with_split(nt / 4)
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn ht(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.nt + 1)
    }

    fn extra(&self) -> usize {
        (SPLIT_DOFS_PER_NODE - DOFS_PER_NODE) * (self.nx + 1)
    }

    pub fn n_dofs(&self) -> usize {
        DOFS_PER_NODE * self.n_nodes() + if self.split.is_some() { self.extra() } else { 0 }
    }

    pub fn n_free_dofs(&self) -> usize {
        let pinned = 4 * (self.nt + 1) + if self.split.is_some() { 2 } else { 0 };
        self.n_dofs() - pinned
    }

    fn per_node(&self, j: usize) -> usize {
        if self.split == Some(j) {
            SPLIT_DOFS_PER_NODE
        } else {
            DOFS_PER_NODE
        }
    }

    fn row_start(&self, j: usize) -> usize {
        let base = DOFS_PER_NODE * (self.nx + 1) * j;
        match self.split {
            Some(s) if j > s => base + self.extra(),
            _ => base,
        }
    }

    /// Global index of unknown `d` at node `(i, j)`; `d ∈ 4..6` only on the
    /// split row.
    #[inline]
    pub fn dof(&self, i: usize, j: usize, d: usize) -> usize {
        debug_assert!(d < self.per_node(j));
        self.row_start(j) + self.per_node(j) * i + d
    }

    /// Inverse of [`Grid::dof`].
    pub fn node_of(&self, k: usize) -> (usize, usize, usize) {
        let row = DOFS_PER_NODE * (self.nx + 1);
        let locate = |k: usize, j0: usize| {
            let j = j0 + k / row;
            let r = k % row;
            (r / DOFS_PER_NODE, j, r % DOFS_PER_NODE)
        };
        match self.split {
            Some(s) if k >= self.row_start(s) => {
                let r = k - self.row_start(s);
                if r < SPLIT_DOFS_PER_NODE * (self.nx + 1) {
                    (r / SPLIT_DOFS_PER_NODE, s, r % SPLIT_DOFS_PER_NODE)
                } else {
                    locate(k - self.row_start(s + 1), s + 1)
                }
            }
            _ => locate(k, 0),
        }
    }

    /// Global unknowns of cell `(i, j)` in local order.
    pub fn cell_dofs(&self, i: usize, j: usize) -> [usize; LOCAL_DOFS] {
        let mut out = [0; LOCAL_DOFS];
        let upper_side = self.split == Some(j);
        for b in 0..2 {
            for a in 0..2 {
                let ln = a + 2 * b;
                for d in 0..DOFS_PER_NODE {
                    let dd = if b == 0 && upper_side && d >= 2 { d + 2 } else { d };
                    out[DOFS_PER_NODE * ln + d] = self.dof(i + a, j + b, dd);
                }
            }
        }
        out
    }

    /// Pinned unknowns: value and every `∂t` at `x = 0` and `x = 1`.
    pub fn is_constrained(&self, dof: usize) -> bool {
        let (i, _, d) = self.node_of(dof);
        (i == 0 || i == self.nx) && d % 2 == 0
    }

    /// Largest `|row − col|` coupled by any element.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for j in 0..self.nt {
            for i in [0, self.nx - 1] {
                let c = self.cell_dofs(i, j);
                let (lo, hi) = (c.iter().min().unwrap(), c.iter().max().unwrap());
                bw = bw.max(hi - lo);
            }
        }
        bw
    }

    fn locate(&self, x: f64, t: f64) -> Result<(usize, usize, f64, f64)> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain {
                what: "(x, t)",
                value: if (0.0..=1.0).contains(&x) { t } else { x },
                domain: "closure of Q_T",
            });
        }
        let fx = x * self.nx as f64;
        let ft = t / self.ht();
        let i = (fx.floor() as usize).min(self.nx - 1);
        let j = (ft.floor() as usize).min(self.nt - 1);
        Ok((i, j, fx - i as f64, ft - j as f64))
    }
}

/// Cubic Hermite functions on a cell of size `h`: `(value, d/dx, d²/dx²)` of
/// the function attached to end `a` and kind `k` (0 value, 1 slope).
#[inline]
pub fn hermite_1d(a: usize, k: usize, xi: f64, h: f64) -> (f64, f64, f64) {
    let (x2, x3) = (xi * xi, xi * xi * xi);
    let (v, d, dd) = match (a, k) {
        (0, 0) => (1.0 - 3.0 * x2 + 2.0 * x3, -6.0 * xi + 6.0 * x2, -6.0 + 12.0 * xi),
        (0, 1) => (h * (xi - 2.0 * x2 + x3), h * (1.0 - 4.0 * xi + 3.0 * x2), h * (-4.0 + 6.0 * xi)),
        (1, 0) => (3.0 * x2 - 2.0 * x3, 6.0 * xi - 6.0 * x2, 6.0 - 12.0 * xi),
        (1, 1) => (h * (-x2 + x3), h * (-2.0 * xi + 3.0 * x2), h * (-2.0 + 6.0 * xi)),
        _ => unreachable!(),
    };
    (v, d / h, dd / (h * h))
}

/// Value and derivatives of one local basis function.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShapeValue {
    pub v: f64,
    pub dx: f64,
    pub dt: f64,
    pub dxx: f64,
    pub dxt: f64,
}

/// The 16 local basis functions at reference coordinates `(ξ, τ) ∈ [0,1]²`.
pub fn shape_eval(hx: f64, ht: f64, xi: f64, tau: f64) -> [ShapeValue; LOCAL_DOFS] {
    let mut out = [ShapeValue::default(); LOCAL_DOFS];
    for b in 0..2 {
        for a in 0..2 {
            for d in 0..DOFS_PER_NODE {
                let (kx, kt) = (d & 1, d >> 1);
                let (fx, dfx, ddfx) = hermite_1d(a, kx, xi, hx);
                let (ft, dft, _) = hermite_1d(b, kt, tau, ht);
                out[DOFS_PER_NODE * (a + 2 * b) + d] = ShapeValue {
                    v: fx * ft,
                    dx: dfx * ft,
                    dt: fx * dft,
                    dxx: ddfx * ft,
                    dxt: dfx * dft,
                };
            }
        }
    }
    out
}

/// A C¹ field on the space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct C1Field {
    pub grid: Grid,
    pub coef: Vec<f64>,
}

impl C1Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coef: vec![0.0; grid.n_dofs()],
        }
    }

    /// Hermite interpolant of a function given with its derivatives
    /// `(q, q_x, q_t, q_xt)`; the lateral constraint is applied afterwards.
    pub fn interpolate(grid: Grid, f: impl Fn(f64, f64) -> [f64; 4]) -> Self {
        let mut field = Self::zeros(grid);
        for j in 0..=grid.nt {
            for i in 0..=grid.nx {
                let vals = f(i as f64 * grid.hx(), j as f64 * grid.ht());
                for (d, v) in vals.iter().enumerate() {
                    field.coef[grid.dof(i, j, d)] = *v;
                    if grid.split == Some(j) && d >= 2 {
                        field.coef[grid.dof(i, j, d + 2)] = *v;
                    }
                }
            }
        }
        field.apply_constraints();
        field
    }

    pub fn apply_constraints(&mut self) {
        for (k, c) in self.coef.iter_mut().enumerate() {
            if self.grid.is_constrained(k) {
                *c = 0.0;
            }
        }
    }

    pub fn evaluate(&self, x: f64, t: f64) -> Result<ShapeValue> {
        let (i, j, xi, tau) = self.grid.locate(x, t)?;
        let shapes = shape_eval(self.grid.hx(), self.grid.ht(), xi, tau);
        let dofs = self.grid.cell_dofs(i, j);
        let mut out = ShapeValue::default();
        for (s, &g) in shapes.iter().zip(dofs.iter()) {
            let c = self.coef[g];
            out.v += c * s.v;
            out.dx += c * s.dx;
            out.dt += c * s.dt;
            out.dxx += c * s.dxx;
            out.dxt += c * s.dxt;
        }
        Ok(out)
    }

    pub fn value(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.evaluate(x, t)?.v)
    }

    pub fn axpy(&mut self, alpha: f64, other: &C1Field) {
        for (a, b) in self.coef.iter_mut().zip(&other.coef) {
            *a += alpha * b;
        }
    }
}

/// Tensor Gauss points of every cell with cached weight bundles.
///
/// Points are stored time level by time level: point `p` sits on time level
/// `p / n_space()` and spatial abscissa `p % n_space()`, so one time slice is
/// a contiguous range.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub grid: Grid,
    pub order: usize,
    pub x: Vec<f64>,
    pub wx: Vec<f64>,
    pub t: Vec<f64>,
    pub wt: Vec<f64>,
    pub in_omega: Vec<bool>,
    pub bundles: Vec<WeightBundle>,
    /// Reference-cell shape table indexed by `[gb * order + ga][local dof]`.
    pub shapes: Vec<[ShapeValue; LOCAL_DOFS]>,
    pub omega: Interval,
}

impl QuadGrid {
    pub fn build(grid: Grid, order: usize, weights: &WeightParams) -> Result<Self> {
        if order < 3 {
            return Err(Error::Param(format!("quadrature order {order} must be >= 3")));
        }
        if (weights.horizon - grid.horizon).abs() > 1e-14 * grid.horizon {
            return Err(Error::Param("weight horizon differs from mesh horizon".into()));
        }
        let (gx, gw) = gauss_legendre_unit(order);
        let (hx, ht) = (grid.hx(), grid.ht());
        let mut x = Vec::with_capacity(grid.nx * order);
        let mut wx = Vec::with_capacity(grid.nx * order);
        for i in 0..grid.nx {
            for a in 0..order {
                x.push((i as f64 + gx[a]) * hx);
                wx.push(gw[a] * hx);
            }
        }
        let mut t = Vec::with_capacity(grid.nt * order);
        let mut wt = Vec::with_capacity(grid.nt * order);
        for j in 0..grid.nt {
            for b in 0..order {
                t.push((j as f64 + gx[b]) * ht);
                wt.push(gw[b] * ht);
            }
        }
        let in_omega = x.iter().map(|&v| weights.omega.contains(v)).collect();
        let bundles: Vec<WeightBundle> = t
            .par_iter()
            .map(|&tl| x.iter().map(|&xs| weights.bundle(xs, tl)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if bundles.iter().any(|b| {
            ![b.rho_inv, b.rho0_inv, b.w12, b.w32, b.c_dt, b.c_dx, b.c_dxx]
                .iter()
                .all(|v| v.is_finite())
        }) {
            return Err(Error::NonFinite("weight bundle at a quadrature point"));
        }
        let mut shapes = Vec::with_capacity(order * order);
        for b in 0..order {
            for a in 0..order {
                shapes.push(shape_eval(hx, ht, gx[a], gx[b]));
            }
        }
        Ok(Self {
            grid,
            order,
            x,
            wx,
            t,
            wt,
            in_omega,
            bundles,
            shapes,
            omega: weights.omega,
        })
    }

    pub fn n_space(&self) -> usize {
        self.x.len()
    }

    pub fn n_time(&self) -> usize {
        self.t.len()
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn weight(&self, p: usize) -> f64 {
        let ns = self.n_space();
        self.wt[p / ns] * self.wx[p % ns]
    }

    #[inline]
    pub fn point(&self, p: usize) -> (f64, f64) {
        let ns = self.n_space();
        (self.x[p % ns], self.t[p / ns])
    }

    #[inline]
    pub fn omega_at(&self, p: usize) -> bool {
        self.in_omega[p % self.n_space()]
    }

    /// Global point indices of cell `(i, j)` in shape-table order.
    pub fn cell_points(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let q = self.order;
        let ns = self.n_space();
        (0..q).flat_map(move |b| {
            (0..q).map(move |a| (b * q + a, (j * q + b) * ns + i * q + a))
        })
    }

    /// `Σ w f(p)` summed slice by slice in a fixed order.
    pub fn integrate(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        let ns = self.n_space();
        let per_level: Vec<f64> = (0..self.n_time())
            .into_par_iter()
            .map(|lt| {
                let base = lt * ns;
                (0..ns).map(|ls| self.wx[ls] * f(base + ls)).sum::<f64>() * self.wt[lt]
            })
            .collect();
        per_level.iter().sum()
    }

    /// `‖v‖_{L²(Q_T)}` of a sample field.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.integrate(|p| v[p] * v[p]).sqrt()
    }

    /// `‖v‖_{L²(q_T)}` of a sample field.
    pub fn l2_norm_omega(&self, v: &[f64]) -> f64 {
        self.integrate(|p| if self.omega_at(p) { v[p] * v[p] } else { 0.0 }).sqrt()
    }

    /// Values and derivatives of `field` at every point.
    pub fn sample(&self, field: &C1Field) -> Vec<ShapeValue> {
        let g = self.grid;
        let q = self.order;
        let ns = self.n_space();
        let mut out = vec![ShapeValue::default(); self.len()];
        out.par_chunks_mut(ns * q).enumerate().for_each(|(j, chunk)| {
            for i in 0..g.nx {
                let dofs = g.cell_dofs(i, j);
                for b in 0..q {
                    for a in 0..q {
                        let shp = &self.shapes[b * q + a];
                        let mut acc = ShapeValue::default();
                        for (s, &d) in shp.iter().zip(dofs.iter()) {
                            let c = field.coef[d];
                            acc.v += c * s.v;
                            acc.dx += c * s.dx;
                            acc.dt += c * s.dt;
                            acc.dxx += c * s.dxx;
                            acc.dxt += c * s.dxt;
                        }
                        chunk[b * ns + i * q + a] = acc;
                    }
                }
            }
        });
        out
    }

    /// Only the values of `field` at every point.
    pub fn sample_values(&self, field: &C1Field) -> Vec<f64> {
        self.sample(field).into_iter().map(|s| s.v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::Interval;

    fn params(t: f64) -> WeightParams {
        WeightParams::new(1.0, 1.0, 1.1, t, Interval::new(0.1, 0.3).unwrap()).unwrap()
    }

    #[test]
    fn partition_of_unity() {
        for &(xi, tau) in &[(0.0, 0.0), (0.3, 0.7), (0.91, 0.12), (1.0, 0.5)] {
            let s = shape_eval(0.1, 0.05, xi, tau);
            let sum: f64 = (0..4).map(|ln| s[4 * ln].v).sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_bicubic_on_a_cell() {
        let grid = Grid::new(4, 4, 1.0).unwrap();
        // x³t³ vanishes at x=0 but not at x=1; evaluate in the interior cell
        // away from x=1 where constraints would cut it.
        let f = C1Field {
            grid,
            coef: {
                let mut c = vec![0.0; grid.n_dofs()];
                for j in 0..=4 {
                    for i in 0..=4 {
                        let (x, t) = (i as f64 * 0.25, j as f64 * 0.25);
                        c[grid.dof(i, j, 0)] = x.powi(3) * t.powi(3);
                        c[grid.dof(i, j, 1)] = 3.0 * x * x * t.powi(3);
                        c[grid.dof(i, j, 2)] = 3.0 * x.powi(3) * t * t;
                        c[grid.dof(i, j, 3)] = 9.0 * x * x * t * t;
                    }
                }
                c
            },
        };
        let (x, t) = (0.375, 0.625);
        let v = f.evaluate(x, t).unwrap();
        assert!((v.v - x.powi(3) * t.powi(3)).abs() < 1e-12);
        assert!((v.dxx - 6.0 * x * t.powi(3)).abs() < 1e-11);
        assert!((v.dxt - 9.0 * x * x * t * t).abs() < 1e-11);
    }

    #[test]
    fn second_derivative_of_quadratic() {
        let grid = Grid::new(5, 4, 0.5).unwrap();
        let f = C1Field::interpolate(grid, |x, _| [x * x - x, 2.0 * x - 1.0, 0.0, 0.0]);
        for &(x, t) in &[(0.13, 0.1), (0.5, 0.3), (0.97, 0.49)] {
            let v = f.evaluate(x, t).unwrap();
            assert!((v.dxx - 2.0).abs() < 1e-10);
            assert!((v.v - (x * x - x)).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_field_and_boundary() {
        let grid = Grid::new(6, 5, 0.5).unwrap();
        let z = C1Field::zeros(grid);
        assert_eq!(z.value(0.4, 0.2).unwrap(), 0.0);
        let mut f = C1Field::zeros(grid);
        for (k, c) in f.coef.iter_mut().enumerate() {
            *c = (k as f64 * 0.37).sin();
        }
        f.apply_constraints();
        for k in 0..20 {
            let t = 0.5 * k as f64 / 19.0;
            assert_eq!(f.value(0.0, t).unwrap(), 0.0);
            assert!(f.value(1.0, t).unwrap().abs() < 1e-15);
        }
        assert!(f.evaluate(1.2, 0.1).is_err());
    }

    fn eval_in_cell(f: &C1Field, i: usize, j: usize, xi: f64, tau: f64) -> ShapeValue {
        let g = f.grid;
        let shapes = shape_eval(g.hx(), g.ht(), xi, tau);
        let mut out = ShapeValue::default();
        for (s, &d) in shapes.iter().zip(g.cell_dofs(i, j).iter()) {
            out.v += f.coef[d] * s.v;
            out.dx += f.coef[d] * s.dx;
            out.dt += f.coef[d] * s.dt;
        }
        out
    }

    #[test]
    fn split_row_numbering() {
        let g = Grid::new(5, 8, 0.5).unwrap().with_split(2).unwrap();
        assert_eq!(g.n_dofs(), 4 * 6 * 9 + 2 * 6);
        for k in 0..g.n_dofs() {
            let (i, j, d) = g.node_of(k);
            assert_eq!(g.dof(i, j, d), k);
        }
        let free = (0..g.n_dofs()).filter(|&k| !g.is_constrained(k)).count();
        assert_eq!(free, g.n_free_dofs());
        let mut used = vec![false; g.n_dofs()];
        for j in 0..8 {
            for i in 0..5 {
                for d in g.cell_dofs(i, j) {
                    used[d] = true;
                }
            }
        }
        assert!(used.iter().all(|&u| u));
        assert!(Grid::with_weight_kink(6, 6, 0.5).is_err());
        assert_eq!(Grid::with_weight_kink(6, 8, 0.5).unwrap().split, Some(2));
    }

    #[test]
    fn split_row_keeps_value_but_frees_time_slope() {
        let g = Grid::new(6, 8, 0.5).unwrap().with_split(2).unwrap();
        let mut f = C1Field::zeros(g);
        for (k, c) in f.coef.iter_mut().enumerate() {
            *c = ((k * 7919) % 1000) as f64 / 500.0 - 1.0;
        }
        f.apply_constraints();
        let mut max_jump: f64 = 0.0;
        for i in 0..6 {
            for &xi in &[0.0, 0.4, 0.9] {
                let d = eval_in_cell(&f, i, 1, xi, 1.0);
                let u = eval_in_cell(&f, i, 2, xi, 0.0);
                assert!((d.v - u.v).abs() < 1e-12);
                assert!((d.dx - u.dx).abs() < 1e-10);
                max_jump = max_jump.max((d.dt - u.dt).abs());
            }
        }
        assert!(max_jump > 1e-3);
        // a smooth bicubic is still reproduced exactly
        let p = |x: f64, t: f64| [x * x * (1.0 - x) * t * t, (2.0 * x - 3.0 * x * x) * t * t, 2.0 * x * x * (1.0 - x) * t, (2.0 * x - 3.0 * x * x) * 2.0 * t];
        let f = C1Field::interpolate(g, p);
        for &(x, t) in &[(0.3, 0.1), (0.55, 0.125), (0.8, 0.4)] {
            assert!((f.value(x, t).unwrap() - p(x, t)[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn c1_continuity_across_edges() {
        let grid = Grid::new(8, 8, 0.5).unwrap();
        let mut f = C1Field::zeros(grid);
        for (k, c) in f.coef.iter_mut().enumerate() {
            *c = ((k * 7919) % 1000) as f64 / 500.0 - 1.0;
        }
        f.apply_constraints();
        // one-sided traces on shared edges agree
        for i in 1..8 {
            for j in 0..8 {
                for &tau in &[0.0, 0.3, 0.8] {
                    let l = eval_in_cell(&f, i - 1, j, 1.0, tau);
                    let r = eval_in_cell(&f, i, j, 0.0, tau);
                    assert!((l.v - r.v).abs() < 1e-12);
                    assert!((l.dx - r.dx).abs() < 1e-10);
                    assert!((l.dt - r.dt).abs() < 1e-10);
                    let d = eval_in_cell(&f, j, i - 1, tau, 1.0);
                    let u = eval_in_cell(&f, j, i, tau, 0.0);
                    assert!((d.v - u.v).abs() < 1e-12);
                    assert!((d.dx - u.dx).abs() < 1e-10);
                    assert!((d.dt - u.dt).abs() < 1e-10);
                }
            }
        }
        // two-sided evaluation: the gap is the Taylor term 2ε|∂x f| only
        let eps = 1e-8;
        for i in 1..8 {
            let xe = i as f64 / 8.0;
            for &t in &[0.07, 0.21, 0.33] {
                let l = f.evaluate(xe - eps, t).unwrap();
                let r = f.evaluate(xe + eps, t).unwrap();
                let bound = 1e-10 + 2.0 * eps * l.dx.abs().max(r.dx.abs()) * 1.01;
                assert!((l.v - r.v).abs() <= bound);
            }
        }
    }

    #[test]
    fn quadrature_integrals() {
        let t = 0.5;
        let grid = Grid::new(10, 8, t).unwrap();
        let q = QuadGrid::build(grid, 5, &params(t)).unwrap();
        assert_eq!(q.len(), 25 * 10 * 8);
        assert!((q.integrate(|_| 1.0) - t).abs() < 1e-15);
        let x2t2 = q.integrate(|p| {
            let (x, tt) = q.point(p);
            x * x * tt * tt
        });
        assert!((x2t2 - t.powi(3) / 9.0).abs() < 1e-14);
        // ω = (0.1, 0.3) aligned with hx = 0.1
        let area = q.integrate(|p| if q.omega_at(p) { 1.0 } else { 0.0 });
        assert!((area - 0.2 * t).abs() < 1e-14);
    }

    #[test]
    fn omega_area_within_one_cell_when_unaligned() {
        let t = 0.5;
        let grid = Grid::new(7, 6, t).unwrap();
        let q = QuadGrid::build(grid, 5, &params(t)).unwrap();
        let area = q.integrate(|p| if q.omega_at(p) { 1.0 } else { 0.0 });
        assert!((area - 0.2 * t).abs() <= grid.hx() * t);
        assert!(q.bundles.iter().all(|b| b.rho_inv.is_finite() && b.c_dt.is_finite()));
    }

    #[test]
    fn free_dof_count() {
        let g = Grid::new(7, 5, 0.5).unwrap();
        let free = (0..g.n_dofs()).filter(|&k| !g.is_constrained(k)).count();
        assert_eq!(free, g.n_free_dofs());
        assert_eq!(free, 4 * 8 * 6 - 4 * 6);
    }

    #[test]
    fn sampling_matches_pointwise_evaluation() {
        let t = 0.5;
        let grid = Grid::new(5, 4, t).unwrap();
        let q = QuadGrid::build(grid, 4, &params(t)).unwrap();
        let mut f = C1Field::zeros(grid);
        for (k, c) in f.coef.iter_mut().enumerate() {
            *c = (k as f64).cos();
        }
        f.apply_constraints();
        let s = q.sample(&f);
        for p in (0..q.len()).step_by(7) {
            let (x, tt) = q.point(p);
            let e = f.evaluate(x, tt).unwrap();
            assert!((e.v - s[p].v).abs() < 1e-12);
            assert!((e.dxx - s[p].dxx).abs() < 1e-9);
        }
    }
}
