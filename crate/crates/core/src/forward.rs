//! Independent initial-value solver for `y_t − ν y_xx + g(y) = f 1_ω`,
//! `y = 0` on the boundary: P1 elements in space, Crank–Nicolson or implicit
//! Euler in time, Newton on each step.
//!
//! It shares no discretisation code with the space-time solver; agreement
//! between the two is the evidence that a computed control actually steers
//! the state to rest.

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::weights::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardConfig {
    /// Number of P1 nodes including both boundary nodes.
    pub nx: usize,
    /// Number of time steps.
    pub nt: usize,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_maxit: usize,
    /// Abort when `‖y(t)‖_{L²}` exceeds this value.
    pub blowup_cap: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            nx: 513,
            nt: 2048,
            scheme: Scheme::CrankNicolson,
            newton_tol: 1e-10,
            newton_maxit: 30,
            blowup_cap: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardStatus {
    Completed,
    BlowUp { time: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Node abscissae, boundary included.
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    /// `‖y(t)‖_{L²(0,1)}` at every entry of `times`.
    pub norms: Vec<f64>,
    /// Nodal values at (up to) nine evenly spaced times.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub final_state: Vec<f64>,
    pub status: ForwardStatus,
}

impl Trajectory {
    pub fn final_norm(&self) -> f64 {
        *self.norms.last().unwrap_or(&f64::NAN)
    }
}

/// The forward problem data.
pub struct ForwardProblem<'a> {
    pub nu: f64,
    pub horizon: f64,
    pub omega: Interval,
    pub g: &'a Nonlinearity,
    pub u0: &'a dyn Fn(f64) -> f64,
    /// Control density `f(x, t)`; only sampled inside `ω`.
    pub control: &'a dyn Fn(f64, f64) -> f64,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

struct Mesh {
    n: usize,
    h: f64,
    /// control quadrature: left node, abscissa, weight·φ_left, weight·φ_right
    ctrl: Vec<(usize, f64, f64, f64)>,
}

impl Mesh {
    fn new(n: usize, omega: &Interval) -> Self {
        let cells = n - 1;
        let h = 1.0 / cells as f64;
        let mut ctrl = Vec::new();
        for e in 0..cells {
            let (xl, xr) = (e as f64 * h, (e + 1) as f64 * h);
            let (lo, hi) = (xl.max(omega.a1), xr.min(omega.a2));
            if hi <= lo {
                continue;
            }
            for (xi, w) in GAUSS3 {
                let x = lo + xi * (hi - lo);
                let s = (x - xl) / h;
                let ww = w * (hi - lo);
                ctrl.push((e, x, ww * (1.0 - s), ww * s));
            }
        }
        Self { n, h, ctrl }
    }

    fn mass_norm(&self, y: &[f64]) -> f64 {
        let mut s = 0.0;
        for e in 0..self.n - 1 {
            let (a, b) = (y[e], y[e + 1]);
            s += self.h / 3.0 * (a * a + a * b + b * b);
        }
        s.sqrt()
    }

    /// `∫ f(·,t) φ_i` for every node.
    fn control_load(&self, f: &dyn Fn(f64, f64) -> f64, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(e, x, wl, wr) in &self.ctrl {
            let fv = f(x, t);
            out[e] += wl * fv;
            out[e + 1] += wr * fv;
        }
    }

    /// Stationary part `ν K y + G(y) − F` (full node vector) and, if asked, the
    /// tridiagonal Jacobian of `G`.
    fn operator(&self, y: &[f64], nu: f64, g: &Nonlinearity, load: &[f64], out: &mut [f64], jac: Option<(&mut [f64], &mut [f64])>) {
        let h = self.h;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut jac = jac;
        if let Some((d, o)) = jac.as_mut() {
            d.iter_mut().for_each(|v| *v = 0.0);
            o.iter_mut().for_each(|v| *v = 0.0);
        }
        for e in 0..self.n - 1 {
            let (a, b) = (y[e], y[e + 1]);
            let k = nu * (a - b) / h;
            out[e] += k;
            out[e + 1] -= k;
            for (xi, w) in GAUSS3 {
                let u = a + xi * (b - a);
                let gv = g.g(u) * w * h;
                out[e] += gv * (1.0 - xi);
                out[e + 1] += gv * xi;
                if let Some((d, o)) = jac.as_mut() {
                    let gp = g.gprime(u) * w * h;
                    d[e] += gp * (1.0 - xi) * (1.0 - xi);
                    d[e + 1] += gp * xi * xi;
                    o[e] += gp * xi * (1.0 - xi);
                }
            }
        }
        for (o, l) in out.iter_mut().zip(load) {
            *o -= l;
        }
    }
}

fn mass_apply(h: f64, y: &[f64], out: &mut [f64]) {
    let n = y.len();
    for i in 0..n {
        let mut s = 4.0 * y[i];
        if i > 0 {
            s += y[i - 1];
        }
        if i + 1 < n {
            s += y[i + 1];
        }
        out[i] = s * h / 6.0;
    }
}

/// General tridiagonal solve (Thomas), `sub[i]` couples rows `i` and `i+1`.
fn thomas(diag: &mut [f64], sub: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    for i in 0..n {
        if i > 0 {
            let m = sub[i - 1] / diag[i - 1];
            diag[i] -= m * c[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        if diag[i] == 0.0 || !diag[i].is_finite() {
            return Err(Error::NonFinite("forward Newton matrix"));
        }
        if i + 1 < n {
            c[i] = sub[i];
        }
    }
    for i in (0..n).rev() {
        let mut v = rhs[i];
        if i + 1 < n {
            v -= c[i] * rhs[i + 1];
        }
        rhs[i] = v / diag[i];
    }
    Ok(())
}

pub fn solve_forward(p: &ForwardProblem<'_>, cfg: &ForwardConfig) -> Result<Trajectory> {
    if cfg.nx < 3 || cfg.nt < 1 {
        return Err(Error::Param(format!("forward mesh {}x{} too small", cfg.nx, cfg.nt)));
    }
    let mesh = Mesh::new(cfg.nx, &p.omega);
    let n = cfg.nx;
    let h = mesh.h;
    let dt = p.horizon / cfg.nt as f64;
    let theta = match cfg.scheme {
        Scheme::ImplicitEuler => 1.0,
        Scheme::CrankNicolson => 0.5,
    };
    let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let mut y: Vec<f64> = x.iter().map(|&v| (p.u0)(v)).collect();
    y[0] = 0.0;
    y[n - 1] = 0.0;

    let mut load_old = vec![0.0; n];
    let mut load_new = vec![0.0; n];
    mesh.control_load(p.control, 0.0, &mut load_old);
    let mut op_old = vec![0.0; n];
    let mut op = vec![0.0; n];
    let mut my = vec![0.0; n];
    let mut my_old = vec![0.0; n];
    let (mut jd, mut jo) = (vec![0.0; n], vec![0.0; n - 1]);

    let snap_every = (cfg.nt / 8).max(1);
    let mut times = vec![0.0];
    let mut norms = vec![mesh.mass_norm(&y)];
    let mut snapshots = vec![(0.0, y.clone())];
    let mut status = ForwardStatus::Completed;

    for step in 1..=cfg.nt {
        let t_new = step as f64 * dt;
        mesh.control_load(p.control, t_new, &mut load_new);
        mesh.operator(&y, p.nu, p.g, &load_old, &mut op_old, None);
        mass_apply(h, &y, &mut my_old);
        let y_old = y.clone();
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        for _ in 0..cfg.newton_maxit {
            mesh.operator(&y, p.nu, p.g, &load_new, &mut op, Some((&mut jd, &mut jo)));
            mass_apply(h, &y, &mut my);
            // residual on interior nodes
            let m = n - 2;
            let mut rhs = vec![0.0; m];
            let mut diag = vec![0.0; m];
            let mut sub = vec![0.0; m.saturating_sub(1)];
            for i in 1..n - 1 {
                let r = (my[i] - my_old[i]) / dt + theta * op[i] + (1.0 - theta) * op_old[i];
                rhs[i - 1] = -r;
                diag[i - 1] = 4.0 * h / 6.0 / dt + theta * (2.0 * p.nu / h + jd[i]);
                if i + 1 < n - 1 {
                    sub[i - 1] = h / 6.0 / dt + theta * (-p.nu / h + jo[i]);
                }
            }
            last_res = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            thomas(&mut diag, &sub, &mut rhs)?;
            let mut du: f64 = 0.0;
            for i in 1..n - 1 {
                y[i] += rhs[i - 1];
                du = du.max(rhs[i - 1].abs());
            }
            let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if du <= cfg.newton_tol * (1.0 + ymax) {
                converged = true;
                break;
            }
        }
        if !converged {
            if y.iter().any(|v| !v.is_finite()) {
                status = ForwardStatus::BlowUp { time: t_new };
                y = y_old;
                break;
            }
            return Err(Error::NewtonStagnation {
                step,
                residual: last_res,
            });
        }
        std::mem::swap(&mut load_old, &mut load_new);
        let nrm = mesh.mass_norm(&y);
        times.push(t_new);
        norms.push(nrm);
        if step % snap_every == 0 {
            snapshots.push((t_new, y.clone()));
        }
        if !(nrm <= cfg.blowup_cap) {
            status = ForwardStatus::BlowUp { time: t_new };
            break;
        }
    }
    Ok(Trajectory {
        x,
        times,
        norms,
        snapshots,
        final_state: y,
        status,
    })
}
