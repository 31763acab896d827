//! Damped Newton / least-squares iteration for the semilinear null-control
//! problem, together with the pure Newton and Picard baselines.
//!
//! All state lives in weighted coordinates: `z = ρ y`, the control
//! coefficient field `m_f` with `f = −ρ₀⁻¹ m_f` on `q_T`, and the weighted
//! residual `r = ρ₂ (y_t − ν y_xx + g(y) − f 1_ω)`. The residual is never
//! re-derived from `y`; it follows the exact recursion
//! `r ← (1−λ) r + ρ₂ l(y, −λY¹)` with `l(y, w) = g(y+w) − g(y) − g′(y) w`.

use rayon::prelude::*;

use crate::control::{solve_control, ControlUpdate, Source};
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::fem::C1Field;
use crate::forward::{solve_forward, ForwardConfig, ForwardProblem, Trajectory};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    LeastSquares,
    Newton,
    Picard,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::LeastSquares => "ls",
            Variant::Newton => "newton",
            Variant::Picard => "picard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Stop once `E < epsilon`.
    pub epsilon: f64,
    /// Upper end of the line-search interval.
    pub step_max: f64,
    pub max_iters: usize,
    pub variant: Variant,
    /// Declare divergence once `√(2E)` exceeds this multiple of its initial value.
    pub divergence_cap: f64,
    /// Picard stops when the relative increment of `y` drops below this.
    pub picard_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            step_max: 1.0,
            max_iters: 60,
            variant: Variant::LeastSquares,
            divergence_cap: 20.0,
            picard_tol: 1e-3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Param(format!("run.epsilon = {} must be > 0", self.epsilon)));
        }
        if !(self.step_max >= 1.0) {
            return Err(Error::Param(format!("run.step_max = {} must be >= 1", self.step_max)));
        }
        if !(self.divergence_cap > 1.0) {
            return Err(Error::Param(format!("run.divergence_cap = {} must be > 1", self.divergence_cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterateState {
    /// `ρ y` at the quadrature points.
    pub z: Vec<f64>,
    /// Control coefficients, `f = −ρ₀⁻¹ m_f` on `q_T`.
    pub mf: C1Field,
    pub mf_values: Vec<f64>,
    /// `ρ₂ B` at the quadrature points.
    pub r: Vec<f64>,
    pub e: f64,
    pub k: usize,
}

/// One row of the iteration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub rel_dy: Option<f64>,
    pub rel_df: Option<f64>,
    pub norm_y: f64,
    pub norm_f: f64,
    pub sqrt2e: f64,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    Diverged,
    MaxIter,
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Diverged => "diverged",
            RunStatus::MaxIter => "maxiter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<IterationRecord>,
    pub state: IterateState,
    pub status: RunStatus,
    /// `(‖ζ‖ + ‖m‖_{q_T}) / √E` for every computed direction.
    pub direction_ratios: Vec<f64>,
}

pub struct Solver<'a> {
    pub disc: &'a Discretization,
    pub g: &'a Nonlinearity,
}

impl<'a> Solver<'a> {
    pub fn new(disc: &'a Discretization, g: &'a Nonlinearity) -> Self {
        Self { disc, g }
    }

    /// `y = ρ⁻¹ z` at every point.
    pub fn unweighted_y(&self, z: &[f64]) -> Vec<f64> {
        z.par_iter()
            .zip(self.disc.quad.bundles.par_iter())
            .map(|(z, b)| b.rho_inv * z)
            .collect()
    }

    /// `f = −ρ₀⁻¹ m_f` on `ω`, zero elsewhere.
    pub fn unweighted_f(&self, mf_values: &[f64]) -> Vec<f64> {
        let q = &self.disc.quad;
        (0..q.len())
            .into_par_iter()
            .map(|p| if q.omega_at(p) { -q.bundles[p].rho0_inv * mf_values[p] } else { 0.0 })
            .collect()
    }

    fn state_from(&self, z: Vec<f64>, mf: C1Field, mf_values: Vec<f64>, r: Vec<f64>, k: usize) -> Result<IterateState> {
        if z.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("iterate"));
        }
        let e = self.disc.riesz.weighted_e(&r);
        Ok(IterateState { z, mf, mf_values, r, e, k })
    }

    /// Linear controlled pair (`g ≡ 0`) and its residual `ρ₂ g(y₀)`.
    pub fn init_state(&self, u0: &(dyn Fn(f64) -> f64 + Sync)) -> Result<IterateState> {
        let q = &self.disc.quad;
        let zero = vec![0.0; q.len()];
        let upd = solve_control(self.disc, &zero, Source::Initial(u0))?;
        let r = upd
            .zeta
            .par_iter()
            .zip(q.bundles.par_iter())
            .map(|(&z, b)| b.w12 * z * self.g.gtilde(b.rho_inv * z))
            .collect();
        self.state_from(upd.zeta, upd.mu, upd.mu_values, r, 0)
    }

    /// Controlled solution of the linearisation at `y_k` with the current
    /// residual as source.
    pub fn direction(&self, state: &IterateState) -> Result<ControlUpdate> {
        let a = self.potential_gprime(&state.z);
        solve_control(self.disc, &a, Source::Residual(&state.r))
    }

    fn potential_gprime(&self, z: &[f64]) -> Vec<f64> {
        z.par_iter()
            .zip(self.disc.quad.bundles.par_iter())
            .map(|(&z, b)| self.g.gprime(b.rho_inv * z))
            .collect()
    }

    #[inline]
    fn rho2_l_point(&self, p: usize, z: f64, zeta: f64, lambda: f64) -> f64 {
        let b = &self.disc.quad.bundles[p];
        let g = self.g;
        let zn = z - lambda * zeta;
        let u = b.rho_inv * z;
        b.w12 * (zn * g.gtilde(b.rho_inv * zn) - z * g.gtilde(u) + lambda * g.gprime(u) * zeta)
    }

    #[inline]
    fn next_residual_point(&self, state: &IterateState, upd: &ControlUpdate, p: usize, lambda: f64) -> f64 {
        (1.0 - lambda) * state.r[p] + self.rho2_l_point(p, state.z[p], upd.zeta[p], lambda)
    }

    /// `ρ₂ l(y, −λY¹)` at every point.
    pub fn rho2_l(&self, state: &IterateState, upd: &ControlUpdate, lambda: f64) -> Vec<f64> {
        (0..state.z.len())
            .into_par_iter()
            .map(|p| self.rho2_l_point(p, state.z[p], upd.zeta[p], lambda))
            .collect()
    }

    /// `E((y,f) − λ(Y¹,F¹))`.
    pub fn e_of_lambda(&self, state: &IterateState, upd: &ControlUpdate, lambda: f64) -> f64 {
        let ns = self.disc.quad.n_space();
        self.disc.riesz.weighted_e_with(|lt, buf| {
            let base = lt * ns;
            for (k, v) in buf.iter_mut().enumerate() {
                *v = self.next_residual_point(state, upd, base + k, lambda);
            }
        })
    }

    /// Minimiser of `E(λ)` on `[0, step_max]`: a 64-point scan followed by a
    /// golden-section refinement around the best sample. Ties go to the
    /// smaller step.
    pub fn line_search(&self, state: &IterateState, upd: &ControlUpdate, step_max: f64) -> (f64, f64) {
        const SAMPLES: usize = 64;
        let lam: Vec<f64> = (0..SAMPLES).map(|i| step_max * i as f64 / (SAMPLES - 1) as f64).collect();
        let vals: Vec<f64> = lam.iter().map(|&l| self.e_of_lambda(state, upd, l)).collect();
        let mut best = 0;
        for i in 1..SAMPLES {
            if vals[i] < vals[best] {
                best = i;
            }
        }
        let mut lo = lam[best.saturating_sub(1)];
        let mut hi = lam[(best + 1).min(SAMPLES - 1)];
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - phi * (hi - lo);
        let mut d = lo + phi * (hi - lo);
        let mut fc = self.e_of_lambda(state, upd, c);
        let mut fd = self.e_of_lambda(state, upd, d);
        while hi - lo > 1e-6 {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = self.e_of_lambda(state, upd, c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = self.e_of_lambda(state, upd, d);
            }
        }
        let (cand, fcand) = if fc <= fd { (c, fc) } else { (d, fd) };
        if fcand < vals[best] || (fcand == vals[best] && cand < lam[best]) {
            (cand, fcand)
        } else {
            (lam[best], vals[best])
        }
    }

    /// `(y, f) ← (y, f) − λ (Y¹, F¹)` with the residual recursion.
    pub fn step(&self, state: &IterateState, upd: &ControlUpdate, lambda: f64) -> Result<IterateState> {
        let n = state.z.len();
        let z: Vec<f64> = (0..n).into_par_iter().map(|p| state.z[p] - lambda * upd.zeta[p]).collect();
        let r: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| self.next_residual_point(state, upd, p, lambda))
            .collect();
        // f_{k+1} = f_k − λF¹ with f = −ρ₀⁻¹m_f and F¹ = −ρ₀⁻¹μ  ⇒  m_f ← m_f − λμ
        let mut mf = state.mf.clone();
        mf.axpy(-lambda, &upd.mu);
        let mf_values: Vec<f64> = state
            .mf_values
            .iter()
            .zip(&upd.mu_values)
            .map(|(a, b)| a - lambda * b)
            .collect();
        self.state_from(z, mf, mf_values, r, state.k + 1)
    }

    fn norms(&self, state: &IterateState) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let q = &self.disc.quad;
        let y = self.unweighted_y(&state.z);
        let f = self.unweighted_f(&state.mf_values);
        let ny = q.l2_norm(&y);
        let nf = q.l2_norm_omega(&f);
        (y, f, ny, nf)
    }

    fn rel_diff(&self, a: &[f64], b: &[f64], omega_only: bool) -> f64 {
        let q = &self.disc.quad;
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let (num, den) = if omega_only {
            (q.l2_norm_omega(&d), q.l2_norm_omega(b))
        } else {
            (q.l2_norm(&d), q.l2_norm(b))
        };
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Least-squares or pure Newton run from the linear controlled pair.
    pub fn run(&self, u0: &(dyn Fn(f64) -> f64 + Sync), cfg: &RunConfig) -> Result<RunOutcome> {
        cfg.validate()?;
        if cfg.variant == Variant::Picard {
            return self.picard_run(u0, cfg);
        }
        let mut state = self.init_state(u0)?;
        let (mut y_prev, mut f_prev, ny, nf) = self.norms(&state);
        let e0 = state.e;
        let mut records = vec![IterationRecord {
            k: 0,
            rel_dy: None,
            rel_df: None,
            norm_y: ny,
            norm_f: nf,
            sqrt2e: (2.0 * state.e).sqrt(),
            lambda: None,
        }];
        let mut ratios = Vec::new();
        let status = loop {
            if state.e < cfg.epsilon {
                break RunStatus::Converged;
            }
            if (2.0 * state.e).sqrt() > cfg.divergence_cap * (2.0 * e0).sqrt() || !state.e.is_finite() {
                break RunStatus::Diverged;
            }
            if state.k >= cfg.max_iters {
                break RunStatus::MaxIter;
            }
            let upd = self.direction(&state)?;
            ratios.push((upd.norm_zeta(&self.disc.quad) + upd.norm_mu(&self.disc.quad)) / state.e.sqrt());
            let lambda = match cfg.variant {
                Variant::Newton => 1.0,
                _ => self.line_search(&state, &upd, cfg.step_max).0,
            };
            records.last_mut().unwrap().lambda = Some(lambda);
            state = self.step(&state, &upd, lambda)?;
            let (y, f, ny, nf) = self.norms(&state);
            records.push(IterationRecord {
                k: state.k,
                rel_dy: Some(self.rel_diff(&y, &y_prev, false)),
                rel_df: Some(self.rel_diff(&f, &f_prev, true)),
                norm_y: ny,
                norm_f: nf,
                sqrt2e: (2.0 * state.e).sqrt(),
                lambda: None,
            });
            y_prev = y;
            f_prev = f;
        };
        Ok(RunOutcome {
            records,
            state,
            status,
            direction_ratios: ratios,
        })
    }

    /// Fixed-point baseline: `y_k` is the controlled solution of
    /// `y_t − ν y_xx + g̃(y_{k−1}) y = f 1_ω`, `y(0) = u₀`.
    pub fn picard_run(&self, u0: &(dyn Fn(f64) -> f64 + Sync), cfg: &RunConfig) -> Result<RunOutcome> {
        let q = &self.disc.quad;
        let mut potential = vec![0.0; q.len()];
        let mut records: Vec<IterationRecord> = Vec::new();
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut k = 0;
        loop {
            let upd = solve_control(self.disc, &potential, Source::Initial(u0))?;
            // residual of the semilinear equation: y (g̃(y) − A)
            let r: Vec<f64> = (0..q.len())
                .into_par_iter()
                .map(|p| {
                    let b = &q.bundles[p];
                    let z = upd.zeta[p];
                    b.w12 * z * (self.g.gtilde(b.rho_inv * z) - potential[p])
                })
                .collect();
            let state = self.state_from(upd.zeta, upd.mu, upd.mu_values, r, k)?;
            let (y, f, ny, nf) = self.norms(&state);
            let (rel_dy, rel_df) = match &prev {
                Some((yp, fp)) => (Some(self.rel_diff(&y, yp, false)), Some(self.rel_diff(&f, fp, true))),
                None => (None, None),
            };
            records.push(IterationRecord {
                k,
                rel_dy,
                rel_df,
                norm_y: ny,
                norm_f: nf,
                sqrt2e: (2.0 * state.e).sqrt(),
                lambda: None,
            });
            let done = rel_dy.is_some_and(|d| d < cfg.picard_tol);
            if done || k + 1 >= cfg.max_iters {
                let status = if done { RunStatus::Converged } else { RunStatus::MaxIter };
                return Ok(RunOutcome {
                    records,
                    state,
                    status,
                    direction_ratios: Vec::new(),
                });
            }
            potential = y.iter().map(|&v| self.g.gtilde(v)).collect();
            prev = Some((y, f));
            k += 1;
        }
    }

    /// Runs the forward solver with the control of `state` and the
    /// semilinear reaction; returns `‖y(T)‖ / ‖u₀‖` and the trajectory.
    pub fn null_control_report(
        &self,
        state: &IterateState,
        u0: &(dyn Fn(f64) -> f64 + Sync),
        cfg: &ForwardConfig,
    ) -> Result<(f64, Trajectory)> {
        let w = self.disc.weights;
        let mf = &state.mf;
        let control = |x: f64, t: f64| -> f64 {
            match (w.bundle(x, t), mf.value(x, t)) {
                (Ok(b), Ok(v)) => -b.rho0_inv * v,
                _ => f64::NAN,
            }
        };
        let p = ForwardProblem {
            nu: self.disc.nu,
            horizon: self.disc.horizon(),
            omega: w.omega,
            g: self.g,
            u0: &u0,
            control: &control,
        };
        let tr = solve_forward(&p, cfg)?;
        // ‖u₀‖ with the same P1 norm the trajectory uses
        let u0_norm = tr.norms[0];
        Ok((tr.final_norm() / u0_norm, tr))
    }
}

/// Order `p` from a least-squares fit of `log e_{k+1}` against `log e_k`
/// over the trailing `window` values of `e` (at least 3).
pub fn convergence_order_of(e: &[f64], window: usize) -> Result<f64> {
    let window = window.max(3);
    if e.len() < window || e.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InsufficientData(format!(
            "need {window} positive error values, got {}",
            e.len()
        )));
    }
    let tail = &e[e.len() - window..];
    let xs: Vec<f64> = tail[..tail.len() - 1].iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = tail[1..].iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("constant error sequence".into()));
    }
    Ok(sxy / sxx)
}

/// Convergence order from the `√(2E)` column; the window is the last quarter
/// of the records, never fewer than three.
pub fn convergence_order(records: &[IterationRecord]) -> Result<f64> {
    if records.len() < 4 {
        return Err(Error::InsufficientData(format!("{} records, need 4", records.len())));
    }
    let e: Vec<f64> = records.iter().map(|r| r.sqrt2e).collect();
    convergence_order_of(&e, (records.len() / 4).max(3))
}
