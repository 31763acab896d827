//! Self-check suite behind `heatctl check`: weight identities, operator
//! finite-difference checks, Riesz analytic cases, the derivative identity,
//! monotone descent and forward-oracle checks. Everything runs on a 16×16
//! mesh except the null-control oracle, which uses the configured mesh.

use std::f64::consts::PI;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::control::apply_d;
use crate::discretization::Discretization;
use crate::driver::{RunConfig, RunStatus, Solver, Variant};
use crate::fem::{C1Field, Grid, QuadGrid};
use crate::forward::{solve_forward, ForwardConfig, ForwardProblem, Scheme};
use crate::nonlinearity::Nonlinearity;
use crate::riesz::RieszSlice;
use crate::weights::WeightParams;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Weight parameters taken from the configuration without validation, so
/// that a corrupted setting shows up as a failed check.
fn raw_weights(cfg: &ExperimentConfig) -> WeightParams {
    WeightParams {
        s: cfg.s,
        lam: cfg.lam,
        m: cfg.m,
        horizon: cfg.horizon,
        omega: cfg.omega(),
    }
}

fn check_beta_positive(cfg: &ExperimentConfig) -> Outcome {
    let w = raw_weights(cfg);
    let mut min = f64::INFINITY;
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        let b = w.beta(x).map_err(|e| e.to_string())?.0;
        min = min.min(b);
    }
    verdict(min > 0.0, format!("min beta = {min:.6e} over 1001 points"))
}

fn check_weight_identities(cfg: &ExperimentConfig) -> Outcome {
    let w = raw_weights(cfg);
    let t_end = cfg.horizon;
    let mut worst_w: f64 = 0.0;
    let mut worst_log: f64 = 0.0;
    for i in 1..20 {
        for j in 0..20 {
            let x = i as f64 / 20.0;
            let t = t_end * j as f64 / 20.0;
            let b = w.bundle(x, t).map_err(|e| e.to_string())?;
            worst_w = worst_w.max((b.w32 - (t_end - t) * b.w12).abs());
            if b.rho0_inv > 0.0 && b.rho_inv > 0.0 {
                let lhs = b.rho0_inv.ln();
                let rhs = b.rho_inv.ln() - 1.5 * (t_end - t).ln();
                worst_log = worst_log.max((lhs - rhs).abs() / rhs.abs().max(1.0));
            }
        }
    }
    let b = w.bundle(0.5, t_end).map_err(|e| e.to_string())?;
    let end_ok = b.rho_inv == 0.0 && b.w12 == 0.0 && b.w32 == 0.0;
    verdict(
        worst_w <= 1e-14 && worst_log <= 1e-12 && end_ok,
        format!("w32 identity {worst_w:.1e}, log relation {worst_log:.1e}, horizon limit {end_ok}"),
    )
}

fn check_weight_derivatives(cfg: &ExperimentConfig) -> Outcome {
    let w = raw_weights(cfg);
    let t_end = cfg.horizon;
    let lr = |x: f64, t: f64| w.log_rho(x, t).unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let x = 0.04 + 0.92 * ((k * 7) % 20) as f64 / 19.0;
        let t = t_end * (0.3 + 0.6 * k as f64 / 19.0);
        let b = w.bundle(x, t).map_err(|e| e.to_string())?;
        let h = 1e-6 * t_end;
        let lt = (lr(x, t + h) - lr(x, t - h)) / (2.0 * h);
        let lx = (lr(x + 1e-6, t) - lr(x - 1e-6, t)) / 2e-6;
        let hx = 1e-4;
        let lxx = (lr(x + hx, t) - 2.0 * lr(x, t) + lr(x - hx, t)) / (hx * hx);
        let rem: f64 = t_end - t;
        let dt = -1.5 * rem.sqrt() + rem.powf(1.5) * lt;
        let dx = rem.powf(1.5) * lx;
        let dxx = rem.powf(1.5) * (lxx + lx * lx);
        let rel = |a: f64, e: f64| (a - e).abs() / e.abs().max(1e-3);
        worst = worst.max(rel(b.c_dt, dt)).max(rel(b.c_dx, dx)).max(rel(b.c_dxx, dxx));
    }
    verdict(worst <= 1e-5, format!("max relative deviation {worst:.1e} at 20 points"))
}

fn check_nonlinearity(g: &Nonlinearity) -> Outcome {
    let mut worst_q: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    for i in 0..200 {
        let s = -10.0 + 20.0 * (i as f64 + 0.37) / 200.0;
        worst_q = worst_q.max((g.gtilde(s) * s - g.g(s)).abs() / g.g(s).abs().max(1e-12));
        let h = 1e-6;
        let fd = (g.g(s + h) - g.g(s - h)) / (2.0 * h);
        if s.abs() > 1e-3 {
            worst_d = worst_d.max((g.gprime(s) - fd).abs() / fd.abs().max(1e-3));
        }
    }
    let zero_ok = g.g(0.0) == 0.0;
    verdict(
        zero_ok && worst_q < 1e-12 && worst_d < 1e-4,
        format!("g(0)=0 {zero_ok}, quotient {worst_q:.1e}, derivative {worst_d:.1e}"),
    )
}

fn check_operator(disc: &Discretization) -> Outcome {
    let g = disc.grid;
    let mut mu = C1Field::zeros(g);
    let (i0, j0) = (g.nx / 2, (g.nt * 3) / 8);
    mu.coef[g.dof(i0, j0, 0)] = 1.0;
    mu.coef[g.dof(i0, j0, 1)] = 0.3;
    let zeta = apply_d(disc, &mu, &vec![0.0; disc.quad.len()]);
    let w = disc.weights;
    let t_end = disc.horizon();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (ci, cj) in [(i0 - 1, j0 - 1), (i0, j0)] {
        for (_, p) in disc.quad.cell_points(ci, cj) {
            if p % 3 != 0 {
                continue;
            }
            let (x0, t0) = disc.quad.point(p);
            let l0 = w.log_rho(x0, t0).map_err(|e| e.to_string())?;
            let qf = |x: f64, t: f64| {
                (t_end - t).powf(1.5) * (w.log_rho(x, t).unwrap_or(f64::NAN) - l0).exp() * mu.value(x, t).unwrap_or(f64::NAN)
            };
            let h = 2e-4;
            let dt = (-qf(x0, t0 + 2.0 * h) + 8.0 * qf(x0, t0 + h) - 8.0 * qf(x0, t0 - h) + qf(x0, t0 - 2.0 * h))
                / (12.0 * h);
            let dxx = (-qf(x0 + 2.0 * h, t0) + 16.0 * qf(x0 + h, t0) - 30.0 * qf(x0, t0) + 16.0 * qf(x0 - h, t0)
                - qf(x0 - 2.0 * h, t0))
                / (12.0 * h * h);
            let fd = -dt - disc.nu * dxx;
            worst = worst.max((zeta[p] - fd).abs() / zeta[p].abs().max(1e-2));
            n += 1;
        }
    }
    verdict(worst <= 1e-5 && n > 0, format!("max relative deviation {worst:.1e} at {n} points"))
}

fn check_riesz() -> Outcome {
    let n = 512;
    let x: Vec<f64> = (0..4 * n).map(|i| (i as f64 + 0.5) / (4 * n) as f64).collect();
    let w = vec![1.0 / (4 * n) as f64; 4 * n];
    let s = RieszSlice::new(&x, &w, n).map_err(|e| e.to_string())?;
    let sin: Vec<f64> = x.iter().map(|&v| (PI * v).sin()).collect();
    let e_sin = (s.hminus_norm_sq(&sin) * 2.0 * PI * PI - 1.0).abs();
    let e_one = (s.hminus_norm_sq(&vec![1.0; 4 * n]) * 12.0 - 1.0).abs();
    verdict(
        e_sin <= 1e-3 && e_one <= 1e-3,
        format!("sin load {e_sin:.1e}, constant load {e_one:.1e} relative"),
    )
}

fn check_forward_analytic(cfg: &ExperimentConfig) -> Outcome {
    let g = Nonlinearity::zero();
    let u0 = |x: f64| 10.0 * (PI * x).sin();
    let zero = |_: f64, _: f64| 0.0;
    let p = ForwardProblem {
        nu: cfg.nu,
        horizon: cfg.horizon,
        omega: cfg.omega(),
        g: &g,
        u0: &u0,
        control: &zero,
    };
    let fc = ForwardConfig {
        scheme: Scheme::CrankNicolson,
        ..cfg.forward
    };
    let tr = solve_forward(&p, &fc).map_err(|e| e.to_string())?;
    let exact = 10.0 * (-cfg.nu * PI * PI * cfg.horizon).exp() / 2f64.sqrt();
    let rel = (tr.final_norm() - exact).abs() / exact;
    let monotone = tr.norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    verdict(
        rel <= 1e-4 && monotone,
        format!("relative error {rel:.1e}, nonincreasing norm {monotone}"),
    )
}

fn small_disc(cfg: &ExperimentConfig) -> Result<Discretization, String> {
    let w = cfg.weight_params().map_err(|e| e.to_string())?;
    Discretization::new(w, cfg.nu, 16, 16, cfg.mesh.quad_order, cfg.riesz_refine, cfg.solver).map_err(|e| e.to_string())
}

fn check_derivative_identity(disc: &Discretization, g: &Nonlinearity, beta: f64) -> Outcome {
    let solver = Solver::new(disc, g);
    let u0 = move |x: f64| beta * (PI * x).sin();
    let state = solver.init_state(&u0).map_err(|e| e.to_string())?;
    if state.e == 0.0 {
        return Ok("E0 = 0, nothing to differentiate".into());
    }
    let upd = solver.direction(&state).map_err(|e| e.to_string())?;
    let lam = 1e-3;
    let el = solver.e_of_lambda(&state, &upd, lam);
    let dev = ((state.e - el) / lam - 2.0 * state.e).abs() / (2.0 * state.e);
    verdict(dev <= 5e-2, format!("relative deviation {dev:.2e} at lambda = 1e-3"))
}

fn check_descent(disc: &Discretization, g: &Nonlinearity, beta: f64) -> Outcome {
    let solver = Solver::new(disc, g);
    let u0 = move |x: f64| beta * (PI * x).sin();
    let cfg = RunConfig {
        max_iters: 4,
        variant: Variant::LeastSquares,
        ..RunConfig::default()
    };
    let out = solver.run(&u0, &cfg).map_err(|e| e.to_string())?;
    let e: Vec<f64> = out.records.iter().map(|r| r.sqrt2e).collect();
    let violations = e.windows(2).filter(|w| w[1] > w[0]).count();
    verdict(
        violations == 0,
        format!("{} iterations, sqrt(2E) {:.3e} -> {:.3e}, {violations} increases", e.len() - 1, e[0], e[e.len() - 1]),
    )
}

fn check_zero_fast_path(disc: &Discretization) -> Outcome {
    let g = Nonlinearity::zero();
    let solver = Solver::new(disc, &g);
    let u0 = |x: f64| 10.0 * (PI * x).sin();
    let out = solver.run(&u0, &RunConfig::default()).map_err(|e| e.to_string())?;
    verdict(
        out.status == RunStatus::Converged && out.records.len() == 1 && out.state.e == 0.0,
        format!("status {}, {} record(s), E0 = {:e}", out.status.name(), out.records.len(), out.state.e),
    )
}

fn check_null_control(cfg: &ExperimentConfig) -> Outcome {
    let disc = cfg.discretization().map_err(|e| e.to_string())?;
    let g = Nonlinearity::zero();
    let solver = Solver::new(&disc, &g);
    let u0 = |x: f64| 10.0 * (PI * x).sin();
    let state = solver.init_state(&u0).map_err(|e| e.to_string())?;
    let (ratio, _) = solver.null_control_report(&state, &u0, &cfg.forward).map_err(|e| e.to_string())?;
    verdict(
        ratio <= 5e-2,
        format!(
            "terminal ratio {ratio:.3e} (need <= 5e-2) on the {}x{} mesh",
            cfg.mesh.nx, cfg.mesh.nt
        ),
    )
}

fn check_assembly_grid(disc: &Discretization) -> Outcome {
    let g: Grid = disc.grid;
    let q: &QuadGrid = &disc.quad;
    let ok = g.n_free_dofs() > 0 && q.bundles.iter().all(|b| b.rho_inv.is_finite() && b.c_dxx.is_finite());
    verdict(ok, format!("{} dofs, {} quadrature points, all weight samples finite {ok}", g.n_dofs(), q.len()))
}

/// Runs every check; the configuration supplies geometry, weights and `g`.
pub fn check_suite(cfg: &ExperimentConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let (passed, detail) = match f() {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        out.push(CheckResult {
            name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        });
    };
    run("weights.beta_positive", &mut || check_beta_positive(cfg));
    run("weights.identities", &mut || check_weight_identities(cfg));
    run("weights.derivatives", &mut || check_weight_derivatives(cfg));
    let g = cfg.nonlinearity();
    run("nonlinearity.consistency", &mut || match &g {
        Ok(g) => check_nonlinearity(g),
        Err(e) => Err(e.to_string()),
    });
    run("riesz.analytic", &mut check_riesz);
    run("forward.analytic_decay", &mut || check_forward_analytic(cfg));
    let disc = small_disc(cfg);
    let beta = cfg.beta.unwrap_or(10.0);
    let with_disc = |f: &dyn Fn(&Discretization) -> Outcome| match &disc {
        Ok(d) => f(d),
        Err(e) => Err(format!("discretisation unavailable: {e}")),
    };
    run("fem.setup", &mut || with_disc(&check_assembly_grid));
    run("operator.finite_differences", &mut || with_disc(&check_operator));
    run("driver.zero_fast_path", &mut || with_disc(&check_zero_fast_path));
    run("oracle.linear_null_control", &mut || check_null_control(cfg));
    run("driver.derivative_identity", &mut || match &g {
        Ok(g) => with_disc(&|d| check_derivative_identity(d, g, beta)),
        Err(e) => Err(e.to_string()),
    });
    run("driver.monotone_descent", &mut || match &g {
        Ok(g) => with_disc(&|d| check_descent(d, g, beta)),
        Err(e) => Err(e.to_string()),
    });
    out
}
