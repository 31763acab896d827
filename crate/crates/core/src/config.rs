//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key has a default except `u0.beta`, which a run must set. Unknown
//! keys and malformed values are rejected with the key and the line number.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::discretization::{Discretization, SolverKind, SolverOptions};
use crate::driver::{RunConfig, Variant};
use crate::forward::{ForwardConfig, Scheme};
use crate::nonlinearity::Nonlinearity;
use crate::weights::{Interval, WeightParams};

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Override { index: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{}", path.display(), line),
            Origin::Override { index } => write!(f, "--set #{}", index + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        origin: Origin,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{origin}: key `{key}`: {msg}")]
    Invalid { origin: Origin, key: String, msg: String },
    #[error("key `{key}`: {msg}")]
    Check { key: String, msg: String },
}

/// Every recognised key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("geometry.a1", "0.1", "left end of the control interval"),
    ("geometry.a2", "0.3", "right end of the control interval"),
    ("geometry.T", "0.5", "time horizon"),
    ("geometry.nu", "0.1", "diffusion coefficient"),
    ("u0.beta", "(required)", "initial datum amplitude, u0 = beta sin(pi x)"),
    ("g.kind", "paper", "paper | linear | zero | custom-table"),
    ("g.a", "0.1", "junction point of the benchmark reaction"),
    ("g.alpha", "0.95", "growth exponent of the benchmark reaction"),
    ("g.c", "1", "slope of the linear nonlinearity"),
    ("g.smooth", "false", "use the twice differentiable inner branch"),
    ("g.table", "", "file of `s g` lines for g.kind=custom-table"),
    ("mesh.nx", "64", "space cells"),
    ("mesh.nt", "64", "time cells (multiple of 4)"),
    ("mesh.quad_order", "5", "Gauss points per direction and cell"),
    ("mesh.aligned", "false", "require the control interval ends on mesh lines"),
    ("solver.kind", "direct", "direct | cg"),
    ("solver.cg_tol", "1e-10", "relative residual for cg"),
    ("solver.cg_maxit", "20000", "iteration cap for cg"),
    ("riesz.refine", "4", "Riesz mesh oversampling factor"),
    ("forward.nx", "513", "forward solver nodes"),
    ("forward.nt", "2048", "forward solver time steps"),
    ("forward.scheme", "crank_nicolson", "crank_nicolson | implicit_euler"),
    ("run.epsilon", "1e-6", "stop once E < epsilon"),
    ("run.step_max", "1", "upper end of the line-search interval"),
    ("run.variant", "ls", "ls | newton | picard"),
    ("run.max_iters", "60", "iteration cap"),
    ("run.divergence_cap", "20", "divergence once sqrt(2E) exceeds this multiple of its start"),
    ("run.picard_tol", "1e-3", "Picard stop threshold on rel_dy"),
    ("weights.s", "8.6e-5", "Carleman exponent s"),
    ("weights.lam", "1", "exponent lambda inside beta(x)"),
    ("weights.m", "3", "amplification m > 1"),
    ("output.dir", "out", "output directory"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GKind {
    Benchmark,
    Linear,
    Zero,
    CustomTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GSpec {
    pub kind: GKind,
    pub a: f64,
    pub alpha: f64,
    pub c: f64,
    pub smooth: bool,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub nx: usize,
    pub nt: usize,
    pub quad_order: usize,
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub a1: f64,
    pub a2: f64,
    pub horizon: f64,
    pub nu: f64,
    pub beta: Option<f64>,
    pub g: GSpec,
    pub mesh: MeshSpec,
    pub solver: SolverOptions,
    pub riesz_refine: usize,
    pub forward: ForwardConfig,
    pub run: RunConfig,
    pub s: f64,
    pub lam: f64,
    pub m: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            a1: 0.1,
            a2: 0.3,
            horizon: 0.5,
            nu: 0.1,
            beta: None,
            g: GSpec {
                kind: GKind::Benchmark,
                a: 0.1,
                alpha: 0.95,
                c: 1.0,
                smooth: false,
                table: None,
            },
            mesh: MeshSpec {
                nx: 64,
                nt: 64,
                quad_order: 5,
                aligned: false,
            },
            solver: SolverOptions::default(),
            riesz_refine: 4,
            forward: ForwardConfig::default(),
            run: RunConfig::default(),
            s: 8.6e-5,
            lam: 1.0,
            m: 3.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn num<T: std::str::FromStr>(
    origin: &Origin,
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::Type {
        origin: origin.clone(),
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn choice<T: Copy>(
    origin: &Origin,
    key: &str,
    value: &str,
    options: &[(&str, T)],
    expected: &'static str,
) -> Result<T, ConfigError> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| ConfigError::Type {
            origin: origin.clone(),
            key: key.to_string(),
            value: value.to_string(),
            expected,
        })
}

impl ExperimentConfig {
    /// Reads `path` and then applies `overrides` (each `key=value`) in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
            cfg.apply_text(&text, path)?;
        }
        for (index, item) in overrides.iter().enumerate() {
            cfg.apply_line(item, Origin::Override { index })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses configuration text without touching the file system (except
    /// for a `g.table` file, which is read when the nonlinearity is built).
    pub fn parse_str(text: &str, name: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text, name)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            self.apply_line(raw, origin)?;
        }
        Ok(())
    }

    fn apply_line(&mut self, raw: &str, origin: Origin) -> Result<(), ConfigError> {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return Ok(());
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin,
                text: line.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                origin,
                text: line.to_string(),
            });
        }
        self.set(key, value, &origin)
    }

    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
        let o = origin;
        let real = "a real number";
        let count = "a non-negative integer";
        let boolean = "true or false";
        match key {
            "geometry.a1" => self.a1 = num(o, key, value, real)?,
            "geometry.a2" => self.a2 = num(o, key, value, real)?,
            "geometry.T" => self.horizon = num(o, key, value, real)?,
            "geometry.nu" => self.nu = num(o, key, value, real)?,
            "u0.beta" => self.beta = Some(num(o, key, value, real)?),
            "g.kind" => {
                self.g.kind = choice(
                    o,
                    key,
                    value,
                    &[
                        ("paper", GKind::Benchmark),
                        ("linear", GKind::Linear),
                        ("zero", GKind::Zero),
                        ("custom-table", GKind::CustomTable),
                    ],
                    "one of paper, linear, zero, custom-table",
                )?
            }
            "g.a" => self.g.a = num(o, key, value, real)?,
            "g.alpha" => self.g.alpha = num(o, key, value, real)?,
            "g.c" => self.g.c = num(o, key, value, real)?,
            "g.smooth" => self.g.smooth = num(o, key, value, boolean)?,
            "g.table" => self.g.table = (!value.is_empty()).then(|| PathBuf::from(value)),
            "mesh.nx" => self.mesh.nx = num(o, key, value, count)?,
            "mesh.nt" => self.mesh.nt = num(o, key, value, count)?,
            "mesh.quad_order" => self.mesh.quad_order = num(o, key, value, count)?,
            "mesh.aligned" => self.mesh.aligned = num(o, key, value, boolean)?,
            "solver.kind" => {
                self.solver.kind = choice(
                    o,
                    key,
                    value,
                    &[("direct", SolverKind::Direct), ("cg", SolverKind::Cg)],
                    "one of direct, cg",
                )?
            }
            "solver.cg_tol" => self.solver.cg_tol = num(o, key, value, real)?,
            "solver.cg_maxit" => self.solver.cg_maxit = num(o, key, value, count)?,
            "riesz.refine" => self.riesz_refine = num(o, key, value, count)?,
            "forward.nx" => self.forward.nx = num(o, key, value, count)?,
            "forward.nt" => self.forward.nt = num(o, key, value, count)?,
            "forward.scheme" => {
                self.forward.scheme = choice(
                    o,
                    key,
                    value,
                    &[
                        ("crank_nicolson", Scheme::CrankNicolson),
                        ("implicit_euler", Scheme::ImplicitEuler),
                    ],
                    "one of crank_nicolson, implicit_euler",
                )?
            }
            "run.epsilon" => self.run.epsilon = num(o, key, value, real)?,
            "run.step_max" => self.run.step_max = num(o, key, value, real)?,
            "run.variant" => {
                self.run.variant = choice(
                    o,
                    key,
                    value,
                    &[
                        ("ls", Variant::LeastSquares),
                        ("newton", Variant::Newton),
                        ("picard", Variant::Picard),
                    ],
                    "one of ls, newton, picard",
                )?
            }
            "run.max_iters" => self.run.max_iters = num(o, key, value, count)?,
            "run.divergence_cap" => self.run.divergence_cap = num(o, key, value, real)?,
            "run.picard_tol" => self.run.picard_tol = num(o, key, value, real)?,
            "weights.s" => self.s = num(o, key, value, real)?,
            "weights.lam" => self.lam = num(o, key, value, real)?,
            "weights.m" => self.m = num(o, key, value, real)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: o.clone(),
                    key: key.to_string(),
                })
            }
        }
        let finite_real = matches!(
            key,
            "geometry.a1"
                | "geometry.a2"
                | "geometry.T"
                | "geometry.nu"
                | "u0.beta"
                | "g.a"
                | "g.alpha"
                | "g.c"
                | "solver.cg_tol"
                | "run.epsilon"
                | "run.step_max"
                | "run.divergence_cap"
                | "run.picard_tol"
                | "weights.s"
                | "weights.lam"
                | "weights.m"
        );
        if finite_real && !value.parse::<f64>().is_ok_and(f64::is_finite) {
            return Err(ConfigError::Invalid {
                origin: o.clone(),
                key: key.to_string(),
                msg: format!("`{value}` is not finite"),
            });
        }
        Ok(())
    }

    /// Range checks that do not depend on a single line.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| {
            Err(ConfigError::Check {
                key: key.to_string(),
                msg,
            })
        };
        if !(0.0 < self.a1 && self.a1 < self.a2 && self.a2 < 1.0) {
            return bad("geometry.a1", format!("need 0 < a1 < a2 < 1, got ({}, {})", self.a1, self.a2));
        }
        if !(self.horizon > 0.0) {
            return bad("geometry.T", format!("must be > 0, got {}", self.horizon));
        }
        if !(self.nu > 0.0) {
            return bad("geometry.nu", format!("must be > 0, got {}", self.nu));
        }
        if self.mesh.nx < 2 {
            return bad("mesh.nx", format!("must be >= 2, got {}", self.mesh.nx));
        }
        if self.mesh.nt < 4 || self.mesh.nt % 4 != 0 {
            return bad("mesh.nt", format!("must be a positive multiple of 4, got {}", self.mesh.nt));
        }
        if !(1..=10).contains(&self.mesh.quad_order) {
            return bad("mesh.quad_order", format!("must be in 1..=10, got {}", self.mesh.quad_order));
        }
        if self.mesh.aligned {
            for (key, a) in [("geometry.a1", self.a1), ("geometry.a2", self.a2)] {
                let k = a * self.mesh.nx as f64;
                if (k - k.round()).abs() > 1e-9 {
                    return bad(key, format!("{a} is not a mesh line of a {}-cell grid (mesh.aligned=true)", self.mesh.nx));
                }
            }
        }
        if self.riesz_refine == 0 {
            return bad("riesz.refine", "must be >= 1".into());
        }
        if self.forward.nx < 3 {
            return bad("forward.nx", format!("must be >= 3, got {}", self.forward.nx));
        }
        if self.forward.nt == 0 {
            return bad("forward.nt", "must be >= 1".into());
        }
        if !(self.run.epsilon > 0.0) {
            return bad("run.epsilon", format!("must be > 0, got {}", self.run.epsilon));
        }
        if !(self.run.step_max >= 1.0) {
            return bad("run.step_max", format!("must be >= 1, got {}", self.run.step_max));
        }
        if !(self.run.divergence_cap > 1.0) {
            return bad("run.divergence_cap", format!("must be > 1, got {}", self.run.divergence_cap));
        }
        if !(self.solver.cg_tol > 0.0) {
            return bad("solver.cg_tol", format!("must be > 0, got {}", self.solver.cg_tol));
        }
        if !(self.s > 0.0) {
            return bad("weights.s", format!("must be > 0, got {}", self.s));
        }
        if !(self.lam > 0.0) {
            return bad("weights.lam", format!("must be > 0, got {}", self.lam));
        }
        if self.g.kind == GKind::CustomTable && self.g.table.is_none() {
            return bad("g.table", "required when g.kind = custom-table".into());
        }
        Ok(())
    }

    pub fn beta(&self) -> Result<f64, ConfigError> {
        self.beta.ok_or_else(|| ConfigError::Check {
            key: "u0.beta".into(),
            msg: "required for this command".into(),
        })
    }

    pub fn omega(&self) -> Interval {
        Interval {
            a1: self.a1,
            a2: self.a2,
        }
    }

    pub fn weight_params(&self) -> crate::Result<WeightParams> {
        WeightParams::new(self.s, self.lam, self.m, self.horizon, self.omega())
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, ConfigError> {
        let wrap = |key: &str, e: crate::Error| ConfigError::Check {
            key: key.to_string(),
            msg: e.to_string(),
        };
        match self.g.kind {
            GKind::Zero => Ok(Nonlinearity::zero()),
            GKind::Linear => Ok(Nonlinearity::linear(self.g.c)),
            GKind::Benchmark if self.g.smooth => {
                Nonlinearity::benchmark_smooth(self.g.a, self.g.alpha).map_err(|e| wrap("g.a", e))
            }
            GKind::Benchmark => Nonlinearity::benchmark(self.g.a, self.g.alpha).map_err(|e| wrap("g.a", e)),
            GKind::CustomTable => {
                let path = self.g.table.as_ref().expect("checked in validate");
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
                let (s, g) = parse_table(&text, path)?;
                Nonlinearity::table(s, g).map_err(|e| wrap("g.table", e))
            }
        }
    }

    pub fn discretization(&self) -> crate::Result<Discretization> {
        Discretization::new(
            self.weight_params()?,
            self.nu,
            self.mesh.nx,
            self.mesh.nt,
            self.mesh.quad_order,
            self.riesz_refine,
            self.solver,
        )
    }

    /// Canonical `key = value` listing of every setting.
    pub fn dump(&self) -> String {
        let g_kind = match self.g.kind {
            GKind::Benchmark => "paper",
            GKind::Linear => "linear",
            GKind::Zero => "zero",
            GKind::CustomTable => "custom-table",
        };
        let solver_kind = match self.solver.kind {
            SolverKind::Direct => "direct",
            SolverKind::Cg => "cg",
        };
        let scheme = match self.forward.scheme {
            Scheme::CrankNicolson => "crank_nicolson",
            Scheme::ImplicitEuler => "implicit_euler",
        };
        let beta = self.beta.map(|b| b.to_string()).unwrap_or_default();
        let table = self.g.table.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let rows: Vec<(&str, String)> = vec![
            ("geometry.a1", self.a1.to_string()),
            ("geometry.a2", self.a2.to_string()),
            ("geometry.T", self.horizon.to_string()),
            ("geometry.nu", self.nu.to_string()),
            ("u0.beta", beta),
            ("g.kind", g_kind.into()),
            ("g.a", self.g.a.to_string()),
            ("g.alpha", self.g.alpha.to_string()),
            ("g.c", self.g.c.to_string()),
            ("g.smooth", self.g.smooth.to_string()),
            ("g.table", table),
            ("mesh.nx", self.mesh.nx.to_string()),
            ("mesh.nt", self.mesh.nt.to_string()),
            ("mesh.quad_order", self.mesh.quad_order.to_string()),
            ("mesh.aligned", self.mesh.aligned.to_string()),
            ("solver.kind", solver_kind.into()),
            ("solver.cg_tol", self.solver.cg_tol.to_string()),
            ("solver.cg_maxit", self.solver.cg_maxit.to_string()),
            ("riesz.refine", self.riesz_refine.to_string()),
            ("forward.nx", self.forward.nx.to_string()),
            ("forward.nt", self.forward.nt.to_string()),
            ("forward.scheme", scheme.into()),
            ("run.epsilon", self.run.epsilon.to_string()),
            ("run.step_max", self.run.step_max.to_string()),
            ("run.variant", self.run.variant.name().into()),
            ("run.max_iters", self.run.max_iters.to_string()),
            ("run.divergence_cap", self.run.divergence_cap.to_string()),
            ("run.picard_tol", self.run.picard_tol.to_string()),
            ("weights.s", self.s.to_string()),
            ("weights.lam", self.lam.to_string()),
            ("weights.m", self.m.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// `s g` pairs, one per line, `#` comments allowed.
fn parse_table(text: &str, path: &Path) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
    let mut s = Vec::new();
    let mut g = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let origin = Origin::File {
            path: path.to_path_buf(),
            line: i + 1,
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(ConfigError::Syntax {
                origin,
                text: line.to_string(),
            });
        }
        s.push(num(&origin, "g.table", parts[0], "a real number")?);
        g.push(num(&origin, "g.table", parts[1], "a real number")?);
    }
    Ok((s, g))
}
