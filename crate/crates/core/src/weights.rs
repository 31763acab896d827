//! Carleman weights `ρ = exp(s β(x) / ℓ(t))` and the derived family
//! `ρ₀ = (T−t)^{3/2} ρ`, `ρ₂ = (T−t)^{1/2} ρ`.
//!
//! `ρ` itself overflows long before `t` reaches the horizon, so nothing here
//! returns it. Callers get the inverse weights (which decay to zero) and the
//! ratio coefficients needed to expand `ρ⁻¹ L*(ρ₀ m)` with the product rule.

use crate::error::{Error, Result};

/// Control interval `ω = (a1, a2) ⊂ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a1: f64,
    pub a2: f64,
}

impl Interval {
    pub fn new(a1: f64, a2: f64) -> Result<Self> {
        if !(0.0 < a1 && a1 < a2 && a2 < 1.0) {
            return Err(Error::Param(format!(
                "control interval ({a1}, {a2}) must satisfy 0 < a1 < a2 < 1"
            )));
        }
        Ok(Self { a1, a2 })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.a1 && x < self.a2
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a1 + self.a2)
    }

    pub fn len(&self) -> f64 {
        self.a2 - self.a1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// Carleman exponent `s`.
    pub s: f64,
    /// Exponent `λ` inside `β`.
    pub lam: f64,
    /// Amplification `m > 1`.
    pub m: f64,
    pub horizon: f64,
    pub omega: Interval,
}

/// `‖η⁰‖_∞` for the construction used by [`eta0`].
pub const ETA0_NORM: f64 = 1.0;

impl WeightParams {
    pub fn new(s: f64, lam: f64, m: f64, horizon: f64, omega: Interval) -> Result<Self> {
        let p = Self {
            s,
            lam,
            m,
            horizon,
            omega,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Param(format!("weights.s = {} must be > 0", self.s)));
        }
        if !(self.lam > 0.0 && self.lam.is_finite()) {
            return Err(Error::Param(format!("weights.lam = {} must be > 0", self.lam)));
        }
        if !(self.m > 1.0 && self.m.is_finite()) {
            return Err(Error::Param(format!("weights.m = {} must be > 1", self.m)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Param(format!("horizon T = {} must be > 0", self.horizon)));
        }
        Interval::new(self.omega.a1, self.omega.a2)?;
        Ok(())
    }

    /// `β(x)` and its first two derivatives.
    pub fn beta(&self, x: f64) -> Result<(f64, f64, f64)> {
        let (e, de, dde) = eta0_full(x, &self.omega)?;
        let inner = (self.lam * (self.m * ETA0_NORM + e)).exp();
        let b = (2.0 * self.lam * self.m * ETA0_NORM).exp() - inner;
        let db = -self.lam * de * inner;
        let ddb = -self.lam * (dde + self.lam * de * de) * inner;
        Ok((b, db, ddb))
    }

    /// Smallest value of `β` over `[0, 1]` (attained at the maximum of `η⁰`).
    pub fn beta_min(&self) -> f64 {
        (2.0 * self.lam * self.m * ETA0_NORM).exp() - (self.lam * (self.m + 1.0) * ETA0_NORM).exp()
    }

    /// `log ρ(x, t) = s β(x) / ℓ(t)`; infinite at `t = T`.
    pub fn log_rho(&self, x: f64, t: f64) -> Result<f64> {
        let (b, _, _) = self.beta(x)?;
        let (l, _) = ell(t, self.horizon)?;
        Ok(self.s * b / l)
    }

    /// `ρ₀(x, 0)`, needed for the initial-data load. This is the only place a
    /// growing weight is materialised; it is finite because `ℓ(0) = 3T²/16`.
    pub fn rho0_initial(&self, x: f64) -> Result<f64> {
        let v = self.horizon.powf(1.5) * self.log_rho(x, 0.0)?.exp();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("rho0 at t = 0 (weights.s too large)"))
        }
    }

    pub fn bundle(&self, x: f64, t: f64) -> Result<WeightBundle> {
        bundle(x, t, self)
    }
}

/// Weight values and operator-coefficient ratios at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightBundle {
    /// `ρ⁻¹`
    pub rho_inv: f64,
    /// `ρ₀⁻¹`
    pub rho0_inv: f64,
    /// `(T−t)^{3/2} = ρ₀/ρ`
    pub w32: f64,
    /// `(T−t)^{1/2} = ρ₂/ρ`
    pub w12: f64,
    /// `ρ⁻¹ ∂_t ρ₀`
    pub c_dt: f64,
    /// `ρ⁻¹ ∂_x ρ₀`
    pub c_dx: f64,
    /// `ρ⁻¹ ∂_xx ρ₀`
    pub c_dxx: f64,
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "x",
            value: x,
            domain: "[0, 1]",
        })
    }
}

/// `η⁰` and its first derivative: two parabolas matched in value and slope at
/// the midpoint of `ω`, vanishing at both ends and peaking at 1.
pub fn eta0(x: f64, omega: &Interval) -> Result<(f64, f64)> {
    let (v, d, _) = eta0_full(x, omega)?;
    Ok((v, d))
}

fn eta0_full(x: f64, omega: &Interval) -> Result<(f64, f64, f64)> {
    check_unit(x)?;
    let c = omega.midpoint();
    if x <= c {
        let c2 = c * c;
        Ok((x * (2.0 * c - x) / c2, 2.0 * (c - x) / c2, -2.0 / c2))
    } else {
        let d2 = (1.0 - c) * (1.0 - c);
        Ok((
            (1.0 - x) * (x - 2.0 * c + 1.0) / d2,
            -2.0 * (x - c) / d2,
            -2.0 / d2,
        ))
    }
}

/// `ℓ(t)` and `ℓ′(t)`. At the junction `t = T/4` the right branch is used.
pub fn ell(t: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "[0, T]",
        });
    }
    if t >= 0.25 * horizon {
        Ok((t * (horizon - t), horizon - 2.0 * t))
    } else {
        Ok((3.0 * horizon * horizon / 16.0, 0.0))
    }
}

pub fn bundle(x: f64, t: f64, p: &WeightParams) -> Result<WeightBundle> {
    let (b, db, ddb) = p.beta(x)?;
    let (l, dl) = ell(t, p.horizon)?;
    let rem = p.horizon - t;
    if rem <= 0.0 {
        return Ok(WeightBundle::default());
    }
    let w12 = rem.sqrt();
    let w32 = w12 * rem;
    let expo = p.s * b / l;
    let rho_inv = (-expo).exp();
    let rho0_inv = (-expo - 1.5 * rem.ln()).exp();
    let sbx = p.s * db / l;
    Ok(WeightBundle {
        rho_inv,
        rho0_inv,
        w32,
        w12,
        c_dt: -1.5 * w12 - w32 * p.s * b * dl / (l * l),
        c_dx: w32 * sbx,
        c_dxx: w32 * (p.s * ddb / l + sbx * sbx),
    })
}
