//! Margin losses used by the classifiers.
//!
//! Every loss is a function of the margin argument `u = 1 - y f(x)`. The
//! robust loss is defined as the composition
//!
//! ```text
//! L_rhp(u) = eta * (1 - exp(-L_hp(u) / lambda))
//! ```
//!
//! of the Huberized pinball loss `L_hp` with a bounded exponential rescaling.
//! Writing it that way (rather than branch by branch) keeps the value, its
//! derivative and the convex/concave split `L_rhp = g + h` consistent by
//! construction.
//!
//! Branch intervals follow `u <= -s`, `-s < u <= 0`, `0 < u <= s`, `u > s`.
//! `L_hp` is C1, so knot membership does not change any value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;

/// Parameters of the rescaled Huberized pinball loss family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct LossParams {
    eta: f64,
    lambda: f64,
    s: f64,
    tau: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    eta: f64,
    lambda: f64,
    s: f64,
    tau: f64,
}

impl TryFrom<RawParams> for LossParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        LossParams::new(r.eta, r.lambda, r.s, r.tau)
    }
}

impl From<LossParams> for RawParams {
    fn from(p: LossParams) -> Self {
        RawParams {
            eta: p.eta,
            lambda: p.lambda,
            s: p.s,
            tau: p.tau,
        }
    }
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            eta: 1.0,
            lambda: 1.0,
            s: 1.0,
            tau: 0.5,
        }
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::domain(format!("tau must lie in [0, 1], got {tau}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_u(u: f64) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("margin argument must be finite, got {u}")))
    }
}

impl LossParams {
    pub fn new(eta: f64, lambda: f64, s: f64, tau: f64) -> Result<Self> {
        check_positive("eta", eta)?;
        check_positive("lambda", lambda)?;
        check_positive("s", s)?;
        check_tau(tau)?;
        Ok(LossParams {
            eta,
            lambda,
            s,
            tau,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `eta / lambda`, the slope scale shared by `g`, `delta` and the Lipschitz bound.
    pub fn kappa(&self) -> f64 {
        self.eta / self.lambda
    }

    pub(crate) fn hp(&self, u: f64) -> f64 {
        hp_value(u, self.s, self.tau)
    }

    pub(crate) fn hp_deriv(&self, u: f64) -> f64 {
        hp_slope(u, self.s, self.tau)
    }

    /// `1 - exp(-L_hp(u)/lambda)`, computed without cancellation.
    fn saturation(&self, u: f64) -> f64 {
        -(-self.hp(u) / self.lambda).exp_m1()
    }

    /// Always strictly below `eta`: once `exp(-L/lambda)` underflows the
    /// product would round to `eta`, so it is capped one ulp lower.
    pub(crate) fn rhp(&self, u: f64) -> f64 {
        (self.eta * self.saturation(u)).min(self.eta.next_down())
    }

    pub(crate) fn rhp_deriv(&self, u: f64) -> f64 {
        self.kappa() * self.hp_deriv(u) * (-self.hp(u) / self.lambda).exp()
    }

    pub(crate) fn g(&self, u: f64) -> f64 {
        self.kappa() * self.hp(u)
    }

    pub(crate) fn g_deriv(&self, u: f64) -> f64 {
        self.kappa() * self.hp_deriv(u)
    }

    pub(crate) fn h(&self, u: f64) -> f64 {
        -self.g(u) + self.rhp(u)
    }

    pub(crate) fn delta(&self, u: f64) -> f64 {
        self.kappa() * self.hp_deriv(u) * self.saturation(u)
    }
}

fn hp_value(u: f64, s: f64, tau: f64) -> f64 {
    if u > s {
        u - 0.5 * s
    } else if u > 0.0 {
        u * u / (2.0 * s)
    } else if u > -s {
        tau * u * u / (2.0 * s)
    } else {
        tau * (-u - 0.5 * s)
    }
}

fn hp_slope(u: f64, s: f64, tau: f64) -> f64 {
    if u > s {
        1.0
    } else if u > 0.0 {
        u / s
    } else if u > -s {
        tau * u / s
    } else {
        -tau
    }
}

pub fn hinge(u: f64) -> Result<f64> {
    check_u(u)?;
    Ok(if u >= 0.0 { u } else { 0.0 })
}

pub fn pinball(u: f64, tau: f64) -> Result<f64> {
    check_u(u)?;
    check_tau(tau)?;
    Ok(if u >= 0.0 { u } else { -tau * u })
}

pub fn huberized_pinball(u: f64, s: f64, tau: f64) -> Result<f64> {
    check_u(u)?;
    check_positive("s", s)?;
    check_tau(tau)?;
    Ok(hp_value(u, s, tau))
}

pub fn huberized_pinball_deriv(u: f64, s: f64, tau: f64) -> Result<f64> {
    check_u(u)?;
    check_positive("s", s)?;
    check_tau(tau)?;
    Ok(hp_slope(u, s, tau))
}

/// Rescaled Huberized pinball loss, bounded in `[0, eta)`.
pub fn rescaled_hp(u: f64, p: &LossParams) -> Result<f64> {
    check_u(u)?;
    Ok(p.rhp(u))
}

pub fn rescaled_hp_deriv(u: f64, p: &LossParams) -> Result<f64> {
    check_u(u)?;
    Ok(p.rhp_deriv(u))
}

/// Convex part `g(u) = (eta/lambda) L_hp(u)`.
pub fn g_part(u: f64, p: &LossParams) -> Result<f64> {
    check_u(u)?;
    Ok(p.g(u))
}

/// Concave part `h(u) = L_rhp(u) - g(u)`.
pub fn h_part(u: f64, p: &LossParams) -> Result<f64> {
    check_u(u)?;
    Ok(p.h(u))
}

/// CCCP weight `delta(u) = -h'(u) = (eta/lambda) L_hp'(u) (1 - exp(-L_hp(u)/lambda))`.
pub fn delta_coefficient(u: f64, p: &LossParams) -> Result<f64> {
    check_u(u)?;
    Ok(p.delta(u))
}

/// Supremum of `|L_rhp'|`: `|L_hp'| <= 1` and the exponential factor is at most 1.
pub fn lipschitz_bound(p: &LossParams) -> f64 {
    p.kappa()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherReport {
    /// Largest `Lbar(z) - Lbar(-z)` over the grid, with `Lbar(z) = L_rhp(1 - z)`.
    pub max_violation: f64,
    /// `Lbar'(0) = -L_rhp'(1)`.
    pub deriv_at_zero: f64,
    pub pass: bool,
}

/// Numeric check of the margin-loss consistency conditions: `Lbar(z) < Lbar(-z)`
/// for every `z > 0` in the grid, and `Lbar'(0) != 0`.
pub fn fisher_consistency_check(p: &LossParams, z_grid: &[f64]) -> Result<FisherReport> {
    if z_grid.is_empty() {
        return Err(Error::usage("consistency check needs a non-empty z grid"));
    }
    let mut max_violation = f64::NEG_INFINITY;
    for &z in z_grid {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::usage(format!("grid points must be positive, got {z}")));
        }
        let diff = p.rhp(1.0 - z) - p.rhp(1.0 + z);
        max_violation = max_violation.max(diff);
    }
    let deriv_at_zero = -p.rhp_deriv(1.0);
    Ok(FisherReport {
        max_violation,
        deriv_at_zero,
        pass: max_violation < 0.0 && deriv_at_zero.abs() > 1e-12,
    })
}

/// The four margin losses. Hinge ignores all parameters; pinball and the
/// Huberized pinball read `tau` (and `s`); the rescaled loss reads all four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Pinball,
    #[serde(rename = "hp")]
    HuberizedPinball,
    #[serde(rename = "rhp")]
    RescaledHP,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::RescaledHP,
        LossKind::HuberizedPinball,
        LossKind::Pinball,
        LossKind::Hinge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::Pinball => "pinball",
            LossKind::HuberizedPinball => "hp",
            LossKind::RescaledHP => "rhp",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "hinge" => Ok(LossKind::Hinge),
            "pinball" => Ok(LossKind::Pinball),
            "hp" => Ok(LossKind::HuberizedPinball),
            "rhp" => Ok(LossKind::RescaledHP),
            other => Err(Error::usage(format!(
                "unknown loss '{other}' (expected rhp, hp, pinball or hinge)"
            ))),
        }
    }

    pub fn value(&self, u: f64, p: &LossParams) -> Result<f64> {
        match self {
            LossKind::Hinge => hinge(u),
            LossKind::Pinball => pinball(u, p.tau),
            LossKind::HuberizedPinball => huberized_pinball(u, p.s, p.tau),
            LossKind::RescaledHP => rescaled_hp(u, p),
        }
    }

    /// Derivative in `u`; at the kink of hinge and pinball the right derivative is used.
    pub fn deriv(&self, u: f64, p: &LossParams) -> Result<f64> {
        check_u(u)?;
        Ok(match self {
            LossKind::Hinge => {
                if u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::Pinball => {
                if u >= 0.0 {
                    1.0
                } else {
                    -p.tau
                }
            }
            LossKind::HuberizedPinball => p.hp_deriv(u),
            LossKind::RescaledHP => p.rhp_deriv(u),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub u: f64,
    pub loss: f64,
    pub deriv: f64,
}

/// Inclusive grid `u_min, u_min + step, ..., <= u_max`.
pub fn loss_table(
    kind: LossKind,
    p: &LossParams,
    u_min: f64,
    u_max: f64,
    step: f64,
) -> Result<Vec<LossRow>> {
    if !(u_min.is_finite() && u_max.is_finite()) || u_min >= u_max {
        return Err(Error::usage(format!(
            "loss table needs u_min < u_max, got [{u_min}, {u_max}]"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::usage(format!("step must be > 0, got {step}")));
    }
    // Relative slack so that e.g. (-3, 3, 0.1) keeps its right endpoint.
    let count = ((u_max - u_min) / step * (1.0 + 1e-12)).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let u = u_min + k as f64 * step;
            Ok(LossRow {
                u,
                loss: kind.value(u, p)?,
                deriv: kind.deriv(u, p)?,
            })
        })
        .collect()
}

pub fn write_loss_csv<W: Write>(rows: &[LossRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "u,loss,deriv")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{}",
            fmt_f64(r.u),
            fmt_f64(r.loss),
            fmt_f64(r.deriv)
        )?;
    }
    Ok(())
}
