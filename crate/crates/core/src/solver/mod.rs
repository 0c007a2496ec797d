//! Training: the CCCP outer loop for the rescaled loss, its two inner
//! convex solvers, and the convex baselines.
//!
//! Everything is expressed in representer form: the weight vector is
//! `w = sum_j c_j phi(x_j)` in the bias-augmented feature space, so decision
//! values on the training set are `K c` with the augmented Gram `K`, and the
//! margin of sample `i` is `u_i = 1 - y_i (K c)_i`.

mod baseline;
mod cccp;
mod dual;
mod primal;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Gram;
use crate::loss::LossParams;

pub use baseline::{train_baseline, train_baseline_on_gram};
pub use cccp::{cccp_on_gram, cccp_train, CccpOutcome};
pub use dual::inner_solve_dual;
pub use primal::inner_solve_primal;

#[doc(hidden)]
pub use dual::{dual_objective, inner_solve_dual_observed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMethod {
    /// Damped Newton on the kernelized primal subproblem. Exact; used as the oracle.
    #[serde(rename = "primal")]
    PrimalReference,
    /// Clipped dual coordinate descent on the partitioned box QP.
    #[serde(rename = "dual")]
    DualCD,
}

impl InnerMethod {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "primal" => Ok(InnerMethod::PrimalReference),
            "dual" => Ok(InnerMethod::DualCD),
            other => Err(Error::usage(format!(
                "unknown inner method '{other}' (expected primal or dual)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Penalty weight on the empirical loss.
    #[serde(rename = "C")]
    pub c: f64,
    pub max_cccp: usize,
    /// Stop when the RKHS norm of the coefficient change is at most this.
    pub outer_tol: f64,
    pub inner_method: InnerMethod,
    /// Defaults to 1e-6 (relative gradient norm) for the primal solver and
    /// 1e-8 (relative objective decrease per sweep) for the dual solver.
    pub inner_tol: Option<f64>,
    pub max_inner: usize,
    pub big_m: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1.0,
            max_cccp: 50,
            outer_tol: 1e-3,
            inner_method: InnerMethod::PrimalReference,
            inner_tol: None,
            max_inner: 10_000,
            big_m: 1e8,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_method(mut self, m: InnerMethod) -> Self {
        self.inner_method = m;
        self
    }

    pub fn inner_tol_for(&self, method: InnerMethod) -> f64 {
        self.inner_tol.unwrap_or(match method {
            InnerMethod::PrimalReference => 1e-6,
            InnerMethod::DualCD => 1e-8,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be > 0, got {v}")))
            }
        };
        pos("C", self.c)?;
        pos("outer_tol", self.outer_tol)?;
        pos("big_M", self.big_m)?;
        if let Some(t) = self.inner_tol {
            pos("inner_tol", t)?;
        }
        if self.max_cccp < 1 {
            return Err(Error::domain("max_cccp must be >= 1"));
        }
        if self.max_inner < 1 {
            return Err(Error::domain("max_inner must be >= 1"));
        }
        Ok(())
    }
}

/// One outer iterate and the quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CccpState {
    pub k: usize,
    pub coeffs: Vec<f64>,
    pub delta: Vec<f64>,
    pub margins: Vec<f64>,
    pub objective: f64,
}

/// Split of sample indices by whether the margin lies in the quadratic
/// (`|u| < s`) or linear (`|u| >= s`) region of the Huberized pinball loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPartition {
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
}

impl IndexPartition {
    pub(crate) fn quadratic_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.i1 {
            mask[i] = true;
        }
        mask
    }
}

pub fn partition(u: &[f64], s: f64) -> IndexPartition {
    let (i1, i2) = (0..u.len()).partition(|&i| u[i].abs() < s);
    IndexPartition { i1, i2 }
}

fn check_problem(k: &Gram, y: &[f64]) -> Result<()> {
    if !k.is_augmented() {
        return Err(Error::usage("solvers expect a bias-augmented Gram matrix"));
    }
    if k.n() != y.len() {
        return Err(Error::usage(format!(
            "Gram is {0}x{0} but there are {1} labels",
            k.n(),
            y.len()
        )));
    }
    Ok(())
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "{name} has length {}, expected {n}",
            v.len()
        )))
    }
}

pub(crate) fn margins_from_f(f: &DVector<f64>, y: &[f64]) -> Vec<f64> {
    f.iter().zip(y).map(|(fi, yi)| 1.0 - yi * fi).collect()
}

/// `u_i = 1 - y_i (K c)_i`.
pub fn compute_margins(c: &[f64], k: &Gram, y: &[f64]) -> Result<Vec<f64>> {
    check_problem(k, y)?;
    check_len("coefficient vector", c, y.len())?;
    let f = k.apply(&DVector::from_column_slice(c));
    Ok(margins_from_f(&f, y))
}

pub fn delta_vector(u: &[f64], p: &LossParams) -> Result<Vec<f64>> {
    if let Some(bad) = u.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite margin {bad}")));
    }
    Ok(u.iter().map(|&ui| p.delta(ui)).collect())
}

/// `1/2 c^T K c + C sum_i L_rhp(u_i)`.
pub fn rhp_objective(c: &[f64], k: &Gram, y: &[f64], penalty: f64, p: &LossParams) -> Result<f64> {
    check_problem(k, y)?;
    check_len("coefficient vector", c, y.len())?;
    let cv = DVector::from_column_slice(c);
    let f = k.apply(&cv);
    Ok(objective_from_f(&cv, &f, y, |u| p.rhp(u), penalty))
}

pub(crate) fn objective_from_f(
    c: &DVector<f64>,
    f: &DVector<f64>,
    y: &[f64],
    loss: impl Fn(f64) -> f64,
    penalty: f64,
) -> f64 {
    let reg = 0.5 * c.dot(f).max(0.0);
    let emp: f64 = f.iter().zip(y).map(|(fi, yi)| loss(1.0 - yi * fi)).sum();
    reg + penalty * emp
}
