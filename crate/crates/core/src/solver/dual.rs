//! Clipped dual coordinate descent.
//!
//! All dual problems here share one shape. Each variable `x_v` is attached to
//! a sample `i(v)` with a sign `sigma_v`, and the samples' expansion weights
//! are `theta = theta0 + sum_v sigma_v x_v e_{i(v)}`. The objective is
//!
//! ```text
//! D(x) = 1/2 theta^T Q theta + sum_v (lin_v x_v + 1/2 extra_v x_v^2),   Q = Y K Y,
//! ```
//!
//! minimized over a box. Each coordinate step is the exact one-dimensional
//! minimizer clipped to its bounds, so `D` never increases. The kernel
//! coefficients are recovered as `c_i = y_i theta_i`.
//!
//! For the rescaled loss subproblem with margin partition `(I1, I2)`, each
//! sample carries two variables `alpha_i` (sign +1) and `beta_i` (sign -1)
//! with `theta = alpha - beta - C delta`:
//!
//! * `i in I1` (quadratic region): `extra = s/(C kappa)` for alpha and
//!   `s/(C kappa tau)` for beta, upper bound `big_M`;
//! * `i in I2` (linear region): `lin` gains `s/2`, upper bounds `C kappa`
//!   for alpha and `C kappa tau` for beta,
//!
//! where `kappa = eta/lambda`. Shifting `v = (alpha - C delta/(1+tau),
//! beta + tau C delta/(1+tau))` gives the lower bounds
//! `(-C delta/(1+tau), tau C delta/(1+tau))` with `theta = v_1 - v_2`.

use rand::seq::SliceRandom;

use super::{check_len, check_problem, IndexPartition, InnerMethod, SolverConfig};
use crate::data::rng_from_seed;
use crate::error::{Error, Result};
use crate::kernel::Gram;
use crate::loss::LossParams;

/// Callback handed each iterate of the dual variables.
pub type Observer<'a> = &'a mut dyn FnMut(&[f64]);

#[derive(Debug, Clone, Copy)]
pub(crate) struct Var {
    pub sample: usize,
    pub sign: f64,
    pub lin: f64,
    pub extra: f64,
    pub lo: f64,
    pub hi: f64,
}

pub(crate) struct BoxDual<'a> {
    pub k: &'a Gram,
    pub y: &'a [f64],
    pub theta0: Vec<f64>,
    pub vars: Vec<Var>,
}

pub(crate) struct DualSolution {
    /// Dual variables, one per `vars` entry.
    #[cfg_attr(not(test), allow(dead_code))]
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
}

impl BoxDual<'_> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.k.get(i, j)
    }

    /// Full objective from scratch.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let theta = self.theta(x);
        let n = theta.len();
        let mut quad = 0.0;
        for i in 0..n {
            if theta[i] == 0.0 {
                continue;
            }
            let row: f64 = theta.iter().enumerate().map(|(j, t)| self.q(i, j) * t).sum();
            quad += theta[i] * row;
        }
        let sep: f64 = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xv)| v.lin * xv + 0.5 * v.extra * xv * xv)
            .sum();
        0.5 * quad + sep
    }

    fn theta(&self, x: &[f64]) -> Vec<f64> {
        let mut theta = self.theta0.clone();
        for (v, &xv) in self.vars.iter().zip(x) {
            theta[v.sample] += v.sign * xv;
        }
        theta
    }

    /// Runs sweeps in a seeded random order until the objective decrease over
    /// a sweep drops below `tol * |D|`. `observe` sees `x` after every update.
    pub fn solve(
        &self,
        tol: f64,
        max_sweeps: usize,
        seed: u64,
        mut observe: Option<Observer<'_>>,
    ) -> Result<DualSolution> {
        let n = self.y.len();
        let mut x: Vec<f64> = self.vars.iter().map(|v| v.lo.max(0.0).min(v.hi)).collect();
        let mut theta = self.theta(&x);
        // grad_q = Q theta
        let mut q_theta = vec![0.0; n];
        for (j, &tj) in theta.iter().enumerate() {
            if tj != 0.0 {
                for (i, qt) in q_theta.iter_mut().enumerate() {
                    *qt += self.q(i, j) * tj;
                }
            }
        }
        let mut obj = {
            let quad: f64 = theta.iter().zip(&q_theta).map(|(a, b)| a * b).sum();
            let sep: f64 = self
                .vars
                .iter()
                .zip(&x)
                .map(|(v, &xv)| v.lin * xv + 0.5 * v.extra * xv * xv)
                .sum();
            0.5 * quad + sep
        };
        let mut order: Vec<usize> = (0..self.vars.len()).collect();
        let mut rng = rng_from_seed(seed);
        let mut last_decrease = f64::INFINITY;
        for _ in 1..=max_sweeps {
            order.shuffle(&mut rng);
            let start = obj;
            for &v_idx in &order {
                let v = self.vars[v_idx];
                let i = v.sample;
                let xv = x[v_idx];
                let grad = v.sign * q_theta[i] + v.lin + v.extra * xv;
                let curv = self.k.diag(i) + v.extra;
                let target = (xv - grad / curv).clamp(v.lo, v.hi);
                let step = target - xv;
                if step == 0.0 {
                    continue;
                }
                obj += grad * step + 0.5 * curv * step * step;
                x[v_idx] = target;
                let dt = v.sign * step;
                theta[i] += dt;
                let yi = self.y[i];
                let col = self.k.matrix().column(i);
                for (j, qt) in q_theta.iter_mut().enumerate() {
                    *qt += self.y[j] * yi * col[j] * dt;
                }
                if let Some(cb) = observe.as_deref_mut() {
                    cb(&x);
                }
            }
            last_decrease = start - obj;
            if last_decrease <= tol * obj.abs() {
                return Ok(DualSolution { x, theta });
            }
        }
        Err(Error::NoConvergence {
            iterations: max_sweeps,
            residual: last_decrease,
            last: theta.iter().zip(self.y).map(|(t, y)| t * y).collect(),
        })
    }
}

pub(crate) fn rhp_dual<'a>(
    k: &'a Gram,
    y: &'a [f64],
    delta: &[f64],
    penalty: f64,
    p: &LossParams,
    big_m: f64,
    part: &IndexPartition,
) -> Result<BoxDual<'a>> {
    let tau = p.tau();
    if tau <= 0.0 {
        return Err(Error::Unsupported(
            "the dual solver needs tau > 0; use the primal reference solver for tau = 0"
                .to_string(),
        ));
    }
    let n = y.len();
    let kappa = p.kappa();
    let s = p.s();
    let quadratic = part.quadratic_mask(n);
    let mut vars = Vec::with_capacity(2 * n);
    for (i, &quad) in quadratic.iter().enumerate() {
        if quad {
            vars.push(Var {
                sample: i,
                sign: 1.0,
                lin: -1.0,
                extra: s / (penalty * kappa),
                lo: 0.0,
                hi: big_m,
            });
            vars.push(Var {
                sample: i,
                sign: -1.0,
                lin: 1.0,
                extra: s / (penalty * kappa * tau),
                lo: 0.0,
                hi: big_m,
            });
        } else {
            vars.push(Var {
                sample: i,
                sign: 1.0,
                lin: -1.0 + 0.5 * s,
                extra: 0.0,
                lo: 0.0,
                hi: penalty * kappa,
            });
            vars.push(Var {
                sample: i,
                sign: -1.0,
                lin: 1.0 + 0.5 * s,
                extra: 0.0,
                lo: 0.0,
                hi: penalty * kappa * tau,
            });
        }
    }
    Ok(BoxDual {
        k,
        y,
        theta0: delta.iter().map(|d| -penalty * d).collect(),
        vars,
    })
}

fn check_partition(part: &IndexPartition, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in part.i1.iter().chain(&part.i2) {
        if i >= n || seen[i] {
            return Err(Error::usage("index partition must cover 0..n exactly once"));
        }
        seen[i] = true;
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::usage("index partition must cover 0..n exactly once"))
    }
}

/// Solves the partitioned dual of the CCCP subproblem and returns `c`.
pub fn inner_solve_dual(
    k: &Gram,
    y: &[f64],
    delta: &[f64],
    penalty: f64,
    p: &LossParams,
    cfg: &SolverConfig,
    part: &IndexPartition,
) -> Result<Vec<f64>> {
    inner_solve_dual_observed(k, y, delta, penalty, p, cfg, part, None)
}

/// [`inner_solve_dual`] with a callback invoked after every coordinate update
/// with the current `(alpha_0, beta_0, alpha_1, beta_1, ...)` vector.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve_dual_observed(
    k: &Gram,
    y: &[f64],
    delta: &[f64],
    penalty: f64,
    p: &LossParams,
    cfg: &SolverConfig,
    part: &IndexPartition,
    observe: Option<Observer<'_>>,
) -> Result<Vec<f64>> {
    check_problem(k, y)?;
    check_len("delta", delta, y.len())?;
    check_partition(part, y.len())?;
    let dual = rhp_dual(k, y, delta, penalty, p, cfg.big_m, part)?;
    let sol = dual.solve(
        cfg.inner_tol_for(InnerMethod::DualCD),
        cfg.max_inner,
        cfg.seed,
        observe,
    )?;
    Ok(sol.theta.iter().zip(y).map(|(t, yi)| yi * t).collect())
}

/// Objective of the partitioned dual at `(alpha_0, beta_0, ...)`.
#[allow(clippy::too_many_arguments)]
pub fn dual_objective(
    k: &Gram,
    y: &[f64],
    delta: &[f64],
    penalty: f64,
    p: &LossParams,
    cfg: &SolverConfig,
    part: &IndexPartition,
    x: &[f64],
) -> Result<f64> {
    let dual = rhp_dual(k, y, delta, penalty, p, cfg.big_m, part)?;
    check_len("dual point", x, dual.vars.len())?;
    Ok(dual.objective(x))
}
