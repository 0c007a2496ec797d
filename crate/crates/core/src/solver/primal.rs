//! Reference solver for the convex CCCP subproblem
//!
//! ```text
//! F(c) = 1/2 c^T K c + C sum_i g(u_i) + C sum_i delta_i y_i (K c)_i,   u = 1 - y .* (K c)
//! ```
//!
//! `g` is C1 and piecewise quadratic, so `F` is convex and differentiable with
//! `grad F = K (c - C gamma)`, `gamma_i = y_i (g'(u_i) - delta_i)`. The solver
//! takes generalized Newton steps on the stationarity residual
//! `r = c - C gamma` followed by an exact line search on `F`.

use nalgebra::{DMatrix, DVector};

use super::{check_len, check_problem, SolverConfig};
use crate::error::{Error, Result};
use crate::kernel::Gram;
use crate::loss::LossParams;

pub fn inner_solve_primal(
    k: &Gram,
    y: &[f64],
    delta: &[f64],
    penalty: f64,
    p: &LossParams,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    check_problem(k, y)?;
    check_len("delta", delta, y.len())?;
    let tol = cfg.inner_tol_for(super::InnerMethod::PrimalReference);
    solve(k, y, delta, penalty, p, tol, cfg.max_inner, None).map(|c| c.data.into())
}

struct Subproblem<'a> {
    k: &'a Gram,
    y: &'a [f64],
    delta: &'a [f64],
    penalty: f64,
    p: &'a LossParams,
}

impl Subproblem<'_> {
    fn curvature(&self, u: f64) -> f64 {
        let s = self.p.s();
        let kappa = self.p.kappa();
        if u > s || u <= -s {
            0.0
        } else if u > 0.0 {
            kappa / s
        } else {
            kappa * self.p.tau() / s
        }
    }

    /// `c - C gamma(f)`.
    fn residual(&self, c: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(c.len(), |i, _| {
            let u = 1.0 - self.y[i] * f[i];
            c[i] - self.penalty * self.y[i] * (self.p.g_deriv(u) - self.delta[i])
        })
    }

    #[cfg(test)]
    fn value(&self, c: &DVector<f64>, f: &DVector<f64>) -> f64 {
        let mut acc = 0.5 * c.dot(f);
        for i in 0..c.len() {
            let u = 1.0 - self.y[i] * f[i];
            acc += self.penalty * (self.p.g(u) + self.delta[i] * self.y[i] * f[i]);
        }
        acc
    }

    /// Directional derivative of `F(c + t dir)` given `kd = K dir`.
    fn slope(
        &self,
        t: f64,
        c_kd: f64,
        d_kd: f64,
        f: &DVector<f64>,
        kd: &DVector<f64>,
    ) -> (f64, f64) {
        let mut d1 = c_kd + t * d_kd;
        let mut d2 = d_kd;
        for i in 0..f.len() {
            let yi = self.y[i];
            let u = 1.0 - yi * (f[i] + t * kd[i]);
            d1 += self.penalty * yi * kd[i] * (self.delta[i] - self.p.g_deriv(u));
            d2 += self.penalty * kd[i] * kd[i] * self.curvature(u);
        }
        (d1, d2)
    }

    /// Solves `(I + C D K) dir = -r` restricted to the curved coordinates.
    fn newton_direction(&self, f: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
        let n = r.len();
        let mut dir = -r.clone();
        let curved: Vec<(usize, f64)> = (0..n)
            .filter_map(|i| {
                let h = self.curvature(1.0 - self.y[i] * f[i]);
                (h > 0.0).then_some((i, h))
            })
            .collect();
        if curved.is_empty() {
            return dir;
        }
        let flat: Vec<usize> = {
            let mut mask = vec![true; n];
            for &(i, _) in &curved {
                mask[i] = false;
            }
            (0..n).filter(|&i| mask[i]).collect()
        };
        let km = self.k.matrix();
        let m = curved.len();
        // (diag(1/(C h)) + K_SS) d_S = -r_S/(C h) + K_SN r_N
        let mut a = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        for (a_row, &(i, h)) in curved.iter().enumerate() {
            let scale = 1.0 / (self.penalty * h);
            for (a_col, &(j, _)) in curved.iter().enumerate() {
                a[(a_row, a_col)] = km[(i, j)];
            }
            a[(a_row, a_row)] += scale;
            let mut rhs = -r[i] * scale;
            for &j in &flat {
                rhs += km[(i, j)] * r[j];
            }
            b[a_row] = rhs;
        }
        let sol = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.lu().solve(&b).unwrap_or_else(|| DVector::zeros(m)),
        };
        for (row, &(i, _)) in curved.iter().enumerate() {
            dir[i] = sol[row];
        }
        dir
    }
}

/// Minimizes `F` from `warm` (or zero). `tol` is relative to `||grad F(0)||`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve(
    k: &Gram,
    y: &[f64],
    delta: &[f64],
    penalty: f64,
    p: &LossParams,
    tol: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let prob = Subproblem {
        k,
        y,
        delta,
        penalty,
        p,
    };
    let n = y.len();
    let zero = DVector::zeros(n);
    let grad0 = k.apply(&prob.residual(&zero, &zero)).norm();
    let threshold = tol * grad0.max(1.0);

    let mut c = warm.cloned().unwrap_or(zero);
    let mut f = k.apply(&c);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let r = prob.residual(&c, &f);
        grad_norm = k.apply(&r).norm();
        if grad_norm <= threshold {
            return Ok(c);
        }
        let dir = prob.newton_direction(&f, &r);
        let kd = k.apply(&dir);
        let t = line_search(&prob, &c, &f, &dir, &kd);
        if t == 0.0 {
            break;
        }
        c.axpy(t, &dir, 1.0);
        f = k.apply(&c);
    }
    // One more check in case the last step landed inside tolerance.
    let r = prob.residual(&c, &f);
    let final_norm = k.apply(&r).norm();
    if final_norm <= threshold {
        return Ok(c);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: final_norm.min(grad_norm),
        last: c.data.into(),
    })
}

/// Exact minimization of the convex piecewise-quadratic `t -> F(c + t dir)`
/// by safeguarded Newton on its derivative.
fn line_search(
    prob: &Subproblem<'_>,
    c: &DVector<f64>,
    f: &DVector<f64>,
    dir: &DVector<f64>,
    kd: &DVector<f64>,
) -> f64 {
    let c_kd = c.dot(kd);
    let d_kd = dir.dot(kd);
    let (s0, _) = prob.slope(0.0, c_kd, d_kd, f, kd);
    if s0 >= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let (mut s_hi, _) = prob.slope(hi, c_kd, d_kd, f, kd);
    let mut expansions = 0;
    while s_hi < 0.0 && expansions < 60 {
        lo = hi;
        hi *= 2.0;
        s_hi = prob.slope(hi, c_kd, d_kd, f, kd).0;
        expansions += 1;
    }
    if s_hi < 0.0 {
        return hi;
    }
    if s_hi == 0.0 {
        return hi;
    }
    let target = 1e-14 * s0.abs();
    let mut t = hi;
    for _ in 0..100 {
        let (s, curv) = prob.slope(t, c_kd, d_kd, f, kd);
        if s.abs() <= target {
            return t;
        }
        if s > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let newton = if curv > 0.0 { t - s / curv } else { f64::NAN };
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    t
}
