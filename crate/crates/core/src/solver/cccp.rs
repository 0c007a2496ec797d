//! Concave-convex procedure for the rescaled loss objective
//! `J(c) = 1/2 c^T K c + C sum_i L_rhp(u_i)`.
//!
//! With `L_rhp = g + h` (`g` convex, `h` concave), each outer step freezes
//! `delta_i = -h'(u_i)` at the current iterate and minimizes the convex
//! majorant `1/2 c^T K c + C sum_i g(u_i) + C sum_i delta_i y_i (K c)_i`.

use nalgebra::DVector;

use super::{
    dual, margins_from_f, objective_from_f, partition, primal, CccpState, InnerMethod,
    SolverConfig,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, Gram, KernelSpec};
use crate::loss::{LossKind, LossParams};
use crate::model::TrainedModel;

#[derive(Debug, Clone)]
pub struct CccpOutcome {
    pub coeffs: Vec<f64>,
    pub trace: Vec<CccpState>,
    /// Number of convex subproblems solved.
    pub iterations: usize,
    /// Whether the iterate change fell below `outer_tol` before `max_cccp`.
    pub converged: bool,
}

impl CccpOutcome {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.objective)
    }
}

fn state(
    k_idx: usize,
    c: &DVector<f64>,
    f: &DVector<f64>,
    y: &[f64],
    penalty: f64,
    p: &LossParams,
) -> CccpState {
    let margins = margins_from_f(f, y);
    let delta = margins.iter().map(|&u| p.delta(u)).collect();
    CccpState {
        k: k_idx,
        coeffs: c.iter().copied().collect(),
        delta,
        objective: objective_from_f(c, f, y, |u| p.rhp(u), penalty),
        margins,
    }
}

/// Runs the outer loop on a precomputed augmented Gram matrix, starting from
/// `c = 0`. The trace holds one state per iterate, including the final one.
pub fn cccp_on_gram(k: &Gram, y: &[f64], p: &LossParams, cfg: &SolverConfig) -> Result<CccpOutcome> {
    cfg.validate()?;
    super::check_problem(k, y)?;
    if cfg.inner_method == InnerMethod::DualCD && p.tau() <= 0.0 {
        return Err(Error::Unsupported(
            "the dual solver needs tau > 0; use the primal reference solver for tau = 0"
                .to_string(),
        ));
    }
    let n = y.len();
    let mut c = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k_idx in 0..cfg.max_cccp {
        let current = state(k_idx, &c, &f, y, cfg.c, p);
        let next = match cfg.inner_method {
            InnerMethod::PrimalReference => primal::solve(
                k,
                y,
                &current.delta,
                cfg.c,
                p,
                cfg.inner_tol_for(InnerMethod::PrimalReference),
                cfg.max_inner,
                Some(&c),
            ),
            InnerMethod::DualCD => {
                let part = partition(&current.margins, p.s());
                dual::rhp_dual(k, y, &current.delta, cfg.c, p, cfg.big_m, &part)
                    .and_then(|d| {
                        d.solve(
                            cfg.inner_tol_for(InnerMethod::DualCD),
                            cfg.max_inner,
                            cfg.seed.wrapping_add(k_idx as u64),
                            None,
                        )
                    })
                    .map(|sol| {
                        DVector::from_iterator(n, sol.theta.iter().zip(y).map(|(t, yi)| t * yi))
                    })
            }
        }
        .map_err(|e| Error::Outer {
            iteration: k_idx,
            source: Box::new(e),
        })?;
        trace.push(current);
        iterations += 1;
        let change = &next - &c;
        let step = k.quad_form(&change).sqrt();
        c = next;
        f = k.apply(&c);
        if step <= cfg.outer_tol {
            converged = true;
            break;
        }
    }
    trace.push(state(iterations, &c, &f, y, cfg.c, p));
    Ok(CccpOutcome {
        coeffs: c.iter().copied().collect(),
        trace,
        iterations,
        converged,
    })
}

/// Trains the rescaled-loss classifier and returns it with the outer trace.
pub fn cccp_train(
    ds: &Dataset,
    spec: &KernelSpec,
    p: &LossParams,
    cfg: &SolverConfig,
) -> Result<(TrainedModel, Vec<CccpState>)> {
    spec.validate()?;
    if !ds.has_both_classes() {
        return Err(Error::usage("training data must contain both classes"));
    }
    let k = gram_matrix(spec, &ds.rows(), true)?;
    let out = cccp_on_gram(&k, ds.labels(), p, cfg)?;
    let model = TrainedModel::from_training(
        LossKind::RescaledHP,
        *p,
        *spec,
        ds,
        &out.coeffs,
        out.iterations,
        out.final_objective(),
        cfg,
    )?;
    Ok((model, out.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_two_gaussians;

    #[test]
    fn separable_toy_is_fit_exactly() {
        let ds = synth_two_gaussians(40, 2, 4.0, 0.5, 7).unwrap();
        let cfg = SolverConfig::default();
        let (model, trace) =
            cccp_train(&ds, &KernelSpec::Linear, &LossParams::default(), &cfg).unwrap();
        for i in 0..ds.n() {
            assert_eq!(model.predict(ds.row(i)).unwrap(), ds.labels()[i]);
        }
        for w in trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-10);
        }
    }

    #[test]
    fn single_iteration_is_one_convex_solve() {
        let ds = synth_two_gaussians(20, 2, 2.0, 0.7, 3).unwrap();
        let k = gram_matrix(&KernelSpec::Linear, &ds.rows(), true).unwrap();
        let p = LossParams::default();
        let cfg = SolverConfig {
            max_cccp: 1,
            ..SolverConfig::default()
        };
        let out = cccp_on_gram(&k, ds.labels(), &p, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.trace.len(), 2);
        assert!(out.trace[0].margins.iter().all(|&u| u == 1.0));
        let delta0 = vec![p.delta(1.0); 20];
        assert_eq!(out.trace[0].delta, delta0);
        let direct = crate::solver::inner_solve_primal(&k, ds.labels(), &delta0, cfg.c, &p, &cfg)
            .unwrap();
        for (a, b) in direct.iter().zip(&out.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn state_invariants() {
        let ds = synth_two_gaussians(30, 3, 1.0, 1.0, 5).unwrap();
        let k = gram_matrix(&KernelSpec::rbf(0.3).unwrap(), &ds.rows(), true).unwrap();
        let p = LossParams::default();
        let out = cccp_on_gram(&k, ds.labels(), &p, &SolverConfig::default()).unwrap();
        for st in &out.trace {
            let u = crate::solver::compute_margins(&st.coeffs, &k, ds.labels()).unwrap();
            for (a, b) in u.iter().zip(&st.margins) {
                assert!((a - b).abs() < 1e-12);
            }
            for (d, &ui) in st.delta.iter().zip(&st.margins) {
                assert_eq!(*d, p.delta(ui));
            }
            let j = crate::solver::rhp_objective(&st.coeffs, &k, ds.labels(), 1.0, &p).unwrap();
            assert!((j - st.objective).abs() < 1e-12 * j.max(1.0));
        }
    }

    #[test]
    fn one_class_is_rejected() {
        let ds = Dataset::new(vec![0.0, 1.0], vec![1.0, 1.0], 1).unwrap();
        let err = cccp_train(&ds, &KernelSpec::Linear, &LossParams::default(), &SolverConfig::default());
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn dual_rejects_tau_zero() {
        let ds = synth_two_gaussians(10, 2, 2.0, 0.7, 3).unwrap();
        let p = LossParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let cfg = SolverConfig::default().with_method(InnerMethod::DualCD);
        let err = cccp_train(&ds, &KernelSpec::Linear, &p, &cfg).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let primal = SolverConfig::default().with_method(InnerMethod::PrimalReference);
        assert!(cccp_train(&ds, &KernelSpec::Linear, &p, &primal).is_ok());
    }
}
