//! Convex baselines: hinge, pinball and Huberized pinball SVMs.
//!
//! With the bias absorbed into the kernel, hinge and pinball duals are plain
//! box QPs `min 1/2 theta^T Q theta - e^T theta` with `theta` in `[0, C]`
//! (hinge) or `[-tau C, C]` (pinball). The Huberized pinball model is one
//! convex subproblem solve with `delta = 0` and unit slope scale.

use nalgebra::DVector;

use super::dual::{BoxDual, Var};
use super::{objective_from_f, primal, InnerMethod, SolverConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, Gram, KernelSpec};
use crate::loss::{self, LossKind, LossParams};
use crate::model::TrainedModel;

/// Returns `(coefficients, objective)`.
pub fn train_baseline_on_gram(
    kind: LossKind,
    k: &Gram,
    y: &[f64],
    p: &LossParams,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    super::check_problem(k, y)?;
    let n = y.len();
    let coeffs = match kind {
        LossKind::Hinge | LossKind::Pinball => {
            let lo = if kind == LossKind::Pinball {
                if p.tau() <= 0.0 {
                    return Err(Error::Unsupported(
                        "the pinball dual needs tau > 0 (tau = 0 is the hinge model)".to_string(),
                    ));
                }
                -p.tau() * cfg.c
            } else {
                0.0
            };
            let dual = BoxDual {
                k,
                y,
                theta0: vec![0.0; n],
                vars: (0..n)
                    .map(|i| Var {
                        sample: i,
                        sign: 1.0,
                        lin: -1.0,
                        extra: 0.0,
                        lo,
                        hi: cfg.c,
                    })
                    .collect(),
            };
            let sol = dual.solve(
                cfg.inner_tol_for(InnerMethod::DualCD),
                cfg.max_inner,
                cfg.seed,
                None,
            )?;
            DVector::from_iterator(n, sol.theta.iter().zip(y).map(|(t, yi)| t * yi))
        }
        LossKind::HuberizedPinball => {
            let unit = LossParams::new(1.0, 1.0, p.s(), p.tau())?;
            primal::solve(
                k,
                y,
                &vec![0.0; n],
                cfg.c,
                &unit,
                cfg.inner_tol_for(InnerMethod::PrimalReference),
                cfg.max_inner,
                None,
            )?
        }
        LossKind::RescaledHP => {
            return Err(Error::usage(
                "the rescaled loss is trained by the CCCP solver, not as a baseline",
            ))
        }
    };
    let f = k.apply(&coeffs);
    let objective = objective_from_f(
        &coeffs,
        &f,
        y,
        |u| match kind {
            LossKind::Hinge => u.max(0.0),
            LossKind::Pinball => {
                if u >= 0.0 {
                    u
                } else {
                    -p.tau() * u
                }
            }
            _ => loss::huberized_pinball(u, p.s(), p.tau()).unwrap_or(f64::NAN),
        },
        cfg.c,
    );
    Ok((coeffs.iter().copied().collect(), objective))
}

pub fn train_baseline(
    kind: LossKind,
    ds: &Dataset,
    spec: &KernelSpec,
    p: &LossParams,
    cfg: &SolverConfig,
) -> Result<TrainedModel> {
    spec.validate()?;
    if !ds.has_both_classes() {
        return Err(Error::usage("training data must contain both classes"));
    }
    let k = gram_matrix(spec, &ds.rows(), true)?;
    let (coeffs, objective) = train_baseline_on_gram(kind, &k, ds.labels(), p, cfg)?;
    TrainedModel::from_training(kind, *p, *spec, ds, &coeffs, 1, objective, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Gram, Vec<f64>) {
        let rows = vec![vec![1.0], vec![-1.0]];
        (
            gram_matrix(&KernelSpec::Linear, &rows, true).unwrap(),
            vec![1.0, -1.0],
        )
    }

    #[test]
    fn hinge_two_points_matches_grid_oracle() {
        let (k, y) = toy();
        let cfg = SolverConfig {
            inner_tol: Some(1e-14),
            ..SolverConfig::default()
        };
        let (c, _) =
            train_baseline_on_gram(LossKind::Hinge, &k, &y, &LossParams::default(), &cfg).unwrap();
        // Grid over the 2-variable dual box [0, C]^2.
        let dual = |a: f64, b: f64| {
            let t = [a, b];
            let mut q = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    q += t[i] * t[j] * y[i] * y[j] * k.get(i, j);
                }
            }
            0.5 * q - a - b
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for ia in 0..=1000 {
            for ib in 0..=1000 {
                let (a, b) = (ia as f64 / 1000.0, ib as f64 / 1000.0);
                let v = dual(a, b);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        assert!((c[0] - best.1).abs() < 2e-3 && (-c[1] - best.2).abs() < 2e-3);
        let f = k.apply(&DVector::from_vec(c));
        assert!(f[0] > 0.0 && f[1] < 0.0);
    }

    #[test]
    fn pinball_tau_one_has_symmetric_box() {
        let ds = crate::data::synth_two_gaussians(20, 2, 1.0, 1.0, 1).unwrap();
        let k = gram_matrix(&KernelSpec::Linear, &ds.rows(), true).unwrap();
        let p = LossParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let cfg = SolverConfig::default().with_c(0.7);
        let (c, _) = train_baseline_on_gram(LossKind::Pinball, &k, ds.labels(), &p, &cfg).unwrap();
        for (ci, yi) in c.iter().zip(ds.labels()) {
            let theta = ci * yi;
            assert!((-0.7 - 1e-12..=0.7 + 1e-12).contains(&theta));
        }
        let p0 = LossParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            train_baseline_on_gram(LossKind::Pinball, &k, ds.labels(), &p0, &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rescaled_is_not_a_baseline() {
        let (k, y) = toy();
        assert!(train_baseline_on_gram(
            LossKind::RescaledHP,
            &k,
            &y,
            &LossParams::default(),
            &SolverConfig::default()
        )
        .is_err());
    }
}
