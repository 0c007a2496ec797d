use nalgebra::DVector;
use proptest::prelude::*;
use rhpsvm::data::synth_two_gaussians;
use rhpsvm::kernel::{gram_matrix, Gram, KernelSpec};
use rhpsvm::solver::{
    cccp_on_gram, cccp_train, compute_margins, delta_vector, inner_solve_dual, inner_solve_primal,
    partition, rhp_objective,
};
use rhpsvm::{InnerMethod, LossParams, SolverConfig};

/// The convex subproblem written out from scratch.
fn subproblem_value(k: &Gram, y: &[f64], delta: &[f64], c_pen: f64, p: &LossParams, c: &[f64]) -> f64 {
    let cv = DVector::from_column_slice(c);
    let f = k.apply(&cv);
    let kappa = p.eta() / p.lambda();
    let mut v = 0.5 * cv.dot(&f);
    for i in 0..y.len() {
        let u = 1.0 - y[i] * f[i];
        let hp = if u > p.s() {
            u - p.s() / 2.0
        } else if u > 0.0 {
            u * u / (2.0 * p.s())
        } else if u > -p.s() {
            p.tau() * u * u / (2.0 * p.s())
        } else {
            p.tau() * (-u - p.s() / 2.0)
        };
        v += c_pen * (kappa * hp + delta[i] * y[i] * f[i]);
    }
    v
}

#[test]
fn margins_and_objective_examples() {
    let k = Gram::from_matrix(nalgebra::DMatrix::from_element(1, 1, 2.0), true).unwrap();
    assert_eq!(compute_margins(&[0.5], &k, &[1.0]).unwrap(), vec![0.0]);
    assert_eq!(compute_margins(&[0.0], &k, &[1.0]).unwrap(), vec![1.0]);
    let j = rhp_objective(&[0.0], &k, &[1.0], 1.0, &LossParams::default()).unwrap();
    assert!((j - (1.0 - (-0.5f64).exp())).abs() < 1e-15);

    let d = delta_vector(&[2.0, 0.0, -2.0], &LossParams::default()).unwrap();
    let expect = [0.776870, 0.0, -0.263817];
    for (a, b) in d.iter().zip(expect) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(compute_margins(&[0.0, 1.0], &k, &[1.0]).is_err());
}

#[test]
fn partition_boundaries() {
    let part = partition(&[0.5, 2.0, -3.0, 1.0], 1.0);
    assert_eq!(part.i1, vec![0]);
    assert_eq!(part.i2, vec![1, 2, 3]);
}

#[test]
fn primal_subproblem_beats_random_perturbations() {
    let ds = synth_two_gaussians(30, 3, 1.0, 1.0, 21).unwrap();
    let k = gram_matrix(&KernelSpec::rbf(0.4).unwrap(), &ds.rows(), true).unwrap();
    let p = LossParams::new(1.5, 0.8, 0.7, 0.3).unwrap();
    let u: Vec<f64> = (0..30).map(|i| (i as f64 - 15.0) / 5.0).collect();
    let delta = delta_vector(&u, &p).unwrap();
    let cfg = SolverConfig::default().with_c(2.0);
    let c = inner_solve_primal(&k, ds.labels(), &delta, 2.0, &p, &cfg).unwrap();
    let best = subproblem_value(&k, ds.labels(), &delta, 2.0, &p, &c);
    let mut state = 12345u64;
    for _ in 0..200 {
        let probe: Vec<f64> = c
            .iter()
            .map(|ci| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ci + 1e-3 * (((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0)
            })
            .collect();
        assert!(subproblem_value(&k, ds.labels(), &delta, 2.0, &p, &probe) >= best - 1e-8);
    }
}

#[test]
fn dual_subproblem_matches_primal() {
    let ds = synth_two_gaussians(24, 2, 1.0, 1.0, 4).unwrap();
    let k = gram_matrix(&KernelSpec::Linear, &ds.rows(), true).unwrap();
    let p = LossParams::default();
    let cfg = SolverConfig {
        inner_tol: Some(1e-14),
        max_inner: 200_000,
        ..SolverConfig::default()
    };
    // A frozen partition only matches the primal at a fixed point, so start
    // from the primal solution with delta = 0 and check the dual reproduces it.
    let delta = vec![0.0; 24];
    let primal = inner_solve_primal(&k, ds.labels(), &delta, 1.0, &p, &SolverConfig { inner_tol: Some(1e-12), ..cfg }).unwrap();
    let u = compute_margins(&primal, &k, ds.labels()).unwrap();
    let part = partition(&u, p.s());
    let dual = inner_solve_dual(&k, ds.labels(), &delta, 1.0, &p, &cfg, &part).unwrap();
    let fp = k.apply(&DVector::from_vec(primal));
    let fd = k.apply(&DVector::from_vec(dual));
    let rms = ((&fp - &fd).norm_squared() / 24.0).sqrt();
    assert!(rms < 1e-3, "rms {rms}");
}

#[test]
fn cccp_is_deterministic() {
    let ds = synth_two_gaussians(40, 2, 1.0, 1.0, 2).unwrap();
    for method in [InnerMethod::PrimalReference, InnerMethod::DualCD] {
        let cfg = SolverConfig {
            seed: 17,
            ..SolverConfig::default().with_method(method)
        };
        let a = cccp_train(&ds, &KernelSpec::rbf(0.5).unwrap(), &LossParams::default(), &cfg).unwrap();
        let b = cccp_train(&ds, &KernelSpec::rbf(0.5).unwrap(), &LossParams::default(), &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.len(), b.1.len());
        for (x, y) in a.1.iter().zip(&b.1) {
            assert_eq!(x.coeffs, y.coeffs);
            assert_eq!(x.objective.to_bits(), y.objective.to_bits());
        }
    }
}

#[test]
fn cccp_first_step_lowers_the_objective() {
    for seed in 0..5 {
        let ds = synth_two_gaussians(30, 2, 1.0, 1.0, seed).unwrap();
        let k = gram_matrix(&KernelSpec::Linear, &ds.rows(), true).unwrap();
        let out = cccp_on_gram(&k, ds.labels(), &LossParams::default(), &SolverConfig::default()).unwrap();
        assert!(out.trace[1].objective < out.trace[0].objective);
        assert_eq!(out.trace.len(), out.iterations + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cccp_descends_for_random_parameters(
        seed in 0u64..1000,
        eta in 0.5f64..3.0,
        lambda in 0.3f64..3.0,
        s in 0.2f64..2.0,
        tau in 0.05f64..1.0,
        c in 0.1f64..10.0,
    ) {
        let ds = synth_two_gaussians(30, 2, 1.0, 1.0, seed).unwrap();
        let k = gram_matrix(&KernelSpec::rbf(0.5).unwrap(), &ds.rows(), true).unwrap();
        let p = LossParams::new(eta, lambda, s, tau).unwrap();
        let cfg = SolverConfig::default().with_c(c);
        let out = cccp_on_gram(&k, ds.labels(), &p, &cfg).unwrap();
        for w in out.trace.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective + 1e-10);
        }
    }
}
