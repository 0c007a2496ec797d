//! Metrics, the Rademacher-style generalization bound, and the seeded
//! robustness and stability experiments.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_label_noise, rng_from_seed, stratified_kfold, stratified_split, Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::kernel::gram_matrix;
use crate::loss::lipschitz_bound;
use crate::model::{FitConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts with `+1` as the positive class.
pub fn accuracy_metrics(preds: &[f64], labels: &[f64]) -> Result<MetricsReport> {
    if preds.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::usage("no predictions to score"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p > 0.0, l > 0.0) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = preds.len();
    Ok(MetricsReport {
        n,
        accuracy: (tp + tn) as f64 / n as f64,
        tp,
        tn,
        fp,
        fn_,
    })
}

pub fn model_accuracy(model: &TrainedModel, ds: &Dataset) -> Result<f64> {
    Ok(accuracy_metrics(&model.predict_all(ds)?, ds.labels())?.accuracy)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sum of the rescaled loss over the sample.
    pub sum_loss: f64,
    pub n: usize,
    /// Loss scale multiplying the empirical term and the complexity term.
    pub gamma: f64,
    /// Upper bound on the weight-vector norm.
    pub b_norm: f64,
    /// Lipschitz constant of the loss.
    pub iota: f64,
    pub gram_trace: f64,
    /// The bound holds with probability at least `1 - zeta`.
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub total: f64,
    pub empirical: f64,
    pub complexity: f64,
    pub confidence: f64,
}

/// `(gamma/n) sum_loss + (2 B gamma iota / sqrt n) sqrt(trace) + sqrt(8 ln(2/zeta) / n)`.
pub fn bound_terms(b: &BoundInputs) -> Result<BoundTerms> {
    if !(b.zeta > 0.0 && b.zeta < 1.0) {
        return Err(Error::domain(format!("zeta must lie in (0, 1), got {}", b.zeta)));
    }
    if b.n == 0 {
        return Err(Error::domain("bound needs n >= 1"));
    }
    for (name, v) in [
        ("sum_loss", b.sum_loss),
        ("gamma", b.gamma),
        ("B", b.b_norm),
        ("iota", b.iota),
        ("gram_trace", b.gram_trace),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let n = b.n as f64;
    let empirical = b.gamma / n * b.sum_loss;
    let complexity = 2.0 * b.b_norm * b.gamma * b.iota / n.sqrt() * b.gram_trace.sqrt();
    let confidence = (8.0 * (2.0 / b.zeta).ln() / n).sqrt();
    Ok(BoundTerms {
        total: empirical + complexity + confidence,
        empirical,
        complexity,
        confidence,
    })
}

pub fn generalization_bound(b: &BoundInputs) -> Result<f64> {
    bound_terms(b).map(|t| t.total)
}

/// Bound inputs for a trained model on `ds`: the rescaled loss of the model's
/// decision values, `B = sqrt(c^T K c)` over the support set, `iota = eta/lambda`,
/// and the trace of the bias-augmented Gram of `ds`.
pub fn bound_inputs_for(
    model: &TrainedModel,
    ds: &Dataset,
    gamma: f64,
    zeta: f64,
) -> Result<BoundInputs> {
    let p = model.params();
    let f = model.decision_values(ds)?;
    let sum_loss = f
        .iter()
        .zip(ds.labels())
        .map(|(fi, yi)| p.rhp(1.0 - yi * fi))
        .sum();
    let b_norm = if model.coeffs().is_empty() {
        0.0
    } else {
        let k = gram_matrix(model.kernel(), model.support(), true)?;
        k.quad_form(&nalgebra::DVector::from_column_slice(model.coeffs()))
            .sqrt()
    };
    let data = match model.transform() {
        Some(t) => t.apply(ds)?,
        None => ds.clone(),
    };
    let gram_trace = data
        .rows()
        .iter()
        .map(|r| model.kernel().eval_unchecked(r, r) + 1.0)
        .sum();
    Ok(BoundInputs {
        sum_loss,
        n: ds.n(),
        gamma,
        b_norm,
        iota: lipschitz_bound(p),
        gram_trace,
        zeta,
    })
}

pub(crate) fn sub_seed(seed: u64, run: u64, attempt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(run.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(attempt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub run: usize,
    pub seed: u64,
    /// Number of draws needed to get a resample containing both classes.
    pub attempts: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub runs: Vec<StabilityRun>,
    pub mean: f64,
    pub std: f64,
}

const MAX_RESAMPLE_ATTEMPTS: usize = 1000;

/// Trains on `resamples` bootstrap draws of `train` (n draws with
/// replacement) and scores each on the untouched `test` set. A draw with a
/// single class is redrawn with the next sub-seed.
pub fn resampling_stability_with<F>(
    train: &Dataset,
    test: &Dataset,
    resamples: usize,
    seed: u64,
    fit: F,
) -> Result<StabilityReport>
where
    F: Fn(&Dataset) -> Result<TrainedModel> + Sync,
{
    if resamples < 2 {
        return Err(Error::usage("stability needs at least 2 resamples"));
    }
    if !train.has_both_classes() {
        return Err(Error::usage("training data must contain both classes"));
    }
    let runs: Vec<StabilityRun> = (0..resamples)
        .into_par_iter()
        .map(|run| {
            for attempt in 0..MAX_RESAMPLE_ATTEMPTS {
                let s = sub_seed(seed, run as u64, attempt as u64);
                let mut rng = rng_from_seed(s);
                let idx: Vec<usize> = (0..train.n()).map(|_| rng.gen_range(0..train.n())).collect();
                let boot = train.subset(&idx)?;
                if !boot.has_both_classes() {
                    continue;
                }
                let model = fit(&boot)?;
                return Ok(StabilityRun {
                    run,
                    seed: s,
                    attempts: attempt + 1,
                    accuracy: model_accuracy(&model, test)?,
                });
            }
            Err(Error::usage("could not draw a resample with both classes"))
        })
        .collect::<Result<_>>()?;
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(StabilityReport { runs, mean, std })
}

pub fn resampling_stability(
    train: &Dataset,
    test: &Dataset,
    cfg: &FitConfig,
    resamples: usize,
    seed: u64,
) -> Result<StabilityReport> {
    resampling_stability_with(train, test, resamples, seed, |ds| cfg.fit(ds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub angle_a: f64,
    pub angle_b: f64,
    /// `||w_with|| / ||w_without||`.
    pub norm_ratio_a: f64,
    pub norm_ratio_b: f64,
}

/// Primal weights `w = sum_i c_i x_i` of a linear-kernel model; the bias
/// part `sum_i c_i` is excluded.
pub fn linear_weights(model: &TrainedModel) -> Result<Vec<f64>> {
    if !model.kernel().is_linear() {
        return Err(Error::Unsupported(
            "primal weights are only defined for the linear kernel".into(),
        ));
    }
    let mut w = vec![0.0; model.dim()];
    for (row, c) in model.support().iter().zip(model.coeffs()) {
        for (wj, xj) in w.iter_mut().zip(row) {
            *wj += c * xj;
        }
    }
    Ok(w)
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        return 0.0;
    }
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    cos.clamp(-1.0, 1.0).acos()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains each configuration with and without the extra sample
/// `(outlier, label)` and reports how far the weight vector turns.
pub fn outlier_shift(
    ds: &Dataset,
    outlier: &[f64],
    label: f64,
    cfg_a: &FitConfig,
    cfg_b: &FitConfig,
) -> Result<OutlierReport> {
    for cfg in [cfg_a, cfg_b] {
        if !cfg.kernel.is_linear() {
            return Err(Error::Unsupported(
                "the outlier experiment needs the linear kernel".into(),
            ));
        }
    }
    let contaminated = ds.with_sample(outlier, label)?;
    let shift = |cfg: &FitConfig| -> Result<(f64, f64)> {
        let w0 = linear_weights(&cfg.fit(ds)?)?;
        let w1 = linear_weights(&cfg.fit(&contaminated)?)?;
        let n0 = norm(&w0);
        Ok((angle_between(&w0, &w1), if n0 > 0.0 { norm(&w1) / n0 } else { f64::NAN }))
    };
    let (a, b) = rayon::join(|| shift(cfg_a), || shift(cfg_b));
    let ((angle_a, norm_ratio_a), (angle_b, norm_ratio_b)) = (a?, b?);
    Ok(OutlierReport {
        angle_a,
        angle_b,
        norm_ratio_a,
        norm_ratio_b,
    })
}

/// Point at `distance` from the origin along the mean of the positive class,
/// carrying the negative label.
pub fn far_outlier(ds: &Dataset, distance: f64) -> (Vec<f64>, f64) {
    let mut dir = vec![0.0; ds.d()];
    for (row, &y) in ds.rows().iter().zip(ds.labels()) {
        if y > 0.0 {
            for (m, v) in dir.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        dir.iter_mut().for_each(|v| *v *= distance / norm);
    } else if let Some(first) = dir.first_mut() {
        *first = distance;
    }
    (dir, -1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub rate: f64,
    pub model: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// For every rate and repeat: stratified holdout split, label noise on the
/// training part only, then clean test accuracy of every configuration.
pub fn noise_benchmark(
    ds: &Dataset,
    rates: &[f64],
    repeats: usize,
    seed: u64,
    test_fraction: f64,
    configs: &[(String, FitConfig)],
) -> Result<Vec<NoiseRow>> {
    if repeats == 0 {
        return Err(Error::usage("repeats must be >= 1"));
    }
    let specs: Vec<NoiseSpec> = rates
        .iter()
        .map(|&r| NoiseSpec::new(r, 0))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..specs.len())
        .flat_map(|ri| (0..repeats).flat_map(move |rep| (0..configs.len()).map(move |ci| (ri, rep, ci))))
        .collect();
    let accs: Vec<f64> = cells
        .par_iter()
        .map(|&(ri, rep, ci)| {
            let split_seed = sub_seed(seed, rep as u64, 0);
            let (train, test) = stratified_split(ds, test_fraction, split_seed)?;
            let noise = NoiseSpec {
                rate: specs[ri].rate,
                seed: sub_seed(seed, rep as u64, 1),
            };
            let noisy = inject_label_noise(&train, &noise);
            let model = configs[ci].1.fit(&noisy)?;
            model_accuracy(&model, &test)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (ri, spec) in specs.iter().enumerate() {
        for (ci, (name, _)) in configs.iter().enumerate() {
            let values: Vec<f64> = (0..repeats)
                .map(|rep| accs[(ri * repeats + rep) * configs.len() + ci])
                .collect();
            let (mean, std) = mean_std(&values);
            rows.push(NoiseRow {
                rate: spec.rate,
                model: name.clone(),
                accuracies: values,
                mean,
                std,
            });
        }
    }
    Ok(rows)
}

/// Mean and population std of k-fold accuracy.
pub fn cross_validate(ds: &Dataset, folds: usize, seed: u64, cfg: &FitConfig) -> Result<(f64, f64)> {
    let splits = stratified_kfold(ds, folds, seed)?;
    let accs: Vec<f64> = splits
        .iter()
        .map(|(train, test)| {
            let model = cfg.fit(&ds.subset(train)?)?;
            model_accuracy(&model, &ds.subset(test)?)
        })
        .collect::<Result<_>>()?;
    Ok(mean_std(&accs))
}

/// Indices of a bootstrap draw; exposed for tests of the resampling protocol.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// `k` distinct indices from `0..n`, sorted.
pub fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut v = index::sample(&mut rng, n, k).into_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_two_gaussians;
    use crate::kernel::KernelSpec;
    use crate::loss::{LossKind, LossParams};
    use crate::solver::SolverConfig;

    #[test]
    fn accuracy_counts() {
        let labels = [1.0, -1.0, 1.0];
        assert_eq!(accuracy_metrics(&labels, &labels).unwrap().accuracy, 1.0);
        let flipped: Vec<f64> = labels.iter().map(|l| -l).collect();
        assert_eq!(accuracy_metrics(&flipped, &labels).unwrap().accuracy, 0.0);

        // (tp, tn, fp, fn) = (3, 4, 2, 1)
        let preds = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let truth = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0];
        let m = accuracy_metrics(&preds, &truth).unwrap();
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (3, 4, 2, 1));
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert_eq!(m.tp + m.tn + m.fp + m.fn_, m.n);

        assert!(accuracy_metrics(&[1.0], &[1.0, 1.0]).is_err());
        assert!(accuracy_metrics(&[], &[]).is_err());
    }

    fn worked() -> BoundInputs {
        BoundInputs {
            sum_loss: 0.4,
            n: 4,
            gamma: 1.0,
            b_norm: 1.0,
            iota: 1.0,
            gram_trace: 4.0,
            zeta: 0.05,
        }
    }

    #[test]
    fn bound_worked_example() {
        let t = bound_terms(&worked()).unwrap();
        assert!((t.empirical - 0.1).abs() < 1e-15);
        assert!((t.complexity - 2.0).abs() < 1e-15);
        assert!((t.confidence - (2.0 * 40f64.ln()).sqrt()).abs() < 1e-15);
        assert!((t.total - 4.816203).abs() < 1e-6);
        assert!((t.empirical + t.complexity + t.confidence - t.total).abs() <= 1e-12);
    }

    #[test]
    fn bound_limits_and_errors() {
        let b = BoundInputs {
            sum_loss: 0.0,
            b_norm: 0.0,
            zeta: 1.0 - 1e-12,
            ..worked()
        };
        let v = generalization_bound(&b).unwrap();
        assert!((v - (8.0 * 2f64.ln() / 4.0).sqrt()).abs() < 1e-5);
        assert!(generalization_bound(&BoundInputs { zeta: 1.0, ..worked() }).is_err());
        assert!(generalization_bound(&BoundInputs { zeta: 0.0, ..worked() }).is_err());
    }

    #[test]
    fn stability_is_deterministic_and_constant_model_has_zero_std() {
        let ds = synth_two_gaussians(40, 2, 2.0, 0.8, 3).unwrap();
        let (train, test) = stratified_split(&ds, 0.3, 1).unwrap();
        let cfg = FitConfig {
            kind: LossKind::Hinge,
            kernel: KernelSpec::Linear,
            params: LossParams::default(),
            solver: SolverConfig::default(),
        };
        let a = resampling_stability(&train, &test, &cfg, 3, 9).unwrap();
        let b = resampling_stability(&train, &test, &cfg, 3, 9).unwrap();
        assert_eq!(a.runs.len(), 3);
        assert_eq!(
            crate::format::to_canonical_json(&a).unwrap(),
            crate::format::to_canonical_json(&b).unwrap()
        );
        let accs: Vec<f64> = a.runs.iter().map(|r| r.accuracy).collect();
        assert_eq!(a.std, mean_std(&accs).1);

        let constant = resampling_stability_with(&train, &test, 4, 9, |_| {
            TrainedModel::from_parts(
                LossKind::Hinge,
                LossParams::default(),
                KernelSpec::Linear,
                vec![],
                vec![],
                2,
            )
        })
        .unwrap();
        assert_eq!(constant.std, 0.0);
        assert!(resampling_stability(&train, &test, &cfg, 1, 9).is_err());
    }

    #[test]
    fn outlier_on_class_mean_barely_moves() {
        let ds = synth_two_gaussians(100, 2, 2.0, 0.5, 42).unwrap();
        let mean = (2.0f64).sqrt() / 2.0;
        let hinge = FitConfig {
            kind: LossKind::Hinge,
            kernel: KernelSpec::Linear,
            params: LossParams::default(),
            solver: SolverConfig::default(),
        };
        let rhp = FitConfig {
            kind: LossKind::RescaledHP,
            ..hinge
        };
        let r = outlier_shift(&ds, &[mean, mean], 1.0, &rhp, &hinge).unwrap();
        assert!(r.angle_a < 1e-2 && r.angle_b < 1e-2, "{r:?}");

        let rbf = FitConfig {
            kernel: KernelSpec::rbf(1.0).unwrap(),
            ..hinge
        };
        assert!(matches!(
            outlier_shift(&ds, &[0.0, 0.0], 1.0, &rbf, &hinge),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn outlier_in_regularized_limit() {
        let ds = synth_two_gaussians(40, 2, 2.0, 0.5, 5).unwrap();
        let hinge = FitConfig {
            kind: LossKind::Hinge,
            kernel: KernelSpec::Linear,
            params: LossParams::default(),
            solver: SolverConfig::default().with_c(1e-8),
        };
        let r = outlier_shift(&ds, &[0.0, 0.0], 1.0, &hinge, &hinge).unwrap();
        assert!(r.angle_a < 1e-6, "{r:?}");
    }

    #[test]
    fn noise_zero_matches_plain_holdout() {
        let ds = synth_two_gaussians(60, 2, 2.0, 0.8, 8).unwrap();
        let cfg = FitConfig {
            kind: LossKind::Hinge,
            kernel: KernelSpec::Linear,
            params: LossParams::default(),
            solver: SolverConfig::default(),
        };
        let rows = noise_benchmark(&ds, &[0.0], 2, 77, 0.3, &[("hinge".into(), cfg)]).unwrap();
        for rep in 0..2 {
            let (train, test) = stratified_split(&ds, 0.3, sub_seed(77, rep, 0)).unwrap();
            let acc = model_accuracy(&cfg.fit(&train).unwrap(), &test).unwrap();
            assert_eq!(rows[0].accuracies[rep as usize], acc);
        }
    }

    #[test]
    fn bootstrap_helpers() {
        let idx = bootstrap_indices(10, 3);
        assert_eq!(idx.len(), 10);
        assert!(idx.iter().all(|&i| i < 10));
        let s = sample_without_replacement(10, 4, 3);
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
