use proptest::prelude::*;
use rhpsvm::data::{
    inject_label_noise, parse_csv, parse_libsvm, standardize, stratified_kfold, stratified_split,
    synth_two_gaussians, Dataset, NoiseSpec,
};
use rhpsvm::kernel::{decision_expansion, gram_matrix, kernel_eval, KernelSpec};

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::Linear),
        (0.01f64..3.0).prop_map(|g| KernelSpec::rbf(g).unwrap()),
        (1u32..4, 0.0f64..2.0, 0.1f64..2.0).prop_map(|(d, c, s)| KernelSpec::polynomial(d, c, s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kfold_partitions_every_index_once(n in 4usize..60, k in 2usize..5, seed in 0u64..500) {
        let n = n * 2;
        let ds = synth_two_gaussians(n, 2, 1.0, 1.0, seed).unwrap();
        let folds = stratified_kfold(&ds, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; n];
        for (train, test) in &folds {
            prop_assert_eq!(train.len() + test.len(), n);
            for &i in test {
                seen[i] += 1;
            }
            let pos = test.iter().filter(|&&i| ds.labels()[i] > 0.0).count();
            // Classes are dealt round-robin, so per-fold class counts differ by at most one.
            prop_assert!((pos as f64 - (n / 2) as f64 / k as f64).abs() <= 1.0);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn noise_flips_exactly_floor_rate_n(n in 1usize..40, rate in 0.0f64..=0.5, seed in 0u64..500) {
        let n = 2 * n;
        let ds = synth_two_gaussians(n, 1, 1.0, 1.0, seed).unwrap();
        let spec = NoiseSpec::new(rate, seed).unwrap();
        let noisy = inject_label_noise(&ds, &spec);
        let flipped = ds.labels().iter().zip(noisy.labels()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(flipped, (rate * n as f64).floor() as usize);
        prop_assert_eq!(noisy.features(), ds.features());
        let back = inject_label_noise(&noisy, &spec);
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn gram_is_symmetric_psd(spec in kernels(), seed in 0u64..200) {
        let ds = synth_two_gaussians(12, 3, 1.0, 1.0, seed).unwrap();
        let g = gram_matrix(&spec, &ds.rows(), true).unwrap();
        let m = g.matrix();
        for i in 0..12 {
            for j in 0..12 {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                let plain = kernel_eval(&spec, ds.row(i), ds.row(j)).unwrap();
                prop_assert!((m[(i, j)] - plain - 1.0).abs() <= 1e-12 * plain.abs().max(1.0));
            }
        }
        let eig = m.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-9 * scale));
    }

    #[test]
    fn csv_round_trip(seed in 0u64..200, d in 1usize..5) {
        let ds = synth_two_gaussians(10, d, 1.0, 1.0, seed).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }
}

#[test]
fn kernel_examples() {
    let a = [1.0, 2.0];
    let b = [3.0, -1.0];
    assert_eq!(kernel_eval(&KernelSpec::Linear, &a, &b).unwrap(), 1.0);
    let rbf = KernelSpec::rbf(0.5).unwrap();
    assert!((kernel_eval(&rbf, &a, &b).unwrap() - (-0.5f64 * 13.0).exp()).abs() < 1e-15);
    assert_eq!(kernel_eval(&rbf, &a, &a).unwrap(), 1.0);
    let poly = KernelSpec::polynomial(2, 1.0, 1.0).unwrap();
    assert_eq!(kernel_eval(&poly, &a, &b).unwrap(), 4.0);
    assert!(kernel_eval(&KernelSpec::Linear, &a, &[1.0]).is_err());
    assert!(KernelSpec::rbf(0.0).is_err());
    assert!(KernelSpec::polynomial(0, 1.0, 1.0).is_err());

    let f = decision_expansion(&KernelSpec::Linear, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[2.0, -1.0], &[3.0, 4.0]).unwrap();
    assert_eq!(f, 2.0 * (3.0 + 1.0) - (4.0 + 1.0));
}

#[test]
fn parsers_report_line_numbers() {
    let err = parse_csv("1,2,1\n3,x,-1\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    let err = parse_csv("1,2,1\n3,4,0\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    let ds = parse_csv("a,b,label\n1,2,1\n3,4,-1\n").unwrap();
    assert_eq!((ds.n(), ds.d()), (2, 2));

    let ds = parse_libsvm("+1 1:0.5 3:2\n-1 2:1\n", None).unwrap();
    assert_eq!(ds.d(), 3);
    assert_eq!(ds.row(0), &[0.5, 0.0, 2.0]);
    assert_eq!(parse_libsvm("+1 1:0.5\n", Some(4)).unwrap().d(), 4);
    assert!(parse_libsvm("+1 3:1 2:1\n", None).is_err());
    assert!(parse_libsvm("+1 5:1\n", Some(2)).is_err());
}

#[test]
fn standardize_and_split() {
    let ds = Dataset::from_rows(
        &[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0], vec![7.0, 5.0]],
        vec![1.0, -1.0, 1.0, -1.0],
    )
    .unwrap();
    let (z, t) = standardize(&ds).unwrap();
    assert_eq!(t.mu, vec![4.0, 5.0]);
    assert_eq!(t.sigma[1], 1.0);
    let col: Vec<f64> = (0..4).map(|i| z.row(i)[0]).collect();
    let mean: f64 = col.iter().sum::<f64>() / 4.0;
    let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);

    let big = synth_two_gaussians(100, 2, 1.0, 1.0, 3).unwrap();
    let (train, test) = stratified_split(&big, 0.3, 8).unwrap();
    assert_eq!(train.n() + test.n(), 100);
    assert_eq!(test.count_positive(), 15);
    assert!(train.has_both_classes() && test.has_both_classes());
}
