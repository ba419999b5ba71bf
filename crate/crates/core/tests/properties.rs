mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use proptest::collection::vec;
use proptest::prelude::*;
use random_machines::data::{holdout_split, standardize, stratified_indices, Dataset, Label};
use random_machines::ensemble::{
    fit_bagged_svm, lambdas_from_accuracies, majority_vote, oob_weight, weighted_vote, BaseModel,
    KernelProbabilities, KernelProbability, RandomMachinesModel,
};
use random_machines::kernel::gram_matrix;
use random_machines::metrics::{self, agreement, confusion, mean_pairwise_agreement};
use random_machines::rng::seeded;
use random_machines::{fit_random_machines, EnsembleConfig, KernelKind, KernelSpec, SolverSettings};

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Negative), Just(Label::Positive)]
}

/// Sign of Σ w·v computed from the pattern bits, independent of the library.
fn vote_oracle(weights: &[f64], pattern: u32) -> Label {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (b, w) in weights.iter().enumerate() {
        if pattern >> b & 1 == 1 {
            pos += w;
        } else {
            neg += w;
        }
    }
    if pos >= neg {
        Label::Positive
    } else {
        Label::Negative
    }
}

fn pattern_votes(b: usize, pattern: u32) -> Vec<Label> {
    (0..b)
        .map(|i| if pattern >> i & 1 == 1 { Label::Positive } else { Label::Negative })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lambdas_are_a_distribution(acc in vec(0.0f64..=1.0, 1..10)) {
        let l = lambdas_from_accuracies(&acc).unwrap();
        prop_assert_eq!(l.len(), acc.len());
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(l.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn lambdas_follow_accuracy_order(acc in vec(0.501f64..0.999, 2..8)) {
        let l = lambdas_from_accuracies(&acc).unwrap();
        for i in 0..acc.len() {
            for j in 0..acc.len() {
                if acc[i] > acc[j] {
                    prop_assert!(l[i] > l[j]);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn oob_weight_is_exact_and_increasing(a in 0.0f64..0.999, b in 0.0f64..0.999) {
        let wa = oob_weight(a).unwrap();
        prop_assert_eq!(wa, 1.0 / ((1.0 - a) * (1.0 - a)));
        if a < b {
            prop_assert!(wa < oob_weight(b).unwrap());
        }
    }

    #[test]
    fn weighted_vote_matches_exhaustive_oracle(weights in vec(0.01f64..1e3, 1..=12)) {
        let b = weights.len();
        for pattern in 0..(1u32 << b) {
            prop_assert_eq!(weighted_vote(&weights, &pattern_votes(b, pattern)), vote_oracle(&weights, pattern));
        }
    }

    #[test]
    fn majority_vote_matches_exhaustive_oracle(b in 1usize..=12) {
        let ones = vec![1.0; b];
        for pattern in 0..(1u32 << b) {
            prop_assert_eq!(majority_vote(&pattern_votes(b, pattern)), vote_oracle(&ones, pattern));
        }
    }

    #[test]
    fn scaling_weights_keeps_the_vote(
        omegas in vec(0.0f64..1.0, 1..=12),
        votes in vec(label(), 12),
        k in -20i32..20,
    ) {
        let w: Vec<f64> = omegas.iter().map(|&o| oob_weight(o).unwrap()).collect();
        let c = 2f64.powi(k);
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let v = &votes[..w.len()];
        prop_assert_eq!(weighted_vote(&w, v), weighted_vote(&scaled, v));
    }

    #[test]
    fn mcc_is_bounded_and_antisymmetric(pairs in vec((label(), label()), 1..60)) {
        let (pred, truth): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let m = metrics::mcc(&confusion(&pred, &truth).unwrap()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&m));
        let flipped: Vec<Label> = pred.iter().map(|l| l.flip()).collect();
        let mf = metrics::mcc(&confusion(&flipped, &truth).unwrap()).unwrap();
        prop_assert!((m + mf).abs() < 1e-12);
        prop_assert_eq!(metrics::mcc(&confusion(&truth, &truth).unwrap()).unwrap() >= 0.0, true);
    }

    #[test]
    fn pairwise_agreement_matches_pair_enumeration(
        rows in (2usize..8, 1usize..20).prop_flat_map(|(b, k)| vec(vec(label(), k), b))
    ) {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                total += agreement(&rows[i], &rows[j]).unwrap();
                pairs += 1.0;
            }
        }
        prop_assert!((mean_pairwise_agreement(&rows).unwrap() - total / pairs).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gram_matrices_are_symmetric_psd(
        pts in vec(-1.0f64..1.0, 24),
        gamma in 0.1f64..2.0,
        half_degree in 1u32..3,
    ) {
        let x = Array2::from_shape_vec((8, 3), pts).unwrap();
        for kind in KernelKind::ALL {
            let spec = KernelSpec::new(kind, gamma, 2 * half_degree).unwrap();
            let g = gram_matrix(&spec, x.view()).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert_eq!(g[[i, j]], g[[j, i]]);
                    let direct = common::kernel(kind, gamma, spec.degree(), x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap());
                    prop_assert!((g[[i, j]] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
                }
            }
            let m = DMatrix::from_fn(8, 8, |i, j| g[[i, j]]);
            let min = SymmetricEigen::new(m).eigenvalues.min();
            prop_assert!(min >= -1e-8, "{} min eigenvalue {}", spec, min);
        }
    }

    #[test]
    fn standardized_train_has_unit_moments(
        n in 5usize..40,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
        scale in 0.01f64..100.0,
    ) {
        use rand::Rng;
        let mut rng = seeded(seed);
        let x = Array2::from_shape_fn((n, 3), |(_, j)| {
            if j == 2 { 7.5 } else { shift + scale * rng.gen_range(-1.0..1.0) }
        });
        let labels = (0..n).map(|i| if i % 2 == 0 { Label::Positive } else { Label::Negative }).collect();
        let d = Dataset::new(x, labels).unwrap();
        let (s, _) = standardize(&d, &[]).unwrap();
        for j in 0..2 {
            let col = s.features().column(j).to_owned();
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-10);
        }
        prop_assert!(s.features().column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stratified_split_partitions_rows(
        labels in vec(label(), 4..80),
        frac in 0.2f64..0.8,
        seed in any::<u64>(),
    ) {
        let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
        prop_assume!(pos >= 2 && pos + 2 <= labels.len());
        let n = labels.len();
        let (train, test) = stratified_indices(&labels, frac, &mut seeded(seed)).unwrap();
        prop_assert_eq!(train.len(), (frac * n as f64).round() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let train_pos = train.iter().filter(|&&i| labels[i] == Label::Positive).count() as f64;
        prop_assert!((train_pos - frac * pos as f64).abs() <= 1.0);
    }
}

fn grid() -> Array2<f64> {
    Array2::from_shape_fn((121, 2), |(k, j)| if j == 0 { (k / 11) as f64 - 5.0 } else { (k % 11) as f64 - 5.0 })
}

fn sim2(seed: u64) -> Dataset {
    random_machines::data::SimConfig {
        which: random_machines::data::SimKind::Sim2,
        n: 80,
        p: 2,
        ratio: 0.5,
        seed,
    }
    .generate()
    .unwrap()
}

#[test]
fn single_kernel_ensemble_is_weighted_bagging() {
    let d = sim2(4);
    let spec = KernelSpec::laplacian(1.0).unwrap();
    let cfg = EnsembleConfig {
        kernels: vec![spec],
        bootstraps: 9,
        seed: 31,
        ..Default::default()
    };
    let rm = fit_random_machines(&d, &cfg).unwrap();
    let bag = fit_bagged_svm(&d, &spec, 9, 1.0, &SolverSettings::default(), 31).unwrap();
    let rm_models: Vec<_> = rm.base_models().iter().map(|b| b.model.clone()).collect();
    assert_eq!(rm_models, bag.base_models());

    // equal Ω turns the weighted vote into the plain one
    let equal = RandomMachinesModel::from_parts(
        rm_models
            .into_iter()
            .map(|model| BaseModel { weight: oob_weight(0.8).unwrap(), oob_accuracy: 0.8, kernel_index: 0, model })
            .collect(),
        KernelProbabilities { entries: vec![KernelProbability { kernel: spec, accuracy: 0.8, lambda: 1.0 }] },
        31,
    )
    .unwrap();
    let g = grid();
    assert_eq!(equal.predict_batch(g.view()).unwrap(), bag.predict_batch(g.view()).unwrap());
}

#[test]
fn fitted_ensemble_votes_like_the_oracle() {
    let d = sim2(6);
    let cfg = EnsembleConfig { bootstraps: 11, seed: 5, ..Default::default() };
    let rm = fit_random_machines(&d, &cfg).unwrap();
    let g = grid();
    let predicted = rm.predict_batch(g.view()).unwrap();
    let w = rm.weights();
    for (k, p) in predicted.iter().enumerate() {
        let x = g.row(k).to_vec();
        let mut pattern = 0u32;
        for (b, m) in rm.base_models().iter().enumerate() {
            if m.model.predict(&x).unwrap() == Label::Positive {
                pattern |= 1 << b;
            }
        }
        assert_eq!(*p, vote_oracle(&w, pattern));
    }
}

#[test]
fn identical_fits_give_identical_weights() {
    let d = sim2(7);
    let cfg = EnsembleConfig { bootstraps: 20, seed: 2, ..Default::default() };
    let a = fit_random_machines(&d, &cfg).unwrap();
    let b = fit_random_machines(&d, &cfg).unwrap();
    let bits = |m: &RandomMachinesModel| m.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn holdout_partitions_rows() {
    let d = sim2(8);
    let (train, test) = holdout_split(&d, 0.7, 3).unwrap();
    assert_eq!(train.n_rows() + test.n_rows(), d.n_rows());
    assert_eq!(train.n_rows(), 56);
    let key = |ds: &Dataset| -> Vec<(u64, u64)> {
        (0..ds.n_rows()).map(|i| (ds.row(i)[0].to_bits(), ds.row(i)[1].to_bits())).collect()
    };
    let mut all = key(&train);
    all.extend(key(&test));
    all.sort();
    let mut orig = key(&d);
    orig.sort();
    assert_eq!(all, orig);
}
