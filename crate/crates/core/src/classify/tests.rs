use super::*;
use crate::linalg::Matrix;
use crate::rng;
use alloc::vec;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn rbf_gram(points: &[[f64; 2]], gamma: f64) -> KernelMatrix {
    let n = points.len();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
            v[i * n + j] = (-gamma * d).exp();
        }
    }
    let mut k = KernelMatrix::new(n, v, KernelConfig::Linear).unwrap();
    k.check_psd().unwrap();
    k
}

fn random_points(seed: u64, n: usize) -> (Vec<[f64; 2]>, Vec<u32>) {
    let mut r = rng::seeded(seed, 0);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng::normal(&mut r, 0.0, 1.0), rng::normal(&mut r, 0.0, 1.0)])
        .collect();
    let labels = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i < 2 {
                i as u32
            } else {
                u32::from(p[0] + 0.3 * p[1] + rng::normal(&mut r, 0.0, 0.5) > 0.0)
            }
        })
        .collect();
    (pts, labels)
}

/// Exact dual optimum by enumerating which multipliers sit at 0, at C or
/// strictly inside: each pattern fixes a linear system for the free ones
/// (stationarity plus the balance constraint) and every feasible solution is
/// a candidate; the optimum's own pattern is among them.
fn qp_oracle(k: &KernelMatrix, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k.get(i, j);
    let mut best = f64::INFINITY;
    let mut pattern = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 2).collect();
        let mut alpha: Vec<f64> = pattern
            .iter()
            .map(|&p| if p == 1 { c } else { 0.0 })
            .collect();
        let fixed_balance: f64 = (0..n).filter(|&i| pattern[i] == 1).map(|i| y[i] * c).sum();
        let feasible = if free.is_empty() {
            fixed_balance.abs() < 1e-12
        } else {
            let m = free.len();
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut b = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q(i, j);
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                b[r] = 1.0
                    - (0..n)
                        .filter(|&j| pattern[j] == 1)
                        .map(|j| q(i, j) * c)
                        .sum::<f64>();
            }
            b[m] = -fixed_balance;
            match a.lu().solve(&b) {
                Some(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        alpha[i] = sol[r];
                    }
                    free.iter()
                        .all(|&i| alpha[i] >= -1e-12 && alpha[i] <= c + 1e-12)
                }
                None => false,
            }
        };
        if feasible {
            best = best.min(smo::dual_objective(&|i, j| k.get(i, j), y, &alpha));
        }
        // next pattern in base 3
        let mut d = 0;
        while d < n && pattern[d] == 2 {
            pattern[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
        pattern[d] += 1;
    }
    best
}

#[test]
fn smo_matches_qp_oracle() {
    for seed in 0..6u64 {
        for &c in &[0.5, 10.0] {
            let (pts, labels) = random_points(seed, 9);
            let k = rbf_gram(&pts, 0.7);
            let model = train_svm(
                &k,
                &labels,
                &SvmParams {
                    c,
                    ..Default::default()
                },
            )
            .unwrap();
            let m = &model.models[0];
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == m.positive { 1.0 } else { -1.0 })
                .collect();
            let oracle = qp_oracle(&k, &y, c);
            assert!(
                (m.objective - oracle).abs() < 1e-4,
                "seed {seed} C {c}: {} vs {oracle}",
                m.objective
            );
            // the solver's running objective agrees with direct evaluation
            let mut alpha = vec![0.0; 9];
            for (&s, &coef) in m.support.iter().zip(&m.coef) {
                alpha[s] = coef * y[s];
            }
            let direct = smo::dual_objective(&|i, j| k.get(i, j), &y, &alpha);
            assert!((direct - m.objective).abs() < 1e-9);
        }
    }
}

#[test]
fn separable_linear_gram_fits_exactly() {
    let x = Matrix::from_rows(&[
        [0.0, 1.0],
        [0.5, 2.0],
        [1.0, 1.5],
        [3.0, 0.0],
        [4.0, 1.0],
        [3.5, 2.0],
    ])
    .unwrap();
    let labels = [0, 0, 0, 1, 1, 1];
    let k = KernelMatrix::linear(&x).unwrap();
    let model = train_svm(
        &k,
        &labels,
        &SvmParams {
            c: 1e4,
            ..Default::default()
        },
    )
    .unwrap();
    for i in 0..6 {
        assert_eq!(model.predict(k.row(i)).unwrap(), labels[i]);
    }
}

#[test]
fn xor_is_not_linearly_separable() {
    let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
    let labels = [0, 0, 1, 1];
    let k = KernelMatrix::linear(&x).unwrap();
    let model = train_svm(
        &k,
        &labels,
        &SvmParams {
            c: 1e4,
            ..Default::default()
        },
    )
    .unwrap();
    let correct = (0..4)
        .filter(|&i| model.predict(k.row(i)).unwrap() == labels[i])
        .count();
    assert!(correct <= 3);
}

#[test]
fn multiclass_separable_rbf() {
    let mut r = rng::seeded(31, 0);
    let centers = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]];
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let c = centers[i % 4];
        pts.push([
            c[0] + rng::normal(&mut r, 0.0, 0.4),
            c[1] + rng::normal(&mut r, 0.0, 0.4),
        ]);
        labels.push((i % 4) as u32 + 1);
    }
    let k = rbf_gram(&pts, 0.5);
    let model = train_svm(
        &k,
        &labels,
        &SvmParams {
            c: 1e4,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(model.models.len(), 6);
    for m in &model.models {
        m.check(1e-3).unwrap();
    }
    for i in 0..40 {
        assert_eq!(model.predict(k.row(i)).unwrap(), labels[i]);
    }
}

#[test]
fn decision_agrees_with_direct_sum() {
    let (pts, labels) = random_points(40, 30);
    let k = rbf_gram(&pts, 0.3);
    let train: Vec<usize> = (0..20).collect();
    let model = train_on(&k, &train, &labels[..20], &SvmParams::default()).unwrap();
    let m = &model.models[0];
    let y: Vec<f64> = labels[..20]
        .iter()
        .map(|&l| if l == m.positive { 1.0 } else { -1.0 })
        .collect();
    // independent rebuild: alpha from the dual coefficients, b from the
    // free multipliers' stationarity
    let mut alpha = [0.0; 20];
    for (&s, &c) in m.support.iter().zip(&m.coef) {
        alpha[s] = c * y[s];
    }
    for t in 20..30 {
        let row = k.row_subset(t, &train);
        let f: f64 = (0..20).map(|i| alpha[i] * y[i] * row[i]).sum::<f64>() + m.bias;
        assert!((f - m.decision(&row)).abs() < 1e-12);
        let expected = if f > 0.0 { m.positive } else { m.negative };
        assert_eq!(model.predict(&row).unwrap(), expected);
    }
    assert!(model.predict(&[0.0; 3]).is_err());
}

#[test]
fn duplicate_row_predicts_the_training_label() {
    let (pts, labels) = random_points(41, 16);
    let k = rbf_gram(&pts, 0.3);
    let model = train_svm(
        &k,
        &labels,
        &SvmParams {
            c: 1e4,
            ..Default::default()
        },
    )
    .unwrap();
    for i in 0..16 {
        let a = model.predict(k.row(i)).unwrap();
        assert_eq!(a, model.predict(k.row(i)).unwrap());
        assert_eq!(a, labels[i]);
    }
}

#[test]
fn training_rejects_bad_input() {
    let (pts, _) = random_points(42, 6);
    let k = rbf_gram(&pts, 0.3);
    assert_eq!(
        train_svm(&k, &[1; 6], &SvmParams::default()),
        Err(ClassifyError::SingleClass(1))
    );
    assert!(train_svm(&k, &[1, 2], &SvmParams::default()).is_err());
    let bad = KernelMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0], KernelConfig::Linear).unwrap();
    assert!(matches!(
        train_svm(&bad, &[0, 1], &SvmParams::default()),
        Err(ClassifyError::Kernel(KernelError::NotPsd { .. }))
    ));
    let neg = SvmParams {
        c: -1.0,
        ..Default::default()
    };
    assert!(train_svm(&k, &[0, 1, 0, 1, 0, 1], &neg).is_err());
}

#[test]
fn class_weights_scale_the_box() {
    let (pts, labels) = random_points(43, 20);
    let k = rbf_gram(&pts, 0.3);
    let params = SvmParams {
        c: 0.1,
        class_weights: vec![ClassWeight {
            class: 1,
            weight: 3.0,
        }],
        ..Default::default()
    };
    let model = train_svm(&k, &labels, &params).unwrap();
    let m = &model.models[0];
    assert_eq!((m.c_positive, m.c_negative), (0.1, 0.30000000000000004));
    m.check(1e-3).unwrap();
}

#[test]
fn training_order_does_not_change_predictions() {
    let (pts, labels) = random_points(44, 24);
    let k = rbf_gram(&pts, 0.3);
    let train: Vec<usize> = (0..18).collect();
    let mut rev = train.clone();
    rev.reverse();
    let a = train_on(&k, &train, &labels[..18], &SvmParams::default()).unwrap();
    let rev_labels: Vec<u32> = rev.iter().map(|&i| labels[i]).collect();
    let b = train_on(&k, &rev, &rev_labels, &SvmParams::default()).unwrap();
    for t in 18..24 {
        let (fa, fb) = (
            a.models[0].decision(&k.row_subset(t, &train)),
            b.models[0].decision(&k.row_subset(t, &rev)),
        );
        // both runs stop within the KKT tolerance of the same optimum
        assert!((fa - fb).abs() < 5e-2, "{fa} vs {fb}");
        if fa.abs() > 5e-2 {
            assert_eq!(
                a.predict(&k.row_subset(t, &train)).unwrap(),
                b.predict(&k.row_subset(t, &rev)).unwrap()
            );
        }
    }
}

#[test]
fn confusion_matrix_bookkeeping() {
    let mut c = ConfusionMatrix::new(vec![1, 2, 3]);
    for (t, o) in [(1, 1), (1, 2), (2, 2), (3, 3), (3, 3), (3, 1)] {
        c.add(t, o);
    }
    assert_eq!(c.total(), 6);
    assert_eq!(c.correct(), 4);
    assert!((c.accuracy() - 4.0 / 6.0).abs() < 1e-15);
    assert_eq!(c.precision(0), Some(0.5));
    assert_eq!(c.recall(2), Some(2.0 / 3.0));
    let mut d = ConfusionMatrix::new(vec![1, 2, 3]);
    d.merge(&c);
    d.merge(&c);
    assert_eq!(d.total(), 12);
}

#[test]
fn folds_are_stratified_and_seeded() {
    let labels: Vec<u32> = (0..4550).map(|i| [1, 2, 3, 3, 4][i % 5]).collect();
    let a = stratified_folds(&labels, 5, 9).unwrap();
    assert_eq!(a, stratified_folds(&labels, 5, 9).unwrap());
    assert_ne!(a, stratified_folds(&labels, 5, 10).unwrap());
    for s in fold_sizes(&a, 5) {
        assert_eq!(
            s,
            FoldSize {
                train: 3640,
                test: 910
            }
        );
    }
    for class in 1..=4u32 {
        let total = labels.iter().filter(|&&l| l == class).count() as f64;
        for f in 0..5 {
            let n = (0..labels.len())
                .filter(|&i| labels[i] == class && a[i] == f)
                .count() as f64;
            assert!((n - total / 5.0).abs() <= 1.0);
        }
    }
    let err = stratified_folds(&[1, 1, 1, 2, 2, 2, 2, 2, 2, 2], 5, 0).unwrap_err();
    assert_eq!(
        err,
        ClassifyError::ClassTooSmall {
            class: 1,
            count: 3,
            folds: 5
        }
    );
}

#[test]
fn majority_learner_scores_the_base_rate() {
    let labels: Vec<u32> = (0..100)
        .map(|i| {
            if i < 70 {
                3
            } else if i < 85 {
                1
            } else {
                2
            }
        })
        .collect();
    let report = cross_validate_with("majority", &labels, 5, 1, |train, test| {
        let mut counts = [0usize; 4];
        for &i in train {
            counts[labels[i] as usize] += 1;
        }
        let major = (0..4).max_by_key(|&c| counts[c]).unwrap() as u32;
        Ok(vec![major; test.len()])
    })
    .unwrap();
    assert!((report.overall_accuracy - 0.7).abs() < 1e-12);
    assert_eq!(report.confusion.total(), 100);
}

#[test]
fn cross_validation_is_deterministic() {
    let (pts, labels) = random_points(45, 60);
    let k = rbf_gram(&pts, 0.3);
    let a = cross_validate("rbf", &k, &labels, 5, 3, &SvmParams::default()).unwrap();
    let b = cross_validate("rbf", &k, &labels, 5, 3, &SvmParams::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.confusion.total(), 60);
    assert!(a.overall_accuracy > 0.6);
}

#[test]
fn vector_path_separates_a_clean_coordinate() {
    let rows: Vec<[f64; 4]> = (0..40)
        .map(|i| {
            [
                if i % 2 == 0 { -3.0 } else { 3.0 },
                (i % 5) as f64,
                1.0,
                (i % 3) as f64,
            ]
        })
        .collect();
    let labels: Vec<u32> = (0..40).map(|i| (i % 2) as u32).collect();
    let report = vrm_classifier_path(
        &Matrix::from_rows(&rows).unwrap(),
        &labels,
        5,
        0,
        &SvmParams::default(),
    )
    .unwrap();
    assert_eq!(report.overall_accuracy, 1.0);
    assert_eq!(report.model, "lc");
}

proptest! {
    #[test]
    fn trained_models_are_dual_feasible(seed in 0u64..300, c in 0.05f64..50.0) {
        let (pts, labels) = random_points(seed, 14);
        let k = rbf_gram(&pts, 0.5);
        let model = train_svm(&k, &labels, &SvmParams { c, ..Default::default() }).unwrap();
        for m in &model.models {
            prop_assert!(m.check(1e-3).is_ok());
            prop_assert!(m.kkt_gap <= 1e-3);
        }
    }
}
