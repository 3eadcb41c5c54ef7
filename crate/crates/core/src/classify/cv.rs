use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{train_on, ClassifyError, ConfusionMatrix, SvmParams};
use crate::kernels::KernelMatrix;
use crate::labels::normalize_features;
use crate::linalg::Matrix;
use crate::rng;

/// Fold index of every sample. Each class is shuffled separately and dealt
/// round-robin over the folds in a single pass across classes, so each fold
/// holds within one sample of every class's share and total fold sizes
/// differ by at most one.
pub fn stratified_folds(
    labels: &[u32],
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, ClassifyError> {
    if folds < 2 {
        return Err(ClassifyError::Parameter("at least two folds required"));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = rng::seeded(seed, 0);
    let mut assignment = vec![0usize; labels.len()];
    let mut position = 0usize;
    for &class in &classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(ClassifyError::ClassTooSmall {
                class,
                count: members.len(),
                folds,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = position % folds;
            position += 1;
        }
    }
    Ok(assignment)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSize {
    pub train: usize,
    pub test: usize,
}

pub fn fold_sizes(assignment: &[usize], folds: usize) -> Vec<FoldSize> {
    (0..folds)
        .map(|f| {
            let test = assignment.iter().filter(|&&a| a == f).count();
            FoldSize {
                train: assignment.len() - test,
                test,
            }
        })
        .collect()
}

/// Cross-validated evaluation shared by the graph and vector paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub folds: usize,
    pub seed: u64,
    pub fold_sizes: Vec<FoldSize>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub overall_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
}

/// Stratified k-fold evaluation with a caller-supplied learner:
/// `fit_predict(train, test)` returns one prediction per test index.
pub fn cross_validate_with<F>(
    model: &str,
    labels: &[u32],
    folds: usize,
    seed: u64,
    mut fit_predict: F,
) -> Result<EvaluationReport, ClassifyError>
where
    F: FnMut(&[usize], &[usize]) -> Result<Vec<u32>, ClassifyError>,
{
    let assignment = stratified_folds(labels, folds, seed)?;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut confusion = ConfusionMatrix::new(classes.clone());
    let mut fold_accuracies = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..labels.len()).partition(|&i| assignment[i] == f);
        let predicted = fit_predict(&train, &test)?;
        if predicted.len() != test.len() {
            return Err(ClassifyError::Length {
                expected: test.len(),
                got: predicted.len(),
            });
        }
        let mut fold = ConfusionMatrix::new(classes.clone());
        for (&i, &p) in test.iter().zip(&predicted) {
            if classes.binary_search(&p).is_err() {
                return Err(ClassifyError::Parameter("prediction outside the label set"));
            }
            fold.add(labels[i], p);
        }
        fold_accuracies.push(fold.accuracy());
        confusion.merge(&fold);
    }
    let k = classes.len();
    Ok(EvaluationReport {
        model: String::from(model),
        folds,
        seed,
        fold_sizes: fold_sizes(&assignment, folds),
        mean_accuracy: fold_accuracies.iter().sum::<f64>() / folds as f64,
        fold_accuracies,
        overall_accuracy: confusion.accuracy(),
        precision: (0..k).map(|i| confusion.precision(i)).collect(),
        recall: (0..k).map(|i| confusion.recall(i)).collect(),
        confusion,
    })
}

/// SVM evaluation on one Gram matrix; every fold trains on a slice of it.
pub fn cross_validate(
    model: &str,
    gram: &KernelMatrix,
    labels: &[u32],
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<EvaluationReport, ClassifyError> {
    if labels.len() != gram.n() {
        return Err(ClassifyError::Length {
            expected: gram.n(),
            got: labels.len(),
        });
    }
    cross_validate_with(model, labels, folds, seed, |train, test| {
        let train_labels: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
        let trained = train_on(gram, train, &train_labels, params)?;
        test.iter()
            .map(|&t| trained.predict(&gram.row_subset(t, train)))
            .collect()
    })
}

/// Vector baseline: per-column range normalisation, a linear-kernel Gram
/// and the same evaluation as the graph path.
pub fn vrm_classifier_path(
    features: &Matrix,
    labels: &[u32],
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<EvaluationReport, ClassifyError> {
    let (normalized, _) = normalize_features(features)?;
    let gram = KernelMatrix::linear(&normalized)?;
    cross_validate("lc", &gram, labels, folds, seed, params)
}
