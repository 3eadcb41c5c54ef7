//! Multiclass SVMs on precomputed kernels.
//!
//! One binary C-SVC is trained per class pair ([`smo`]); prediction takes a
//! majority vote with ties going to the smallest class. [`cv`] provides
//! stratified k-fold evaluation on a single Gram matrix and the vector
//! (linear-kernel) baseline.

mod cv;
pub mod smo;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{self, KernelConfig, KernelError, KernelMatrix};
use crate::labels::LabelError;

pub use cv::{
    cross_validate, cross_validate_with, fold_sizes, stratified_folds, vrm_classifier_path,
    EvaluationReport, FoldSize,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("training needs at least two classes, found {0}")]
    SingleClass(usize),
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("class {class} has {count} samples, fewer than the {folds} folds")]
    ClassTooSmall {
        class: u32,
        count: usize,
        folds: usize,
    },
    #[error("binary model {pair} violates {what}")]
    Invariant { pair: String, what: String },
    #[error("kernel: {0}")]
    Kernel(#[from] KernelError),
    #[error("features: {0}")]
    Label(#[from] LabelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeight {
    pub class: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    #[serde(rename = "C", alias = "c")]
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub eps: f64,
    pub max_iter: usize,
    /// Multipliers of `C` for individual classes; others use 1.
    pub class_weights: Vec<ClassWeight>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            eps: 1e-3,
            max_iter: 10_000_000,
            class_weights: Vec::new(),
        }
    }
}

impl SvmParams {
    fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifyError::Parameter("C must be positive"));
        }
        if !(self.eps > 0.0) {
            return Err(ClassifyError::Parameter("eps must be positive"));
        }
        if self
            .class_weights
            .iter()
            .any(|w| !(w.weight > 0.0 && w.weight.is_finite()))
        {
            return Err(ClassifyError::Parameter("class weights must be positive"));
        }
        Ok(())
    }

    fn bound(&self, class: u32) -> f64 {
        self.c
            * self
                .class_weights
                .iter()
                .find(|w| w.class == class)
                .map_or(1.0, |w| w.weight)
    }
}

/// One-vs-one binary classifier; `positive` wins when the decision is > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub positive: u32,
    pub negative: u32,
    /// Indices into the training set.
    pub support: Vec<usize>,
    /// `alpha_i * y_i` of each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub c_positive: f64,
    pub c_negative: f64,
    pub objective: f64,
    pub kkt_gap: f64,
    pub iterations: usize,
}

impl BinaryModel {
    /// `sum_i coef_i K(x_i, x) + b` from similarities to the training set.
    pub fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&s, &c)| c * kernel_row[s])
            .sum::<f64>()
            + self.bias
    }

    /// Dual feasibility: box constraints, balance and a non-empty support.
    pub fn check(&self, eps: f64) -> Result<(), ClassifyError> {
        let fail = |what: String| {
            Err(ClassifyError::Invariant {
                pair: format!("{}v{}", self.positive, self.negative),
                what,
            })
        };
        if self.support.is_empty() {
            return fail(String::from("non-empty support"));
        }
        let mut balance = 0.0;
        for &c in &self.coef {
            let (alpha, bound) = if c > 0.0 {
                (c, self.c_positive)
            } else {
                (-c, self.c_negative)
            };
            if !(alpha >= 0.0 && alpha <= bound) {
                return fail(format!("0 <= alpha <= C (alpha = {alpha})"));
            }
            balance += c;
        }
        if crate::math::abs(balance) > 1e-6 {
            return fail(format!("sum alpha y = 0 (got {balance})"));
        }
        if !(self.kkt_gap <= eps) {
            return fail(format!("KKT tolerance (gap {})", self.kkt_gap));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    /// Sorted class labels.
    pub classes: Vec<u32>,
    /// Pairs `(a, b)` with `a < b` in class order.
    pub models: Vec<BinaryModel>,
    pub params: SvmParams,
    pub kernel: KernelConfig,
    pub train_size: usize,
}

impl TrainedModel {
    pub fn votes(&self, kernel_row: &[f64]) -> Result<Vec<u32>, ClassifyError> {
        if kernel_row.len() != self.train_size {
            return Err(ClassifyError::Length {
                expected: self.train_size,
                got: kernel_row.len(),
            });
        }
        let mut votes = vec![0u32; self.classes.len()];
        for m in &self.models {
            let winner = if m.decision(kernel_row) > 0.0 {
                m.positive
            } else {
                m.negative
            };
            let idx = self
                .classes
                .binary_search(&winner)
                .expect("model classes are known");
            votes[idx] += 1;
        }
        Ok(votes)
    }

    /// Majority vote; ties go to the smallest class.
    pub fn predict(&self, kernel_row: &[f64]) -> Result<u32, ClassifyError> {
        let votes = self.votes(kernel_row)?;
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Ok(self.classes[best])
    }
}

/// Trains on the samples `train` of `gram` (indices into it). The model's
/// support indices refer to positions within `train`.
pub fn train_on(
    gram: &KernelMatrix,
    train: &[usize],
    labels: &[u32],
    params: &SvmParams,
) -> Result<TrainedModel, ClassifyError> {
    params.validate()?;
    if labels.len() != train.len() {
        return Err(ClassifyError::Length {
            expected: train.len(),
            got: labels.len(),
        });
    }
    if let Some(&bad) = train.iter().find(|&&i| i >= gram.n()) {
        return Err(ClassifyError::Length {
            expected: gram.n(),
            got: bad + 1,
        });
    }
    if gram.psd.is_none() {
        kernels::psd_check(gram)?;
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassifyError::SingleClass(classes.len()));
    }
    let mut models = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let (pos, neg) = (classes[a], classes[b]);
            let local: Vec<usize> = (0..train.len())
                .filter(|&t| labels[t] == pos || labels[t] == neg)
                .collect();
            let y: Vec<f64> = local
                .iter()
                .map(|&t| if labels[t] == pos { 1.0 } else { -1.0 })
                .collect();
            let (cp, cn) = (params.bound(pos), params.bound(neg));
            let c: Vec<f64> = y.iter().map(|&v| if v > 0.0 { cp } else { cn }).collect();
            let kernel = |i: usize, j: usize| gram.get(train[local[i]], train[local[j]]);
            let sol = smo::BinaryProblem {
                kernel: &kernel,
                y: &y,
                c: &c,
                eps: params.eps,
                max_iter: params.max_iter,
            }
            .solve();
            if !sol.converged {
                log::warn!(
                    "SMO for classes {pos} vs {neg} hit the iteration cap (gap {})",
                    sol.gap
                );
            }
            let (support, coef): (Vec<usize>, Vec<f64>) = sol
                .alpha
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0.0)
                .map(|(i, &a)| (local[i], a * y[i]))
                .unzip();
            let model = BinaryModel {
                positive: pos,
                negative: neg,
                support,
                coef,
                bias: -sol.rho,
                c_positive: cp,
                c_negative: cn,
                objective: sol.objective,
                kkt_gap: sol.gap,
                iterations: sol.iterations,
            };
            model.check(params.eps)?;
            models.push(model);
        }
    }
    Ok(TrainedModel {
        classes,
        models,
        params: params.clone(),
        kernel: gram.config.clone(),
        train_size: train.len(),
    })
}

/// Trains on the whole Gram matrix.
pub fn train_svm(
    gram: &KernelMatrix,
    labels: &[u32],
    params: &SvmParams,
) -> Result<TrainedModel, ClassifyError> {
    if labels.len() != gram.n() {
        return Err(ClassifyError::Length {
            expected: gram.n(),
            got: labels.len(),
        });
    }
    let all: Vec<usize> = (0..gram.n()).collect();
    train_on(gram, &all, labels, params)
}

/// Counts of `(target, output)` pairs over a fixed class list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<u32>,
    /// `counts[target][output]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<u32>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    fn index(&self, class: u32) -> usize {
        self.classes
            .binary_search(&class)
            .expect("class in the confusion matrix")
    }

    pub fn add(&mut self, target: u32, output: u32) {
        let (t, o) = (self.index(target), self.index(output));
        self.counts[t][o] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (t, row) in other.counts.iter().enumerate() {
            for (o, &c) in row.iter().enumerate() {
                let (tt, oo) = (self.index(other.classes[t]), self.index(other.classes[o]));
                self.counts[tt][oo] += c;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    /// Share of predictions of class `i` that were right.
    pub fn precision(&self, i: usize) -> Option<f64> {
        let predicted: u64 = self.counts.iter().map(|r| r[i]).sum();
        (predicted > 0).then(|| self.counts[i][i] as f64 / predicted as f64)
    }

    /// Share of class `i` samples that were found.
    pub fn recall(&self, i: usize) -> Option<f64> {
        let actual: u64 = self.counts[i].iter().sum();
        (actual > 0).then(|| self.counts[i][i] as f64 / actual as f64)
    }
}

#[cfg(test)]
mod tests;
