//! Macro-F1 evaluation and eval-mode prediction helpers.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::TimeSeriesDataset;
use crate::error::CoreError;
use crate::nets::{classifier_forward, encoder_forward, NetParams};

const EVAL_CHUNK: usize = 256;

fn check_labels(y_true: &[i32], y_pred: &[i32], k: usize) -> Result<(), CoreError> {
    if y_true.is_empty() {
        return Err(CoreError::EmptyInput("f1 over empty label set"));
    }
    if y_true.len() != y_pred.len() {
        return Err(CoreError::ShapeMismatch {
            context: "f1 label vectors",
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    for &v in y_true.iter().chain(y_pred) {
        if v < 0 || v as usize >= k {
            return Err(CoreError::InvalidDataset(alloc::format!("label {v} outside [0, {k})")));
        }
    }
    Ok(())
}

/// Per-class F1 = 2PR/(P+R) with the 0/0 convention: a class with
/// `precision + recall == 0` (including never-present, never-predicted)
/// scores 0.
pub fn f1_per_class(y_true: &[i32], y_pred: &[i32], k: usize) -> Result<Vec<f64>, CoreError> {
    check_labels(y_true, y_pred, k)?;
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fne = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t == p {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fne[t as usize] += 1;
        }
    }
    Ok((0..k)
        .map(|c| {
            let precision =
                if tp[c] + fp[c] > 0 { tp[c] as f64 / (tp[c] + fp[c]) as f64 } else { 0.0 };
            let recall =
                if tp[c] + fne[c] > 0 { tp[c] as f64 / (tp[c] + fne[c]) as f64 } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .collect())
}

/// Unweighted mean of the K per-class F1 scores.
pub fn macro_f1(y_true: &[i32], y_pred: &[i32], k: usize) -> Result<f64, CoreError> {
    let per_class = f1_per_class(y_true, y_pred, k)?;
    Ok(per_class.iter().sum::<f64>() / k as f64)
}

/// Fraction of exact matches.
pub fn accuracy(y_true: &[i32], y_pred: &[i32]) -> f64 {
    if y_true.is_empty() {
        return 0.0;
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    hits as f64 / y_true.len() as f64
}

/// Eval-mode argmax predictions for `indices` (or the whole dataset). Ties
/// break toward the smallest class index.
pub fn predict(
    encoder: &NetParams,
    classifier: &NetParams,
    ds: &TimeSeriesDataset,
    indices: Option<&[usize]>,
) -> Result<Vec<i32>, CoreError> {
    let k = classifier
        .num_classes()
        .ok_or(CoreError::RoleMismatch { expected: "classifier", got: classifier.role().name() })?;
    let all: Vec<usize>;
    let idxs = match indices {
        Some(s) => s,
        None => {
            all = (0..ds.len()).collect();
            &all
        }
    };
    let mut out = Vec::with_capacity(idxs.len());
    for chunk in idxs.chunks(EVAL_CHUNK) {
        let x = ds.gather(chunk);
        let features = encoder_forward(encoder, &x, chunk.len(), ds.channels(), ds.seq_len())?;
        let (_, probs) = classifier_forward(classifier, &features, chunk.len())?;
        for bi in 0..chunk.len() {
            let row = &probs[bi * k..][..k];
            let mut best = 0usize;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            out.push(best as i32);
        }
    }
    Ok(out)
}

/// Eval-mode features for `indices` (or the whole dataset), `[n][128]`.
pub fn embed(
    encoder: &NetParams,
    ds: &TimeSeriesDataset,
    indices: Option<&[usize]>,
) -> Result<Vec<f64>, CoreError> {
    let all: Vec<usize>;
    let idxs = match indices {
        Some(s) => s,
        None => {
            all = (0..ds.len()).collect();
            &all
        }
    };
    let mut out = Vec::new();
    for chunk in idxs.chunks(EVAL_CHUNK) {
        let x = ds.gather(chunk);
        out.extend(encoder_forward(encoder, &x, chunk.len(), ds.channels(), ds.seq_len())?);
    }
    Ok(out)
}

/// Macro-F1 evaluation of `classifier(encoder(x))` on a labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub predictions: Vec<i32>,
}

pub fn evaluate(
    encoder: &NetParams,
    classifier: &NetParams,
    test: &TimeSeriesDataset,
) -> Result<Evaluation, CoreError> {
    let k = classifier
        .num_classes()
        .ok_or(CoreError::RoleMismatch { expected: "classifier", got: classifier.role().name() })?;
    if k != test.num_classes() {
        return Err(CoreError::ClassCountMismatch { classifier: k, data: test.num_classes() });
    }
    let y_true = test.full_labels()?;
    let predictions = predict(encoder, classifier, test, None)?;
    let per_class_f1 = f1_per_class(y_true, &predictions, k)?;
    let macro_f1 = per_class_f1.iter().sum::<f64>() / k as f64;
    Ok(Evaluation { macro_f1, per_class_f1, predictions })
}

/// Mean Euclidean distance of each feature row to its class's empirical
/// mean, both domains pooled; the class-cohesion measure used to compare
/// runs with and without local class alignment.
pub fn within_class_center_distance(features: &[f64], labels: &[i32], k: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let dim = features.len() / labels.len();
    let mut means = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        counts[y as usize] += 1;
        for t in 0..dim {
            means[y as usize * dim + t] += features[i * dim + t];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for t in 0..dim {
                means[c * dim + t] /= counts[c] as f64;
            }
        }
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let mut d2 = 0.0;
        for t in 0..dim {
            let diff = features[i * dim + t] - means[y as usize * dim + t];
            d2 += diff * diff;
        }
        total += libm::sqrt(d2);
    }
    total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_one() {
        let y = vec![0, 1, 2, 1, 0];
        assert_eq!(f1_per_class(&y, &y, 3).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(macro_f1(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn worked_confusion_example() {
        // y_true=[0,0,1,1], y_pred=[0,1,1,1]: class 0 P=1, R=1/2 -> 2/3;
        // class 1 P=2/3, R=1 -> 0.8; macro = 0.7333...
        let f1 = f1_per_class(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((f1[1] - 0.8).abs() < 1e-12);
        let m = macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((m - 0.733333333).abs() < 1e-4);
    }

    #[test]
    fn absent_class_scores_zero() {
        // Class 2 never appears and is never predicted: F1 = 0 by convention.
        let f1 = f1_per_class(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(f1[2], 0.0);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(f1_per_class(&[], &[], 2).is_err());
        assert!(f1_per_class(&[0, 3], &[0, 1], 2).is_err());
    }

    #[test]
    fn center_distance_smaller_for_tight_clusters() {
        let tight = vec![0.0, 0.0, 0.1, 0.0, 5.0, 5.0, 5.1, 5.0];
        let loose = vec![0.0, 0.0, 2.0, 0.0, 5.0, 5.0, 8.0, 5.0];
        let labels = vec![0, 0, 1, 1];
        let a = within_class_center_distance(&tight, &labels, 2);
        let b = within_class_center_distance(&loose, &labels, 2);
        assert!(a < b);
    }
}
