//! Multi-label and view-classification metrics.

mod ablation;
mod report;

pub use ablation::{specialization_ablation, AblationGrid};
pub use report::{evaluate, evaluate_with, MetricsReport};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::Prediction;
use crate::synth::Dataset;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Display names for views; the usual three-view case gets pose names.
pub fn view_names(view_count: usize) -> Vec<String> {
    if view_count == 3 {
        ["front", "back", "side"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        (0..view_count).map(|v| format!("view{v}")).collect()
    }
}

/// Test-time predictions and ground truth, row-major `N × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    binarized: Vec<bool>,
    labels: Vec<bool>,
    pub view_pred: Vec<usize>,
    /// True views, `-1` for unknown. `None` when the source had none.
    pub view_true: Option<Vec<i64>>,
    pub view_count: usize,
}

impl PredictionBatch {
    pub fn new(
        scores: Vec<f64>,
        labels: Vec<bool>,
        rows: usize,
        cols: usize,
        threshold: f64,
    ) -> Result<Self> {
        if scores.len() != rows * cols || labels.len() != rows * cols {
            return Err(Error::Dimension {
                op: "prediction batch",
                left: vec![scores.len(), labels.len()],
                right: vec![rows, cols],
            });
        }
        let binarized = scores.iter().map(|&s| s >= threshold).collect();
        Ok(Self {
            rows,
            cols,
            scores,
            binarized,
            labels,
            view_pred: Vec::new(),
            view_true: None,
            view_count: 0,
        })
    }

    pub fn with_views(
        mut self,
        view_pred: Vec<usize>,
        view_true: Option<Vec<i64>>,
        view_count: usize,
    ) -> Result<Self> {
        if view_pred.len() != self.rows || view_true.as_ref().is_some_and(|v| v.len() != self.rows)
        {
            return Err(Error::Dimension {
                op: "prediction batch views",
                left: vec![view_pred.len()],
                right: vec![self.rows],
            });
        }
        self.view_pred = view_pred;
        self.view_true = view_true;
        self.view_count = view_count;
        Ok(self)
    }

    /// Pairs a model prediction with a dataset's labels and views. The
    /// view columns are only attached for gated predictions.
    pub fn from_prediction(pred: &Prediction, data: &Dataset, threshold: f64) -> Result<Self> {
        let (n, c) = (pred.aggregated.rows(), pred.aggregated.cols());
        if n != data.len() || c != data.attribute_count {
            return Err(Error::ShapeMismatch {
                group: "attributes".into(),
                expected: vec![data.len(), data.attribute_count],
                found: vec![n, c],
            });
        }
        let labels = data
            .samples
            .iter()
            .flat_map(|s| s.attrs.iter().map(|&a| a == 1))
            .collect();
        let batch = Self::new(pred.aggregated.data().to_vec(), labels, n, c, threshold)?;
        let vc = pred.view_conf.cols();
        if vc < 2 {
            return Ok(batch);
        }
        let view_true = data.has_views().then(|| data.views());
        batch.with_views(pred.view_argmax(), view_true, vc)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn score(&self, i: usize, c: usize) -> f64 {
        self.scores[i * self.cols + c]
    }

    pub fn predicted(&self, i: usize, c: usize) -> bool {
        self.binarized[i * self.cols + c]
    }

    pub fn label(&self, i: usize, c: usize) -> bool {
        self.labels[i * self.cols + c]
    }

    pub fn scores(&self) -> Tensor {
        Tensor::new(vec![self.rows, self.cols], self.scores.clone()).expect("consistent batch")
    }
}

/// A metric averaged over attributes, with the attributes left out.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeAverage {
    pub value: f64,
    /// `None` for excluded attributes.
    pub per_attribute: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

fn average(per_attribute: Vec<Option<f64>>, what: &str) -> Result<AttributeAverage> {
    let included: Vec<f64> = per_attribute.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::Validation(format!(
            "no attribute is includable in {what}"
        )));
    }
    let excluded = per_attribute
        .iter()
        .enumerate()
        .filter_map(|(c, v)| v.is_none().then_some(c))
        .collect();
    Ok(AttributeAverage {
        value: included.iter().sum::<f64>() / included.len() as f64,
        per_attribute,
        excluded,
    })
}

/// Label-based mean accuracy: per attribute `(TPR + TNR) / 2`, averaged
/// over attributes that have both positive and negative labels.
pub fn mean_accuracy(batch: &PredictionBatch) -> Result<AttributeAverage> {
    mean_accuracy_with(batch, Execution::Sequential)
}

pub fn mean_accuracy_with(batch: &PredictionBatch, exec: Execution) -> Result<AttributeAverage> {
    let per = exec::map_range(exec, batch.cols, |c| {
        let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..batch.rows {
            let hit = batch.predicted(i, c);
            if batch.label(i, c) {
                p += 1;
                tp += hit as usize;
            } else {
                n += 1;
                tn += !hit as usize;
            }
        }
        (p > 0 && n > 0).then(|| (tp as f64 / p as f64 + tn as f64 / n as f64) / 2.0)
    });
    average(per, "mean accuracy")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean of the averaged precision and recall.
    pub f1: f64,
}

pub fn example_based(batch: &PredictionBatch) -> ExampleMetrics {
    let (mut acc, mut prec, mut rec) = (0.0, 0.0, 0.0);
    for i in 0..batch.rows {
        let (mut inter, mut union, mut truth, mut guess) = (0usize, 0usize, 0usize, 0usize);
        for c in 0..batch.cols {
            let (y, p) = (batch.label(i, c), batch.predicted(i, c));
            inter += (y && p) as usize;
            union += (y || p) as usize;
            truth += y as usize;
            guess += p as usize;
        }
        if union == 0 {
            acc += 1.0;
            prec += 1.0;
            rec += 1.0;
            continue;
        }
        acc += inter as f64 / union as f64;
        if guess > 0 {
            prec += inter as f64 / guess as f64;
        }
        if truth > 0 {
            rec += inter as f64 / truth as f64;
        }
    }
    let n = batch.rows.max(1) as f64;
    let (accuracy, precision, recall) = (acc / n, prec / n, rec / n);
    ExampleMetrics {
        accuracy,
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Average precision of one ranking: mean of precision@k over the ranks
/// of the positives. Ties keep index order. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut hits, mut total) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

pub fn mean_average_precision(batch: &PredictionBatch) -> Result<AttributeAverage> {
    mean_average_precision_with(batch, Execution::Sequential)
}

pub fn mean_average_precision_with(
    batch: &PredictionBatch,
    exec: Execution,
) -> Result<AttributeAverage> {
    let per = exec::map_range(exec, batch.cols, |c| {
        let scores: Vec<f64> = (0..batch.rows).map(|i| batch.score(i, c)).collect();
        let labels: Vec<bool> = (0..batch.rows).map(|i| batch.label(i, c)).collect();
        average_precision(&scores, &labels)
    });
    average(per, "mean average precision")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewAccuracy {
    /// Recall per true view; `None` for views absent from the batch.
    pub per_view: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl ViewAccuracy {
    pub fn support(&self, view: usize) -> usize {
        self.confusion[view].iter().sum()
    }
}

/// Per-view accuracy over samples with a known true view.
pub fn view_accuracy(batch: &PredictionBatch) -> Result<ViewAccuracy> {
    let truth = batch
        .view_true
        .as_ref()
        .ok_or_else(|| Error::Validation("view accuracy needs ground-truth views".into()))?;
    let v = batch.view_count;
    let mut confusion = vec![vec![0usize; v]; v];
    let mut known = 0;
    for (&t, &p) in truth.iter().zip(&batch.view_pred) {
        if t < 0 {
            continue;
        }
        let t = t as usize;
        if t >= v || p >= v {
            return Err(Error::Validation(format!(
                "view index out of range for {v} views"
            )));
        }
        confusion[t][p] += 1;
        known += 1;
    }
    if known == 0 {
        return Err(Error::Validation(
            "view accuracy needs ground-truth views".into(),
        ));
    }
    let per_view = confusion
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let support: usize = row.iter().sum();
            (support > 0).then(|| row[t] as f64 / support as f64)
        })
        .collect();
    Ok(ViewAccuracy {
        per_view,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(scores: &[&[f64]], labels: &[&[u8]]) -> PredictionBatch {
        let rows = scores.len();
        let cols = scores[0].len();
        PredictionBatch::new(
            scores.concat(),
            labels.concat().into_iter().map(|l| l == 1).collect(),
            rows,
            cols,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn mean_accuracy_hand_case() {
        let b = batch(&[&[0.9], &[0.1], &[0.2]], &[&[1], &[1], &[0]]);
        assert_eq!(mean_accuracy(&b).unwrap().value, 0.75);
    }

    #[test]
    fn mean_accuracy_excludes_one_sided_attributes() {
        let b = batch(&[&[0.9, 0.9], &[0.1, 0.9]], &[&[1, 1], &[0, 1]]);
        let m = mean_accuracy(&b).unwrap();
        assert_eq!(m.excluded, vec![1]);
        assert_eq!(m.value, 1.0);
        let b = batch(&[&[0.9]], &[&[1]]);
        assert!(mean_accuracy(&b).is_err());
    }

    #[test]
    fn flipped_predictions_complement_mean_accuracy() {
        let b = batch(
            &[&[0.9, 0.2], &[0.1, 0.7], &[0.6, 0.4]],
            &[&[1, 0], &[1, 1], &[0, 0]],
        );
        let flipped = batch(
            &[&[0.1, 0.8], &[0.9, 0.3], &[0.4, 0.6]],
            &[&[1, 0], &[1, 1], &[0, 0]],
        );
        let a = mean_accuracy(&b).unwrap().value;
        let f = mean_accuracy(&flipped).unwrap().value;
        assert!((a + f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn example_based_set_case() {
        // Y = {1, 3}, Ŷ = {1, 2} over attributes 0..4.
        let b = batch(&[&[0.1, 0.9, 0.9, 0.1]], &[&[0, 1, 0, 1]]);
        let m = example_based(&b);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn example_based_empty_sets() {
        let b = batch(
            &[&[0.1, 0.1], &[0.9, 0.1], &[0.1, 0.1]],
            &[&[0, 0], &[0, 0], &[1, 0]],
        );
        let m = example_based(&b);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn average_precision_hand_case() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.9, 0.8], &[true, true]), Some(1.0));
        assert_eq!(average_precision(&[0.9, 0.8], &[false, false]), None);
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]), Some(1.0));
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]), Some(0.5));
    }

    #[test]
    fn view_accuracy_one_class_predictions() {
        let b = batch(&[&[0.5], &[0.5], &[0.5]], &[&[1], &[0], &[1]])
            .with_views(vec![0, 0, 0], Some(vec![0, 1, 2]), 3)
            .unwrap();
        let v = view_accuracy(&b).unwrap();
        assert_eq!(v.per_view, vec![Some(1.0), Some(0.0), Some(0.0)]);
        assert_eq!(
            v.confusion,
            vec![vec![1, 0, 0], vec![1, 0, 0], vec![1, 0, 0]]
        );
        let no_truth = batch(&[&[0.5]], &[&[1]])
            .with_views(vec![0], Some(vec![-1]), 3)
            .unwrap();
        assert!(view_accuracy(&no_truth).is_err());
    }
}
