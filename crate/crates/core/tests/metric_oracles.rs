//! Metrics against brute-force counting oracles.

mod common;

use proptest::prelude::*;
use viewgate::eval::{
    average_precision, evaluate_with, example_based, mean_accuracy, mean_average_precision,
    view_accuracy, PredictionBatch,
};
use viewgate::Execution;

#[derive(Debug, Clone)]
struct Case {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    labels: Vec<bool>,
}

/// Distinct scores in (0, 1) so rankings have no ties.
fn case() -> impl Strategy<Value = Case> {
    (1usize..=200, 1usize..=20).prop_flat_map(|(rows, cols)| {
        let n = rows * cols;
        (
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(perm, labels)| Case {
                rows,
                cols,
                scores: perm.iter().map(|&k| (k as f64 + 0.5) / n as f64).collect(),
                labels,
            })
    })
}

fn batch(c: &Case, scores: Vec<f64>, threshold: f64) -> PredictionBatch {
    PredictionBatch::new(scores, c.labels.clone(), c.rows, c.cols, threshold).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_accuracy_matches_counting(c in case(), thr in 0.05f64..0.95) {
        let got = mean_accuracy(&batch(&c, c.scores.clone(), thr)).ok().map(|m| m.value);
        match (got, common::mean_accuracy(&c.scores, &c.labels, c.rows, c.cols, thr)) {
            (Some(a), Some(b)) => prop_assert!(close(a, b)),
            (None, None) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn mean_accuracy_invariant_to_replicating_samples(c in case(), k in 2usize..4) {
        let rep = Case {
            rows: c.rows * k,
            cols: c.cols,
            scores: c.scores.repeat(k),
            labels: c.labels.repeat(k),
        };
        let a = mean_accuracy(&batch(&c, c.scores.clone(), 0.5)).ok().map(|m| m.value);
        let b = mean_accuracy(&batch(&rep, rep.scores.clone(), 0.5)).ok().map(|m| m.value);
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!(close(a, b)),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
    }

    #[test]
    fn mean_accuracy_invariant_to_threshold_preserving_rescale(c in case(), k in 0.1f64..10.0) {
        // Scores and threshold rescaled together leave every decision intact.
        let scaled: Vec<f64> = c.scores.iter().map(|s| s * k).collect();
        let a = mean_accuracy(&batch(&c, c.scores.clone(), 0.5)).ok().map(|m| m.value);
        let b = mean_accuracy(&batch(&c, scaled, 0.5 * k)).ok().map(|m| m.value);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn average_precision_matches_counting(c in case()) {
        for a in 0..c.cols {
            let s = common::column(&c.scores, c.cols, a);
            let y = common::column(&c.labels, c.cols, a);
            match (average_precision(&s, &y), common::average_precision(&s, &y)) {
                (Some(x), Some(o)) => prop_assert!(close(x, o)),
                (x, o) => prop_assert_eq!(x, o),
            }
        }
    }

    #[test]
    fn map_invariant_under_monotone_transform(c in case()) {
        let warped: Vec<f64> = c.scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = mean_average_precision(&batch(&c, c.scores.clone(), 0.5)).ok().map(|m| m.value);
        let b = mean_average_precision(&batch(&c, warped, 0.5)).ok().map(|m| m.value);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fully_reversed_ranking(pos in 1usize..60, neg in 0usize..60) {
        // Every negative outranks every positive.
        let n = pos + neg;
        let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let labels: Vec<bool> = (0..n).map(|i| i >= neg).collect();
        let expected = (1..=pos).map(|k| k as f64 / (neg + k) as f64).sum::<f64>() / pos as f64;
        prop_assert!(close(average_precision(&scores, &labels).unwrap(), expected));
    }

    #[test]
    fn example_based_matches_set_oracle(c in case(), thr in 0.05f64..0.95) {
        let b = batch(&c, c.scores.clone(), thr);
        let got = example_based(&b);
        let [acc, prec, rec, f1] = common::example_based(&c.scores, &c.labels, c.rows, c.cols, thr);
        prop_assert!(close(got.accuracy, acc));
        prop_assert!(close(got.precision, prec));
        prop_assert!(close(got.recall, rec));
        prop_assert!(close(got.f1, f1));
    }

    #[test]
    fn view_confusion_matches_counting(
        pairs in prop::collection::vec((-1i64..3, 0usize..3), 1..200),
    ) {
        prop_assume!(pairs.iter().any(|p| p.0 >= 0));
        let rows = pairs.len();
        let truth: Vec<i64> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let b = PredictionBatch::new(vec![0.5; rows], vec![true; rows], rows, 1, 0.5)
            .unwrap()
            .with_views(pred.clone(), Some(truth.clone()), 3)
            .unwrap();
        let va = view_accuracy(&b).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                let n = pairs.iter().filter(|&&(a, b)| a == t as i64 && b == p).count();
                prop_assert_eq!(va.confusion[t][p], n);
            }
            let support = pairs.iter().filter(|&&(a, _)| a == t as i64).count();
            let hits = pairs.iter().filter(|&&(a, b)| a == t as i64 && b == t).count();
            let expected = (support > 0).then(|| hits as f64 / support as f64);
            prop_assert_eq!(va.per_view[t], expected);
        }
    }

    #[test]
    fn execution_modes_agree(c in case()) {
        let b = batch(&c, c.scores.clone(), 0.5);
        if let Ok(seq) = evaluate_with(&b, Execution::Sequential) {
            prop_assert_eq!(seq, evaluate_with(&b, Execution::Parallel).unwrap());
        }
    }
}

#[test]
fn perfect_predictions_score_one() {
    let labels = vec![true, false, false, true, true, true, false, false];
    let scores = labels.iter().map(|&y| if y { 0.9 } else { 0.1 }).collect();
    let b = PredictionBatch::new(scores, labels, 4, 2, 0.5).unwrap();
    let r = evaluate_with(&b, Execution::Sequential).unwrap();
    assert_eq!(r.mean_accuracy, 1.0);
    assert_eq!(r.example.f1, 1.0);
    assert_eq!(r.mean_average_precision, Some(1.0));
}

#[test]
fn attribute_without_both_classes_is_excluded() {
    // Column 1 is all positive.
    let labels = vec![true, true, false, true];
    let b = PredictionBatch::new(vec![0.9, 0.9, 0.1, 0.2], labels, 2, 2, 0.5).unwrap();
    let m = mean_accuracy(&b).unwrap();
    assert_eq!(m.excluded, vec![1]);
    assert_eq!(m.value, 1.0);
}
