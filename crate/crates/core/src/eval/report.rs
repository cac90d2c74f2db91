use std::fmt::Write as _;

use crate::error::Result;
use crate::exec::Execution;

use super::{
    example_based, mean_accuracy_with, mean_average_precision_with, view_accuracy, view_names,
    ExampleMetrics, PredictionBatch, ViewAccuracy,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub mean_accuracy: f64,
    pub ma_excluded: Vec<usize>,
    pub example: ExampleMetrics,
    /// `None` when no attribute has a positive label.
    pub mean_average_precision: Option<f64>,
    pub map_excluded: Vec<usize>,
    /// Present when the batch carries known true views.
    pub views: Option<ViewAccuracy>,
}

pub fn evaluate(batch: &PredictionBatch) -> Result<MetricsReport> {
    evaluate_with(batch, Execution::default())
}

pub fn evaluate_with(batch: &PredictionBatch, exec: Execution) -> Result<MetricsReport> {
    let ma = mean_accuracy_with(batch, exec)?;
    let (map, map_excluded) = match mean_average_precision_with(batch, exec) {
        Ok(m) => (Some(m.value), m.excluded),
        Err(_) => (None, (0..batch.cols()).collect()),
    };
    let has_views = batch
        .view_true
        .as_ref()
        .is_some_and(|v| v.iter().any(|&t| t >= 0));
    let views = if has_views {
        Some(view_accuracy(batch)?)
    } else {
        None
    };
    Ok(MetricsReport {
        samples: batch.rows(),
        mean_accuracy: ma.value,
        ma_excluded: ma.excluded,
        example: example_based(batch),
        mean_average_precision: map,
        map_excluded,
        views,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn list(v: &[usize]) -> String {
    v.iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl MetricsReport {
    /// Human-readable table, values in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let e = &self.example;
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "mA", "Acc", "Prec", "Rec", "F1", "mAP"
        );
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            pct(self.mean_accuracy),
            pct(e.accuracy),
            pct(e.precision),
            pct(e.recall),
            pct(e.f1),
            self.mean_average_precision
                .map(pct)
                .unwrap_or_else(|| "-".into()),
        );
        if !self.ma_excluded.is_empty() {
            let _ = writeln!(
                s,
                "excluded from mA (single-class labels): {}",
                list(&self.ma_excluded)
            );
        }
        if !self.map_excluded.is_empty() {
            let _ = writeln!(
                s,
                "excluded from mAP (no positives): {}",
                list(&self.map_excluded)
            );
        }
        match &self.views {
            Some(v) => {
                let names = view_names(v.per_view.len());
                let _ = writeln!(s, "\nview accuracy");
                for (name, acc) in names.iter().zip(&v.per_view) {
                    let _ = writeln!(
                        s,
                        "{name:>8} {:>8}",
                        acc.map(pct).unwrap_or_else(|| "-".into())
                    );
                }
                let _ = writeln!(s, "\nconfusion (rows: true, cols: predicted)");
                let _ = writeln!(
                    s,
                    "{:>8} {}",
                    "",
                    names.iter().map(|n| format!("{n:>8}")).collect::<String>()
                );
                for (name, row) in names.iter().zip(&v.confusion) {
                    let _ = writeln!(
                        s,
                        "{name:>8} {}",
                        row.iter().map(|c| format!("{c:>8}")).collect::<String>()
                    );
                }
            }
            None => {
                let _ = writeln!(s, "view accuracy: not reported (no view labels)");
            }
        }
        s
    }

    /// One `key=value` record per line; reals in shortest round-trip form.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        let e = &self.example;
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "mA={}", self.mean_accuracy);
        let _ = writeln!(s, "mA_excluded={}", list(&self.ma_excluded));
        let _ = writeln!(s, "example_accuracy={}", e.accuracy);
        let _ = writeln!(s, "example_precision={}", e.precision);
        let _ = writeln!(s, "example_recall={}", e.recall);
        let _ = writeln!(s, "example_f1={}", e.f1);
        match self.mean_average_precision {
            Some(m) => {
                let _ = writeln!(s, "mAP={m}");
            }
            None => {
                let _ = writeln!(s, "mAP=none");
            }
        }
        let _ = writeln!(s, "mAP_excluded={}", list(&self.map_excluded));
        if let Some(v) = &self.views {
            let names = view_names(v.per_view.len());
            for (name, acc) in names.iter().zip(&v.per_view) {
                match acc {
                    Some(a) => {
                        let _ = writeln!(s, "view_accuracy.{name}={a}");
                    }
                    None => {
                        let _ = writeln!(s, "view_accuracy.{name}=none");
                    }
                }
            }
            for (t, row) in names.iter().zip(&v.confusion) {
                for (p, count) in names.iter().zip(row) {
                    let _ = writeln!(s, "view_confusion.{t}.{p}={count}");
                }
            }
        }
        s
    }
}
