use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{Gate, Model};
use crate::synth::Dataset;

use super::{mean_accuracy, view_names, PredictionBatch};

/// mA of each true-view subset (rows) through each expert alone (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    /// `None` rows: no test sample of that view, or no includable attribute.
    pub rows: Vec<Option<Vec<f64>>>,
    pub units: usize,
}

impl AblationGrid {
    pub fn get(&self, view: usize, unit: usize) -> Option<f64> {
        self.rows[view].as_ref().map(|r| r[unit])
    }

    /// Whether every present row peaks on its own unit.
    pub fn diagonal_dominant(&self) -> bool {
        self.rows.iter().enumerate().all(|(s, row)| match row {
            Some(r) => r.iter().all(|&m| m <= r[s]),
            None => true,
        })
    }

    pub fn to_csv(&self) -> String {
        let names = view_names(self.units);
        let mut s = String::from("view");
        for n in &names {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
        for (name, row) in view_names(self.rows.len()).iter().zip(&self.rows) {
            s.push_str(name);
            for u in 0..self.units {
                match row {
                    Some(r) => {
                        let _ = write!(s, ",{}", r[u]);
                    }
                    None => s.push_str(",absent"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_table(&self) -> String {
        let names = view_names(self.units);
        let mut s = format!("{:>10}", "subset\\unit");
        for n in &names {
            let _ = write!(s, " {n:>8}");
        }
        s.push('\n');
        for (name, row) in view_names(self.rows.len()).iter().zip(&self.rows) {
            let _ = write!(s, "{name:>10}");
            for u in 0..self.units {
                match row {
                    Some(r) => {
                        let _ = write!(s, " {:>8.2}", 100.0 * r[u]);
                    }
                    None => {
                        let _ = write!(s, " {:>8}", "absent");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Routes every sample of each view subset through one expert at a time by
/// forcing a one-hot gate, and records the subset's mA.
pub fn specialization_ablation(
    model: &Model,
    data: &Dataset,
    threshold: f64,
    exec: Execution,
) -> Result<AblationGrid> {
    if !model.config.gated {
        return Err(Error::Validation(
            "specialization ablation needs a gated model".into(),
        ));
    }
    if !data.has_views() {
        return Err(Error::Validation(
            "specialization ablation needs view-labeled data".into(),
        ));
    }
    let views = model.config.view_count;
    let units = model.config.expert_count();
    let subsets: Vec<Dataset> = (0..views)
        .map(|v| {
            let idx: Vec<usize> = (0..data.len())
                .filter(|&i| data.samples[i].view == v as i64)
                .collect();
            data.subset(&idx)
        })
        .collect();
    let cells = exec::map_range(exec, views * units, |k| -> Result<Option<f64>> {
        let (s, u) = (k / units, k % units);
        let subset = &subsets[s];
        if subset.is_empty() {
            return Ok(None);
        }
        let gate = Gate::one_hot(subset.len(), units, u);
        let pred = model.predict_sharded(&subset.features(), &gate, Execution::Sequential)?;
        let batch = PredictionBatch::from_prediction(&pred, subset, threshold)?;
        Ok(mean_accuracy(&batch).ok().map(|m| m.value))
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = cells
        .chunks(units)
        .map(|row| row.iter().copied().collect::<Option<Vec<f64>>>())
        .collect();
    Ok(AblationGrid { rows, units })
}
