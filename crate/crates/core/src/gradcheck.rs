//! Whole-model finite-difference gradient check.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::exec::{self, Execution};
use crate::model::{
    build_loss_graph, AttributePriors, Batch, Gate, Model, ModelConfig, ModelParams, ParamGroup,
};
use crate::rng::{keyed, Stream};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const BATCH_ROWS: usize = 4;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// A small randomly shaped model with a labeled 4-sample batch.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub batch: Batch,
    pub priors: AttributePriors,
    pub lambda: f64,
}

impl Problem {
    pub fn random(seed: u64) -> Result<Self> {
        let mut rng = keyed(seed, Stream::GradCheck, 0);
        let d = rng.random_range(3..=6);
        let c = rng.random_range(2..=4);
        let mut config = ModelConfig::new(d, c);
        config.trunk_widths = vec![rng.random_range(4..=7), rng.random_range(4..=7)];
        config.view_branch_widths = vec![rng.random_range(3..=5)];
        config.expert_widths = vec![rng.random_range(3..=5)];
        let mut model = Model::init(config, seed)?;
        // Non-zero biases so no unit sits exactly at a relu kink.
        for t in model.params.tensors_mut() {
            if t.shape().len() == 1 {
                t.data_mut()
                    .iter_mut()
                    .for_each(|b| *b = 0.1 * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let x = Tensor::new(
            vec![BATCH_ROWS, d],
            (0..BATCH_ROWS * d)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        )?;
        let labels = Tensor::new(
            vec![BATCH_ROWS, c],
            (0..BATCH_ROWS * c)
                .map(|_| f64::from(rng.random_bool(0.5)))
                .collect(),
        )?;
        let mut views: Vec<i64> = (0..BATCH_ROWS).map(|_| rng.random_range(0..3)).collect();
        views[BATCH_ROWS - 1] = -1;
        let priors = AttributePriors {
            prevalence: (0..c).map(|_| rng.random_range(0.0..1.0)).collect(),
            source: String::new(),
        };
        Ok(Self {
            model,
            batch: Batch { x, labels, views },
            priors,
            lambda: 1.0,
        })
    }

    fn joint(&self, params: &ModelParams, gate: &Gate) -> Result<f64> {
        let lg = build_loss_graph(
            &self.model.config,
            params,
            &self.batch,
            &self.priors,
            self.lambda,
            gate,
        )?;
        Ok(lg.joint_value())
    }

    /// The gate the attribute path sees at the current parameters. Backprop
    /// treats it as a constant, so finite differences must hold it fixed
    /// too; the view loss still reads the live confidences.
    pub fn frozen_gate(&self) -> Result<Gate> {
        let pred = self.model.predict(&self.batch.x, &Gate::Learned)?;
        Ok(if self.model.config.gated {
            Gate::Fixed(pred.view_conf)
        } else {
            Gate::Learned
        })
    }

    fn analytic(&self) -> Result<Vec<Tensor>> {
        let mut lg = build_loss_graph(
            &self.model.config,
            &self.model.params,
            &self.batch,
            &self.priors,
            self.lambda,
            &Gate::Learned,
        )?;
        lg.graph.backward(lg.joint)?;
        Ok(lg.param_grads())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Test hook: perturb the analytic gradient of one group.
    pub corrupt: Option<ParamGroup>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub group: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub config: ModelConfig,
    pub groups: Vec<GroupResult>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn failing_groups(&self) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| g.max_rel_err >= self.tolerance)
            .map(|g| g.group.as_str())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(
            s,
            "model: D={} trunk={:?} view={:?} experts={}x{:?} C={}",
            c.input_dim,
            c.trunk_widths,
            c.view_branch_widths,
            c.expert_count(),
            c.expert_widths,
            c.attribute_count
        );
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>12}  worst",
            "group", "entries", "max_rel_err"
        );
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>12.3e}  {}",
                g.group, g.checked, g.max_rel_err, g.worst
            );
        }
        if self.passed() {
            let _ = writeln!(
                s,
                "PASS max relative error {:.3e} < {:.0e}",
                self.max_rel_err, self.tolerance
            );
        } else {
            let _ = writeln!(
                s,
                "FAIL max relative error {:.3e} >= {:.0e} in {}",
                self.max_rel_err,
                self.tolerance,
                self.failing_groups().join(", ")
            );
        }
        s
    }
}

/// Central differences for every parameter entry against backprop.
pub fn check(problem: &Problem, opts: CheckOptions, exec: Execution) -> Result<GradCheckReport> {
    let mut analytic = problem.analytic()?;
    let layout = problem.model.config.param_layout();
    if let Some(bad) = opts.corrupt {
        for (g, (_, group, _)) in analytic.iter_mut().zip(&layout) {
            if *group == bad {
                *g = g.map(|v| 1.5 * v + 1e-3);
            }
        }
    }
    let coords: Vec<(usize, usize)> = layout
        .iter()
        .enumerate()
        .flat_map(|(t, (_, _, shape))| (0..shape.iter().product()).map(move |i| (t, i)))
        .collect();
    let gate = problem.frozen_gate()?;
    let numeric = exec::map_slice(exec, &coords, |&(t, i)| -> Result<f64> {
        let mut p = problem.model.params.clone();
        let base = p.tensors()[t].data()[i];
        p.tensors_mut()[t].data_mut()[i] = base + opts.step;
        let up = problem.joint(&p, &gate)?;
        p.tensors_mut()[t].data_mut()[i] = base - opts.step;
        let down = problem.joint(&p, &gate)?;
        Ok((up - down) / (2.0 * opts.step))
    });

    let mut groups: Vec<GroupResult> = Vec::new();
    for (&(t, i), n) in coords.iter().zip(numeric) {
        let err = relative_error(analytic[t].data()[i], n?);
        let (name, group, _) = &layout[t];
        let label = group.to_string();
        let entry = match groups.iter_mut().find(|g| g.group == label) {
            Some(g) => g,
            None => {
                groups.push(GroupResult {
                    group: label,
                    checked: 0,
                    max_rel_err: 0.0,
                    worst: String::new(),
                });
                groups.last_mut().expect("just pushed")
            }
        };
        entry.checked += 1;
        if err > entry.max_rel_err || entry.worst.is_empty() {
            entry.max_rel_err = entry.max_rel_err.max(err);
            entry.worst = format!("{name}[{i}]");
        }
    }
    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        config: problem.model.config.clone(),
        groups,
        max_rel_err,
        tolerance: opts.tolerance,
    })
}

pub fn gradcheck(seed: u64, exec: Execution) -> Result<GradCheckReport> {
    check(&Problem::random(seed)?, CheckOptions::default(), exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_seed_passes() {
        let r = gradcheck(0, Execution::default()).unwrap();
        assert!(r.passed(), "{}", r.to_text());
        assert!(r.groups.iter().any(|g| g.group == "view_branch"));
    }

    #[test]
    fn corrupted_group_is_named() {
        let p = Problem::random(3).unwrap();
        let opts = CheckOptions {
            corrupt: Some(ParamGroup::Expert(1)),
            ..CheckOptions::default()
        };
        let r = check(&p, opts, Execution::Sequential).unwrap();
        assert!(!r.passed());
        assert_eq!(r.failing_groups(), vec!["expert1"]);
        assert!(r.to_text().contains("FAIL"));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
