//! The view-gated attribute model.
//!
//! A fully connected trunk feeds two places. After `gate_tap` layers a small
//! view branch predicts a softmax over views. The last trunk layer feeds one
//! expert head per view, each producing sigmoid attribute probabilities. The
//! final prediction is the view-confidence-weighted sum of the expert
//! outputs. A model with `gated = false` has no view branch and a single
//! expert, which is the baseline architecture.

mod forward;
mod loss;

pub use forward::{build_forward, ForwardGraph, Gate, Prediction};
pub use loss::{
    attribute_loss, build_loss_graph, compute_priors, joint_loss, labels_fingerprint, view_loss,
    AttributePriors, Batch, LossGraph, ViewLoss, PROB_EPS,
};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub trunk_widths: Vec<usize>,
    /// Number of trunk layers feeding the view branch.
    pub gate_tap: usize,
    pub view_count: usize,
    /// Hidden widths of the view branch; its output width is `view_count`.
    pub view_branch_widths: Vec<usize>,
    /// Hidden widths of each expert; its output width is `attribute_count`.
    pub expert_widths: Vec<usize>,
    pub attribute_count: usize,
    pub gated: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, attribute_count: usize) -> Self {
        Self {
            input_dim,
            trunk_widths: vec![64, 64],
            gate_tap: 1,
            view_count: 3,
            view_branch_widths: vec![16],
            expert_widths: vec![32],
            attribute_count,
            gated: true,
        }
    }

    /// Same trunk, a single expert, no gate.
    pub fn baseline(&self) -> Self {
        Self {
            gated: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("model.input_dim", "must be at least 1"));
        }
        if self.trunk_widths.len() < 2 {
            return Err(Error::config(
                "model.trunk_widths",
                "need at least two trunk layers so the gate taps an earlier layer than the experts",
            ));
        }
        if self.gate_tap < 1 || self.gate_tap >= self.trunk_widths.len() {
            return Err(Error::config(
                "model.gate_tap",
                format!("must satisfy 1 <= gate_tap < {}", self.trunk_widths.len()),
            ));
        }
        if self.view_count < 2 {
            return Err(Error::config("model.view_count", "must be at least 2"));
        }
        if self.attribute_count < 1 {
            return Err(Error::config("model.attribute_count", "must be at least 1"));
        }
        let widths = [
            ("model.trunk_widths", &self.trunk_widths),
            ("model.view_branch_widths", &self.view_branch_widths),
            ("model.expert_widths", &self.expert_widths),
        ];
        for (field, w) in widths {
            if w.contains(&0) {
                return Err(Error::config(field, "layer widths must be positive"));
            }
        }
        Ok(())
    }

    pub fn expert_count(&self) -> usize {
        if self.gated {
            self.view_count
        } else {
            1
        }
    }

    fn layer_dims(input: usize, hidden: &[usize], output: Option<usize>) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = input;
        for &w in hidden.iter().chain(output.as_ref()) {
            dims.push((prev, w));
            prev = w;
        }
        dims
    }

    fn trunk_dims(&self) -> Vec<(usize, usize)> {
        Self::layer_dims(self.input_dim, &self.trunk_widths, None)
    }

    fn view_dims(&self) -> Vec<(usize, usize)> {
        if !self.gated {
            return Vec::new();
        }
        let tap_width = self.trunk_widths[self.gate_tap - 1];
        Self::layer_dims(tap_width, &self.view_branch_widths, Some(self.view_count))
    }

    fn expert_dims(&self) -> Vec<(usize, usize)> {
        let top = *self.trunk_widths.last().expect("validated trunk");
        Self::layer_dims(top, &self.expert_widths, Some(self.attribute_count))
    }

    /// `(name, group, shape)` for every parameter array, in canonical order.
    pub fn param_layout(&self) -> Vec<(String, ParamGroup, Vec<usize>)> {
        let mut out = Vec::new();
        let mut push = |prefix: String, group: ParamGroup, dims: Vec<(usize, usize)>| {
            for (i, (fan_in, fan_out)) in dims.into_iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), group, vec![fan_in, fan_out]));
                out.push((format!("{prefix}.{i}.bias"), group, vec![fan_out]));
            }
        };
        push("trunk".into(), ParamGroup::Trunk, self.trunk_dims());
        push("view".into(), ParamGroup::ViewBranch, self.view_dims());
        for e in 0..self.expert_count() {
            push(
                format!("expert{e}"),
                ParamGroup::Expert(e),
                self.expert_dims(),
            );
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, _, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Trunk,
    ViewBranch,
    Expert(usize),
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamGroup::Trunk => write!(f, "trunk"),
            ParamGroup::ViewBranch => write!(f, "view_branch"),
            ParamGroup::Expert(e) => write!(f, "expert{e}"),
        }
    }
}

/// One fully connected layer, `y = x · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    fn glorot(fan_in: usize, fan_out: usize, seed: u64, layer_index: u64) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = keyed(seed, Stream::Init, layer_index);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Layer {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("layer shape"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub trunk: Vec<Layer>,
    pub view_branch: Vec<Layer>,
    pub experts: Vec<Vec<Layer>>,
}

impl ModelParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self
            .trunk
            .iter_mut()
            .chain(self.view_branch.iter_mut())
            .chain(self.experts.iter_mut().flatten())
        {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk
            .iter()
            .chain(self.view_branch.iter())
            .chain(self.experts.iter().flatten())
    }

    /// Group membership of each tensor, parallel to [`ModelParams::tensors`].
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::new();
        out.extend(std::iter::repeat_n(ParamGroup::Trunk, 2 * self.trunk.len()));
        out.extend(std::iter::repeat_n(
            ParamGroup::ViewBranch,
            2 * self.view_branch.len(),
        ));
        for (e, ex) in self.experts.iter().enumerate() {
            out.extend(std::iter::repeat_n(ParamGroup::Expert(e), 2 * ex.len()));
        }
        out
    }

    /// Rebuilds parameters from flat tensors laid out per `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let layout = config.param_layout();
        if layout.len() != tensors.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter arrays, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, _, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    group: name.clone(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut take = |n: usize| -> Vec<Layer> {
            (0..n)
                .map(|_| Layer {
                    weight: it.next().expect("counted"),
                    bias: it.next().expect("counted"),
                })
                .collect()
        };
        let trunk = take(config.trunk_dims().len());
        let view_branch = take(config.view_dims().len());
        let experts = (0..config.expert_count())
            .map(|_| take(config.expert_dims().len()))
            .collect();
        Ok(Self {
            trunk,
            view_branch,
            experts,
        })
    }

    pub fn group_tensors(&self, group: ParamGroup) -> Vec<&Tensor> {
        self.tensors()
            .into_iter()
            .zip(self.groups())
            .filter(|(_, g)| *g == group)
            .map(|(t, _)| t)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut layer_index = 0u64;
        let mut build = |dims: Vec<(usize, usize)>| -> Vec<Layer> {
            dims.into_iter()
                .map(|(i, o)| {
                    let l = Layer::glorot(i, o, seed, layer_index);
                    layer_index += 1;
                    l
                })
                .collect()
        };
        let trunk = build(config.trunk_dims());
        let view_branch = build(config.view_dims());
        let experts = (0..config.expert_count())
            .map(|_| build(config.expert_dims()))
            .collect();
        Ok(Self {
            config,
            params: ModelParams {
                trunk,
                view_branch,
                experts,
            },
        })
    }

    pub fn predict(&self, x: &Tensor, gate: &Gate) -> Result<Prediction> {
        forward::predict(self, x, gate)
    }

    /// Batched inference over row shards, optionally in parallel.
    pub fn predict_sharded(
        &self,
        x: &Tensor,
        gate: &Gate,
        exec: crate::exec::Execution,
    ) -> Result<Prediction> {
        forward::predict_sharded(self, x, gate, exec)
    }

    /// A gated model whose every expert is a copy of `baseline`'s single
    /// expert. The view branch is taken from `gate_source`.
    pub fn replicate_expert(baseline: &Model, gate_source: &Model) -> Result<Model> {
        if baseline.config.gated || !gate_source.config.gated {
            return Err(Error::Contract(
                "replicate_expert needs an ungated baseline and a gated gate source".into(),
            ));
        }
        if baseline.config.baseline() != gate_source.config.baseline() {
            return Err(Error::Contract(
                "baseline and gate source configs differ".into(),
            ));
        }
        let mut params = baseline.params.clone();
        params.view_branch = gate_source.params.view_branch.clone();
        params.experts = vec![baseline.params.experts[0].clone(); gate_source.config.view_count];
        Ok(Model {
            config: gate_source.config.clone(),
            params,
        })
    }
}
