use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::tensor::Tensor;

use super::forward::{build_forward, ForwardGraph, Gate};
use super::{ModelConfig, ModelParams};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

/// Per-attribute positive-label ratios of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePriors {
    pub prevalence: Vec<f64>,
    /// Fingerprint of the label matrix the ratios were computed from.
    pub source: String,
}

impl AttributePriors {
    /// Unit weights (`a_c = 0`), i.e. plain binary cross-entropy.
    pub fn uniform(attribute_count: usize) -> Self {
        Self {
            prevalence: vec![0.0; attribute_count],
            source: String::new(),
        }
    }

    /// `w_c = exp(-a_c)`, applied to the positive term of the loss.
    pub fn weights(&self) -> Vec<f64> {
        self.prevalence.iter().map(|a| (-a).exp()).collect()
    }
}

/// Fingerprint of a binary label matrix, used to tie priors to their split.
pub fn labels_fingerprint<L: AsRef<[u8]>>(labels: &[L]) -> String {
    fingerprint::of_rows(labels.iter().map(|l| l.as_ref()))
}

pub fn compute_priors<L: AsRef<[u8]>>(labels: &[L]) -> Result<AttributePriors> {
    let first = labels
        .first()
        .ok_or_else(|| Error::Validation("cannot compute priors from an empty label set".into()))?;
    let c = first.as_ref().len();
    let mut positives = vec![0usize; c];
    for (i, row) in labels.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != c {
            return Err(Error::Validation(format!(
                "label row {i} has {} attributes, expected {c}",
                row.len()
            )));
        }
        for (p, &y) in positives.iter_mut().zip(row) {
            match y {
                0 => {}
                1 => *p += 1,
                other => {
                    return Err(Error::Validation(format!(
                        "label row {i} has non-binary value {other}"
                    )))
                }
            }
        }
    }
    let n = labels.len() as f64;
    Ok(AttributePriors {
        prevalence: positives.into_iter().map(|p| p as f64 / n).collect(),
        source: labels_fingerprint(labels),
    })
}

/// Prevalence-weighted binary cross-entropy, averaged over the batch:
/// `-(1/N) Σ_i Σ_c [w_c y log p + (1 - y) log(1 - p)]`.
pub fn attribute_loss(
    g: &mut Graph,
    probs: NodeId,
    labels: &Tensor,
    priors: &AttributePriors,
) -> Result<NodeId> {
    let shape = g.value(probs).shape().to_vec();
    if labels.shape() != shape.as_slice() {
        return Err(Error::Dimension {
            op: "attribute_loss",
            left: shape,
            right: labels.shape().to_vec(),
        });
    }
    let c = labels.cols();
    if priors.prevalence.len() != c {
        return Err(Error::Dimension {
            op: "attribute_loss priors",
            left: vec![c],
            right: vec![priors.prevalence.len()],
        });
    }
    if let Some(bad) = labels.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation(format!(
            "attribute label {bad} is not binary"
        )));
    }
    let w = priors.weights();
    let mut pos = labels.clone();
    for row in pos.data_mut().chunks_mut(c) {
        for (y, wc) in row.iter_mut().zip(&w) {
            *y *= wc;
        }
    }
    let neg = labels.map(|y| 1.0 - y);

    let p = g.clamp(probs, PROB_EPS, 1.0 - PROB_EPS)?;
    let log_p = g.log(p)?;
    let neg_p = g.scale(p, -1.0)?;
    let one_minus_p = g.add(neg_p, 1.0)?;
    let log_q = g.log(one_minus_p)?;
    let pos_w = g.constant(pos);
    let neg_w = g.constant(neg);
    let t_pos = g.hadamard(log_p, pos_w)?;
    let t_neg = g.hadamard(log_q, neg_w)?;
    let terms = g.add(t_pos, t_neg)?;
    let total = g.sum(terms)?;
    g.scale(total, -1.0 / labels.rows() as f64)
}

/// Result of [`view_loss`].
#[derive(Debug, Clone, Copy)]
pub struct ViewLoss {
    pub node: NodeId,
    /// Number of samples with a known view.
    pub labeled: usize,
}

impl ViewLoss {
    /// True when no sample carried a view label; the loss is then zero.
    pub fn all_unknown(&self) -> bool {
        self.labeled == 0
    }
}

/// Mean negative log confidence of the true view over samples whose view is
/// known. Unknown views are encoded as `-1`.
pub fn view_loss(g: &mut Graph, view_conf: NodeId, views: &[i64]) -> Result<ViewLoss> {
    let conf = g.value(view_conf);
    let (n, v) = (conf.rows(), conf.cols());
    if views.len() != n {
        return Err(Error::Dimension {
            op: "view_loss",
            left: conf.shape().to_vec(),
            right: vec![views.len()],
        });
    }
    let mut mask = Tensor::zeros(&[n, v]);
    let mut labeled = 0;
    for (i, &y) in views.iter().enumerate() {
        match y {
            -1 => {}
            y if (0..v as i64).contains(&y) => {
                mask.data_mut()[i * v + y as usize] = 1.0;
                labeled += 1;
            }
            other => {
                return Err(Error::Validation(format!(
                    "view label {other} outside 0..{v}"
                )))
            }
        }
    }
    if labeled == 0 {
        let node = g.constant(Tensor::scalar(0.0));
        return Ok(ViewLoss { node, labeled });
    }
    let p = g.clamp(view_conf, PROB_EPS, 1.0)?;
    let log_p = g.log(p)?;
    let mask = g.constant(mask);
    let picked = g.hadamard(log_p, mask)?;
    let total = g.sum(picked)?;
    let node = g.scale(total, -1.0 / labeled as f64)?;
    Ok(ViewLoss { node, labeled })
}

/// `attr + lambda · view`.
pub fn joint_loss(g: &mut Graph, attr: NodeId, view: NodeId, lambda: f64) -> Result<NodeId> {
    let weighted = g.scale(view, lambda)?;
    g.add(attr, weighted)
}

/// A mini-batch in tensor form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    /// `[N × C]` of 0.0 / 1.0.
    pub labels: Tensor,
    /// View index per sample, `-1` when unknown.
    pub views: Vec<i64>,
}

/// A complete forward + loss graph for one batch.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub graph: Graph,
    pub forward: ForwardGraph,
    pub attr: NodeId,
    /// Present for gated models.
    pub view: Option<ViewLoss>,
    pub joint: NodeId,
}

impl LossGraph {
    /// Accumulated parameter gradients in canonical order.
    pub fn param_grads(&self) -> Vec<Tensor> {
        self.forward
            .params
            .iter()
            .map(|&id| {
                self.graph
                    .grad(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.graph.value(id).shape()))
            })
            .collect()
    }

    pub fn joint_value(&self) -> f64 {
        self.graph.value(self.joint).item()
    }

    pub fn attr_value(&self) -> f64 {
        self.graph.value(self.attr).item()
    }

    pub fn view_value(&self) -> f64 {
        self.view
            .map(|v| self.graph.value(v.node).item())
            .unwrap_or(0.0)
    }
}

pub fn build_loss_graph(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &Batch,
    priors: &AttributePriors,
    lambda: f64,
    gate: &Gate,
) -> Result<LossGraph> {
    let mut g = Graph::new();
    let forward = build_forward(&mut g, config, params, &batch.x, gate, true)?;
    let attr = attribute_loss(&mut g, forward.aggregated, &batch.labels, priors)?;
    let view = match forward.view_conf {
        Some(vc) => Some(view_loss(&mut g, vc, &batch.views)?),
        None => None,
    };
    let joint = match view {
        Some(v) => joint_loss(&mut g, attr, v.node, lambda)?,
        None => attr,
    };
    Ok(LossGraph {
        graph: g,
        forward,
        attr,
        view,
        joint,
    })
}
