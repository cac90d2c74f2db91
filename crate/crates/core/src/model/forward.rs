use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::tensor::Tensor;

use super::{Layer, Model, ModelConfig, ModelParams};

/// Where the aggregation weights come from.
#[derive(Debug, Clone)]
pub enum Gate {
    /// The view branch's softmax confidences.
    Learned,
    /// Fixed `[N × experts]` weights replacing the confidences on the
    /// attribute path. The view branch still runs so its outputs can be read.
    Fixed(Tensor),
}

impl Gate {
    /// Every sample routed entirely to expert `unit`.
    pub fn one_hot(rows: usize, experts: usize, unit: usize) -> Gate {
        let mut t = Tensor::zeros(&[rows, experts]);
        for i in 0..rows {
            t.data_mut()[i * experts + unit] = 1.0;
        }
        Gate::Fixed(t)
    }
}

/// Node handles for one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardGraph {
    /// Parameter leaves in canonical order.
    pub params: Vec<NodeId>,
    /// Softmax view confidences, `[N × V]`; `None` for ungated models.
    pub view_conf: Option<NodeId>,
    /// Aggregation weights actually applied, `[N × experts]`.
    pub gate_weights: NodeId,
    pub per_expert: Vec<NodeId>,
    pub aggregated: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[N × V]` view confidences; ones `[N × 1]` for ungated models.
    pub view_conf: Tensor,
    pub per_expert: Vec<Tensor>,
    pub aggregated: Tensor,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.aggregated.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Argmax view per sample.
    pub fn view_argmax(&self) -> Vec<usize> {
        (0..self.view_conf.rows())
            .map(|i| {
                let row = self.view_conf.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    fn concat(parts: Vec<Prediction>) -> Result<Prediction> {
        let experts = parts.first().map(|p| p.per_expert.len()).unwrap_or(0);
        let view_conf = Tensor::concat_rows(
            &parts
                .iter()
                .map(|p| p.view_conf.clone())
                .collect::<Vec<_>>(),
        )?;
        let aggregated = Tensor::concat_rows(
            &parts
                .iter()
                .map(|p| p.aggregated.clone())
                .collect::<Vec<_>>(),
        )?;
        let per_expert = (0..experts)
            .map(|e| {
                Tensor::concat_rows(
                    &parts
                        .iter()
                        .map(|p| p.per_expert[e].clone())
                        .collect::<Vec<_>>(),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Prediction {
            view_conf,
            per_expert,
            aggregated,
        })
    }
}

struct LayerNodes {
    weight: NodeId,
    bias: NodeId,
}

fn add_layers(
    g: &mut Graph,
    layers: &[Layer],
    trainable: bool,
    ids: &mut Vec<NodeId>,
) -> Vec<LayerNodes> {
    layers
        .iter()
        .map(|l| {
            let weight = g.leaf(l.weight.clone(), trainable);
            let bias = g.leaf(l.bias.clone(), trainable);
            ids.push(weight);
            ids.push(bias);
            LayerNodes { weight, bias }
        })
        .collect()
}

fn dense(g: &mut Graph, input: NodeId, layer: &LayerNodes) -> Result<NodeId> {
    let z = g.matmul(input, layer.weight)?;
    g.add_row(z, layer.bias)
}

/// Hidden layers with relu, final layer linear.
fn head(g: &mut Graph, input: NodeId, layers: &[LayerNodes]) -> Result<NodeId> {
    let mut h = input;
    for (i, l) in layers.iter().enumerate() {
        h = dense(g, h, l)?;
        if i + 1 < layers.len() {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

/// Records the full forward computation on `g`.
///
/// The attribute path multiplies each expert's output by a gradient-stopped
/// copy of the view confidences: the gate scales each expert's output and
/// its gradient, but the attribute loss never reaches the view branch. The
/// view loss reads the un-stopped confidences in `view_conf`.
pub fn build_forward(
    g: &mut Graph,
    config: &ModelConfig,
    params: &ModelParams,
    x: &Tensor,
    gate: &Gate,
    trainable: bool,
) -> Result<ForwardGraph> {
    let width = params.trunk[0].weight.shape()[0];
    if x.shape().len() != 2 || x.cols() != width {
        return Err(Error::Dimension {
            op: "forward",
            left: x.shape().to_vec(),
            right: vec![width],
        });
    }
    let n = x.rows();
    let mut ids = Vec::new();
    let trunk = add_layers(g, &params.trunk, trainable, &mut ids);
    let view = add_layers(g, &params.view_branch, trainable, &mut ids);
    let experts: Vec<Vec<LayerNodes>> = params
        .experts
        .iter()
        .map(|e| add_layers(g, e, trainable, &mut ids))
        .collect();
    let gate_tap = if config.gated { config.gate_tap } else { 0 };

    let input = g.constant(x.clone());
    let mut h = input;
    let mut tap = None;
    for (i, l) in trunk.iter().enumerate() {
        h = dense(g, h, l)?;
        h = g.relu(h)?;
        if i + 1 == gate_tap {
            tap = Some(h);
        }
    }

    let view_conf = match tap {
        Some(t) => {
            let logits = head(g, t, &view)?;
            Some(g.softmax(logits)?)
        }
        None => None,
    };

    let mut per_expert = Vec::with_capacity(experts.len());
    for e in &experts {
        let logits = head(g, h, e)?;
        per_expert.push(g.sigmoid(logits)?);
    }

    let gate_weights = match (gate, view_conf) {
        (Gate::Fixed(w), _) => {
            if w.shape() != [n, experts.len()] {
                return Err(Error::Dimension {
                    op: "gate",
                    left: w.shape().to_vec(),
                    right: vec![n, experts.len()],
                });
            }
            g.constant(w.clone())
        }
        (Gate::Learned, Some(vc)) => g.stop_gradient(vc)?,
        (Gate::Learned, None) => g.constant(Tensor::filled(&[n, 1], 1.0)),
    };

    let aggregated = if view_conf.is_none() && matches!(gate, Gate::Learned) {
        per_expert[0]
    } else {
        let mut acc: Option<NodeId> = None;
        for (v, &e) in per_expert.iter().enumerate() {
            let w = g.column(gate_weights, v)?;
            let term = g.mul_col(e, w)?;
            acc = Some(match acc {
                None => term,
                Some(a) => g.add(a, term)?,
            });
        }
        acc.expect("at least one expert")
    };

    Ok(ForwardGraph {
        params: ids,
        view_conf,
        gate_weights,
        per_expert,
        aggregated,
    })
}

pub(super) fn predict(model: &Model, x: &Tensor, gate: &Gate) -> Result<Prediction> {
    let mut g = Graph::new();
    let fwd = build_forward(&mut g, &model.config, &model.params, x, gate, false)?;
    let n = x.rows();
    Ok(Prediction {
        view_conf: fwd
            .view_conf
            .map(|v| g.value(v).clone())
            .unwrap_or_else(|| Tensor::filled(&[n, 1], 1.0)),
        per_expert: fwd.per_expert.iter().map(|&e| g.value(e).clone()).collect(),
        aggregated: g.value(fwd.aggregated).clone(),
    })
}

const SHARD_ROWS: usize = 512;

pub(super) fn predict_sharded(
    model: &Model,
    x: &Tensor,
    gate: &Gate,
    exec: Execution,
) -> Result<Prediction> {
    let n = x.rows();
    if n <= SHARD_ROWS {
        return predict(model, x, gate);
    }
    let shards = n.div_ceil(SHARD_ROWS);
    let parts = exec::map_range(exec, shards, |s| {
        let (lo, hi) = (s * SHARD_ROWS, ((s + 1) * SHARD_ROWS).min(n));
        let shard_gate = match gate {
            Gate::Learned => Gate::Learned,
            Gate::Fixed(w) => Gate::Fixed(w.slice_rows(lo, hi)),
        };
        predict(model, &x.slice_rows(lo, hi), &shard_gate)
    });
    Prediction::concat(parts.into_iter().collect::<Result<Vec<_>>>()?)
}
