//! Mini-batch training with Adam and per-group learning rates.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, GroupLrs, OptimState};
pub use checkpoint::{ensure_data_dims, ensure_same_layout, Checkpoint, CHECKPOINT_VERSION, MAGIC};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_loss_graph, compute_priors, labels_fingerprint, AttributePriors, Batch, Gate, Model,
};
use crate::rng::{keyed, keyed2, Stream};
use crate::synth::{features_of, labels_of, Dataset};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Rate for the trunk and the experts.
    pub lr: f64,
    /// Rate for the view branch; `None` means `lr`.
    pub view_branch_lr: Option<f64>,
    pub loss_lambda: f64,
    pub augmentation_noise_sigma: f64,
    pub shuffle: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 20,
            seed: 0,
            lr: 2e-4,
            view_branch_lr: None,
            loss_lambda: 1.0,
            augmentation_noise_sigma: 0.0,
            shuffle: true,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if let Some(v) = self.view_branch_lr {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    "train.view_branch_lr",
                    "must be non-negative",
                ));
            }
        }
        if !(self.loss_lambda >= 0.0 && self.loss_lambda.is_finite()) {
            return Err(Error::config("train.loss_lambda", "must be non-negative"));
        }
        if !(self.augmentation_noise_sigma >= 0.0 && self.augmentation_noise_sigma.is_finite()) {
            return Err(Error::config(
                "train.augmentation_noise_sigma",
                "must be non-negative",
            ));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::config(
                "train.adam",
                "need 0 <= beta < 1 and eps > 0",
            ));
        }
        Ok(())
    }

    pub fn group_lrs(&self) -> GroupLrs {
        GroupLrs {
            trunk: self.lr,
            view_branch: self.view_branch_lr.unwrap_or(self.lr),
            experts: self.lr,
        }
    }
}

/// `x + N(0, sigma²)` per coordinate; `sigma = 0` returns `x` unchanged.
pub fn augment<R: Rng>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_joint: f64,
    pub mean_attr: f64,
    /// Mean over samples with a known view; zero when none had one.
    pub mean_view: f64,
    pub wall_ms: u128,
}

pub const LOG_HEADER: &str = "epoch\tmean_joint\tmean_attr\tmean_view";
pub const TIMING_HEADER: &str = "epoch\twall_ms";

impl EpochSummary {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.epoch, self.mean_joint, self.mean_attr, self.mean_view
        )
    }

    pub fn timing_line(&self) -> String {
        format!("{}\t{}", self.epoch, self.wall_ms)
    }
}

/// One pass over `data` in mini-batches. Shuffling and augmentation draw
/// from generators keyed by `(config.seed, epoch)`.
pub fn train_epoch(
    model: &mut Model,
    data: &Dataset,
    config: &TrainConfig,
    lrs: &GroupLrs,
    priors: &AttributePriors,
    state: &mut OptimState,
    epoch: usize,
) -> Result<EpochSummary> {
    if data.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..data.len()).collect();
    if config.shuffle {
        order.shuffle(&mut keyed(config.seed, Stream::Shuffle, epoch as u64));
    }
    let (mut joint, mut attr, mut view, mut labeled) = (0.0, 0.0, 0.0, 0usize);
    for (b, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
        let mut rng = keyed2(config.seed, Stream::Augment, epoch as u64, b as u64);
        let rows: Vec<Vec<f64>> = chunk
            .iter()
            .map(|&i| {
                augment(
                    &data.samples[i].x,
                    config.augmentation_noise_sigma,
                    &mut rng,
                )
            })
            .collect();
        let batch = Batch {
            x: Tensor::from_rows(&rows)?,
            labels: labels_of(
                chunk.iter().map(|&i| &data.samples[i]),
                data.attribute_count,
            ),
            views: chunk.iter().map(|&i| data.samples[i].view).collect(),
        };
        let mut lg = build_loss_graph(
            &model.config,
            &model.params,
            &batch,
            priors,
            config.loss_lambda,
            &Gate::Learned,
        )?;
        lg.graph.backward(lg.joint)?;
        state.step(&mut model.params, &lg.param_grads(), lrs)?;
        let n = chunk.len() as f64;
        joint += lg.attr_value() * n;
        attr += lg.attr_value() * n;
        if let Some(v) = lg.view {
            joint += config.loss_lambda * lg.view_value() * v.labeled as f64;
            view += lg.view_value() * v.labeled as f64;
            labeled += v.labeled;
        }
    }
    let n = data.len() as f64;
    let mean_view = if labeled > 0 {
        view / labeled as f64
    } else {
        0.0
    };
    Ok(EpochSummary {
        epoch,
        mean_joint: joint / n,
        mean_attr: attr / n,
        mean_view,
        wall_ms: start.elapsed().as_millis(),
    })
}

/// Owns a model, its optimizer and the priors of its training split.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optim: OptimState,
    pub priors: AttributePriors,
    pub config: TrainConfig,
    lrs: GroupLrs,
    epochs_done: usize,
}

impl Trainer {
    /// Priors are computed from `train` here and pinned to it: later epochs
    /// on any other label set are refused.
    pub fn new(model: Model, train: &Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_dims(&model, train)?;
        if model.config.gated && !train.has_views() {
            return Err(Error::Validation(
                "every view label is unknown; train in transfer mode to use unlabeled views".into(),
            ));
        }
        let priors = compute_priors(&train.label_rows())?;
        Ok(Self::assemble(model, priors, config))
    }

    /// Fine-tunes a gated model on `train` with the view branch frozen.
    /// View labels may be missing.
    pub fn transfer(model: Model, train: &Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.view_branch_lr != Some(0.0) {
            return Err(Error::config(
                "train.view_branch_lr",
                "must be 0 in transfer mode (the view branch is frozen)",
            ));
        }
        if !model.config.gated {
            return Err(Error::Validation(
                "transfer needs a gated model with a trained view branch".into(),
            ));
        }
        check_dims(&model, train)?;
        let priors = compute_priors(&train.label_rows())?;
        Ok(Self::assemble(model, priors, config))
    }

    fn assemble(model: Model, priors: AttributePriors, config: TrainConfig) -> Self {
        let optim = OptimState::new(&model.params, config.adam);
        let lrs = config.group_lrs();
        Self {
            model,
            optim,
            priors,
            config,
            lrs,
            epochs_done: 0,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn train_epoch(&mut self, train: &Dataset) -> Result<EpochSummary> {
        if labels_fingerprint(&train.label_rows()) != self.priors.source {
            return Err(Error::Contract(
                "training labels differ from the split the priors were computed on".into(),
            ));
        }
        let s = train_epoch(
            &mut self.model,
            train,
            &self.config,
            &self.lrs,
            &self.priors,
            &mut self.optim,
            self.epochs_done,
        )?;
        self.epochs_done += 1;
        Ok(s)
    }

    /// Runs the configured number of epochs, reporting each as it ends.
    pub fn fit(
        &mut self,
        train: &Dataset,
        mut on_epoch: impl FnMut(&EpochSummary),
    ) -> Result<Vec<EpochSummary>> {
        let mut out = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let s = self.train_epoch(train)?;
            on_epoch(&s);
            out.push(s);
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            priors: self.priors.clone(),
            optim: Some(self.optim.clone()),
        }
    }
}

fn check_dims(model: &Model, data: &Dataset) -> Result<()> {
    ensure_data_dims(&model.config, data.feature_dim, data.attribute_count)
}

/// Mean losses of `model` on `data` without updating anything.
pub fn evaluate_loss(
    model: &Model,
    data: &Dataset,
    priors: &AttributePriors,
    lambda: f64,
) -> Result<(f64, f64)> {
    let batch = Batch {
        x: features_of(data.samples.iter(), data.feature_dim),
        labels: labels_of(data.samples.iter(), data.attribute_count),
        views: data.views(),
    };
    let lg = build_loss_graph(
        &model.config,
        &model.params,
        &batch,
        priors,
        lambda,
        &Gate::Learned,
    )?;
    Ok((lg.attr_value(), lg.view_value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synth::Sample;

    fn toy() -> Dataset {
        // Two attributes, each a linear threshold of the input; views split
        // on the sign of the third coordinate.
        let mut rng = keyed(11, Stream::Sample, 0);
        let samples = (0..64)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let attrs = vec![u8::from(x[0] > 0.0), u8::from(x[0] + x[1] > 0.2)];
                let view = if x[2] > 0.0 { 0 } else { 1 };
                Sample { x, attrs, view }
            })
            .collect();
        Dataset {
            feature_dim: 3,
            attribute_count: 2,
            view_count: 2,
            generator: "toy".into(),
            samples,
        }
    }

    fn model() -> Model {
        let mut cfg = ModelConfig::new(3, 2);
        cfg.view_count = 2;
        cfg.trunk_widths = vec![8, 8];
        cfg.view_branch_widths = vec![4];
        cfg.expert_widths = vec![6];
        Model::init(cfg, 2).unwrap()
    }

    fn cfg(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            lr,
            batch_size: 8,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_separable_toy() {
        let data = toy();
        let mut t = Trainer::new(model(), &data, cfg(50, 0.01)).unwrap();
        let (initial, _) = evaluate_loss(&t.model, &data, &t.priors, 1.0).unwrap();
        t.fit(&data, |_| {}).unwrap();
        let (after, _) = evaluate_loss(&t.model, &data, &t.priors, 1.0).unwrap();
        assert!(after < initial, "{after} >= {initial}");
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let data = toy();
        let mut m = model();
        let before = m.clone();
        let priors = compute_priors(&data.label_rows()).unwrap();
        let c = cfg(1, 0.01);
        let mut st = OptimState::new(&m.params, c.adam);
        let lrs = GroupLrs::uniform(0.0);
        let a = train_epoch(&mut m, &data, &c, &lrs, &priors, &mut st, 0).unwrap();
        let b = train_epoch(&mut m, &data, &c, &lrs, &priors, &mut st, 1).unwrap();
        assert_eq!(m, before);
        assert_eq!((a.mean_joint, a.mean_attr), (b.mean_joint, b.mean_attr));
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let data = toy();
        let run = || {
            let mut c = cfg(3, 0.01);
            c.augmentation_noise_sigma = 0.1;
            let mut t = Trainer::new(model(), &data, c).unwrap();
            t.fit(&data, |_| {}).unwrap();
            t.checkpoint().to_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn priors_pinned_to_training_split() {
        let data = toy();
        let mut t = Trainer::new(model(), &data, cfg(1, 0.01)).unwrap();
        let mut other = data.clone();
        other.samples[0].attrs[0] ^= 1;
        assert!(matches!(t.train_epoch(&other), Err(Error::Contract(_))));
    }

    #[test]
    fn transfer_freezes_view_branch() {
        let data = toy().without_views();
        assert!(Trainer::new(model(), &data, cfg(1, 0.01)).is_err());
        assert!(matches!(
            Trainer::transfer(model(), &data, cfg(1, 0.01)),
            Err(Error::Config { .. })
        ));
        let mut c = cfg(10, 0.01);
        c.view_branch_lr = Some(0.0);
        let m = model();
        let mut t = Trainer::transfer(m.clone(), &data, c).unwrap();
        let log = t.fit(&data, |_| {}).unwrap();
        assert_eq!(t.model.params.view_branch, m.params.view_branch);
        assert_ne!(t.model.params.experts, m.params.experts);
        assert!(log.iter().all(|s| s.mean_view == 0.0));
    }

    #[test]
    fn augment_statistics() {
        let x = vec![1.0, -2.0];
        let mut rng = keyed(1, Stream::Augment, 0);
        assert_eq!(augment(&x, 0.0, &mut rng), x);
        let sigma = 0.7;
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| augment(&x, sigma, &mut rng)[0] - 1.0)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd - sigma).abs() < 0.05 * sigma, "{sd}");
    }

    #[test]
    fn invalid_config_names_field() {
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.batch_size"),
            e => panic!("{e:?}"),
        }
    }
}
