//! Experiment recipes: one TOML config drives generation, training,
//! evaluation and ablation, and every run directory receives the fully
//! resolved config it used.
//!
//! ```toml
//! [generate]   # synthetic data (see GenConfig)
//! seed = 0
//! coupling = 2.0
//!
//! [split]
//! ratios = [0.7, 0.1, 0.2]
//!
//! [model]
//! trunk_widths = [64, 64]
//! gate_tap = 1
//! view_branch_widths = [16]
//! expert_widths = [32]
//! gated = true
//!
//! [train]
//! batch_size = 32
//! epochs = 20
//! lr = 0.0002
//!
//! [eval]
//! threshold = 0.5
//! ```
//!
//! Every section and key is optional; missing values take their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    evaluate, specialization_ablation, AblationGrid, MetricsReport, PredictionBatch,
};
use crate::exec::Execution;
use crate::model::{Gate, Model, ModelConfig};
use crate::synth::{
    bayes_reference, generate, read_dataset, split, write_dataset, Dataset, GenConfig,
};
use crate::train::{
    ensure_data_dims, Checkpoint, EpochSummary, TrainConfig, Trainer, LOG_HEADER, TIMING_HEADER,
};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: Vec<f64>,
    /// Defaults to the generator seed.
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.7, 0.1, 0.2],
            seed: None,
        }
    }
}

/// Model shape; input, view and attribute counts come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub trunk_widths: Vec<usize>,
    pub gate_tap: usize,
    pub view_branch_widths: Vec<usize>,
    pub expert_widths: Vec<usize>,
    pub gated: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(1, 1);
        Self {
            trunk_widths: m.trunk_widths,
            gate_tap: m.gate_tap,
            view_branch_widths: m.view_branch_widths,
            expert_widths: m.expert_widths,
            gated: m.gated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generate: GenConfig,
    pub split: SplitConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("config")
                .to_string();
            Error::Config {
                field,
                message: e.to_string().trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.generate.validate()?;
        crate::synth::split_sizes(self.generate.samples, &self.split.ratios)?;
        if self.split.ratios.len() != SPLIT_NAMES.len() {
            return Err(Error::config(
                "split.ratios",
                "need exactly three ratios (train, val, test)",
            ));
        }
        self.train.validate()?;
        let probe = self.model_config(
            self.generate.feature_dim,
            self.generate.attribute_count,
            self.generate.view_count,
        );
        probe.validate()?;
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(Error::config("eval.threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn model_config(
        &self,
        input_dim: usize,
        attribute_count: usize,
        view_count: usize,
    ) -> ModelConfig {
        ModelConfig {
            input_dim,
            trunk_widths: self.model.trunk_widths.clone(),
            gate_tap: self.model.gate_tap,
            view_count,
            view_branch_widths: self.model.view_branch_widths.clone(),
            expert_widths: self.model.expert_widths.clone(),
            attribute_count,
            gated: self.model.gated,
        }
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.generate.seed)
    }

    /// Config with every default made explicit.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        r.generate.view_mix = r.generate.resolved_view_mix();
        r.generate.scene_seed = Some(r.generate.scene_seed());
        r.split.seed = Some(self.split_seed());
        r.train.view_branch_lr = Some(self.train.group_lrs().view_branch);
        r
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.resolved()).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(RESOLVED_CONFIG), self.to_toml())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Full dataset, the three splits, the ground-truth sidecar and the Bayes
/// reference on the test split.
pub fn run_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    ensure_dir(out)?;
    let (data, gt) = generate(&cfg.generate)?;
    let parts = split(&data, &cfg.split.ratios, cfg.split_seed())?;
    let mut written = Vec::new();
    let full = out.join("dataset.jsonl");
    write_dataset(&data, &full)?;
    written.push(full);
    for (name, part) in SPLIT_NAMES.iter().zip(&parts) {
        let path = out.join(format!("{name}.jsonl"));
        write_dataset(part, &path)?;
        written.push(path);
    }
    let gt_path = out.join("ground_truth.json");
    write_file(
        &gt_path,
        serde_json::to_string(&gt).expect("ground truth serializes"),
    )?;
    written.push(gt_path);

    let reference = bayes_reference(&gt, &parts[2])?;
    let bayes = format!(
        "split=test\nview_aware_mA={}\nview_blind_mA={}\ngap={}\n",
        reference.view_aware.value,
        reference.view_blind.value,
        reference.gap()
    );
    let bayes_path = out.join("bayes_reference.txt");
    write_file(&bayes_path, bayes)?;
    written.push(bayes_path);
    cfg.write_resolved(out)?;
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Fine-tune with the view branch frozen; needs `init`.
    pub transfer: bool,
    /// Start from this checkpoint instead of a fresh initialization.
    pub init: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochSummary>,
    pub checkpoint_path: PathBuf,
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";

pub fn train_model(
    cfg: &ExperimentConfig,
    data: &Dataset,
    opts: &TrainOptions,
) -> Result<(Trainer, Vec<EpochSummary>)> {
    let mut train_cfg = cfg.train.clone();
    let model = match &opts.init {
        Some(path) => Checkpoint::load(path)?.model,
        None => Model::init(
            cfg.model_config(data.feature_dim, data.attribute_count, data.view_count),
            train_cfg.seed,
        )?,
    };
    let mut trainer = if opts.transfer {
        if opts.init.is_none() {
            return Err(Error::config(
                "init",
                "transfer mode needs a pretrained checkpoint",
            ));
        }
        train_cfg.view_branch_lr = Some(0.0);
        Trainer::transfer(model, data, train_cfg)?
    } else {
        Trainer::new(model, data, train_cfg)?
    };
    let epochs = trainer.fit(data, |_| {})?;
    Ok((trainer, epochs))
}

/// Trains on `data_path` and writes the checkpoint, `train_log.tsv`,
/// `timing.tsv` and the resolved config into `out`.
pub fn run_train(
    cfg: &ExperimentConfig,
    data_path: &Path,
    out: &Path,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = read_dataset(data_path)?;
    ensure_dir(out)?;
    let (trainer, epochs) = train_model(cfg, &data, opts)?;
    let mut resolved = cfg.clone();
    if opts.transfer {
        resolved.train.view_branch_lr = Some(0.0);
    }
    resolved.write_resolved(out)?;

    let mut log = format!("{LOG_HEADER}\n");
    let mut timing = format!("{TIMING_HEADER}\n");
    for e in &epochs {
        log.push_str(&e.log_line());
        log.push('\n');
        timing.push_str(&e.timing_line());
        timing.push('\n');
    }
    write_file(&out.join("train_log.tsv"), log)?;
    write_file(&out.join("timing.tsv"), timing)?;
    let checkpoint = trainer.checkpoint();
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    checkpoint.save(&checkpoint_path)?;
    Ok(TrainOutcome {
        checkpoint,
        epochs,
        checkpoint_path,
    })
}

/// Predicts `data` with a model and pairs it with the labels.
pub fn prediction_batch(model: &Model, data: &Dataset, threshold: f64) -> Result<PredictionBatch> {
    ensure_data_dims(&model.config, data.feature_dim, data.attribute_count)?;
    let pred = model.predict_sharded(&data.features(), &Gate::Learned, Execution::default())?;
    PredictionBatch::from_prediction(&pred, data, threshold)
}

/// Writes `report.txt` (table) and `metrics.txt` (key=value records).
pub fn run_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data_path: &Path,
    out: &Path,
) -> Result<MetricsReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let data = read_dataset(data_path)?;
    let batch = prediction_batch(&ck.model, &data, cfg.eval.threshold)?;
    let report = evaluate(&batch)?;
    ensure_dir(out)?;
    write_file(&out.join("report.txt"), report.to_table())?;
    write_file(&out.join("metrics.txt"), report.to_records())?;
    cfg.write_resolved(out)?;
    Ok(report)
}

/// Writes `ablation.csv` and `ablation.txt`.
pub fn run_ablate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data_path: &Path,
    out: &Path,
) -> Result<AblationGrid> {
    let ck = Checkpoint::load(checkpoint)?;
    let data = read_dataset(data_path)?;
    ensure_data_dims(&ck.model.config, data.feature_dim, data.attribute_count)?;
    let grid = specialization_ablation(&ck.model, &data, cfg.eval.threshold, Execution::default())?;
    ensure_dir(out)?;
    write_file(&out.join("ablation.csv"), grid.to_csv())?;
    write_file(&out.join("ablation.txt"), grid.to_table())?;
    cfg.write_resolved(out)?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(
            ExperimentConfig::from_toml_str("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg =
            ExperimentConfig::from_toml_str("[generate]\nseed = 5\ncoupling = 0.0\n").unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg.resolved());
        assert_eq!(back.resolved(), back);
    }

    #[test]
    fn bad_values_name_their_field() {
        let field = |text: &str| match ExperimentConfig::from_toml_str(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field("[split]\nratios = [0.5, 0.6, 0.1]\n"), "split.ratios");
        assert_eq!(field("[train]\nlr = -1.0\n"), "train.lr");
        assert_eq!(field("[model]\ngate_tap = 2\n"), "model.gate_tap");
        assert_eq!(field("[train]\nlearning_rate = 1.0\n"), "learning_rate");
    }
}
