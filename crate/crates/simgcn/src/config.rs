//! TOML run configuration. Every key is optional; omitted keys keep the
//! defaults of the corresponding core types.
//!
//! ```toml
//! seed = 7
//! thresholds = [0.3, 0.5, 0.7]
//!
//! [data]
//! num_classes = 8
//! snr = 3.0
//!
//! [model]
//! hidden = 16
//!
//! [train]
//! epochs = 64
//! lr_triplet = 1e-4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use simgcn_core::data::DatasetSpec;
use simgcn_core::model::ModelConfig;
use simgcn_core::optim::Hyperparameters;
use simgcn_core::pipeline::RunConfig;
use simgcn_core::proposals::DEFAULT_THRESHOLDS;

use crate::error::AppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds data generation, initialisation and shuffling.
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub test_classes: usize,
    pub video_len: usize,
    pub feature_dim: usize,
    pub snr: f64,
    pub motif_len_min: usize,
    pub motif_len_max: usize,
    pub distractors_per_video: usize,
    pub min_gap: usize,
    pub actionness_noise: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            num_classes: d.num_classes,
            videos_per_class: d.videos_per_class,
            test_classes: d.test_classes,
            video_len: d.video_len,
            feature_dim: d.feature_dim,
            snr: d.snr,
            motif_len_min: d.motif_len_min,
            motif_len_max: d.motif_len_max,
            distractors_per_video: d.distractors_per_video,
            min_gap: d.min_gap,
            actionness_noise: d.actionness_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub proj_dim: usize,
    pub gcn_out: usize,
    pub head_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::with_input_dim(1);
        Self {
            hidden: m.hidden,
            proj_dim: m.proj_dim,
            gcn_out: m.gcn_out,
            head_hidden: m.head_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub margin: f64,
    pub l2: f64,
    pub lr_triplet: f64,
    pub lr_regression: f64,
    pub lr_sparsity: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub timesteps: usize,
    /// Caps each epoch; absent means every same-class pair.
    pub triplets_per_epoch: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyperparameters::default();
        Self {
            margin: h.margin,
            l2: h.l2,
            lr_triplet: h.lr_triplet,
            lr_regression: h.lr_regression,
            lr_sparsity: h.lr_sparsity,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            batch_size: h.batch_size,
            epochs: h.epochs,
            timesteps: h.timesteps,
            triplets_per_epoch: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, AppError> {
        let cfg: Config = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.dataset_spec()
            .validate()
            .and_then(|_| self.run_config(self.data.feature_dim).validate())
            .map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let d = &self.data;
        DatasetSpec {
            num_classes: d.num_classes,
            videos_per_class: d.videos_per_class,
            test_classes: d.test_classes,
            video_len: d.video_len,
            feature_dim: d.feature_dim,
            snr: d.snr,
            motif_len_min: d.motif_len_min,
            motif_len_max: d.motif_len_max,
            distractors_per_video: d.distractors_per_video,
            min_gap: d.min_gap,
            actionness_noise: d.actionness_noise,
            seed: self.seed,
        }
    }

    /// Run configuration for data of feature width `input_dim`.
    pub fn run_config(&self, input_dim: usize) -> RunConfig {
        let t = &self.train;
        RunConfig {
            hyper: Hyperparameters {
                margin: t.margin,
                l2: t.l2,
                lr_triplet: t.lr_triplet,
                lr_regression: t.lr_regression,
                lr_sparsity: t.lr_sparsity,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                batch_size: t.batch_size,
                epochs: t.epochs,
                timesteps: t.timesteps,
            },
            model: ModelConfig {
                input_dim,
                hidden: self.model.hidden,
                proj_dim: self.model.proj_dim,
                gcn_out: self.model.gcn_out,
                head_hidden: self.model.head_hidden,
            },
            thresholds: self.thresholds.clone(),
            triplets_per_epoch: t.triplets_per_epoch,
            seed: self.seed,
        }
    }
}
