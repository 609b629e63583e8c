//! Run configuration: a JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use privml_core::data::{gaussian_blobs, load_idx_dataset, BlobConfig, Dataset};
use privml_core::nn::ModelSpec;
use privml_federation::{TrainConfig, TransportKind};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    /// Dense ReLU network sized to the data.
    Mlp { hidden: Vec<usize> },
    /// A complete layer list.
    Spec(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        blobs: BlobConfig,
        /// Held-out examples, drawn with seed `blobs.seed + 1`.
        test_examples: usize,
    },
    Idx {
        train_features: PathBuf,
        train_labels: PathBuf,
        test_features: PathBuf,
        test_labels: PathBuf,
        classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderLayout {
    pub count: usize,
    pub transport: TransportKind,
    /// `host:port` of already running providers, in provider-id order.
    /// Local provider threads are started when absent.
    #[serde(default)]
    pub addresses: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_bound: f64,
    /// Examples per lot, split evenly across providers.
    pub lot_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub providers: ProviderLayout,
    pub privacy: PrivacyConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dp: bool,
    pub oblivious: bool,
    #[serde(default)]
    pub micro_batch: Option<usize>,
    pub timeout_seconds: f64,
    pub scrub_magnitude: f64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::Mlp { hidden: vec![16] },
            data: DataConfig::Synthetic {
                blobs: BlobConfig::default(),
                test_examples: 2000,
            },
            providers: ProviderLayout {
                count: 3,
                transport: TransportKind::Loopback,
                addresses: None,
            },
            privacy: PrivacyConfig {
                epsilon: 4.0,
                delta: 1e-5,
                clip_bound: 1.0,
                lot_size: 600,
            },
            learning_rate: 0.5,
            epochs: 10,
            seed: 0,
            dp: true,
            oblivious: true,
            micro_batch: None,
            timeout_seconds: 30.0,
            scrub_magnitude: 1e-10,
            output: PathBuf::from("privml-run"),
        }
    }
}

/// Values given on the command line; each replaces its config field.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub lot_size: Option<usize>,
    pub clip_bound: Option<f64>,
    pub providers: Option<usize>,
    pub seed: Option<u64>,
    pub no_dp: bool,
    pub no_oblivious: bool,
    pub transport: Option<TransportKind>,
    pub learning_rate: Option<f64>,
    pub output: Option<PathBuf>,
}

/// Train and held-out sets.
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    /// Pretty JSON with every field present.
    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable") + "\n"
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.epochs {
            self.epochs = v;
        }
        if let Some(v) = o.epsilon {
            self.privacy.epsilon = v;
        }
        if let Some(v) = o.delta {
            self.privacy.delta = v;
        }
        if let Some(v) = o.lot_size {
            self.privacy.lot_size = v;
        }
        if let Some(v) = o.clip_bound {
            self.privacy.clip_bound = v;
        }
        if let Some(v) = o.providers {
            self.providers.count = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if o.no_dp {
            self.dp = false;
        }
        if o.no_oblivious {
            self.oblivious = false;
        }
        if let Some(v) = o.transport {
            self.providers.transport = v;
        }
        if let Some(v) = o.learning_rate {
            self.learning_rate = v;
        }
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
    }

    pub fn load_data(&self) -> Result<Data> {
        match &self.data {
            DataConfig::Synthetic { blobs, test_examples } => {
                let train = gaussian_blobs(blobs)?;
                let test = gaussian_blobs(&BlobConfig {
                    examples: *test_examples,
                    seed: blobs.seed.wrapping_add(1),
                    ..*blobs
                })?;
                Ok(Data { train, test })
            }
            DataConfig::Idx {
                train_features,
                train_labels,
                test_features,
                test_labels,
                classes,
            } => Ok(Data {
                train: load_idx_dataset(train_features, train_labels, *classes)?,
                test: load_idx_dataset(test_features, test_labels, *classes)?,
            }),
        }
    }

    pub fn model_spec(&self, dim: usize, classes: usize) -> Result<ModelSpec> {
        let spec = match &self.model {
            ModelConfig::Mlp { hidden } => ModelSpec::mlp(dim, hidden, classes),
            ModelConfig::Spec(s) => s.clone(),
        };
        spec.validate()?;
        if spec.input_len() != dim || spec.outputs() != classes {
            return Err(CliError::Config(format!(
                "model takes {} inputs and gives {} outputs; data has dimension {dim} and {classes} classes",
                spec.input_len(),
                spec.outputs()
            )));
        }
        Ok(spec)
    }

    /// Per-provider chunk size; the lot must split evenly.
    pub fn chunk_examples(&self) -> Result<usize> {
        let (l, n) = (self.privacy.lot_size, self.providers.count);
        if n == 0 || l == 0 || l % n != 0 {
            return Err(CliError::Config(format!(
                "lot size {l} must be a positive multiple of the provider count {n}"
            )));
        }
        Ok(l / n)
    }

    pub fn train_config(&self, data: &Data) -> Result<TrainConfig> {
        Ok(TrainConfig {
            spec: self.model_spec(data.train.dim(), data.train.classes())?,
            epochs: self.epochs,
            dataset_size: data.train.len(),
            chunk_examples: self.chunk_examples()?,
            learning_rate: self.learning_rate,
            clip_bound: self.privacy.clip_bound,
            epsilon: self.privacy.epsilon,
            delta: self.privacy.delta,
            dp: self.dp,
            oblivious: self.oblivious,
            seed: self.seed,
            micro_batch: self.micro_batch,
            timeout_seconds: self.timeout_seconds,
            scrub_magnitude: self.scrub_magnitude,
        })
    }

    /// Contiguous shards, one per provider, keyed by provider id.
    pub fn shards(&self, data: &Data) -> Vec<(u32, Dataset)> {
        data.train
            .shard(self.providers.count)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (i as u32, s))
            .collect()
    }
}
