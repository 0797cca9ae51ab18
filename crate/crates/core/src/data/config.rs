//! Run configuration, read from TOML. Every key has a default, so a config
//! file only needs the values it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, SyntheticSpec};
use crate::eval::Bm25Params;
use crate::model::ModelConfig;
use crate::seeds::stage_seed;
use crate::train::{EncodingLimits, TrainRunConfig};

/// Architecture hyperparameters; vocabulary size and sequence limits are
/// filled in from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub dropout_rate: f32,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::desk(1);
        Self {
            num_layers: d.num_layers,
            d_model: d.d_model,
            num_heads: d.num_heads,
            d_ff: d.d_ff,
            dropout_rate: d.dropout_rate,
        }
    }
}

impl ModelShape {
    pub fn to_config(&self, vocab_size: usize, max_src_len: usize, max_tgt_len: usize) -> ModelConfig {
        ModelConfig {
            num_layers: self.num_layers,
            d_model: self.d_model,
            num_heads: self.num_heads,
            d_ff: self.d_ff,
            vocab_size,
            max_src_len,
            max_tgt_len,
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub total_steps: u64,
    pub batch_size: usize,
    pub lr: f32,
    pub warmup_steps: u64,
    pub eval_every: u64,
    pub early_stop_patience: Option<u32>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainRunConfig::default();
        Self {
            total_steps: d.total_steps,
            batch_size: d.batch_size,
            lr: d.lr,
            warmup_steps: d.warmup_steps,
            eval_every: d.eval_every,
            early_stop_patience: d.early_stop_patience,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainRunConfig {
        TrainRunConfig {
            total_steps: self.total_steps,
            batch_size: self.batch_size,
            lr: self.lr,
            warmup_steps: self.warmup_steps,
            seed,
            eval_every: self.eval_every,
            early_stop_patience: self.early_stop_patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LengthSection {
    pub truncate_len: usize,
    pub qg_src_len: usize,
    pub query_len: usize,
}

impl Default for LengthSection {
    fn default() -> Self {
        let d = EncodingLimits::new(1);
        Self {
            truncate_len: d.truncate_len,
            qg_src_len: d.qg_src_len,
            query_len: d.query_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSection {
    pub n: usize,
    pub k: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self { n: 10, k: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub beam_width: usize,
    /// Hold out this fraction of generated queries as the dev set used while
    /// training from generated queries. Zero uses the corpus dev queries.
    pub holdout_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            beam_width: 10,
            holdout_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub synth: SyntheticSpec,
    pub model: ModelShape,
    pub lengths: LengthSection,
    pub train_dsi: TrainSection,
    pub train_qg: TrainSection,
    pub train_dsi_qg: TrainSection,
    pub genq: GenerationSection,
    pub eval: EvalSection,
    pub bm25: Bm25Params,
    /// Re-add raw documents to generated-query indexing (ablation only).
    pub dsi_qg_with_documents: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            synth: SyntheticSpec::default(),
            model: ModelShape::default(),
            lengths: LengthSection::default(),
            train_dsi: TrainSection::default(),
            train_qg: TrainSection::default(),
            train_dsi_qg: TrainSection::default(),
            genq: GenerationSection::default(),
            eval: EvalSection::default(),
            bm25: Bm25Params::default(),
            dsi_qg_with_documents: false,
        }
    }
}

impl RunConfig {
    /// Small model and step budgets used for the reference synthetic
    /// experiments; each stage finishes in a few minutes on one core.
    pub fn reference() -> Self {
        let model = ModelShape {
            num_layers: 2,
            d_model: 32,
            num_heads: 4,
            d_ff: 128,
            dropout_rate: 0.1,
        };
        let docid_stage = |total_steps| TrainSection {
            total_steps,
            batch_size: 32,
            lr: 1e-3,
            warmup_steps: 100,
            eval_every: 250,
            early_stop_patience: None,
        };
        Self {
            model,
            train_dsi: docid_stage(1500),
            train_dsi_qg: docid_stage(2000),
            train_qg: TrainSection {
                lr: 2e-3,
                eval_every: 4000,
                ..docid_stage(4000)
            },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Spec(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Open {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, DataError> {
        toml::to_string_pretty(self).map_err(|e| DataError::Serialize(e.to_string()))
    }

    /// Seed for a named stage under the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    pub fn limits(&self, docid_width: usize) -> EncodingLimits {
        EncodingLimits {
            docid_width,
            truncate_len: self.lengths.truncate_len,
            qg_src_len: self.lengths.qg_src_len,
            query_len: self.lengths.query_len,
        }
    }
}
