//! Run configuration: a sectioned key-value file with `[data]`, `[model]`,
//! `[train]` and `[eval]` tables. Unknown keys are rejected and every
//! missing key takes its default.
//!
//! ```toml
//! seed = 2024
//! out = "runs/lastfm"
//!
//! [data]
//! processed = "data/lastfm"
//!
//! [model]
//! dim = 64
//! layers = 3
//! tau = 1.0
//!
//! [train]
//! epochs = 500
//! ```

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::DEFAULT_KS;
use crate::graph::InverseTripletPolicy;
use crate::ingest::{InteractionFormat, PrepareOptions};
use crate::model::{AblationFlags, Hyperparameters};
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Raw interaction file, read by `prepare`.
    pub interactions: PathBuf,
    /// Raw KG triplet file, read by `prepare`.
    pub kg: PathBuf,
    /// `pairs` (`user item`) or `ratings` (`user item rating`).
    pub format: String,
    /// Minimum rating kept in `ratings` format.
    pub rating_threshold: f64,
    pub core_k: usize,
    pub train_ratio: f64,
    /// Processed dataset directory.
    pub processed: PathBuf,
    pub inverse_relations: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub dim: usize,
    pub layers: usize,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub no_enhancement: bool,
    pub no_attention: bool,
    pub no_cl: bool,
    pub no_cg: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_every: usize,
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            out: PathBuf::from("runs/default"),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        let p = PrepareOptions::default();
        Self {
            interactions: PathBuf::from("data/raw/interactions.txt"),
            kg: PathBuf::from("data/raw/kg.txt"),
            format: "pairs".into(),
            rating_threshold: 4.0,
            core_k: p.core_k,
            train_ratio: p.train_ratio,
            processed: PathBuf::from("data/processed"),
            inverse_relations: InverseTripletPolicy::default().add_inverse,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let h = Hyperparameters::default();
        Self {
            dim: h.dim,
            layers: h.layers,
            tau: h.tau,
            lambda1: h.lambda1,
            lambda2: h.lambda2,
            lambda3: h.lambda3,
            no_enhancement: false,
            no_attention: false,
            no_cl: false,
            no_cg: false,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyperparameters::default();
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: h.batch_size,
            learning_rate: h.learning_rate,
            eval_every: t.eval_every,
            patience: t.patience,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

/// Independent random streams derived from the run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Split = 1,
    Init = 2,
    Sampling = 3,
}

/// First word of ChaCha8 stream `stage` under key `seed`.
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng.next_u64()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Every violated constraint, each naming its field.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .hyperparameters()
            .violations()
            .into_iter()
            .map(|e| e.to_string())
            .collect();
        if self.interaction_format().is_none() {
            out.push(format!(
                "invalid value `data.format`: `{}` (expected pairs or ratings)",
                self.data.format
            ));
        }
        if !(self.data.train_ratio > 0.0 && self.data.train_ratio < 1.0) {
            out.push("invalid value `data.train_ratio`: must be in (0, 1)".into());
        }
        if !self.data.rating_threshold.is_finite() {
            out.push("invalid value `data.rating_threshold`: must be finite".into());
        }
        if self.train.eval_every == 0 {
            out.push("invalid value `train.eval_every`: must be at least 1".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            out.push("invalid value `eval.ks`: must be a nonempty list of positive cutoffs".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn interaction_format(&self) -> Option<InteractionFormat> {
        match self.data.format.as_str() {
            "pairs" => Some(InteractionFormat::PairList),
            "ratings" => Some(InteractionFormat::RatingThreshold(self.data.rating_threshold)),
            _ => None,
        }
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            dim: self.model.dim,
            layers: self.model.layers,
            tau: self.model.tau,
            lambda1: self.model.lambda1,
            lambda2: self.model.lambda2,
            lambda3: self.model.lambda3,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
        }
    }

    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            no_enhancement: self.model.no_enhancement,
            no_attention: self.model.no_attention,
            no_cl: self.model.no_cl,
            no_cg: self.model.no_cg,
        }
    }

    pub fn set_flags(&mut self, f: AblationFlags) {
        self.model.no_enhancement = f.no_enhancement;
        self.model.no_attention = f.no_attention;
        self.model.no_cl = f.no_cl;
        self.model.no_cg = f.no_cg;
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        PrepareOptions {
            core_k: self.data.core_k,
            train_ratio: self.data.train_ratio,
            seed: stage_seed(self.seed, Stage::Split),
        }
    }

    pub fn inverse_policy(&self) -> InverseTripletPolicy {
        InverseTripletPolicy {
            add_inverse: self.data.inverse_relations,
        }
    }

    /// Training settings; `checkpoint` is left for the caller.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            eval_every: self.train.eval_every,
            patience: self.train.patience,
            seed: stage_seed(self.seed, Stage::Sampling),
            checkpoint: None,
            ks: self.eval.ks.clone(),
        }
    }
}
