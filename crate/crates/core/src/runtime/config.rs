use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::stopwords_digest;
use crate::error::Error;
use crate::model::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Seeded uniform vectors.
    #[default]
    Random,
    /// GloVe-format text file given in `paths.glove`.
    Glove,
}

/// Local file locations. Not part of the config digest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub glove: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: u32,
    /// Stop after this many epochs without a validation ROC-AUC improvement.
    pub patience: u32,
    pub shared_seed: u64,
    pub folds: usize,
    pub validation_fold: usize,
    pub title_max_len: usize,
    pub content_max_len: usize,
    pub min_freq: usize,
    pub threshold: f64,
    pub precision: Precision,
    pub embeddings: EmbeddingSource,
    pub timeout_secs: u64,
    pub paths: Paths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::hhn(),
            optimizer: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            shared_seed: 0x5EED,
            folds: 5,
            validation_fold: 0,
            title_max_len: 30,
            content_max_len: 200,
            min_freq: 1,
            threshold: 0.5,
            precision: Precision::F32,
            embeddings: EmbeddingSource::Random,
            timeout_secs: 60,
            paths: Paths::default(),
        }
    }
}

/// Fields that are local to one party and do not have to agree.
const LOCAL_FIELDS: [&str; 3] = ["shared_seed", "paths", "timeout_secs"];

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.model.validate()?;
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.folds < 2 || self.validation_fold >= self.folds {
            return bad("need folds >= 2 and validation_fold < folds");
        }
        if self.title_max_len == 0 || self.content_max_len == 0 {
            return bad("maximum lengths must be positive");
        }
        if !(self.optimizer.lr >= 0.0 && self.optimizer.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.optimizer.beta1)
            || !(0.0..1.0).contains(&self.optimizer.beta2)
        {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.optimizer.eps <= 0.0 {
            return bad("Adam eps must be positive");
        }
        if self.embeddings == EmbeddingSource::Glove && self.paths.glove.is_none() {
            return bad("embeddings = glove needs paths.glove");
        }
        Ok(())
    }

    /// Sorted-key JSON of everything that affects the math, plus the
    /// stop-word list digest.
    pub fn canonical(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        for k in LOCAL_FIELDS {
            obj.remove(k);
        }
        obj.insert("stopwords_sha256".into(), stopwords_digest().into());
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }
}
