use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{make_folds, TokenizedView};
use crate::error::{CheckpointError, Error};
use crate::metrics::EvalResult;
use crate::model::Checkpoint;
use crate::nn::{ParamSet, TokenBatch};
use crate::runtime::config::TrainConfig;
use crate::runtime::optim::AdamState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub epoch: u32,
    pub split: String,
    pub loss: Option<f64>,
    pub roc_auc: Option<f64>,
    pub f1: Option<f64>,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
}

impl MetricLine {
    pub fn new(
        epoch: u32,
        split: &str,
        loss: Option<f64>,
        eval: Option<&EvalResult>,
        wall_ms: u64,
    ) -> Self {
        Self {
            epoch,
            split: split.to_string(),
            loss,
            roc_auc: eval.map(|e| e.roc_auc),
            f1: eval.map(|e| e.f1),
            wall_ms,
            accuracy: eval.map(|e| e.accuracy),
        }
    }
}

/// Appends newline-delimited JSON metric lines to a file (or nowhere).
pub struct MetricsLog {
    out: Option<BufWriter<File>>,
    pub lines: Vec<MetricLine>,
}

impl MetricsLog {
    pub fn open(path: Option<&Path>, append: bool) -> Result<Self, Error> {
        let out = match path {
            Some(p) => Some(BufWriter::new(
                OpenOptions::new()
                    .create(true)
                    .write(true)
                    .append(append)
                    .truncate(!append)
                    .open(p)?,
            )),
            None => None,
        };
        Ok(Self {
            out,
            lines: Vec::new(),
        })
    }

    pub fn push(&mut self, line: MetricLine) -> Result<(), Error> {
        if let Some(w) = &mut self.out {
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::Config(e.to_string()))?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.lines.push(line);
        Ok(())
    }
}

/// Patience-based stopping on validation ROC-AUC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    pub best: f64,
    pub bad_epochs: u32,
    pub best_epoch: Option<u32>,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            bad_epochs: 0,
            best_epoch: None,
        }
    }
}

impl EarlyStop {
    /// Record an epoch's score; true when training should stop.
    pub fn update(&mut self, epoch: u32, auc: f64, patience: u32) -> bool {
        if auc > self.best {
            self.best = auc;
            self.bad_epochs = 0;
            self.best_epoch = Some(epoch);
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs >= patience
    }
}

/// Train and validation indices into the aligned sample list: a stratified
/// fold plan over the aligned labels, with one fold held out.
pub fn split_indices(labels: &[u8], cfg: &TrainConfig) -> Result<(Vec<u32>, Vec<u32>), Error> {
    let items: Vec<(u32, u8)> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as u32, l))
        .collect();
    let plan = make_folds(&items, cfg.folds, cfg.shared_seed)?;
    Ok((
        plan.train(cfg.validation_fold),
        plan.validation(cfg.validation_fold),
    ))
}

/// Token batch for aligned samples `idx`, where `local[k]` is sample k's
/// record in `view`.
pub fn gather_batch(
    view: &TokenizedView,
    local: &[usize],
    idx: &[u32],
    min_width: usize,
) -> Result<TokenBatch, Error> {
    let seqs: Vec<&[u32]> = idx
        .iter()
        .map(|&k| view.tokens[local[k as usize]].as_slice())
        .collect();
    Ok(TokenBatch::new(&seqs, min_width)?)
}

pub fn positive_scores<T: Scalar>(probs: &Tensor<T>) -> Vec<f64> {
    let (rows, _) = probs.rows_cols();
    (0..rows).map(|r| probs.at2(r, 1).as_f64()).collect()
}

/// Mean negative log-likelihood from probabilities.
pub fn mean_nll(scores: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            -(if l == 1 { p } else { 1.0 - p })
                .max(f64::MIN_POSITIVE)
                .ln()
        })
        .sum();
    total / scores.len().max(1) as f64
}

/// Evaluate scores, tolerating undefined metrics (single-class splits).
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Option<EvalResult> {
    match EvalResult::compute(scores, labels, threshold) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("metrics undefined: {e}");
            None
        }
    }
}

/// Replace a fresh extractor's embedding table with pre-trained vectors when
/// the config asks for them. Returns the hit rate.
pub fn apply_pretrained<T: Scalar>(
    cfg: &TrainConfig,
    set: &mut ParamSet<T>,
    vocab: &crate::data::Vocabulary,
) -> Result<Option<f64>, Error> {
    if cfg.embeddings != crate::runtime::config::EmbeddingSource::Glove || set.is_empty() {
        return Ok(None);
    }
    let path = cfg
        .paths
        .glove
        .as_deref()
        .ok_or_else(|| Error::Config("paths.glove is not set".into()))?;
    let loaded = crate::data::load_embeddings::<T>(path, vocab, cfg.model.embed_dim)?;
    log::info!(
        "embedding hit rate {:.4} over {} words",
        loaded.hit_rate,
        vocab.len().saturating_sub(2)
    );
    crate::model::set_embedding(set, loaded.table.matrix, cfg.model.train_embeddings)?;
    Ok(Some(loaded.hit_rate))
}

/// Everything a party needs to continue training after a restart.
pub struct Snapshot<'a> {
    pub role: &'a str,
    pub cfg: &'a TrainConfig,
    pub epoch: u32,
    pub stop: EarlyStop,
    pub sets: Vec<(&'a str, &'a ParamSet<f32>)>,
    pub adam: &'a AdamState<f32>,
    pub vocab_digests: Vec<(&'a str, String)>,
}

pub fn checkpoint_path(dir: &Path, role: &str, epoch: Option<u32>) -> PathBuf {
    match epoch {
        Some(e) => dir.join(format!("{role}.epoch{e}.fhhn")),
        None => dir.join(format!("{role}.fhhn")),
    }
}

impl Snapshot<'_> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set("spec", self.cfg.model.canonical());
        ck.set("party", self.role);
        ck.set("epoch", self.epoch);
        ck.set("adam_step", self.adam.step);
        ck.set("best_auc", format!("{:016x}", self.stop.best.to_bits()));
        ck.set("bad_epochs", self.stop.bad_epochs);
        ck.set(
            "best_epoch",
            self.stop
                .best_epoch
                .map_or("none".to_string(), |e| e.to_string()),
        );
        ck.set("config_digest", self.cfg.digest_hex());
        for (k, d) in &self.vocab_digests {
            ck.set(&format!("vocab.{k}"), d);
        }
        for (key, set) in &self.sets {
            ck.put_params(key, set);
        }
        for (si, (key, set)) in self.sets.iter().enumerate() {
            for (ei, e) in set.entries().iter().enumerate() {
                if let (Some(m), Some(v)) = (&self.adam.m[si][ei], &self.adam.v[si][ei]) {
                    ck.blocks
                        .push((format!("adam.m/{key}/{}", e.name), m.clone()));
                    ck.blocks
                        .push((format!("adam.v/{key}/{}", e.name), v.clone()));
                }
            }
        }
        ck
    }

    /// Write `role.epoch{e}.fhhn` and update `role.fhhn`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, Error> {
        fs::create_dir_all(dir)?;
        let ck = self.to_checkpoint();
        let path = checkpoint_path(dir, self.role, Some(self.epoch));
        ck.save(&path)?;
        ck.save(&checkpoint_path(dir, self.role, None))?;
        Ok(path)
    }
}

pub struct Restored {
    pub epoch: u32,
    pub stop: EarlyStop,
    pub sets: Vec<ParamSet<f32>>,
    pub adam: AdamState<f32>,
}

fn corrupt(msg: String) -> Error {
    CheckpointError::Corrupt(msg).into()
}

/// Load a checkpoint written by [`Snapshot::save`], checking it belongs to
/// `role`, matches `cfg`, and was built over the same vocabularies.
pub fn restore(
    ck: &Checkpoint,
    role: &str,
    cfg: &TrainConfig,
    keys: &[&str],
    vocab_digests: &[(&str, String)],
) -> Result<Restored, Error> {
    if ck.get("party")? != role {
        return Err(corrupt(format!(
            "checkpoint belongs to {}, not {role}",
            ck.get("party")?
        )));
    }
    if ck.get("config_digest")? != cfg.digest_hex() {
        return Err(corrupt(
            "checkpoint was written under a different config".into(),
        ));
    }
    for (k, d) in vocab_digests {
        if ck.get(&format!("vocab.{k}"))? != d {
            return Err(corrupt(format!(
                "{k} vocabulary differs from the checkpoint's"
            )));
        }
    }
    let sets: Vec<ParamSet<f32>> = keys.iter().map(|k| ck.take_params(k)).collect();
    let mut adam = AdamState::new(&sets.iter().collect::<Vec<_>>());
    adam.step = ck.parse("adam_step")?;
    for (si, key) in keys.iter().enumerate() {
        for (ei, e) in sets[si].entries().iter().enumerate() {
            if !e.trainable {
                continue;
            }
            let get = |kind: &str| {
                ck.block(&format!("adam.{kind}/{key}/{}", e.name))
                    .cloned()
                    .ok_or_else(|| {
                        corrupt(format!("missing optimizer moments for {key}/{}", e.name))
                    })
            };
            adam.m[si][ei] = Some(get("m")?);
            adam.v[si][ei] = Some(get("v")?);
        }
    }
    let best =
        u64::from_str_radix(ck.get("best_auc")?, 16).map_err(|_| corrupt("bad best_auc".into()))?;
    let best_epoch = match ck.get("best_epoch")? {
        "none" => None,
        s => Some(s.parse().map_err(|_| corrupt("bad best_epoch".into()))?),
    };
    Ok(Restored {
        epoch: ck.parse("epoch")?,
        stop: EarlyStop {
            best: f64::from_bits(best),
            bad_epochs: ck.parse("bad_epochs")?,
            best_epoch,
        },
        sets,
        adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_counts_non_improving_epochs() {
        let mut s = EarlyStop::default();
        let aucs = [0.6, 0.7, 0.7, 0.65, 0.69];
        let stops: Vec<bool> = aucs
            .iter()
            .enumerate()
            .map(|(e, &a)| s.update(e as u32, a, 3))
            .collect();
        assert_eq!(stops, [false, false, false, false, true]);
        assert_eq!(s.best_epoch, Some(1));
    }

    #[test]
    fn nll_of_confident_predictions() {
        assert!((mean_nll(&[0.5, 0.5], &[1, 0]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(mean_nll(&[1.0, 0.0], &[0, 1]).is_finite());
    }
}
