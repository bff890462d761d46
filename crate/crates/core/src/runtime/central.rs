//! The centralized oracle: the same model, seeds, schedules and optimizer
//! order as the two-party run, on one tape with no wire in between.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{batch_schedule, TokenizedView};
use crate::error::Error;
use crate::model::{forward, Checkpoint, ModelParams};
use crate::protocol::{align, local_digests, salt_from_seed};
use crate::runtime::common::{
    apply_pretrained, evaluate, gather_batch, mean_nll, positive_scores, restore, split_indices,
    EarlyStop, MetricLine, MetricsLog, Snapshot,
};
use crate::runtime::config::TrainConfig;
use crate::runtime::optim::{adam_step, AdamState};
use crate::runtime::party_a::{labels_of, Init, PredictOutcome};
use crate::scalar::Scalar;

pub const ROLE_CENTRAL: &str = "central";
const KEYS: [&str; 4] = ["theta1", "theta2", "theta3", "theta4"];

pub struct CentralOutcome<T> {
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub stop: EarlyStop,
    pub log: Vec<MetricLine>,
    pub epochs_run: u32,
    pub stopped_early: bool,
    pub aligned: usize,
    pub checkpoints: Vec<PathBuf>,
}

/// The joined sample list exactly as the two parties would derive it:
/// (aligned labels, title record positions, content record positions).
pub fn join(
    cfg: &TrainConfig,
    titles: &TokenizedView,
    contents: &TokenizedView,
) -> Result<(Vec<u8>, Vec<usize>, Vec<usize>), Error> {
    let salt = salt_from_seed(cfg.shared_seed);
    let a = align(&titles.ids, &local_digests(&contents.ids, &salt)?, &salt)?;
    let b = align(&contents.ids, &local_digests(&titles.ids, &salt)?, &salt)?;
    debug_assert_eq!(a.digests, b.digests);
    let labels_local = labels_of(titles)?;
    let labels = a.local.iter().map(|&i| labels_local[i]).collect();
    Ok((labels, a.local, b.local))
}

fn vocab_digests(titles: &TokenizedView, contents: &TokenizedView) -> Vec<(&'static str, String)> {
    vec![
        ("title", titles.vocab().digest()),
        ("content", contents.vocab().digest()),
    ]
}

pub fn init_central<T: Scalar>(
    cfg: &TrainConfig,
    titles: &TokenizedView,
    contents: &TokenizedView,
) -> Result<ModelParams<T>, Error> {
    let mut p = ModelParams::init(
        &cfg.model,
        titles.vocab().len(),
        contents.vocab().len(),
        cfg.shared_seed,
    )?;
    apply_pretrained(cfg, &mut p.theta1, titles.vocab())?;
    apply_pretrained(cfg, &mut p.theta2, contents.vocab())?;
    Ok(p)
}

fn from_checkpoint<T: Scalar>(
    ck: &Checkpoint,
    cfg: &TrainConfig,
    titles: &TokenizedView,
    contents: &TokenizedView,
) -> Result<(ModelParams<T>, AdamState<T>, EarlyStop, u32), Error> {
    let r = restore(
        ck,
        ROLE_CENTRAL,
        cfg,
        &KEYS,
        &vocab_digests(titles, contents),
    )?;
    let mut sets = r.sets.iter().map(|s| s.cast::<T>());
    let mut next = || sets.next().unwrap_or_default();
    let params = ModelParams {
        theta1: next(),
        theta2: next(),
        theta3: next(),
        theta4: next(),
    };
    Ok((params, r.adam.cast(), r.stop, r.epoch))
}

/// Scores for aligned samples `indices`, in chunks of the batch size.
fn scores<T: Scalar>(
    cfg: &TrainConfig,
    params: &ModelParams<T>,
    titles: &TokenizedView,
    contents: &TokenizedView,
    (la, lb): (&[usize], &[usize]),
    indices: &[u32],
) -> Result<Vec<f64>, Error> {
    let spec = &cfg.model;
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(cfg.batch_size) {
        let tb = gather_batch(titles, la, chunk, spec.min_width())?;
        let cb = gather_batch(contents, lb, chunk, spec.min_width())?;
        out.extend(positive_scores(
            &forward(spec, params, Some(&tb), Some(&cb))?.probs(),
        ));
    }
    Ok(out)
}

pub fn train_centralized<T: Scalar>(
    cfg: &TrainConfig,
    titles: &TokenizedView,
    contents: &TokenizedView,
    init: &Init,
) -> Result<CentralOutcome<T>, Error> {
    cfg.validate()?;
    let spec = &cfg.model;
    let (mut params, mut adam, mut stop, start_epoch) = match init.load(cfg, ROLE_CENTRAL)? {
        None => {
            let p = init_central::<T>(cfg, titles, contents)?;
            let adam = AdamState::new(&[&p.theta1, &p.theta2, &p.theta3, &p.theta4]);
            (p, adam, EarlyStop::default(), 0)
        }
        Some(ck) => {
            let (p, a, s, e) = from_checkpoint(&ck, cfg, titles, contents)?;
            (p, a, s, e + 1)
        }
    };
    let out_dir = cfg.paths.out_dir.clone();
    let mut metrics = MetricsLog::open(
        out_dir
            .as_ref()
            .map(|d| d.join(format!("{ROLE_CENTRAL}.metrics.jsonl")))
            .as_deref(),
        start_epoch > 0,
    )?;
    if let Some(d) = &out_dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(
            d.join(format!("{ROLE_CENTRAL}.title.vocab")),
            titles.vocab().to_text(),
        )?;
        std::fs::write(
            d.join(format!("{ROLE_CENTRAL}.content.vocab")),
            contents.vocab().to_text(),
        )?;
    }
    let (labels, la, lb) = join(cfg, titles, contents)?;
    let (train, validation) = split_indices(&labels, cfg)?;
    let val_labels: Vec<u8> = validation.iter().map(|&k| labels[k as usize]).collect();

    let mut checkpoints = Vec::new();
    let mut epochs_run = 0;
    let mut stopped_early = stop.bad_epochs >= cfg.patience && start_epoch > 0;
    let mut epoch = start_epoch;
    while epoch < cfg.max_epochs && !stopped_early {
        let started = Instant::now();
        let (mut loss_sum, mut train_scores, mut train_labels) = (0.0f64, Vec::new(), Vec::new());
        for (bi, batch) in batch_schedule(&train, epoch, cfg.shared_seed, cfg.batch_size)
            .iter()
            .enumerate()
        {
            let tb = gather_batch(titles, &la, batch, spec.min_width())?;
            let cb = gather_batch(contents, &lb, batch, spec.min_width())?;
            let y: Vec<usize> = batch.iter().map(|&k| labels[k as usize] as usize).collect();
            let mut fwd = forward(spec, &params, Some(&tb), Some(&cb))?;
            let (loss, probs) = fwd.backward(&y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                    batch: bi as u32,
                });
            }
            let grads = fwd.grads();
            adam_step(
                &cfg.optimizer,
                &mut adam,
                &mut [
                    &mut params.theta1,
                    &mut params.theta2,
                    &mut params.theta3,
                    &mut params.theta4,
                ],
                &grads,
            )
            .map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite {
                    what,
                    epoch,
                    batch: bi as u32,
                },
                e => e,
            })?;
            loss_sum += loss.as_f64() * batch.len() as f64;
            train_scores.extend(positive_scores(&probs));
            train_labels.extend(batch.iter().map(|&k| labels[k as usize]));
        }
        let train_ms = started.elapsed().as_millis() as u64;
        let train_eval = evaluate(&train_scores, &train_labels, cfg.threshold);
        metrics.push(MetricLine::new(
            epoch,
            "train",
            Some(loss_sum / train.len() as f64),
            train_eval.as_ref(),
            train_ms,
        ))?;
        let val_scores = scores(cfg, &params, titles, contents, (&la, &lb), &validation)?;
        let val_eval = evaluate(&val_scores, &val_labels, cfg.threshold);
        metrics.push(MetricLine::new(
            epoch,
            "validation",
            Some(mean_nll(&val_scores, &val_labels)),
            val_eval.as_ref(),
            started.elapsed().as_millis() as u64,
        ))?;
        let auc = val_eval.map_or(f64::NAN, |e| e.roc_auc);
        stopped_early = stop.update(epoch, auc, cfg.patience);
        log::info!("epoch {epoch}: validation roc-auc {auc:.4}");
        if let Some(d) = &out_dir {
            let p32 = params.cast::<f32>();
            let a32 = adam.cast::<f32>();
            let snap = Snapshot {
                role: ROLE_CENTRAL,
                cfg,
                epoch,
                stop,
                sets: vec![
                    ("theta1", &p32.theta1),
                    ("theta2", &p32.theta2),
                    ("theta3", &p32.theta3),
                    ("theta4", &p32.theta4),
                ],
                adam: &a32,
                vocab_digests: vocab_digests(titles, contents),
            };
            checkpoints.push(snap.save(d)?);
        }
        epochs_run += 1;
        epoch += 1;
    }
    Ok(CentralOutcome {
        params,
        adam,
        stop,
        log: metrics.lines,
        epochs_run,
        stopped_early,
        aligned: labels.len(),
        checkpoints,
    })
}

/// Score every joined sample with a centralized checkpoint.
pub fn central_predict(
    cfg: &TrainConfig,
    titles: &TokenizedView,
    contents: &TokenizedView,
    checkpoint: &Path,
) -> Result<PredictOutcome, Error> {
    let ck = Checkpoint::load(checkpoint)?;
    let (params, _, _, _) = from_checkpoint::<f32>(&ck, cfg, titles, contents)?;
    let (labels, la, lb) = join(cfg, titles, contents)?;
    let all: Vec<u32> = (0..labels.len() as u32).collect();
    let s = scores(cfg, &params, titles, contents, (&la, &lb), &all)?;
    Ok(PredictOutcome {
        ids: la.iter().map(|&i| titles.ids[i].clone()).collect(),
        result: evaluate(&s, &labels, cfg.threshold),
        scores: s,
        labels,
    })
}
