//! The title-and-label holder. Drives the session: handshake, alignment,
//! per-epoch schedules, the classifier-side step of every batch,
//! federated validation, early stopping and termination.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use crate::data::batch_schedule;
use crate::data::TokenizedView;
use crate::error::{Error, ProtocolError};
use crate::metrics::EvalResult;
use crate::model::{party_a_forward, Checkpoint, PartyAParams};
use crate::protocol::{
    align, local_digests, salt_from_seed, AlignmentSet, EvalReq, Hello, Message, ScheduleAck,
    Session, TensorPayload, PROTOCOL_VERSION,
};
use crate::runtime::common::{
    apply_pretrained, checkpoint_path, evaluate, gather_batch, mean_nll, positive_scores, restore,
    split_indices, EarlyStop, MetricLine, MetricsLog, Restored, Snapshot,
};
use crate::runtime::config::{Precision, TrainConfig};
use crate::runtime::optim::{adam_step, AdamState};

pub const ROLE_A: &str = "party_a";
const KEYS_A: [&str; 3] = ["theta1", "theta3", "theta4"];

/// Where a party's parameters come from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Init {
    /// Seeded initialization; training starts at epoch 0.
    #[default]
    Fresh,
    /// The latest checkpoint in the configured output directory.
    Resume,
    /// A specific checkpoint file.
    Checkpoint(PathBuf),
}

impl Init {
    pub(crate) fn load(&self, cfg: &TrainConfig, role: &str) -> Result<Option<Checkpoint>, Error> {
        let path = match self {
            Init::Fresh => return Ok(None),
            Init::Resume => {
                let dir = cfg
                    .paths
                    .out_dir
                    .as_deref()
                    .ok_or_else(|| Error::Config("resuming needs paths.out_dir".into()))?;
                checkpoint_path(dir, role, None)
            }
            Init::Checkpoint(p) => p.clone(),
        };
        Ok(Some(Checkpoint::load(&path)?))
    }
}

pub struct PartyAOutcome {
    pub params: PartyAParams<f32>,
    pub adam: AdamState<f32>,
    pub stop: EarlyStop,
    pub log: Vec<MetricLine>,
    pub epochs_run: u32,
    pub stopped_early: bool,
    pub aligned: usize,
    pub checkpoints: Vec<PathBuf>,
}

pub(crate) fn labels_of(view: &TokenizedView) -> Result<&[u8], Error> {
    view.labels
        .as_deref()
        .ok_or_else(|| Error::Config("title corpus has no labels".into()))
}

fn vocab_digests(view: &TokenizedView) -> Vec<(&'static str, String)> {
    vec![("title", view.vocab().digest())]
}

fn non_finite(what: &'static str, epoch: u32, batch: u32) -> Error {
    Error::NonFinite { what, epoch, batch }
}

fn unexpected(got: &Message) -> Error {
    ProtocolError::State {
        msg: format!("unexpected {}", got.kind().name()),
    }
    .into()
}

/// Handshake and alignment, as the side that opens the conversation.
pub(crate) fn open_session<S: Read + Write>(
    session: &mut Session<S>,
    cfg: &TrainConfig,
    ids: &[String],
    start_epoch: u32,
) -> Result<AlignmentSet, Error> {
    let salt = salt_from_seed(cfg.shared_seed);
    let digest = cfg.digest();
    session.send(&Message::Hello(Hello {
        version: PROTOCOL_VERSION,
        salt,
        shared_seed: cfg.shared_seed,
        config_digest: digest,
        start_epoch,
    }))?;
    match session.recv()? {
        Message::Hello(h) if h.config_digest == digest => {}
        Message::Hello(_) => {
            session.abort("config digest mismatch");
            return Err(ProtocolError::ConfigMismatch.into());
        }
        other => return Err(unexpected(&other)),
    }
    session.send(&Message::AlignReq(local_digests(ids, &salt)?))?;
    let remote = match session.recv()? {
        Message::AlignResp(d) => d,
        other => return Err(unexpected(&other)),
    };
    let set = align(ids, &remote, &salt)?;
    log::info!("aligned {} of {} local samples", set.len(), ids.len());
    Ok(set)
}

/// Positive-class probabilities for aligned samples `indices`, with content
/// activations requested from the peer in chunks of `chunk`.
pub(crate) fn remote_scores<S: Read + Write>(
    session: &mut Session<S>,
    cfg: &TrainConfig,
    params: &PartyAParams<f32>,
    view: &TokenizedView,
    local: &[usize],
    indices: &[u32],
) -> Result<Vec<f64>, Error> {
    let spec = &cfg.model;
    let mut scores = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(cfg.batch_size) {
        let (epoch, batch_index) = session.state().eval_cursor();
        session.send(&Message::EvalReq(EvalReq {
            epoch,
            batch_index,
            indices: chunk.to_vec(),
        }))?;
        let v = match session.recv()? {
            Message::EvalResp(t) => t.to_tensor(),
            other => return Err(unexpected(&other)),
        };
        if !v.all_finite() {
            return Err(non_finite("content activations", epoch, batch_index));
        }
        let tb = gather_batch(view, local, chunk, spec.min_width())?;
        scores.extend(positive_scores(
            &party_a_forward(spec, params, &tb, &v)?.probs(),
        ));
    }
    Ok(scores)
}

/// Seeded parameters, with pre-trained title vectors if configured.
pub fn init_party_a(cfg: &TrainConfig, view: &TokenizedView) -> Result<PartyAParams<f32>, Error> {
    let mut p = PartyAParams::init(&cfg.model, view.vocab().len(), cfg.shared_seed)?;
    apply_pretrained(cfg, &mut p.theta1, view.vocab())?;
    Ok(p)
}

fn restored_params(r: Restored) -> (PartyAParams<f32>, AdamState<f32>) {
    let mut sets = r.sets.into_iter();
    let p = PartyAParams {
        theta1: sets.next().unwrap_or_default(),
        theta3: sets.next().unwrap_or_default(),
        theta4: sets.next().unwrap_or_default(),
    };
    (p, r.adam)
}

pub fn run_party_a<S: Read + Write>(
    cfg: &TrainConfig,
    view: &TokenizedView,
    session: &mut Session<S>,
    init: &Init,
) -> Result<PartyAOutcome, Error> {
    let result = train_a(cfg, view, session, init);
    if let Err(e) = &result {
        session.abort(&e.to_string());
    }
    result
}

fn train_a<S: Read + Write>(
    cfg: &TrainConfig,
    view: &TokenizedView,
    session: &mut Session<S>,
    init: &Init,
) -> Result<PartyAOutcome, Error> {
    cfg.validate()?;
    if cfg.precision != Precision::F32 {
        return Err(Error::Config("federated training runs in f32".into()));
    }
    let spec = &cfg.model;
    let labels_local = labels_of(view)?;
    let (mut params, mut adam, mut stop, start_epoch) = match init.load(cfg, ROLE_A)? {
        None => {
            let p = init_party_a(cfg, view)?;
            let adam = AdamState::new(&[&p.theta1, &p.theta3, &p.theta4]);
            (p, adam, EarlyStop::default(), 0)
        }
        Some(ck) => {
            let r = restore(&ck, ROLE_A, cfg, &KEYS_A, &vocab_digests(view))?;
            let (epoch, stop) = (r.epoch, r.stop);
            let (p, adam) = restored_params(r);
            (p, adam, stop, epoch + 1)
        }
    };
    let out_dir = cfg.paths.out_dir.clone();
    let mut metrics = MetricsLog::open(
        out_dir
            .as_ref()
            .map(|d| d.join(format!("{ROLE_A}.metrics.jsonl")))
            .as_deref(),
        start_epoch > 0,
    )?;
    if let Some(d) = &out_dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(
            d.join(format!("{ROLE_A}.title.vocab")),
            view.vocab().to_text(),
        )?;
    }

    let alignment = open_session(session, cfg, &view.ids, start_epoch)?;
    let local = &alignment.local;
    let labels: Vec<u8> = local.iter().map(|&i| labels_local[i]).collect();
    let (train, validation) = split_indices(&labels, cfg)?;
    let val_labels: Vec<u8> = validation.iter().map(|&k| labels[k as usize]).collect();

    let mut checkpoints = Vec::new();
    let mut epochs_run = 0;
    let mut stopped_early = stop.bad_epochs >= cfg.patience && start_epoch > 0;
    let mut epoch = start_epoch;
    while epoch < cfg.max_epochs && !stopped_early {
        let started = Instant::now();
        let batches = batch_schedule(&train, epoch, cfg.shared_seed, cfg.batch_size);
        session.send(&Message::ScheduleAck(ScheduleAck {
            epoch,
            batch_size: cfg.batch_size as u32,
            order: batches.concat(),
        }))?;
        let (mut loss_sum, mut train_scores, mut train_labels) = (0.0f64, Vec::new(), Vec::new());
        for (bi, batch) in batches.iter().enumerate() {
            let bi = bi as u32;
            let v = match session.recv()? {
                Message::Act(t) => t.to_tensor(),
                other => return Err(unexpected(&other)),
            };
            if !v.all_finite() {
                return Err(non_finite("content activations", epoch, bi));
            }
            let tb = gather_batch(view, local, batch, spec.min_width())?;
            let y: Vec<usize> = batch.iter().map(|&k| labels[k as usize] as usize).collect();
            let step = party_a_forward(spec, &params, &tb, &v)?.backward(&y)?;
            if !step.loss.is_finite() {
                return Err(non_finite("loss", epoch, bi));
            }
            adam_step(
                &cfg.optimizer,
                &mut adam,
                &mut [&mut params.theta1, &mut params.theta3, &mut params.theta4],
                &step.grads,
            )
            .map_err(|e| match e {
                Error::NonFinite { what, .. } => non_finite(what, epoch, bi),
                e => e,
            })?;
            session.send(&Message::Grad(TensorPayload::from_tensor(
                epoch,
                bi,
                &step.d_content,
            )))?;
            loss_sum += f64::from(step.loss) * batch.len() as f64;
            train_scores.extend(positive_scores(&step.probs));
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

        let val_scores = remote_scores(session, cfg, &params, view, local, &validation)?;
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
            let snap = Snapshot {
                role: ROLE_A,
                cfg,
                epoch,
                stop,
                sets: vec![
                    ("theta1", &params.theta1),
                    ("theta3", &params.theta3),
                    ("theta4", &params.theta4),
                ],
                adam: &adam,
                vocab_digests: vocab_digests(view),
            };
            checkpoints.push(snap.save(d)?);
        }
        epochs_run += 1;
        epoch += 1;
    }
    session.send(&Message::Term)?;
    Ok(PartyAOutcome {
        params,
        adam,
        stop,
        log: metrics.lines,
        epochs_run,
        stopped_early,
        aligned: alignment.len(),
        checkpoints,
    })
}

pub struct PredictOutcome {
    /// Local ids of the aligned samples, in aligned order.
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub result: Option<EvalResult>,
}

/// Score every aligned sample with trained parameters, the content side
/// answering activation requests. No parameters change.
pub fn federated_predict<S: Read + Write>(
    cfg: &TrainConfig,
    view: &TokenizedView,
    session: &mut Session<S>,
    checkpoint: &std::path::Path,
) -> Result<PredictOutcome, Error> {
    let result = (|| {
        let ck = Checkpoint::load(checkpoint)?;
        let r = restore(&ck, ROLE_A, cfg, &KEYS_A, &vocab_digests(view))?;
        let start_epoch = r.epoch + 1;
        let (params, _) = restored_params(r);
        predict_with(cfg, view, session, &params, start_epoch)
    })();
    if let Err(e) = &result {
        session.abort(&e.to_string());
    }
    result
}

pub fn predict_with<S: Read + Write>(
    cfg: &TrainConfig,
    view: &TokenizedView,
    session: &mut Session<S>,
    params: &PartyAParams<f32>,
    start_epoch: u32,
) -> Result<PredictOutcome, Error> {
    let labels_local = labels_of(view)?;
    let alignment = open_session(session, cfg, &view.ids, start_epoch)?;
    let all: Vec<u32> = (0..alignment.len() as u32).collect();
    let scores = remote_scores(session, cfg, params, view, &alignment.local, &all)?;
    session.send(&Message::Term)?;
    let labels: Vec<u8> = alignment.local.iter().map(|&i| labels_local[i]).collect();
    Ok(PredictOutcome {
        ids: alignment
            .local
            .iter()
            .map(|&i| view.ids[i].clone())
            .collect(),
        result: evaluate(&scores, &labels, cfg.threshold),
        scores,
        labels,
    })
}
