//! The content holder. Follows the title side's lead: answers the
//! handshake and alignment, checks each epoch's schedule against its own
//! derivation, sends content activations, and applies the returned gradients.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use crate::data::{batch_schedule, TokenizedView};
use crate::error::{Error, ProtocolError};
use crate::model::{party_b_forward, PartyBParams};
use crate::protocol::{
    align, local_digests, Hello, Message, Session, TensorPayload, PROTOCOL_VERSION,
};
use crate::runtime::common::{
    apply_pretrained, gather_batch, restore, EarlyStop, MetricLine, MetricsLog, Snapshot,
};
use crate::runtime::config::{Precision, TrainConfig};
use crate::runtime::optim::{adam_step, AdamState};
use crate::runtime::party_a::Init;

pub const ROLE_B: &str = "party_b";
const KEYS_B: [&str; 1] = ["theta2"];

pub struct PartyBOutcome {
    pub params: PartyBParams<f32>,
    pub adam: AdamState<f32>,
    pub log: Vec<MetricLine>,
    pub epochs_run: u32,
    pub aligned: usize,
    pub eval_requests: u32,
    pub checkpoints: Vec<PathBuf>,
}

fn vocab_digests(view: &TokenizedView) -> Vec<(&'static str, String)> {
    vec![("content", view.vocab().digest())]
}

fn unexpected(got: &Message) -> Error {
    ProtocolError::State {
        msg: format!("unexpected {}", got.kind().name()),
    }
    .into()
}

/// Seeded parameters, with pre-trained content vectors if configured.
/// `seed` is the shared seed received in the handshake.
pub fn init_party_b(
    cfg: &TrainConfig,
    view: &TokenizedView,
    seed: u64,
) -> Result<PartyBParams<f32>, Error> {
    let mut p = PartyBParams::init(&cfg.model, view.vocab().len(), seed)?;
    apply_pretrained(cfg, &mut p.theta2, view.vocab())?;
    Ok(p)
}

pub fn run_party_b<S: Read + Write>(
    cfg: &TrainConfig,
    view: &TokenizedView,
    session: &mut Session<S>,
    init: &Init,
) -> Result<PartyBOutcome, Error> {
    let result = serve_b(cfg, view, session, init);
    if let Err(e) = &result {
        session.abort(&e.to_string());
    }
    result
}

fn serve_b<S: Read + Write>(
    cfg: &TrainConfig,
    view: &TokenizedView,
    session: &mut Session<S>,
    init: &Init,
) -> Result<PartyBOutcome, Error> {
    cfg.validate()?;
    if cfg.precision != Precision::F32 {
        return Err(Error::Config("federated training runs in f32".into()));
    }
    let spec = &cfg.model;
    let hello = match session.recv()? {
        Message::Hello(h) => h,
        other => return Err(unexpected(&other)),
    };
    let digest = cfg.digest();
    if hello.config_digest != digest {
        session.abort("config digest mismatch");
        return Err(ProtocolError::ConfigMismatch.into());
    }
    // The seed travels in the handshake; everything seeded derives from it.
    let cfg = &TrainConfig {
        shared_seed: hello.shared_seed,
        ..cfg.clone()
    };
    let (mut params, mut adam) = match init.load(cfg, ROLE_B)? {
        None => {
            if hello.start_epoch != 0 {
                return Err(Error::Config(format!(
                    "peer resumes at epoch {} but no checkpoint was given",
                    hello.start_epoch
                )));
            }
            let p = init_party_b(cfg, view, hello.shared_seed)?;
            let adam = AdamState::new(&[&p.theta2]);
            (p, adam)
        }
        Some(ck) => {
            let r = restore(&ck, ROLE_B, cfg, &KEYS_B, &vocab_digests(view))?;
            if r.epoch + 1 != hello.start_epoch {
                return Err(Error::Config(format!(
                    "checkpoint is after epoch {}, peer starts at epoch {}",
                    r.epoch, hello.start_epoch
                )));
            }
            let theta2 = r.sets.into_iter().next().unwrap_or_default();
            (PartyBParams { theta2 }, r.adam)
        }
    };
    session.send(&Message::Hello(Hello {
        version: PROTOCOL_VERSION,
        salt: hello.salt,
        shared_seed: hello.shared_seed,
        config_digest: digest,
        start_epoch: hello.start_epoch,
    }))?;
    let remote = match session.recv()? {
        Message::AlignReq(d) => d,
        other => return Err(unexpected(&other)),
    };
    session.send(&Message::AlignResp(local_digests(&view.ids, &hello.salt)?))?;
    let alignment = align(&view.ids, &remote, &hello.salt)?;
    let local = &alignment.local;
    log::info!(
        "aligned {} of {} local samples",
        alignment.len(),
        view.len()
    );

    let out_dir = cfg.paths.out_dir.clone();
    let mut metrics = MetricsLog::open(
        out_dir
            .as_ref()
            .map(|d| d.join(format!("{ROLE_B}.metrics.jsonl")))
            .as_deref(),
        hello.start_epoch > 0,
    )?;
    if let Some(d) = &out_dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(
            d.join(format!("{ROLE_B}.content.vocab")),
            view.vocab().to_text(),
        )?;
    }
    let (mut checkpoints, mut epochs_run, mut eval_requests) = (Vec::new(), 0, 0);
    loop {
        match session.recv()? {
            Message::ScheduleAck(ack) => {
                let started = Instant::now();
                let epoch = ack.epoch;
                let mut train = ack.order.clone();
                train.sort_unstable();
                if train.windows(2).any(|w| w[0] == w[1])
                    || train.last().is_some_and(|&k| k as usize >= local.len())
                {
                    return Err(ProtocolError::ScheduleMismatch(epoch).into());
                }
                let mine =
                    batch_schedule(&train, epoch, hello.shared_seed, ack.batch_size as usize);
                if mine != ack.batches() {
                    return Err(ProtocolError::ScheduleMismatch(epoch).into());
                }
                for (bi, batch) in mine.iter().enumerate() {
                    let bi = bi as u32;
                    let cb = gather_batch(view, local, batch, spec.min_width())?;
                    let mut fwd = party_b_forward(spec, &params.theta2, &cb)?;
                    if !fwd.activations().all_finite() {
                        return Err(Error::NonFinite {
                            what: "content activations",
                            epoch,
                            batch: bi,
                        });
                    }
                    session.send(&Message::Act(TensorPayload::from_tensor(
                        epoch,
                        bi,
                        fwd.activations(),
                    )))?;
                    let g = match session.recv()? {
                        Message::Grad(t) => t.to_tensor(),
                        other => return Err(unexpected(&other)),
                    };
                    if !g.all_finite() {
                        return Err(Error::NonFinite {
                            what: "received gradient",
                            epoch,
                            batch: bi,
                        });
                    }
                    let grads = fwd.backward_injected(&g)?;
                    adam_step(
                        &cfg.optimizer,
                        &mut adam,
                        &mut [&mut params.theta2],
                        &[grads],
                    )
                    .map_err(|e| match e {
                        Error::NonFinite { what, .. } => Error::NonFinite {
                            what,
                            epoch,
                            batch: bi,
                        },
                        e => e,
                    })?;
                }
                metrics.push(MetricLine::new(
                    epoch,
                    "train",
                    None,
                    None,
                    started.elapsed().as_millis() as u64,
                ))?;
                if let Some(d) = &out_dir {
                    let snap = Snapshot {
                        role: ROLE_B,
                        cfg,
                        epoch,
                        stop: EarlyStop::default(),
                        sets: vec![("theta2", &params.theta2)],
                        adam: &adam,
                        vocab_digests: vocab_digests(view),
                    };
                    checkpoints.push(snap.save(d)?);
                }
                epochs_run += 1;
            }
            Message::EvalReq(req) => {
                if req.indices.iter().any(|&k| k as usize >= local.len()) {
                    return Err(ProtocolError::Payload {
                        kind: "EVAL_REQ",
                        msg: "sample index out of range".into(),
                    }
                    .into());
                }
                let cb = gather_batch(view, local, &req.indices, spec.min_width())?;
                let fwd = party_b_forward(spec, &params.theta2, &cb)?;
                session.send(&Message::EvalResp(TensorPayload::from_tensor(
                    req.epoch,
                    req.batch_index,
                    fwd.activations(),
                )))?;
                eval_requests += 1;
            }
            Message::Term => break,
            other => return Err(unexpected(&other)),
        }
    }
    Ok(PartyBOutcome {
        params,
        adam,
        log: metrics.lines,
        epochs_run,
        aligned: alignment.len(),
        eval_requests,
        checkpoints,
    })
}
