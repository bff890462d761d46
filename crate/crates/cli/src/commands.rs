use std::fmt;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fedsplit::data::{
    ingest_clickbait_challenge, read_contents, read_titles, synthetic, tokenize_contents,
    tokenize_titles, write_contents, write_titles, ContentField, TokenizedView,
};
use fedsplit::error::{DataError, Error};
use fedsplit::gradcheck;
use fedsplit::model::{Checkpoint, ExtractorKind, Inputs, ModelParams, ModelSpec, Party};
use fedsplit::protocol::Session;
use fedsplit::runtime::{
    central_predict, checkpoint_path, federated_predict, run_loopback, run_party_a, run_party_b,
    train_centralized, EmbeddingSource, Init, MetricLine, Precision, PredictOutcome, TrainConfig,
    ROLE_A, ROLE_B, ROLE_CENTRAL,
};
use serde_json::json;

use crate::args::*;
use crate::manifest::RunManifest;

const DEFAULT_OUT: &str = "fedsplit-out";

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Protocol(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Protocol(_) => 2,
            Failure::Data(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Protocol(m) => write!(f, "aborted: {m}"),
            Failure::Data(m) => write!(f, "data: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Data(d) => Failure::Data(d.to_string()),
            Error::Config(m) => Failure::Usage(m),
            e => Failure::Protocol(e.to_string()),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn data_io(what: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", what.display()))
}

pub type Outcome = Result<(), Failure>;

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::PartyA(a) => party_a(a),
        Command::PartyB(a) => party_b(a),
        Command::Central(a) => central(a),
        Command::Eval(a) => eval(a),
        Command::Demo(a) => demo(a),
        Command::Gradcheck(a) => grad_check(a),
    }
}

// ---- config ----

fn parse_model(name: &str) -> Result<ModelSpec, Failure> {
    let kind = |k: &str| match k {
        "san" => Ok(ExtractorKind::San),
        "cnn" => Ok(ExtractorKind::Cnn),
        "rnn" => Ok(ExtractorKind::Rnn),
        "fasttext" => Ok(ExtractorKind::Fasttext),
        _ => Err(Failure::Usage(format!("unknown model {name:?}"))),
    };
    let name = name.to_ascii_lowercase();
    let name = name
        .strip_prefix("fed")
        .map(|s| s.trim_start_matches('-'))
        .unwrap_or(&name);
    Ok(match name.split_once('-') {
        None if name == "hhn" => ModelSpec::hhn(),
        None => ModelSpec::paired(kind(name)?),
        Some((k, "title")) => ModelSpec::single(kind(k)?, Inputs::TitleOnly),
        Some((k, "content")) => ModelSpec::single(kind(k)?, Inputs::ContentOnly),
        Some(_) => return Err(Failure::Usage(format!("unknown model {name:?}"))),
    })
}

/// Config file (or defaults) with flag overrides applied.
pub fn build_config(a: &ConfigArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            TrainConfig::load(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(name) = &a.model {
        let s = parse_model(name)?;
        // keep configured dimensions, switch the architecture
        cfg.model.extractor = s.extractor;
        cfg.model.connection = s.connection;
        cfg.model.inputs = s.inputs;
    }
    if let Some(v) = a.seed {
        cfg.shared_seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.optimizer.lr = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.timeout {
        cfg.timeout_secs = v;
    }
    if let Some(p) = &a.glove {
        cfg.embeddings = EmbeddingSource::Glove;
        cfg.paths.glove = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.paths.out_dir = Some(p.clone());
    }
    if cfg.paths.out_dir.is_none() {
        cfg.paths.out_dir = Some(PathBuf::from(DEFAULT_OUT));
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn out_dir(cfg: &TrainConfig) -> &Path {
    cfg.paths.out_dir.as_deref().expect("set by build_config")
}

fn init_from(a: &InitArgs) -> Init {
    match (&a.checkpoint, a.resume) {
        (Some(p), _) => Init::Checkpoint(p.clone()),
        (None, true) => Init::Resume,
        (None, false) => Init::Fresh,
    }
}

fn write_manifest(role: &str, cfg: &TrainConfig, corpora: &[(&str, &Path)]) -> Outcome {
    let dir = out_dir(cfg);
    for (_, p) in corpora {
        std::fs::metadata(p).map_err(data_io(p))?;
    }
    let m = RunManifest::new(role, cfg, corpora)
        .map_err(|e| Failure::Data(format!("manifest inputs: {e}")))?;
    let path = m.write(dir).map_err(data_io(dir))?;
    log::info!("manifest {} (config {})", path.display(), m.config_digest);
    Ok(())
}

fn load_titles(cfg: &TrainConfig, path: &Path) -> Result<TokenizedView, Failure> {
    let records = read_titles(path)?;
    let view = tokenize_titles(&records, cfg.title_max_len, cfg.min_freq);
    log::info!(
        "{}: {} titles ({} dropped empty)",
        path.display(),
        view.len(),
        view.dropped
    );
    Ok(view)
}

fn load_contents(cfg: &TrainConfig, path: &Path) -> Result<TokenizedView, Failure> {
    let records = read_contents(path)?;
    let view = tokenize_contents(&records, cfg.content_max_len, cfg.min_freq);
    log::info!(
        "{}: {} contents ({} dropped empty)",
        path.display(),
        view.len(),
        view.dropped
    );
    Ok(view)
}

fn last_validation(log: &[MetricLine]) -> serde_json::Value {
    log.iter()
        .rev()
        .find(|l| l.split == "validation")
        .map(
            |l| json!({"epoch": l.epoch, "roc_auc": l.roc_auc, "f1": l.f1, "accuracy": l.accuracy}),
        )
        .unwrap_or(serde_json::Value::Null)
}

// ---- networking ----

/// Accepts ":7361" as shorthand for all interfaces.
fn listen_addr(s: &str) -> String {
    match s.strip_prefix(':') {
        Some(port) => format!("0.0.0.0:{port}"),
        None => s.to_string(),
    }
}

fn configure(s: &TcpStream, timeout_secs: u64) -> std::io::Result<()> {
    s.set_nodelay(true)?;
    if timeout_secs > 0 {
        s.set_read_timeout(Some(Duration::from_secs(timeout_secs)))?;
    }
    Ok(())
}

fn accept_one(addr: &str, timeout_secs: u64) -> Result<TcpStream, Failure> {
    let addr = listen_addr(addr);
    let listener = TcpListener::bind(&addr)
        .map_err(|e| Failure::Protocol(format!("listen on {addr}: {e}")))?;
    eprintln!(
        "listening on {}",
        listener
            .local_addr()
            .map_err(|e| Failure::Protocol(e.to_string()))?
    );
    let (stream, peer) = listener
        .accept()
        .map_err(|e| Failure::Protocol(format!("accept: {e}")))?;
    log::info!("peer connected from {peer}");
    configure(&stream, timeout_secs).map_err(|e| Failure::Protocol(e.to_string()))?;
    Ok(stream)
}

/// Connect, retrying while the listener is not up yet.
fn connect(addr: &str, timeout_secs: u64) -> Result<TcpStream, Failure> {
    let deadline = Instant::now() + Duration::from_secs(timeout_secs.max(1));
    let target = addr
        .to_socket_addrs()
        .map_err(|e| Failure::Usage(format!("bad address {addr}: {e}")))?
        .next()
        .ok_or_else(|| Failure::Usage(format!("bad address {addr}")))?;
    loop {
        match TcpStream::connect(target) {
            Ok(s) => {
                configure(&s, timeout_secs).map_err(|e| Failure::Protocol(e.to_string()))?;
                return Ok(s);
            }
            Err(e) if Instant::now() >= deadline => {
                return Err(Failure::Protocol(format!("connect to {addr}: {e}")))
            }
            Err(_) => std::thread::sleep(Duration::from_millis(100)),
        }
    }
}

// ---- subcommands ----

fn ingest(a: IngestArgs) -> Outcome {
    let field = match a.content_field {
        Field::Description => ContentField::TargetDescription,
        Field::Paragraphs => ContentField::TargetParagraphs,
    };
    let got = ingest_clickbait_challenge(&a.instances, &a.truth, field)?;
    write_titles(&a.out_a, &got.titles)?;
    write_contents(&a.out_b, &got.contents)?;
    let r = &got.report;
    let positives = got.titles.iter().filter(|t| t.label == 1).count();
    println!(
        "{}",
        json!({
            "records": r.records,
            "clickbait": positives,
            "malformed_lines": r.malformed_lines,
            "dropped_empty": r.dropped_empty,
            "unmatched_truth": r.unmatched_truth,
            "out_a": a.out_a,
            "out_b": a.out_b,
        })
    );
    Ok(())
}

fn party_a(a: PartyAArgs) -> Outcome {
    let cfg = build_config(&a.config)?;
    write_manifest(ROLE_A, &cfg, &[("titles", &a.titles)])?;
    let view = load_titles(&cfg, &a.titles)?;
    let stream = accept_one(&a.listen, cfg.timeout_secs)?;
    let mut session = Session::new(stream, Party::A);
    let out = run_party_a(&cfg, &view, &mut session, &init_from(&a.init))?;
    println!(
        "{}",
        json!({
            "role": ROLE_A,
            "aligned": out.aligned,
            "epochs_run": out.epochs_run,
            "stopped_early": out.stopped_early,
            "best_epoch": out.stop.best_epoch,
            "best_validation_roc_auc": out.stop.best,
            "last_validation": last_validation(&out.log),
            "checkpoint": checkpoint_path(out_dir(&cfg), ROLE_A, None),
        })
    );
    Ok(())
}

fn party_b(a: PartyBArgs) -> Outcome {
    let cfg = build_config(&a.config)?;
    write_manifest(ROLE_B, &cfg, &[("contents", &a.contents)])?;
    let view = load_contents(&cfg, &a.contents)?;
    let stream = connect(&a.connect, cfg.timeout_secs)?;
    let mut session = Session::new(stream, Party::B);
    let out = run_party_b(&cfg, &view, &mut session, &init_from(&a.init))?;
    println!(
        "{}",
        json!({
            "role": ROLE_B,
            "aligned": out.aligned,
            "epochs_run": out.epochs_run,
            "eval_requests": out.eval_requests,
            "checkpoint": checkpoint_path(out_dir(&cfg), ROLE_B, None),
        })
    );
    Ok(())
}

fn central(a: CentralArgs) -> Outcome {
    let cfg = build_config(&a.config)?;
    write_manifest(
        ROLE_CENTRAL,
        &cfg,
        &[("titles", &a.titles), ("contents", &a.contents)],
    )?;
    let (tv, cv) = (
        load_titles(&cfg, &a.titles)?,
        load_contents(&cfg, &a.contents)?,
    );
    let init = init_from(&a.init);
    let (log, epochs, best_epoch, best) = match cfg.precision {
        Precision::F32 => {
            let o = train_centralized::<f32>(&cfg, &tv, &cv, &init)?;
            (o.log, o.epochs_run, o.stop.best_epoch, o.stop.best)
        }
        Precision::F64 => {
            let o = train_centralized::<f64>(&cfg, &tv, &cv, &init)?;
            (o.log, o.epochs_run, o.stop.best_epoch, o.stop.best)
        }
    };
    println!(
        "{}",
        json!({
            "role": ROLE_CENTRAL,
            "epochs_run": epochs,
            "best_epoch": best_epoch,
            "best_validation_roc_auc": best,
            "last_validation": last_validation(&log),
            "checkpoint": checkpoint_path(out_dir(&cfg), ROLE_CENTRAL, None),
        })
    );
    Ok(())
}

/// The manifest next to a checkpoint whose config produced it, if any.
fn manifest_config(checkpoint: &Path) -> Result<Option<TrainConfig>, Failure> {
    let ck = Checkpoint::load(checkpoint)
        .map_err(|e| Failure::Protocol(format!("{}: {e}", checkpoint.display())))?;
    let digest = ck
        .get("config_digest")
        .map_err(|e| Failure::Protocol(e.to_string()))?
        .to_string();
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(None);
    };
    for e in entries.flatten() {
        let p = e.path();
        if !p.to_string_lossy().ends_with(".manifest.json") {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(&p) else {
            continue;
        };
        let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else {
            continue;
        };
        if v["config_digest"] == digest.as_str() {
            if let Ok(cfg) = serde_json::from_value::<TrainConfig>(v["config"].clone()) {
                log::info!("config from {}", p.display());
                return Ok(Some(cfg));
            }
        }
    }
    Ok(None)
}

fn write_scores(path: &Path, out: &PredictOutcome) -> Outcome {
    let mut text = String::new();
    for ((id, s), l) in out.ids.iter().zip(&out.scores).zip(&out.labels) {
        text.push_str(&json!({"id": id, "score": s, "label": l}).to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(data_io(path))
}

fn eval(a: EvalArgs) -> Outcome {
    let mut cfg = match (&a.config.config, manifest_config(&a.checkpoint)?) {
        (None, Some(from_manifest)) => from_manifest,
        _ => build_config(&a.config)?,
    };
    if let Some(t) = a.config.timeout {
        cfg.timeout_secs = t;
    }
    let tv = load_titles(&cfg, &a.titles)?;
    let out = match (&a.contents, &a.listen) {
        (Some(contents), _) => {
            let cv = load_contents(&cfg, contents)?;
            central_predict(&cfg, &tv, &cv, &a.checkpoint)?
        }
        (None, Some(addr)) => {
            let stream = accept_one(addr, cfg.timeout_secs)?;
            let mut session = Session::new(stream, Party::A);
            federated_predict(&cfg, &tv, &mut session, &a.checkpoint)?
        }
        (None, None) => return Err(Failure::Usage("eval needs --contents or --listen".into())),
    };
    if let Some(p) = &a.scores {
        write_scores(p, &out)?;
    }
    let r = out.result.as_ref();
    println!(
        "{}",
        json!({
            "n": out.scores.len(),
            "roc_auc": r.map(|r| r.roc_auc),
            "f1": r.map(|r| r.f1),
            "accuracy": r.map(|r| r.accuracy),
        })
    );
    Ok(())
}

fn demo(a: DemoArgs) -> Outcome {
    let mut args = a.config.clone();
    let seed = *args.seed.get_or_insert(7);
    args.epochs = args.epochs.or(Some(3));
    args.batch_size = args.batch_size.or(Some(8));
    let cfg = build_config(&args)?;
    if cfg.precision != Precision::F32 {
        return Err(Failure::Usage("demo runs in f32".into()));
    }
    let dir = out_dir(&cfg).to_path_buf();
    std::fs::create_dir_all(&dir).map_err(data_io(&dir))?;
    let (t, c) = synthetic::demo_corpus(a.synthetic, seed);
    let (tp, cp) = (
        dir.join("demo_titles.jsonl"),
        dir.join("demo_contents.jsonl"),
    );
    write_titles(&tp, &t)?;
    write_contents(&cp, &c)?;
    write_manifest("demo", &cfg, &[("titles", &tp), ("contents", &cp)])?;
    let tv = tokenize_titles(&t, cfg.title_max_len, cfg.min_freq);
    let cv = tokenize_contents(&c, cfg.content_max_len, cfg.min_freq);

    let started = Instant::now();
    let run = run_loopback(&cfg, &cfg, &tv, &cv, &Init::Fresh, &Init::Fresh)?;
    let fed_secs = started.elapsed().as_secs_f64();
    let (fa, fb) = (run.a?, run.b?);
    let central = train_centralized::<f32>(&cfg, &tv, &cv, &Init::Fresh)?;
    let fed = ModelParams::join(fa.params, fb.params);
    let same = [
        ("theta1", fed.theta1.bit_eq(&central.params.theta1)),
        ("theta2", fed.theta2.bit_eq(&central.params.theta2)),
        ("theta3", fed.theta3.bit_eq(&central.params.theta3)),
        ("theta4", fed.theta4.bit_eq(&central.params.theta4)),
    ];
    let equivalent = same.iter().all(|(_, s)| *s);
    println!(
        "demo: {} samples, {} aligned, {} epochs, {} frames exchanged in {fed_secs:.2}s",
        a.synthetic,
        fa.aligned,
        fa.epochs_run,
        run.wire.len()
    );
    for (name, s) in same {
        println!(
            "  {name}: {}",
            if s { "bitwise identical" } else { "DIFFERS" }
        );
    }
    println!("  federated validation: {}", last_validation(&fa.log));
    println!(
        "  centralized validation: {}",
        last_validation(&central.log)
    );
    println!(
        "equivalence check: {}",
        if equivalent {
            "PASS (federated == centralized, bitwise)"
        } else {
            "FAIL"
        }
    );
    if equivalent {
        Ok(())
    } else {
        Err(Failure::Protocol(
            "federated parameters differ from the centralized run".into(),
        ))
    }
}

fn grad_check(a: GradcheckArgs) -> Outcome {
    let reports = gradcheck::run_all(a.seeds).map_err(|e| Failure::Protocol(e.to_string()))?;
    let mut failed = 0;
    for case in gradcheck::cases() {
        let mine: Vec<_> = reports.iter().filter(|r| r.case == case.name).collect();
        let worst = mine.iter().map(|r| r.max_error()).fold(0.0, f64::max);
        let ok = mine.iter().all(|r| r.passed());
        failed += usize::from(!ok);
        println!(
            "{} {:<28} max rel err {worst:.2e} (tol {:.0e}, {} seeds)",
            if ok { "ok  " } else { "FAIL" },
            case.name,
            case.tolerance,
            mine.len()
        );
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Protocol(format!(
            "{failed} gradient checks failed"
        )))
    }
}
