use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "fedsplit",
    version,
    about = "Two-party vertical federated clickbait detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split a Clickbait Challenge dump into the two parties' corpus files.
    Ingest(IngestArgs),
    /// Run the title holder: listens, aligns, trains, writes checkpoints.
    PartyA(PartyAArgs),
    /// Run the content holder: connects to party A and serves activations.
    PartyB(PartyBArgs),
    /// Train on the joined corpus in one process (the reference trainer).
    Central(CentralArgs),
    /// Score a trained model and print metrics.
    Eval(EvalArgs),
    /// Both parties over loopback (seed defaults to 7) on a built-in synthetic corpus, checked
    /// against the centralized trainer.
    Demo(DemoArgs),
    /// Finite-difference gradient checks of every op, layer and model.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Field {
    Description,
    Paragraphs,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// instances.jsonl of the challenge dump
    #[arg(long)]
    pub instances: PathBuf,
    /// truth.jsonl of the challenge dump
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out_a: PathBuf,
    #[arg(long)]
    pub out_b: PathBuf,
    /// Which article field becomes party B's content.
    #[arg(long, value_enum, default_value = "description")]
    pub content_field: Field,
}

/// Config file plus the flags that override it.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// Canonical JSON config; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<u32>,
    /// hhn, san, cnn, rnn, fasttext, or <kind>-title / <kind>-content.
    #[arg(long)]
    pub model: Option<String>,
    /// GloVe-format embedding file (switches embeddings to glove).
    #[arg(long)]
    pub glove: Option<PathBuf>,
    /// Output directory for manifest, checkpoints and metrics.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Socket read timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
}

/// Where training starts from.
#[derive(Args, Debug, Default, Clone)]
pub struct InitArgs {
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long, conflicts_with = "checkpoint")]
    pub resume: bool,
    /// Start from (or, for party-b, serve) this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PartyAArgs {
    /// Address to listen on, e.g. :7361 or 127.0.0.1:7361.
    #[arg(long, default_value = ":7361")]
    pub listen: String,
    /// Title corpus (JSONL with id, title, label).
    #[arg(long)]
    pub titles: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub init: InitArgs,
}

#[derive(Args, Debug)]
pub struct PartyBArgs {
    /// Party A's address.
    #[arg(long, default_value = "127.0.0.1:7361")]
    pub connect: String,
    /// Content corpus (JSONL with id, content).
    #[arg(long)]
    pub contents: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub init: InitArgs,
}

#[derive(Args, Debug)]
pub struct CentralArgs {
    #[arg(long)]
    pub titles: PathBuf,
    #[arg(long)]
    pub contents: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub init: InitArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// A central checkpoint, or party A's checkpoint with --listen.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub titles: PathBuf,
    /// Content corpus, for a central checkpoint.
    #[arg(long, required_unless_present = "listen", conflicts_with = "listen")]
    pub contents: Option<PathBuf>,
    /// Evaluate federated: wait for party-b (started with --checkpoint) here.
    #[arg(long)]
    pub listen: Option<String>,
    /// Write per-sample scores as JSONL.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// Number of synthetic samples.
    #[arg(long, default_value_t = 64)]
    pub synthetic: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
}
