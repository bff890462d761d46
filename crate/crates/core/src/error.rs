use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("tensor rank {rank} unsupported (1..=3)")]
    Rank { rank: usize },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    Length { shape: Vec<usize>, len: usize },
    #[error("ragged rows")]
    Ragged,
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenId { id: usize, vocab: usize },
    #[error("variable does not belong to this tape")]
    NotOnTape,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("unknown parameter {0}")]
    MissingParam(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("id {0} has no truth label")]
    MissingTruth(String),
    #[error("{skipped} of {total} lines malformed (limit 1%)")]
    TooManyMalformed { skipped: usize, total: usize },
    #[error("class {class} has {count} samples, need at least {k}")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("corpus is empty")]
    Empty,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("payload length {0} exceeds limit")]
    TooLong(u64),
    #[error("malformed {kind} payload: {msg}")]
    Payload { kind: &'static str, msg: String },
    #[error("{msg}")]
    State { msg: String },
    #[error("cursor mismatch: expected epoch {expected_epoch} batch {expected_batch}, got epoch {epoch} batch {batch}")]
    Cursor {
        expected_epoch: u32,
        expected_batch: u32,
        epoch: u32,
        batch: u32,
    },
    #[error("peer reported error: {0}")]
    Remote(String),
    #[error("config digest mismatch")]
    ConfigMismatch,
    #[error("schedule mismatch at epoch {0}")]
    ScheduleMismatch(u32),
    #[error("sample alignment produced an empty intersection")]
    EmptyIntersection,
    #[error("duplicate digest for id {0}")]
    DuplicateDigest(String),
    #[error("connection closed by peer")]
    Closed,
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("roc-auc undefined: only one class present")]
    SingleClass,
    #[error("length mismatch: {0} scores vs {1} labels")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("non-finite score")]
    NonFinite,
    #[error("label {0} is not 0 or 1")]
    Label(u8),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Top-level error for training runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("non-finite {what} at epoch {epoch} batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: u32,
        batch: u32,
    },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
