mod central;
mod common;
mod config;
mod loopback;
mod optim;
mod party_a;
mod party_b;

pub use central::{
    central_predict, init_central, join, train_centralized, CentralOutcome, ROLE_CENTRAL,
};
pub use common::{
    checkpoint_path, evaluate, mean_nll, positive_scores, split_indices, EarlyStop, MetricLine,
    MetricsLog,
};
pub use config::{AdamConfig, EmbeddingSource, Paths, Precision, TrainConfig};
pub use loopback::{run_loopback, stream_pair, LoopbackRun};
pub use optim::{adam_step, AdamState};
pub use party_a::{
    federated_predict, init_party_a, predict_with, run_party_a, Init, PartyAOutcome,
    PredictOutcome, ROLE_A,
};
pub use party_b::{init_party_b, run_party_b, PartyBOutcome, ROLE_B};
