//! Layer building blocks: embeddings, (Bi)LSTM, attention pooling,
//! convolution with max-pooling, and dense layers.

pub mod attention;
pub mod batch;
pub mod conv;
pub mod dense;
pub mod embedding;
pub mod lstm;
pub mod params;

pub use attention::{attention_pool, AttentionParams};
pub use batch::TokenBatch;
pub use conv::{connection_conv, ConvFilterBank};
pub use dense::{dense_logits, DenseParams};
pub use embedding::{embed, EmbeddingTable, PAD_ID, UNK_ID};
pub use lstm::{bilstm_encode, bilstm_final, lstm_step, LstmParams};
pub use params::{Bound, ParamSet};
