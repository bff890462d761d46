use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::nn::batch::TokenBatch;
use crate::nn::params::uniform;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Scale of the random embeddings used when no pre-trained vectors are given.
pub const RANDOM_EMBEDDING_RANGE: f64 = 1.0;

/// Word embedding matrix. Row 0 is the pad vector, row 1 is `<unk>`; both
/// start at zero and the pad row never receives a gradient.
#[derive(Clone, Debug)]
pub struct EmbeddingTable<T> {
    pub matrix: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            matrix: Tensor::zeros(&[vocab_size, dim]),
            trainable: false,
        }
    }

    /// Random rows for every real token; pad and unk stay zero.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut SplitMix64) -> Self {
        let mut matrix = uniform::<T>(&[vocab_size, dim], RANDOM_EMBEDDING_RANGE, rng);
        for row in [PAD_ID, UNK_ID] {
            if row < vocab_size {
                matrix.data_mut()[row * dim..(row + 1) * dim].fill(T::zero());
            }
        }
        Self {
            matrix,
            trainable: false,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }
}

/// Look up `B×L` token ids in a bound table, giving `B×L×E`.
pub fn embed<T: Scalar>(
    tape: &mut Tape<T>,
    table: Var,
    batch: &TokenBatch,
) -> Result<Var, TensorError> {
    tape.gather(table, &batch.ids, batch.batch_size(), batch.width)
}
