use crate::error::TensorError;
use crate::model::spec::{ExtractorKind, ModelSpec};
use crate::nn::attention::init_attention;
use crate::nn::conv::init_conv;
use crate::nn::dense::init_dense;
use crate::nn::lstm::init_lstm;
use crate::nn::{EmbeddingTable, ParamSet};
use crate::rng::{stream, SplitMix64};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The four sub-models of the hierarchical hybrid network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Theta {
    /// Title feature extractor.
    Title,
    /// Content feature extractor.
    Content,
    /// Connection extractor.
    Connection,
    /// Classifier.
    Classifier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    /// Holds titles and labels.
    A,
    /// Holds contents.
    B,
}

impl Theta {
    pub const ALL: [Theta; 4] = [
        Theta::Title,
        Theta::Content,
        Theta::Connection,
        Theta::Classifier,
    ];

    pub fn owner(self) -> Party {
        match self {
            Theta::Content => Party::B,
            _ => Party::A,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Theta::Title => "theta1",
            Theta::Content => "theta2",
            Theta::Connection => "theta3",
            Theta::Classifier => "theta4",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Theta::Title => stream::THETA1,
            Theta::Content => stream::THETA2,
            Theta::Connection => stream::THETA3,
            Theta::Classifier => stream::THETA4,
        }
    }
}

pub const EMBEDDING: &str = "embedding";

/// Parameters of one extractor, embedding table first.
fn init_extractor<T: Scalar>(
    spec: &ModelSpec,
    embedding: EmbeddingTable<T>,
    rng: &mut SplitMix64,
) -> ParamSet<T> {
    let mut set = ParamSet::new();
    set.insert(EMBEDDING, embedding.matrix, spec.train_embeddings);
    let e = spec.embed_dim;
    match spec.extractor {
        ExtractorKind::San => {
            init_lstm(&mut set, "fwd", e, spec.hidden, rng);
            init_lstm(&mut set, "bwd", e, spec.hidden, rng);
            init_attention(&mut set, "attn", 2 * spec.hidden, rng);
        }
        ExtractorKind::Rnn => {
            init_lstm(&mut set, "fwd", e, spec.hidden, rng);
            init_lstm(&mut set, "bwd", e, spec.hidden, rng);
        }
        ExtractorKind::Cnn => init_conv(
            &mut set,
            "conv",
            &spec.cnn_heights,
            e,
            spec.cnn_filters,
            rng,
        ),
        ExtractorKind::Fasttext => init_dense(&mut set, "proj", e, spec.fasttext_dim, rng),
    }
    set
}

/// Deterministically initialize one sub-model from the shared seed.
/// `vocab_size` is only used by the two extractors. Each theta and each
/// embedding table draws from its own stream, so any party can build its own
/// share without the others.
pub fn init_theta<T: Scalar>(
    which: Theta,
    spec: &ModelSpec,
    vocab_size: usize,
    seed: u64,
) -> Result<ParamSet<T>, TensorError> {
    spec.validate()?;
    let mut rng = SplitMix64::derived(seed, which.stream());
    let set = match which {
        Theta::Title if spec.uses_title() => {
            let mut er = SplitMix64::derived(seed, stream::TITLE_EMBEDDING);
            init_extractor(
                spec,
                EmbeddingTable::random(vocab_size, spec.embed_dim, &mut er),
                &mut rng,
            )
        }
        Theta::Content if spec.uses_content() => {
            let mut er = SplitMix64::derived(seed, stream::CONTENT_EMBEDDING);
            init_extractor(
                spec,
                EmbeddingTable::random(vocab_size, spec.embed_dim, &mut er),
                &mut rng,
            )
        }
        Theta::Connection if spec.connection => {
            let mut set = ParamSet::new();
            init_conv(
                &mut set,
                "conn",
                &spec.conn_heights,
                spec.feature_width(),
                spec.conn_filters,
                &mut rng,
            );
            set
        }
        Theta::Classifier => {
            let mut set = ParamSet::new();
            init_dense(&mut set, "cls", spec.classifier_input(), 2, &mut rng);
            set
        }
        _ => ParamSet::new(),
    };
    Ok(set)
}

/// Replace the embedding table of an extractor (e.g. with pre-trained vectors).
pub fn set_embedding<T: Scalar>(
    set: &mut ParamSet<T>,
    table: Tensor<T>,
    trainable: bool,
) -> Result<(), TensorError> {
    match set.get(EMBEDDING) {
        Some(old) if old.shape() == table.shape() => {
            set.insert(EMBEDDING, table, trainable);
            Ok(())
        }
        Some(old) => Err(TensorError::Shape {
            op: "set_embedding",
            lhs: old.shape().to_vec(),
            rhs: table.shape().to_vec(),
        }),
        None => Err(TensorError::MissingParam(EMBEDDING.into())),
    }
}

/// θ1, θ3, θ4: what the title-holding party owns.
#[derive(Clone, Debug, Default)]
pub struct PartyAParams<T> {
    pub theta1: ParamSet<T>,
    pub theta3: ParamSet<T>,
    pub theta4: ParamSet<T>,
}

/// θ2: what the content-holding party owns.
#[derive(Clone, Debug, Default)]
pub struct PartyBParams<T> {
    pub theta2: ParamSet<T>,
}

impl<T: Scalar> PartyAParams<T> {
    pub fn init(spec: &ModelSpec, title_vocab: usize, seed: u64) -> Result<Self, TensorError> {
        Ok(Self {
            theta1: init_theta(Theta::Title, spec, title_vocab, seed)?,
            theta3: init_theta(Theta::Connection, spec, 0, seed)?,
            theta4: init_theta(Theta::Classifier, spec, 0, seed)?,
        })
    }
}

impl<T: Scalar> PartyBParams<T> {
    pub fn init(spec: &ModelSpec, content_vocab: usize, seed: u64) -> Result<Self, TensorError> {
        Ok(Self {
            theta2: init_theta(Theta::Content, spec, content_vocab, seed)?,
        })
    }
}

/// All four parameter sets, as held by the centralized trainer.
#[derive(Clone, Debug, Default)]
pub struct ModelParams<T> {
    pub theta1: ParamSet<T>,
    pub theta2: ParamSet<T>,
    pub theta3: ParamSet<T>,
    pub theta4: ParamSet<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn init(
        spec: &ModelSpec,
        title_vocab: usize,
        content_vocab: usize,
        seed: u64,
    ) -> Result<Self, TensorError> {
        Ok(Self::join(
            PartyAParams::init(spec, title_vocab, seed)?,
            PartyBParams::init(spec, content_vocab, seed)?,
        ))
    }

    pub fn join(a: PartyAParams<T>, b: PartyBParams<T>) -> Self {
        Self {
            theta1: a.theta1,
            theta2: b.theta2,
            theta3: a.theta3,
            theta4: a.theta4,
        }
    }

    pub fn split(self) -> (PartyAParams<T>, PartyBParams<T>) {
        (
            PartyAParams {
                theta1: self.theta1,
                theta3: self.theta3,
                theta4: self.theta4,
            },
            PartyBParams {
                theta2: self.theta2,
            },
        )
    }

    pub fn get(&self, which: Theta) -> &ParamSet<T> {
        match which {
            Theta::Title => &self.theta1,
            Theta::Content => &self.theta2,
            Theta::Connection => &self.theta3,
            Theta::Classifier => &self.theta4,
        }
    }

    pub fn get_mut(&mut self, which: Theta) -> &mut ParamSet<T> {
        match which {
            Theta::Title => &mut self.theta1,
            Theta::Content => &mut self.theta2,
            Theta::Connection => &mut self.theta3,
            Theta::Classifier => &mut self.theta4,
        }
    }

    pub fn scalar_count(&self) -> usize {
        Theta::ALL.iter().map(|&t| self.get(t).scalar_count()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            theta1: self.theta1.cast(),
            theta2: self.theta2.cast(),
            theta3: self.theta3.cast(),
            theta4: self.theta4.cast(),
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        Theta::ALL.iter().all(|&t| self.get(t).bit_eq(other.get(t)))
    }
}
