use serde::{Deserialize, Serialize};

use crate::error::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    /// BiLSTM with token-level attention pooling.
    San,
    /// Convolutions over token embeddings with max-over-time pooling.
    Cnn,
    /// BiLSTM final states.
    Rnn,
    /// Masked mean of embeddings followed by one dense layer.
    Fasttext,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inputs {
    TitleOnly,
    ContentOnly,
    Both,
}

/// Architecture of one model variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub extractor: ExtractorKind,
    pub connection: bool,
    pub inputs: Inputs,
    pub embed_dim: usize,
    /// LSTM hidden size per direction.
    pub hidden: usize,
    pub conn_filters: usize,
    pub conn_heights: Vec<usize>,
    pub cnn_filters: usize,
    pub cnn_heights: Vec<usize>,
    pub fasttext_dim: usize,
    pub train_embeddings: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::hhn()
    }
}

impl ModelSpec {
    /// Hierarchical hybrid network: attention extractors on both sides plus the
    /// connection extractor.
    pub fn hhn() -> Self {
        Self {
            extractor: ExtractorKind::San,
            connection: true,
            inputs: Inputs::Both,
            embed_dim: 100,
            hidden: 64,
            conn_filters: 64,
            conn_heights: vec![1, 2],
            cnn_filters: 64,
            cnn_heights: vec![3, 4, 5],
            fasttext_dim: 128,
            train_embeddings: false,
        }
    }

    /// Title-and-content model without the connection extractor: the two
    /// feature vectors are concatenated straight into the classifier.
    pub fn paired(extractor: ExtractorKind) -> Self {
        Self {
            extractor,
            connection: false,
            ..Self::hhn()
        }
    }

    pub fn single(extractor: ExtractorKind, inputs: Inputs) -> Self {
        Self {
            extractor,
            connection: false,
            inputs,
            ..Self::hhn()
        }
    }

    /// Shrink every width, keeping the architecture.
    pub fn with_dims(mut self, embed_dim: usize, hidden: usize, filters: usize) -> Self {
        self.embed_dim = embed_dim;
        self.hidden = hidden;
        self.conn_filters = filters;
        self.cnn_filters = filters;
        self.fasttext_dim = 2 * hidden;
        self
    }

    pub fn is_hhn(&self) -> bool {
        self.extractor == ExtractorKind::San && self.connection && self.inputs == Inputs::Both
    }

    pub fn uses_title(&self) -> bool {
        self.inputs != Inputs::ContentOnly
    }

    pub fn uses_content(&self) -> bool {
        self.inputs != Inputs::TitleOnly
    }

    /// Width `D` of one extractor's output (the cut-layer width).
    pub fn feature_width(&self) -> usize {
        match self.extractor {
            ExtractorKind::San | ExtractorKind::Rnn => 2 * self.hidden,
            ExtractorKind::Cnn => self.cnn_heights.len() * self.cnn_filters,
            ExtractorKind::Fasttext => self.fasttext_dim,
        }
    }

    pub fn classifier_input(&self) -> usize {
        if self.connection {
            self.conn_heights.len() * self.conn_filters
        } else if self.inputs == Inputs::Both {
            2 * self.feature_width()
        } else {
            self.feature_width()
        }
    }

    /// Smallest padded batch width the extractor accepts.
    pub fn min_width(&self) -> usize {
        match self.extractor {
            ExtractorKind::Cnn => self.cnn_heights.iter().copied().max().unwrap_or(1),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let bad = |msg: &str| {
            Err(TensorError::Invalid {
                op: "model_spec",
                msg: msg.to_string(),
            })
        };
        if self.connection && self.inputs != Inputs::Both {
            return bad("the connection extractor needs both inputs");
        }
        if self.connection
            && (self.conn_heights.is_empty() || self.conn_heights.iter().any(|&h| h == 0 || h > 2))
        {
            return bad("connection filter heights must be drawn from {1, 2}");
        }
        if self.embed_dim == 0 || self.hidden == 0 || self.fasttext_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.connection && self.conn_filters == 0 {
            return bad("connection filter count must be positive");
        }
        if self.extractor == ExtractorKind::Cnn
            && (self.cnn_filters == 0
                || self.cnn_heights.is_empty()
                || self.cnn_heights.contains(&0))
        {
            return bad("cnn needs positive filter counts and heights");
        }
        Ok(())
    }

    /// Canonical single-line text form.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}
