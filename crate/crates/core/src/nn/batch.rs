use crate::error::TensorError;

/// Padded batch of token-id sequences, `B×width`, row-major, pad id 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    pub lengths: Vec<usize>,
    pub width: usize,
}

impl TokenBatch {
    /// Pad sequences to the longest one (at least `min_width`).
    pub fn new<S: AsRef<[u32]>>(seqs: &[S], min_width: usize) -> Result<Self, TensorError> {
        if seqs.is_empty() {
            return Err(TensorError::Invalid {
                op: "token_batch",
                msg: "empty batch".into(),
            });
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if let Some(r) = lengths.iter().position(|&n| n == 0) {
            return Err(TensorError::Invalid {
                op: "token_batch",
                msg: format!("sequence {r} is empty"),
            });
        }
        let width = lengths.iter().copied().max().unwrap_or(0).max(min_width);
        Self::with_width(seqs, width)
    }

    pub fn with_width<S: AsRef<[u32]>>(seqs: &[S], width: usize) -> Result<Self, TensorError> {
        let mut ids = vec![0usize; seqs.len() * width];
        let mut lengths = Vec::with_capacity(seqs.len());
        for (r, s) in seqs.iter().enumerate() {
            let s = s.as_ref();
            if s.is_empty() || s.len() > width {
                return Err(TensorError::Invalid {
                    op: "token_batch",
                    msg: format!("sequence {r} has length {} for width {width}", s.len()),
                });
            }
            for (t, &id) in s.iter().enumerate() {
                ids[r * width + t] = id as usize;
            }
            lengths.push(s.len());
        }
        Ok(Self {
            ids,
            lengths,
            width,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }
}
