use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::data::vocab::Vocabulary;
use crate::error::DataError;
use crate::nn::EmbeddingTable;
use crate::scalar::Scalar;

pub struct LoadedEmbeddings<T> {
    pub table: EmbeddingTable<T>,
    /// Fraction of vocabulary words (pad and unk excluded) found in the file.
    pub hit_rate: f64,
}

/// Read a GloVe-style text file (`word v1 … v_dim` per line) into a table
/// indexed by `vocab`. Words missing from the file keep zero rows.
pub fn load_embeddings<T: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<LoadedEmbeddings<T>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut table = EmbeddingTable::<T>::zeros(vocab.len(), dim);
    let mut filled = vec![false; vocab.len()];
    let fail = |line: usize, msg: String| DataError::Format {
        path: path.display().to_string(),
        line,
        msg,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_ascii_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(fail(
                i + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        let Some(id) = vocab.id(word).map(|id| id as usize) else {
            continue;
        };
        if filled[id] {
            continue;
        }
        let row = &mut table.matrix.data_mut()[id * dim..(id + 1) * dim];
        for (slot, v) in row.iter_mut().zip(&values) {
            let x: f64 = v
                .parse()
                .map_err(|_| fail(i + 1, format!("bad number {v:?}")))?;
            if !x.is_finite() {
                return Err(fail(i + 1, format!("non-finite value {v:?}")));
            }
            *slot = T::lit(x);
        }
        filled[id] = true;
    }
    let words = vocab.len().saturating_sub(2);
    let hits = filled.iter().filter(|&&f| f).count();
    Ok(LoadedEmbeddings {
        table,
        hit_rate: if words == 0 {
            0.0
        } else {
            hits as f64 / words as f64
        },
    })
}
