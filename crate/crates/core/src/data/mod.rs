mod corpus;
mod embeddings;
mod folds;
mod schedule;
pub mod synthetic;
mod text;
mod vocab;

pub use corpus::{
    ingest_clickbait_challenge, read_contents, read_titles, tokenize, tokenize_contents,
    tokenize_titles, tokenize_with, write_contents, write_titles, ContentField, ContentRecord,
    CorpusRecord, IngestReport, Ingested, TitleRecord, TokenizedView,
};
pub use embeddings::{load_embeddings, LoadedEmbeddings};
pub use folds::{make_folds, FoldPlan};
pub use schedule::batch_schedule;
pub use text::{preprocess, stopwords, stopwords_digest, STOPWORDS_TEXT};
pub use vocab::{Vocabulary, PAD_TOKEN, UNK_TOKEN};
