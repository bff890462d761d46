//! Corpus files of the two parties and the Clickbait Challenge ingest.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::text::preprocess;
use crate::data::vocab::Vocabulary;
use crate::error::DataError;

/// A line of the title holder's corpus file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TitleRecord {
    pub id: String,
    pub title: String,
    pub label: u8,
}

/// A line of the content holder's corpus file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentRecord {
    pub id: String,
    pub content: String,
}

/// One tokenized sample. `label` is only known on the title side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub title_tokens: Vec<u32>,
    pub content_tokens: Vec<u32>,
    pub label: Option<u8>,
}

/// One side's tokenized records: `(id, tokens, label)`.
#[derive(Clone, Debug, Default)]
pub struct TokenizedView {
    pub ids: Vec<String>,
    pub tokens: Vec<Vec<u32>>,
    pub labels: Option<Vec<u8>>,
    pub vocab: Option<Vocabulary>,
    pub dropped: usize,
}

impl TokenizedView {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab.as_ref().expect("view built with a vocabulary")
    }

    pub fn position(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Preprocess texts, build the vocabulary over them and encode. Records whose
/// token list comes out empty are dropped and counted.
pub fn tokenize(
    ids: Vec<String>,
    texts: &[&str],
    labels: Option<Vec<u8>>,
    max_len: usize,
    min_freq: usize,
) -> TokenizedView {
    let toks: Vec<Vec<String>> = texts.iter().map(|t| preprocess(t, max_len)).collect();
    let keep: Vec<bool> = toks.iter().map(|t| !t.is_empty()).collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    if dropped > 0 {
        log::warn!("dropped {dropped} records with no tokens after preprocessing");
    }
    let kept: Vec<&Vec<String>> = toks
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(t, _)| t)
        .collect();
    let vocab = Vocabulary::build(&kept, min_freq);
    TokenizedView {
        ids: pick(ids, &keep),
        tokens: kept.iter().map(|t| vocab.encode(t)).collect(),
        labels: labels.map(|l| pick(l, &keep)),
        vocab: Some(vocab),
        dropped,
    }
}

/// Encode texts with an existing vocabulary (evaluation on held-out data).
pub fn tokenize_with(
    vocab: &Vocabulary,
    ids: Vec<String>,
    texts: &[&str],
    labels: Option<Vec<u8>>,
    max_len: usize,
) -> TokenizedView {
    let toks: Vec<Vec<String>> = texts.iter().map(|t| preprocess(t, max_len)).collect();
    let keep: Vec<bool> = toks.iter().map(|t| !t.is_empty()).collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    TokenizedView {
        ids: pick(ids, &keep),
        tokens: pick(toks, &keep).iter().map(|t| vocab.encode(t)).collect(),
        labels: labels.map(|l| pick(l, &keep)),
        vocab: Some(vocab.clone()),
        dropped,
    }
}

fn pick<X>(v: Vec<X>, keep: &[bool]) -> Vec<X> {
    v.into_iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|(x, _)| x)
        .collect()
}

pub fn tokenize_titles(records: &[TitleRecord], max_len: usize, min_freq: usize) -> TokenizedView {
    tokenize(
        records.iter().map(|r| r.id.clone()).collect(),
        &records.iter().map(|r| r.title.as_str()).collect::<Vec<_>>(),
        Some(records.iter().map(|r| r.label).collect()),
        max_len,
        min_freq,
    )
}

pub fn tokenize_contents(
    records: &[ContentRecord],
    max_len: usize,
    min_freq: usize,
) -> TokenizedView {
    tokenize(
        records.iter().map(|r| r.id.clone()).collect(),
        &records
            .iter()
            .map(|r| r.content.as_str())
            .collect::<Vec<_>>(),
        None,
        max_len,
        min_freq,
    )
}

fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::Format {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<R: Serialize>(path: &Path, records: &[R]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| DataError::Invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(DataError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

pub fn read_titles(path: &Path) -> Result<Vec<TitleRecord>, DataError> {
    let recs: Vec<TitleRecord> = read_jsonl(path)?;
    unique_ids(recs.iter().map(|r| r.id.as_str()))?;
    if let Some(r) = recs.iter().find(|r| r.label > 1) {
        return Err(DataError::Invalid(format!(
            "record {} has label {}",
            r.id, r.label
        )));
    }
    Ok(recs)
}

pub fn read_contents(path: &Path) -> Result<Vec<ContentRecord>, DataError> {
    let recs: Vec<ContentRecord> = read_jsonl(path)?;
    unique_ids(recs.iter().map(|r| r.id.as_str()))?;
    Ok(recs)
}

pub fn write_titles(path: &Path, records: &[TitleRecord]) -> Result<(), DataError> {
    write_jsonl(path, records)
}

pub fn write_contents(path: &Path, records: &[ContentRecord]) -> Result<(), DataError> {
    write_jsonl(path, records)
}

/// Which instance field becomes the content text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentField {
    #[default]
    TargetDescription,
    TargetParagraphs,
}

#[derive(Deserialize)]
struct Instance {
    id: String,
    #[serde(rename = "targetTitle", default)]
    target_title: Option<String>,
    #[serde(rename = "targetDescription", default)]
    target_description: Option<String>,
    #[serde(rename = "targetParagraphs", default)]
    target_paragraphs: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct Truth {
    id: String,
    #[serde(rename = "truthClass")]
    truth_class: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records: usize,
    pub malformed_lines: usize,
    pub dropped_empty: usize,
    pub unmatched_truth: usize,
}

pub struct Ingested {
    pub titles: Vec<TitleRecord>,
    pub contents: Vec<ContentRecord>,
    pub report: IngestReport,
}

/// Parse newline-delimited JSON, skipping lines that fail. Fails when more
/// than 1% of non-blank lines are malformed.
fn lenient_jsonl<R: DeserializeOwned>(path: &Path) -> Result<(Vec<R>, usize), DataError> {
    let reader = BufReader::new(File::open(path)?);
    let (mut out, mut bad, mut total) = (Vec::new(), 0usize, 0usize);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(e) => {
                log::warn!("{}:{}: skipped malformed line: {e}", path.display(), i + 1);
                bad += 1;
            }
        }
    }
    if bad * 100 > total {
        return Err(DataError::TooManyMalformed {
            skipped: bad,
            total,
        });
    }
    Ok((out, bad))
}

/// Split a Clickbait Challenge release into the two parties' corpus files.
/// `clickbait` becomes label 1, `no-clickbait` label 0.
pub fn ingest_clickbait_challenge(
    instances_path: &Path,
    truth_path: &Path,
    field: ContentField,
) -> Result<Ingested, DataError> {
    let (instances, bad_i) = lenient_jsonl::<Instance>(instances_path)?;
    let (truths, bad_t) = lenient_jsonl::<Truth>(truth_path)?;
    let mut labels = HashMap::new();
    for t in truths {
        let label = match t.truth_class.as_str() {
            "clickbait" => 1u8,
            "no-clickbait" => 0,
            other => {
                return Err(DataError::Invalid(format!(
                    "id {}: unknown truthClass {other:?}",
                    t.id
                )))
            }
        };
        if labels.insert(t.id.clone(), label).is_some() {
            return Err(DataError::DuplicateId(t.id));
        }
    }
    unique_ids(instances.iter().map(|r| r.id.as_str()))?;
    let mut report = IngestReport {
        malformed_lines: bad_i + bad_t,
        ..Default::default()
    };
    let (mut titles, mut contents) = (Vec::new(), Vec::new());
    let mut matched = 0;
    for inst in instances {
        let label = *labels
            .get(&inst.id)
            .ok_or_else(|| DataError::MissingTruth(inst.id.clone()))?;
        matched += 1;
        let title = inst.target_title.unwrap_or_default();
        let content = match field {
            ContentField::TargetDescription => inst.target_description.unwrap_or_default(),
            ContentField::TargetParagraphs => inst.target_paragraphs.unwrap_or_default().join(" "),
        };
        if title.trim().is_empty() || content.trim().is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        titles.push(TitleRecord {
            id: inst.id.clone(),
            title,
            label,
        });
        contents.push(ContentRecord {
            id: inst.id,
            content,
        });
    }
    report.unmatched_truth = labels.len() - matched;
    report.records = titles.len();
    if report.dropped_empty > 0 {
        log::warn!(
            "dropped {} records with an empty title or content",
            report.dropped_empty
        );
    }
    Ok(Ingested {
        titles,
        contents,
        report,
    })
}
