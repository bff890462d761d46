//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod conformance;
pub mod metric_oracles;

use std::collections::HashSet;

use fedsplit::data::{
    tokenize_contents, tokenize_titles, ContentRecord, TitleRecord, TokenizedView,
};
use fedsplit::model::Party;
use fedsplit::protocol::{
    decode_frame, Message, MsgType, WireRecord, DEFAULT_MAX_PAYLOAD, HEADER_LEN,
};
use fedsplit::runtime::TrainConfig;

pub fn views(
    cfg: &TrainConfig,
    t: &[TitleRecord],
    c: &[ContentRecord],
) -> (TokenizedView, TokenizedView) {
    (
        tokenize_titles(t, cfg.title_max_len, cfg.min_freq),
        tokenize_contents(c, cfg.content_max_len, cfg.min_freq),
    )
}

pub fn decode(wire: &[WireRecord]) -> Vec<(Party, Message)> {
    wire.iter()
        .map(|r| {
            let (frame, _) = decode_frame(&r.bytes, DEFAULT_MAX_PAYLOAD).unwrap();
            (r.from, Message::from_frame(&frame).unwrap())
        })
        .collect()
}

pub fn count(wire: &[WireRecord], kind: MsgType) -> usize {
    wire.iter().filter(|r| r.bytes[4] == kind as u8).count()
}

/// Byte strings that must never cross the wire.
pub struct Needles {
    pub items: Vec<(String, Vec<u8>)>,
}

fn le_u32(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn le_f32(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect()
}

impl Needles {
    /// Raw text, ids, token id sequences and label runs of both corpora.
    /// `label_runs` are label vectors in the orders a leak could take (aligned
    /// order, each batch's order).
    pub fn new(
        titles: &[TitleRecord],
        contents: &[ContentRecord],
        views: [&TokenizedView; 2],
        label_runs: &[Vec<u8>],
    ) -> Self {
        let mut items = Vec::new();
        for r in titles {
            items.push((format!("title text {}", r.id), r.title.as_bytes().to_vec()));
            items.push((format!("id {}", r.id), r.id.as_bytes().to_vec()));
        }
        for r in contents {
            items.push((
                format!("content text {}", r.id),
                r.content.as_bytes().to_vec(),
            ));
        }
        for v in views {
            for (_, w) in v
                .vocab()
                .words()
                .filter(|(_, w)| w.len() >= 4 && !w.starts_with('<'))
            {
                items.push((format!("word {w}"), w.as_bytes().to_vec()));
            }
            for (id, toks) in v.ids.iter().zip(&v.tokens) {
                if toks.len() >= 2 {
                    items.push((format!("token ids u32 {id}"), le_u32(toks)));
                    items.push((format!("token ids f32 {id}"), le_f32(toks)));
                }
            }
        }
        for (k, run) in label_runs.iter().enumerate() {
            if run.len() < 8 {
                continue;
            }
            let as_u32: Vec<u32> = run.iter().map(|&l| l as u32).collect();
            items.push((format!("labels u8 run {k}"), run.clone()));
            items.push((format!("labels u32 run {k}"), le_u32(&as_u32)));
            items.push((format!("labels f32 run {k}"), le_f32(&as_u32)));
        }
        Self { items }
    }

    /// Every needle found in any frame payload, with the frame index.
    pub fn scan(&self, payloads: &[&[u8]]) -> Vec<(usize, String)> {
        let short = self
            .items
            .iter()
            .map(|(_, b)| b.len())
            .min()
            .unwrap_or(4)
            .min(8);
        let mut windows: HashSet<&[u8]> = HashSet::new();
        for p in payloads {
            windows.extend(p.windows(short));
        }
        let mut hits = Vec::new();
        for (name, bytes) in &self.items {
            if bytes.len() < short || !windows.contains(&bytes[..short]) {
                continue;
            }
            for (i, p) in payloads.iter().enumerate() {
                if p.windows(bytes.len()).any(|w| w == bytes.as_slice()) {
                    hits.push((i, name.clone()));
                }
            }
        }
        hits
    }
}

pub fn payloads(wire: &[WireRecord]) -> Vec<&[u8]> {
    wire.iter().map(|r| &r.bytes[HEADER_LEN..]).collect()
}
