use std::collections::HashSet;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

/// The shipped English stop-word list, one lowercase word per line.
pub const STOPWORDS_TEXT: &str = include_str!("stopwords.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_TEXT.lines().filter(|l| !l.is_empty()).collect())
}

/// SHA-256 of the stop-word file, recorded in run manifests.
pub fn stopwords_digest() -> String {
    hex::encode(Sha256::digest(STOPWORDS_TEXT.as_bytes()))
}

/// Codepoints removed before tokenizing: controls, invisible format
/// characters, private-use and noncharacters.
fn is_illegal(c: char) -> bool {
    let u = c as u32;
    c.is_control()
        || matches!(u, 0x00AD | 0x061C | 0x180E | 0x200B..=0x200F | 0x202A..=0x202E | 0x2060..=0x206F | 0xFEFF)
        || matches!(u, 0xE000..=0xF8FF | 0xF0000..=0x10FFFF | 0xFFF9..=0xFFFB)
        || (u & 0xFFFE) == 0xFFFE
        || (0xFDD0..=0xFDEF).contains(&u)
}

/// Normalize, clean, lowercase and tokenize `text`, dropping stop words and
/// keeping at most `max_len` tokens.
pub fn preprocess(text: &str, max_len: usize) -> Vec<String> {
    let cleaned: String = text.nfc().filter(|&c| !is_illegal(c)).collect();
    let lowered: String = cleaned.to_lowercase().nfc().collect();
    let stop = stopwords();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !stop.contains(t))
        .take(max_len)
        .map(String::from)
        .collect()
}
