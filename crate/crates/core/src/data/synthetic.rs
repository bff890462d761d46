//! Built-in generators so every command can run without external downloads.

use crate::data::corpus::{ContentRecord, TitleRecord};
use crate::rng::{mix, SplitMix64};

const INTERACTION_STREAM: u64 = 0xDA7A_0001;
const DEMO_STREAM: u64 = 0xDA7A_0002;

/// Draw `k` distinct values from `0..n`, excluding `avoid`, in random order.
fn distinct(rng: &mut SplitMix64, n: usize, k: usize, avoid: &[usize]) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).filter(|i| !avoid.contains(i)).collect();
    rng.shuffle(&mut pool);
    pool.truncate(k);
    pool
}

/// Samples whose label is 1 exactly when the title and content token sets are
/// disjoint. A title is `sizes.0` distinct tokens from `w00..`, a content
/// `sizes.1`; a negative shares exactly one token. Either side alone is a
/// uniformly random set in both classes, so a one-sided model sees no signal.
pub fn interaction_dataset(
    n: usize,
    vocab: usize,
    sizes: (usize, usize),
    seed: u64,
) -> (Vec<TitleRecord>, Vec<ContentRecord>) {
    let (kt, kc) = sizes;
    assert!(kt >= 1 && kc >= 1, "sets must be non-empty");
    assert!(vocab >= kt + kc, "vocabulary too small for disjoint sets");
    let mut rng = SplitMix64::new(mix(seed, INTERACTION_STREAM));
    let word = |i: usize| format!("w{i:02}");
    let join = |v: &[usize]| v.iter().map(|&i| word(i)).collect::<Vec<_>>().join(" ");
    let mut titles = Vec::with_capacity(n);
    let mut contents = Vec::with_capacity(n);
    for s in 0..n {
        let title = distinct(&mut rng, vocab, kt, &[]);
        let label = rng.below(2) as u8;
        let content = if label == 1 {
            distinct(&mut rng, vocab, kc, &title)
        } else {
            let shared = title[rng.below(kt as u64) as usize];
            let mut c = distinct(&mut rng, vocab, kc - 1, &title);
            c.insert(rng.below(kc as u64) as usize, shared);
            c
        };
        let id = format!("s{s:06}");
        titles.push(TitleRecord {
            id: id.clone(),
            title: join(&title),
            label,
        });
        contents.push(ContentRecord {
            id,
            content: join(&content),
        });
    }
    (titles, contents)
}

const TOPICS: [&str; 24] = [
    "election",
    "football",
    "recipe",
    "galaxy",
    "vaccine",
    "startup",
    "volcano",
    "museum",
    "guitar",
    "bitcoin",
    "wildfire",
    "marathon",
    "satellite",
    "orchestra",
    "drought",
    "robot",
    "glacier",
    "festival",
    "pandemic",
    "telescope",
    "senate",
    "tornado",
    "olympics",
    "earthquake",
];

const TITLE_FRAMES: [&str; 4] = [
    "You won't believe what happened with the {0}, the {1} and the {2}!",
    "The {0} and {1}: this {2} story will SHOCK you",
    "{0}, {1}, {2}. What comes next is incredible",
    "Breaking: {0} meets {1} as {2} looms",
];

const CONTENT_FRAMES: [&str; 3] = [
    "A detailed report on the {0}, covering the {1} and the latest {2} news.",
    "Officials discussed {0} policy today; experts on {1} and {2} were present.",
    "Our correspondent explains how the {0} affects the {1}, with notes on {2}.",
];

fn fill(frame: &str, words: &[usize]) -> String {
    (0..3).fold(frame.to_string(), |s, i| {
        s.replace(&format!("{{{i}}}"), TOPICS[words[i]])
    })
}

/// A small English-looking corpus with the same title/content interaction
/// rule, stop words and punctuation included. About 5% of ids exist on only
/// one side so sample alignment has something to do.
pub fn demo_corpus(n: usize, seed: u64) -> (Vec<TitleRecord>, Vec<ContentRecord>) {
    let mut rng = SplitMix64::new(mix(seed, DEMO_STREAM));
    let mut titles = Vec::new();
    let mut contents = Vec::new();
    for s in 0..n {
        let t = distinct(&mut rng, TOPICS.len(), 3, &[]);
        let label = rng.below(2) as u8;
        let c = if label == 1 {
            distinct(&mut rng, TOPICS.len(), 3, &t)
        } else {
            let mut c = distinct(&mut rng, TOPICS.len(), 2, &t);
            c.insert(rng.below(3) as usize, t[rng.below(3) as usize]);
            c
        };
        let title = fill(TITLE_FRAMES[rng.below(4) as usize], &t);
        let content = fill(CONTENT_FRAMES[rng.below(3) as usize], &c);
        let id = format!("post-{s:05}");
        match rng.below(40) {
            0 => titles.push(TitleRecord { id, title, label }),
            1 => contents.push(ContentRecord { id, content }),
            _ => {
                titles.push(TitleRecord {
                    id: id.clone(),
                    title,
                    label,
                });
                contents.push(ContentRecord { id, content });
            }
        }
    }
    (titles, contents)
}
