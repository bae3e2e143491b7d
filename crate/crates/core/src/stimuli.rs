//! Stimulus materials: built-in word sets, priming triples loaded from a
//! corpus file, vowel-free catch-trial nonwords, and anchoring sequences.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Associations at or above this value disqualify an unrelated prime.
pub const UNRELATED_ASSOCIATION_CUTOFF: f64 = 0.2;

/// Target lengths used by the priming battery.
pub const PRIMING_LENGTHS: [usize; 3] = [4, 5, 6];

pub const CONSONANTS: &[u8; 21] = b"bcdfghjklmnpqrstvwxyz";

/// Characters that never merge into multi-character tokens as long as no
/// character repeats back to back.
pub const ANCHOR_ALPHABET: [char; 6] = ['!', '#', '%', '^', '&', '*'];

pub const SMALL_ANCHOR_RANGE: (u32, u32) = (10, 29);
pub const LARGE_ANCHOR_RANGE: (u32, u32) = (71, 90);

#[derive(Debug, Error)]
pub enum StimuliError {
    #[error("cannot read priming corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("priming corpus line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("requested {requested} distinct nonwords of length {length}, only {available} exist")]
    NonwordSpaceExhausted {
        requested: usize,
        length: usize,
        available: u128,
    },
    #[error("stimulus length must be at least 1")]
    ZeroLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    Animal,
    NumberWord,
    Month,
    Letter,
    Nonword,
    CharSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusItem {
    pub text: String,
    pub ordinal_rank: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSet {
    pub name: String,
    pub kind: SetKind,
    pub items: Vec<StimulusItem>,
}

impl StimulusSet {
    fn ranked(name: &str, kind: SetKind, words: &[&str]) -> Self {
        let items = words
            .iter()
            .zip(1u32..)
            .map(|(w, rank)| StimulusItem {
                text: (*w).to_string(),
                ordinal_rank: rank,
                magnitude: None,
            })
            .collect();
        Self { name: name.to_string(), kind, items }
    }

    fn numbers(name: &str, words: &[&str], step: f64) -> Self {
        let mut set = Self::ranked(name, SetKind::NumberWord, words);
        for item in &mut set.items {
            item.magnitude = Some(f64::from(item.ordinal_rank) * step);
        }
        set
    }

    pub fn get(&self, text: &str) -> Option<&StimulusItem> {
        self.items.iter().find(|i| i.text == text)
    }

    /// True when every item has the same letter count, so letter spacing
    /// adds the same load to each stimulus.
    pub fn fixed_length(&self) -> bool {
        let mut lens = self.items.iter().map(|i| i.text.chars().count());
        match lens.next() {
            Some(first) => lens.all(|l| l == first),
            None => true,
        }
    }

    /// Checks the set invariants: trimmed nonempty text, unique ascending
    /// ranks, magnitudes on every number word.
    pub fn validate(&self) -> Result<(), String> {
        let mut prev: Option<u32> = None;
        for item in &self.items {
            if item.text.is_empty() || item.text.trim() != item.text {
                return Err(format!("{}: item {:?} is empty or padded", self.name, item.text));
            }
            if prev.is_some_and(|p| p >= item.ordinal_rank) {
                return Err(format!("{}: ranks not strictly ascending at {:?}", self.name, item.text));
            }
            prev = Some(item.ordinal_rank);
            if self.kind == SetKind::NumberWord && item.magnitude.is_none() {
                return Err(format!("{}: number word {:?} lacks a magnitude", self.name, item.text));
            }
        }
        Ok(())
    }
}

/// The fixed stimulus sets, keyed by set name.
pub fn builtin_sets() -> BTreeMap<String, StimulusSet> {
    use SetKind::*;
    let sets = [
        StimulusSet::ranked("3-animals", Animal, &["ant", "bat", "owl", "cat", "pig", "cow"]),
        StimulusSet::ranked("4-animals", Animal, &["moth", "frog", "duck", "goat", "puma", "bear"]),
        StimulusSet::ranked("5-animals", Animal, &["snail", "raven", "koala", "camel", "whale"]),
        StimulusSet::ranked(
            "paivio",
            Animal,
            &["ant", "rat", "goose", "wolf", "donkey", "bear", "whale"],
        ),
        StimulusSet::numbers(
            "digits",
            &["one", "two", "three", "four", "five", "six", "seven", "eight", "nine"],
            1.0,
        ),
        StimulusSet::numbers(
            "tens",
            &["ten", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"],
            10.0,
        ),
        StimulusSet::numbers(
            "hundreds",
            &[
                "one hundred",
                "two hundred",
                "three hundred",
                "four hundred",
                "five hundred",
                "six hundred",
                "seven hundred",
                "eight hundred",
                "nine hundred",
            ],
            100.0,
        ),
        StimulusSet::ranked(
            "months",
            Month,
            &["January", "February", "March", "April", "May", "June", "July", "August", "September"],
        ),
        StimulusSet::ranked("letters", Letter, &["a", "b", "c", "d", "e", "f", "g", "h", "i"]),
    ];
    sets.into_iter().map(|s| (s.name.clone(), s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimingTriple {
    pub target: String,
    pub related_prime: String,
    pub unrelated_prime: String,
    pub related_association: f64,
    pub unrelated_association: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrimingCorpus {
    pub triples: Vec<PrimingTriple>,
    /// Records with no unrelated word below the association cutoff.
    pub excluded_association: usize,
    /// Records whose target is not 4, 5 or 6 letters long.
    pub excluded_length: usize,
}

impl PrimingCorpus {
    pub fn excluded(&self) -> usize {
        self.excluded_association + self.excluded_length
    }
}

fn parse_score(field: &str, line: usize) -> Result<f64, StimuliError> {
    let v: f64 = field.trim().parse().map_err(|_| StimuliError::Malformed {
        line,
        reason: format!("association score {field:?} is not a number"),
    })?;
    if !(0.0..=1.0).contains(&v) {
        return Err(StimuliError::Malformed {
            line,
            reason: format!("association score {v} outside [0, 1]"),
        });
    }
    Ok(v)
}

fn parse_word(field: &str, line: usize) -> Result<String, StimuliError> {
    let w = field.trim();
    if w.is_empty() {
        return Err(StimuliError::Malformed { line, reason: "empty word field".into() });
    }
    Ok(w.to_string())
}

/// Parses a tab-separated priming corpus.
///
/// Each record is `target, related, related-score, unrelated, unrelated-score`
/// optionally followed by further `unrelated, score` pairs. Blank lines and
/// lines starting with `#` are skipped. When several unrelated words fall
/// below the cutoff, the one with the lowest score becomes the prime.
pub fn parse_priming_triples(text: &str) -> Result<PrimingCorpus, StimuliError> {
    let mut corpus = PrimingCorpus::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() < 5 || !(fields.len() - 3).is_multiple_of(2) {
            return Err(StimuliError::Malformed {
                line,
                reason: format!(
                    "expected target, related, score and one or more (unrelated, score) pairs; got {} fields",
                    fields.len()
                ),
            });
        }
        let target = parse_word(fields[0], line)?;
        let related_prime = parse_word(fields[1], line)?;
        let related_association = parse_score(fields[2], line)?;
        let mut best: Option<(String, f64)> = None;
        for pair in fields[3..].chunks(2) {
            let word = parse_word(pair[0], line)?;
            let score = parse_score(pair[1], line)?;
            if score < UNRELATED_ASSOCIATION_CUTOFF && best.as_ref().is_none_or(|(_, s)| score < *s) {
                best = Some((word, score));
            }
        }
        let Some((unrelated_prime, unrelated_association)) = best else {
            corpus.excluded_association += 1;
            continue;
        };
        if !PRIMING_LENGTHS.contains(&target.chars().count()) {
            corpus.excluded_length += 1;
            continue;
        }
        corpus.triples.push(PrimingTriple {
            target,
            related_prime,
            unrelated_prime,
            related_association,
            unrelated_association,
        });
    }
    Ok(corpus)
}

pub fn load_priming_triples(path: &Path) -> Result<PrimingCorpus, StimuliError> {
    let text = fs::read_to_string(path).map_err(|source| StimuliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_priming_triples(&text)
}

/// Small illustrative corpus shipped with the crate.
pub const SAMPLE_PRIMING_CORPUS: &str = include_str!("../data/priming_sample.tsv");

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSelection {
    pub triples: Vec<PrimingTriple>,
    /// Lengths for which fewer than `per_length` triples were available.
    pub short_lengths: Vec<usize>,
}

/// Picks up to `per_length` strongest-association triples for each of
/// `lengths`, ties broken by target text.
pub fn select_priming_targets(triples: &[PrimingTriple], lengths: &[usize], per_length: usize) -> TargetSelection {
    let mut selected = Vec::new();
    let mut short_lengths = Vec::new();
    for &len in lengths {
        let mut bucket: Vec<&PrimingTriple> = triples
            .iter()
            .filter(|t| t.target.chars().count() == len)
            .collect();
        bucket.sort_by(|a, b| {
            b.related_association
                .total_cmp(&a.related_association)
                .then_with(|| a.target.cmp(&b.target))
        });
        if bucket.len() < per_length {
            log::warn!("only {} priming targets of length {len} (wanted {per_length})", bucket.len());
            short_lengths.push(len);
        }
        selected.extend(bucket.into_iter().take(per_length).cloned());
    }
    TargetSelection { triples: selected, short_lengths }
}

pub fn is_vowel_free(s: &str) -> bool {
    !s.chars().any(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'))
}

/// `count` distinct lowercase consonant strings of `length` letters.
pub fn generate_nonwords(count: usize, length: usize, seed: u64) -> Result<Vec<StimulusItem>, StimuliError> {
    if length == 0 {
        return Err(StimuliError::ZeroLength);
    }
    let available = (CONSONANTS.len() as u128).checked_pow(length as u32).unwrap_or(u128::MAX);
    if count as u128 > available {
        return Err(StimuliError::NonwordSpaceExhausted { requested: count, length, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = if (count as u128) * 2 > available {
        // dense request: enumerate the whole space and shuffle
        let mut all: Vec<String> = (0..available as usize)
            .map(|mut code| {
                let mut w = vec![0u8; length];
                for slot in w.iter_mut().rev() {
                    *slot = CONSONANTS[code % CONSONANTS.len()];
                    code /= CONSONANTS.len();
                }
                String::from_utf8(w).expect("ascii")
            })
            .collect();
        all.shuffle(&mut rng);
        all.truncate(count);
        all
    } else {
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let w: String = (0..length)
                .map(|_| CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char)
                .collect();
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    };
    Ok(words
        .into_iter()
        .zip(1u32..)
        .map(|(text, ordinal_rank)| StimulusItem { text, ordinal_rank, magnitude: None })
        .collect())
}

/// Random sequence over [`ANCHOR_ALPHABET`] with no two equal neighbours.
pub fn anchor_sequence_with<R: RngCore + ?Sized>(length: usize, rng: &mut R) -> String {
    let mut out = String::with_capacity(length);
    let mut prev: Option<usize> = None;
    for _ in 0..length {
        let idx = match prev {
            None => rng.random_range(0..ANCHOR_ALPHABET.len()),
            Some(p) => {
                // draw from the five characters other than the previous one
                let k = rng.random_range(0..ANCHOR_ALPHABET.len() - 1);
                if k >= p {
                    k + 1
                } else {
                    k
                }
            }
        };
        out.push(ANCHOR_ALPHABET[idx]);
        prev = Some(idx);
    }
    out
}

pub fn generate_anchor_sequence(length: usize, seed: u64) -> String {
    anchor_sequence_with(length, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorCategory {
    Small,
    Large,
}

impl AnchorCategory {
    pub fn range(self) -> (u32, u32) {
        match self {
            AnchorCategory::Small => SMALL_ANCHOR_RANGE,
            AnchorCategory::Large => LARGE_ANCHOR_RANGE,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AnchorCategory::Small => "small-anchor",
            AnchorCategory::Large => "large-anchor",
        }
    }
}

/// Uniform draw from the category's inclusive range.
pub fn sample_anchor<R: RngCore + ?Sized>(category: AnchorCategory, rng: &mut R) -> u32 {
    let (lo, hi) = category.range();
    rng.random_range(lo..=hi)
}
