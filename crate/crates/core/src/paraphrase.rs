//! PPDB-format paraphrase lexicon: `source<TAB>target[<TAB>score]` per line,
//! indexed by normalized source phrase with score-descending candidate lists.

use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::text::normalize;

#[derive(Debug, Error)]
pub enum ParaphraseError {
    #[error("min_score {0} outside [0, 1]")]
    BadMinScore(f64),
    #[error("max_per_source must be at least 1")]
    BadMaxPerSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParaphraseEntry {
    pub source: String,
    pub target: String,
    /// Normalized to [0, 1]; lines without a score default to 0.5.
    pub score: f64,
}

/// Map from normalized source phrase to candidates sorted by score
/// descending, ties broken lexicographically by target.
#[derive(Debug, Clone, Default)]
pub struct ParaphraseIndex {
    by_source: BTreeMap<String, Vec<ParaphraseEntry>>,
    max_source_words: usize,
}

impl ParaphraseIndex {
    pub fn lookup(&self, phrase: &str) -> &[ParaphraseEntry] {
        self.by_source.get(&normalize(phrase)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.by_source.is_empty()
    }

    /// Total entries across all sources.
    pub fn len(&self) -> usize {
        self.by_source.values().map(Vec::len).sum()
    }

    /// Longest source phrase in whitespace words; bounds the n-gram scan.
    pub fn max_source_words(&self) -> usize {
        self.max_source_words
    }

    pub fn sources(&self) -> impl Iterator<Item = &String> {
        self.by_source.keys()
    }
}

/// Per-line problems encountered while loading; lines are skipped, not fatal.
#[derive(Debug, Clone, Serialize)]
pub struct PpdbLoadReport {
    pub entries_kept: usize,
    pub lines_skipped: Vec<(usize, String)>,
}

/// Loads a paraphrase file, keeping entries with `score >= min_score` and at
/// most `max_per_source` targets per source. Malformed lines are reported
/// with their line number and skipped.
pub fn load_paraphrase_index(
    text: &str,
    min_score: f64,
    max_per_source: usize,
) -> Result<(ParaphraseIndex, PpdbLoadReport), ParaphraseError> {
    if !(0.0..=1.0).contains(&min_score) {
        return Err(ParaphraseError::BadMinScore(min_score));
    }
    if max_per_source == 0 {
        return Err(ParaphraseError::BadMaxPerSource);
    }

    let mut by_source: BTreeMap<String, Vec<ParaphraseEntry>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            skipped.push((line_no, format!("expected 2 or 3 tab-separated fields, got {}", fields.len())));
            continue;
        }
        let source = normalize(fields[0]);
        let target = fields[1].trim().to_string();
        if source.is_empty() || target.is_empty() {
            skipped.push((line_no, "empty source or target".into()));
            continue;
        }
        if source == normalize(&target) {
            skipped.push((line_no, "source equals target after normalization".into()));
            continue;
        }
        let score = match fields.get(2) {
            None => 0.5,
            Some(raw) => match raw.trim().parse::<f64>() {
                Ok(s) if s.is_finite() => s.clamp(0.0, 1.0),
                _ => {
                    skipped.push((line_no, format!("unparseable score `{}`", raw.trim())));
                    continue;
                }
            },
        };
        if score < min_score {
            continue;
        }
        by_source.entry(source.clone()).or_default().push(ParaphraseEntry {
            source,
            target,
            score,
        });
    }

    let mut index = ParaphraseIndex::default();
    for (source, mut entries) in by_source {
        // keep the best-scored entry per target, then rank
        entries.sort_by(|a, b| {
            a.target.cmp(&b.target).then(b.score.partial_cmp(&a.score).unwrap())
        });
        entries.dedup_by(|a, b| a.target == b.target);
        entries.sort_by(|a, b| {
            b.score.partial_cmp(&a.score).unwrap().then_with(|| a.target.cmp(&b.target))
        });
        entries.truncate(max_per_source);
        index.max_source_words =
            index.max_source_words.max(source.split_whitespace().count());
        index.by_source.insert(source, entries);
    }
    let report = PpdbLoadReport { entries_kept: index.len(), lines_skipped: skipped };
    Ok((index, report))
}

/// Top-k candidates for a phrase; empty when the phrase is absent.
pub fn lookup_paraphrases<'a>(
    index: &'a ParaphraseIndex,
    phrase: &str,
    k: usize,
) -> &'a [ParaphraseEntry] {
    let entries = index.lookup(phrase);
    &entries[..k.min(entries.len())]
}
