//! NL-side data augmentation: paraphrase substitution from the PPDB-format
//! index and word dropout, producing duplicate pairs whose SQL never
//! changes.
//!
//! Paraphrasing scans token n-grams longest-match-first (up to trigrams,
//! left to right); each indexed match is replaced with probability
//! `paraphrase_prob` by a target sampled proportionally to its score among
//! the top ten candidates. Dropout removes unprotected tokens independently
//! and rolls excess drops back right-to-left so at least
//! `min_tokens_remaining` tokens survive. Placeholders, schema surface
//! forms, and comparator words are never touched. RNG streams derive from
//! (seed, pair index, op, attempt), so results are independent of worker
//! order and count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeSet, HashSet};
use thiserror::Error;

use crate::paraphrase::{lookup_paraphrases, ParaphraseIndex};
use crate::pairs::TrainingPair;
use crate::schema::Schema;
use crate::text::{
    capitalize_first, detokenize, is_placeholder_token, normalize, starts_capitalized, tokenize,
};

/// Paraphrase targets are sampled among this many top-scored candidates.
const SAMPLE_TOP_K: usize = 10;
/// Longest n-gram considered for paraphrase lookup.
const MAX_NGRAM: usize = 3;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("min_tokens_remaining must be at least 1")]
    BadMinTokens,
}

#[derive(Debug, Clone, Serialize)]
pub struct AugmentationParams {
    /// Paraphrase attempts per input pair.
    pub paraphrase_duplicates: usize,
    /// Probability that a matched token/subphrase is replaced.
    pub paraphrase_prob: f64,
    /// Dropout attempts per input pair.
    pub dropout_duplicates: usize,
    /// Per-token drop probability.
    pub dropout_prob: f64,
    pub min_tokens_remaining: usize,
    pub seed: u64,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        AugmentationParams {
            paraphrase_duplicates: 3,
            paraphrase_prob: 0.3,
            dropout_duplicates: 1,
            dropout_prob: 0.15,
            min_tokens_remaining: 3,
            seed: 0,
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for p in [self.paraphrase_prob, self.dropout_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::BadProbability(p));
            }
        }
        if self.min_tokens_remaining == 0 {
            return Err(AugmentError::BadMinTokens);
        }
        Ok(())
    }
}

/// Tokens dropout must never remove: schema surface words plus the
/// comparator words the generator emits. Placeholders are protected
/// structurally.
#[derive(Debug, Clone, Default)]
pub struct ProtectedVocab {
    words: BTreeSet<String>,
}

const COMPARATOR_WORDS: [&str; 9] =
    ["is", "less", "greater", "than", "at", "most", "least", "above", "below"];

impl ProtectedVocab {
    pub fn empty() -> Self {
        ProtectedVocab { words: COMPARATOR_WORDS.iter().map(|w| w.to_string()).collect() }
    }

    /// Protects every word of every table and column surface form.
    pub fn from_schema(schema: &Schema) -> Self {
        let mut vocab = Self::empty();
        for table in &schema.tables {
            for word in table.surface().split_whitespace() {
                vocab.words.insert(normalize(word));
            }
            for column in &table.columns {
                for synonym in &column.synonyms {
                    for word in synonym.split_whitespace() {
                        vocab.words.insert(normalize(word));
                    }
                }
                for word in column.name.split('_') {
                    vocab.words.insert(normalize(word));
                }
            }
        }
        vocab
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&normalize(token))
    }
}

/// Derives the RNG stream for one augmentation attempt.
pub fn attempt_rng(seed: u64, pair_index: usize, op: u64, attempt: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::text::stream_seed(&[
        seed,
        pair_index as u64,
        op,
        attempt as u64,
    ]))
}

fn window_has_placeholder(tokens: &[String]) -> bool {
    tokens.iter().any(|t| is_placeholder_token(t))
}

/// Replaces randomly selected words/subphrases of the NL side with
/// paraphrases from the index, leaving everything else untouched. Returns
/// `None` when no replacement happened (no-op duplicates are discarded).
pub fn paraphrase_pair(
    pair: &TrainingPair,
    index: &ParaphraseIndex,
    params: &AugmentationParams,
    rng: &mut ChaCha8Rng,
) -> Option<TrainingPair> {
    if index.is_empty() || pair.nl.is_empty() {
        return None;
    }
    let tokens = tokenize(&pair.nl);
    let max_ngram = MAX_NGRAM.min(index.max_source_words().max(1));
    let mut output: Vec<String> = Vec::with_capacity(tokens.len());
    let mut replacements = 0;
    let mut i = 0;
    while i < tokens.len() {
        // longest match at this position
        let mut matched: Option<(usize, String)> = None;
        for n in (1..=max_ngram.min(tokens.len() - i)).rev() {
            let window = &tokens[i..i + n];
            if window_has_placeholder(window) {
                continue;
            }
            let phrase = window.join(" ");
            if !index.lookup(&phrase).is_empty() {
                matched = Some((n, phrase));
                break;
            }
        }
        let Some((n, phrase)) = matched else {
            output.push(tokens[i].clone());
            i += 1;
            continue;
        };
        if rng.gen::<f64>() >= params.paraphrase_prob {
            output.push(tokens[i].clone());
            i += 1;
            continue;
        }
        let candidates = lookup_paraphrases(index, &phrase, SAMPLE_TOP_K);
        let total: f64 = candidates.iter().map(|e| e.score).sum();
        let target = if total > 0.0 {
            let mut draw = rng.gen_range(0.0..total);
            let mut chosen = &candidates[candidates.len() - 1];
            for entry in candidates {
                if draw < entry.score {
                    chosen = entry;
                    break;
                }
                draw -= entry.score;
            }
            chosen
        } else {
            &candidates[rng.gen_range(0..candidates.len())]
        };
        let mut target_tokens: Vec<String> =
            target.target.split_whitespace().map(str::to_string).collect();
        if starts_capitalized(&tokens[i]) && !target_tokens.is_empty() {
            target_tokens[0] = capitalize_first(&target_tokens[0]);
        }
        output.extend(target_tokens);
        replacements += 1;
        i += n;
    }
    if replacements == 0 {
        return None;
    }
    let mut augmented = pair.clone();
    augmented.nl = detokenize(&output);
    augmented.augmentations.push("paraphrase".to_string());
    Some(augmented)
}

/// Drops unprotected tokens independently with `dropout_prob`, rolling back
/// right-to-left if fewer than `min_tokens_remaining` tokens would survive.
/// Returns `None` when nothing was dropped or the pair is too short.
pub fn dropout_pair(
    pair: &TrainingPair,
    params: &AugmentationParams,
    protected: &ProtectedVocab,
    rng: &mut ChaCha8Rng,
) -> Option<TrainingPair> {
    let tokens = tokenize(&pair.nl);
    if tokens.len() <= params.min_tokens_remaining {
        return None;
    }
    let mut dropped: Vec<usize> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        if is_placeholder_token(token) || protected.contains(token) {
            continue;
        }
        if rng.gen::<f64>() < params.dropout_prob {
            dropped.push(i);
        }
    }
    // roll back excess drops right-to-left
    while tokens.len() - dropped.len() < params.min_tokens_remaining {
        dropped.pop();
    }
    if dropped.is_empty() {
        return None;
    }
    let drop_set: BTreeSet<usize> = dropped.into_iter().collect();
    let kept: Vec<&String> =
        tokens.iter().enumerate().filter(|(i, _)| !drop_set.contains(i)).map(|(_, t)| t).collect();
    let mut augmented = pair.clone();
    augmented.nl = detokenize(&kept);
    augmented.augmentations.push("dropout".to_string());
    Some(augmented)
}

/// Expands the corpus with paraphrase and dropout duplicates, removing
/// exact duplicates. The input pairs always survive, so the output is
/// never smaller than the input; with all-zero parameters it is identical.
pub fn augment(
    pairs: &[TrainingPair],
    index: &ParaphraseIndex,
    params: &AugmentationParams,
    protected: &ProtectedVocab,
) -> Result<Vec<TrainingPair>, AugmentError> {
    params.validate()?;
    let per_pair: Vec<Vec<TrainingPair>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let mut derived = Vec::new();
            for attempt in 0..params.paraphrase_duplicates {
                let mut rng = attempt_rng(params.seed, i, 1, attempt);
                if let Some(mut p) = paraphrase_pair(pair, index, params, &mut rng) {
                    p.seed_lineage = format!("aug:paraphrase:p{i}:a{attempt}");
                    derived.push(p);
                }
            }
            for attempt in 0..params.dropout_duplicates {
                let mut rng = attempt_rng(params.seed, i, 2, attempt);
                if let Some(mut p) = dropout_pair(pair, params, protected, &mut rng) {
                    p.seed_lineage = format!("aug:dropout:p{i}:a{attempt}");
                    derived.push(p);
                }
            }
            derived
        })
        .collect();

    let mut output: Vec<TrainingPair> = pairs.to_vec();
    let mut seen: HashSet<(String, String)> =
        pairs.iter().map(|p| (p.nl.clone(), p.sql.clone())).collect();
    for derived in per_pair {
        for pair in derived {
            if seen.insert((pair.nl.clone(), pair.sql.clone())) {
                output.push(pair);
            }
        }
    }
    Ok(output)
}
