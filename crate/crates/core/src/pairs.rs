//! Training-pair records, the line-oriented corpus file format, and run
//! manifests.
//!
//! Corpus files hold one JSON record per line with a stable field order:
//! `{nl, sql, template_id, category, augmentations, seed_lineage}`. Every
//! produced output file is accompanied by a `<name>.manifest.json` sidecar
//! recording the config snapshot, input digests, catalog version, seed, and
//! counts.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

use crate::templates::ParaphraseCategory;
use crate::text::{is_placeholder_token, tokenize};

#[derive(Debug, Error)]
pub enum PairsError {
    #[error("pair record parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One NL-SQL training pair, possibly containing placeholder tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub nl: String,
    pub sql: String,
    pub template_id: String,
    pub category: ParaphraseCategory,
    /// Applied augmentation op tags, in order.
    pub augmentations: Vec<String>,
    /// RNG stream id recording how this pair was derived.
    pub seed_lineage: String,
}

impl TrainingPair {
    /// Placeholder tokens in the NL side, as a multiset.
    pub fn nl_placeholders(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for tok in tokenize(&self.nl) {
            if is_placeholder_token(&tok) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Placeholder tokens in the SQL side, as a multiset.
    pub fn sql_placeholders(&self) -> Result<BTreeMap<String, usize>, crate::sql::SqlError> {
        let mut counts = BTreeMap::new();
        for tok in crate::sql::extract_placeholders(&self.sql)? {
            *counts.entry(tok).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// The placeholder-multiset invariant: NL and SQL placeholders agree.
    pub fn placeholders_balanced(&self) -> bool {
        match self.sql_placeholders() {
            Ok(sql) => self.nl_placeholders() == sql,
            Err(_) => false,
        }
    }
}

/// Writes pairs as JSON lines in input order.
pub fn write_pairs<W: Write>(mut w: W, pairs: &[TrainingPair]) -> Result<(), PairsError> {
    for pair in pairs {
        serde_json::to_writer(&mut w, pair)
            .map_err(|e| PairsError::Parse { line: 0, message: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL corpus file.
pub fn read_pairs<R: BufRead>(r: R) -> Result<Vec<TrainingPair>, PairsError> {
    let mut pairs = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TrainingPair = serde_json::from_str(&line)
            .map_err(|e| PairsError::Parse { line: idx + 1, message: e.to_string() })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn pairs_to_string(pairs: &[TrainingPair]) -> String {
    let mut buf = Vec::new();
    write_pairs(&mut buf, pairs).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("serde_json emits utf-8")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Sidecar manifest emitted alongside every command output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u64,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub counts: BTreeMap<String, u64>,
    pub wall_time_ms: u128,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Manifest {
            format_version: 1,
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            catalog_version: None,
            seed: None,
            counts: BTreeMap::new(),
            wall_time_ms: 0,
        }
    }

    pub fn record_input(&mut self, path: &str, contents: &[u8]) {
        self.inputs.push(InputDigest { path: path.to_string(), sha256: sha256_hex(contents) });
    }

    /// `pairs.jsonl` -> `pairs.jsonl.manifest.json`
    pub fn sidecar_path(out_path: &str) -> String {
        format!("{out_path}.manifest.json")
    }
}
