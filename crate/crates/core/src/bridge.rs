//! Runtime bridge between natural language and executable SQL: constant
//! anonymization to placeholder tokens, placeholder re-binding, the
//! translator plug point, and a token-overlap baseline translator.
//!
//! Placeholders are named `@COLUMN` (uppercased), `@TABLE_COLUMN` when the
//! column name occurs in more than one table, with a `_k` ordinal suffix
//! appended iff the same column is anonymized more than once in one query.
//! Anonymization is span-based over the original string, so substituting
//! the recorded constants back reproduces the input byte-for-byte.

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use thiserror::Error;

use crate::pairs::TrainingPair;
use crate::schema::{Schema, ValueIndex};
use crate::sql;
use crate::text::{is_numeric_literal, is_placeholder_token, normalize, tokenize};

/// Words from 2 tokens away can disambiguate an ambiguous value hit.
const DISAMBIGUATION_WINDOW: usize = 2;
/// A numeric literal is recognized when a numeric column surface ends at
/// most this many words before it (covers "greater than", "at least").
const NUMERIC_CUE_WINDOW: usize = 3;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("translator corpus is empty")]
    EmptyCorpus,
    #[error("unbound placeholder {0}")]
    UnboundPlaceholder(String),
    #[error("binding for `{constant}` is ambiguous and unresolved")]
    AmbiguousBinding { constant: String },
    #[error("constant `{constant}` is not numeric but {placeholder} binds a numeric column")]
    IncompatibleConstant { placeholder: String, constant: String },
    #[error("placeholder {0} does not resolve to a schema column")]
    UnknownPlaceholderColumn(String),
    #[error("literal {0} not found while anonymizing SQL")]
    LiteralNotFound(String),
    #[error("bound SQL does not parse: {0}")]
    InvalidBoundSql(String),
    #[error("translator subprocess error: {0}")]
    Subprocess(String),
}

/// A placeholder token and the schema column it stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placeholder {
    pub token: String,
    pub table: String,
    pub column: String,
    pub ordinal: Option<usize>,
}

/// Base placeholder name for a column: `COLUMN`, or `TABLE_COLUMN` when the
/// column name occurs in more than one table of the schema.
pub fn placeholder_base(schema: &Schema, table: &str, column: &str) -> String {
    if schema.tables_with_column(column) > 1 {
        format!("{}_{}", table.to_uppercase(), column.to_uppercase())
    } else {
        column.to_uppercase()
    }
}

/// Assigns tokens to column occurrences in order, adding `_k` ordinals only
/// when a column repeats. Used by both the generator and the anonymizer so
/// training-time and runtime naming always agree.
pub fn assign_placeholder_tokens(
    schema: &Schema,
    occurrences: &[(String, String)],
) -> Vec<Placeholder> {
    let mut totals: BTreeMap<(String, String), usize> = BTreeMap::new();
    for occ in occurrences {
        *totals.entry(occ.clone()).or_insert(0) += 1;
    }
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    occurrences
        .iter()
        .map(|(table, column)| {
            let base = placeholder_base(schema, table, column);
            let repeated = totals[&(table.clone(), column.clone())] > 1;
            let ordinal = if repeated {
                let k = seen.entry((table.clone(), column.clone())).or_insert(0);
                *k += 1;
                Some(*k)
            } else {
                None
            };
            let token = match ordinal {
                Some(k) => format!("@{base}_{k}"),
                None => format!("@{base}"),
            };
            Placeholder { token, table: table.clone(), column: column.clone(), ordinal }
        })
        .collect()
}

impl Placeholder {
    /// Inverts the naming scheme: recovers (table, column, ordinal) from a
    /// token. Tries the full body as a column name first, then strips a
    /// trailing `_k` ordinal.
    pub fn resolve_token(token: &str, schema: &Schema) -> Option<Placeholder> {
        let body = token.strip_prefix('@')?;
        let direct = Self::match_body(body, schema);
        if let Some((table, column)) = direct {
            return Some(Placeholder {
                token: token.to_string(),
                table,
                column,
                ordinal: None,
            });
        }
        let (stem, ord) = body.rsplit_once('_')?;
        let ordinal: usize = ord.parse().ok()?;
        let (table, column) = Self::match_body(stem, schema)?;
        Some(Placeholder { token: token.to_string(), table, column, ordinal: Some(ordinal) })
    }

    fn match_body(body: &str, schema: &Schema) -> Option<(String, String)> {
        for table in &schema.tables {
            for column in &table.columns {
                if placeholder_base(schema, &table.name, &column.name) == body {
                    return Some((table.name.clone(), column.name.clone()));
                }
            }
        }
        None
    }
}

/// One resolved constant replacement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binding {
    pub placeholder: Placeholder,
    /// Verbatim substring of the original NL.
    pub constant: String,
    /// Byte span of the constant in the original NL.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BindingEntry {
    Resolved(Binding),
    /// The constant was recognized but maps to several columns and no
    /// adjacent column cue settled it; the text is left unchanged.
    Ambiguous { constant: String, span: (usize, usize), candidates: Vec<(String, String)> },
}

/// Ordered replacements recorded by [`anonymize`]; applying them to the
/// anonymized NL reproduces the original input exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BindingMap {
    pub entries: Vec<BindingEntry>,
}

impl BindingMap {
    pub fn resolved(&self) -> impl Iterator<Item = &Binding> {
        self.entries.iter().filter_map(|e| match e {
            BindingEntry::Resolved(b) => Some(b),
            BindingEntry::Ambiguous { .. } => None,
        })
    }

    pub fn has_ambiguous(&self) -> bool {
        self.entries.iter().any(|e| matches!(e, BindingEntry::Ambiguous { .. }))
    }

    pub fn get(&self, token: &str) -> Option<&Binding> {
        self.resolved().find(|b| b.placeholder.token == token)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds a map from (placeholder, constant) pairs without NL spans,
    /// for callers that bind programmatically.
    pub fn manual(pairs: Vec<(Placeholder, String)>) -> Self {
        BindingMap {
            entries: pairs
                .into_iter()
                .map(|(placeholder, constant)| {
                    BindingEntry::Resolved(Binding { placeholder, constant, span: (0, 0) })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct WordSpan {
    start: usize,
    end: usize,
}

const TRIM_CHARS: &[char] = &['.', ',', '?', '!', ';', ':', '"', '\'', '(', ')'];

fn word_spans(text: &str) -> Vec<WordSpan> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
        .into_iter()
        .filter_map(|(mut s, mut e)| {
            while s < e && text[s..e].starts_with(TRIM_CHARS) {
                s += text[s..].chars().next().unwrap().len_utf8();
            }
            while s < e && text[s..e].ends_with(TRIM_CHARS) {
                e -= text[..e].chars().last().unwrap().len_utf8();
            }
            (s < e).then_some(WordSpan { start: s, end: e })
        })
        .collect()
}

/// checks whether `surface` occupies consecutive words ending (or starting)
/// within `window` words of the word range [lo, hi]
fn surface_near(
    words: &[&str],
    surface: &str,
    lo: usize,
    hi: usize,
    window: usize,
    before_only: bool,
) -> bool {
    let target: Vec<String> = surface.split_whitespace().map(normalize).collect();
    if target.is_empty() {
        return false;
    }
    let n = words.len();
    for p in 0..n {
        if p + target.len() > n {
            break;
        }
        if (0..target.len()).all(|k| normalize(words[p + k]) == target[k]) {
            let last = p + target.len() - 1;
            if last < lo {
                let dist = lo - last;
                if dist <= window {
                    return true;
                }
            } else if !before_only && p > hi {
                let dist = p - hi;
                if dist <= window {
                    return true;
                }
            }
        }
    }
    false
}

#[derive(Debug)]
enum MatchResolution {
    Resolved { table: String, column: String },
    Ambiguous { candidates: Vec<(String, String)> },
}

struct ConstantMatch {
    span: (usize, usize),
    constant: String,
    resolution: MatchResolution,
}

/// Output of [`anonymize`].
#[derive(Debug, Clone, Serialize)]
pub struct AnonymizeResult {
    pub anonymized: String,
    pub map: BindingMap,
    /// Unrecognized capitalized tokens and numerics without a column cue.
    pub diagnostics: Vec<String>,
}

/// Replaces recognized constants in an NL query with placeholder tokens.
///
/// Recognition is longest-match-first over word n-grams: a hit in the value
/// index, or a bare numeric literal preceded by a numeric column surface
/// form. Ambiguous hits (value present in several columns with no adjacent
/// column cue) are flagged in the map and left unchanged, never guessed.
pub fn anonymize(nl: &str, schema: &Schema, index: &ValueIndex) -> AnonymizeResult {
    let spans = word_spans(nl);
    let words: Vec<&str> = spans.iter().map(|s| &nl[s.start..s.end]).collect();
    let max_window = index.max_phrase_words().max(1);
    let mut matches: Vec<ConstantMatch> = Vec::new();
    let mut diagnostics = Vec::new();

    let mut i = 0;
    while i < words.len() {
        let mut advanced = false;
        let widest = max_window.min(words.len() - i);
        for w in (1..=widest).rev() {
            let raw = &nl[spans[i].start..spans[i + w - 1].end];
            if w == 1 && (is_numeric_literal(words[i]) || is_placeholder_token(words[i])) {
                continue;
            }
            let hits = index.lookup(raw);
            if hits.is_empty() {
                continue;
            }
            let mut candidates: Vec<(String, String)> = Vec::new();
            for h in hits {
                let key = (h.table.clone(), h.column.clone());
                if !candidates.contains(&key) {
                    candidates.push(key);
                }
            }
            let resolution = if candidates.len() == 1 {
                let (table, column) = candidates.remove(0);
                MatchResolution::Resolved { table, column }
            } else {
                let cued: Vec<(String, String)> = candidates
                    .iter()
                    .filter(|(t, c)| {
                        let col = schema.column(t, c);
                        col.map_or(false, |col| {
                            col.synonyms.iter().any(|syn| {
                                surface_near(&words, syn, i, i + w - 1, DISAMBIGUATION_WINDOW, false)
                            })
                        })
                    })
                    .cloned()
                    .collect();
                if cued.len() == 1 {
                    let (table, column) = cued.into_iter().next().unwrap();
                    MatchResolution::Resolved { table, column }
                } else {
                    MatchResolution::Ambiguous { candidates }
                }
            };
            matches.push(ConstantMatch {
                span: (spans[i].start, spans[i + w - 1].end),
                constant: raw.to_string(),
                resolution,
            });
            i += w;
            advanced = true;
            break;
        }
        if advanced {
            continue;
        }
        if is_numeric_literal(words[i]) {
            // numeric literals resolve by lexical shape plus a preceding
            // numeric-column surface cue; the value index is not consulted
            let mut best: Option<(usize, Vec<(String, String)>)> = None;
            for table in &schema.tables {
                for column in &table.columns {
                    if !column.data_kind.is_numeric() {
                        continue;
                    }
                    for dist in 1..=NUMERIC_CUE_WINDOW {
                        if dist > i {
                            break;
                        }
                        let lo = i - dist + 1;
                        let hit = column.synonyms.iter().any(|syn| {
                            let wlen = syn.split_whitespace().count();
                            if wlen == 0 || lo < wlen {
                                return false;
                            }
                            let p = lo - wlen;
                            (0..wlen).all(|k| {
                                normalize(words[p + k])
                                    == normalize(syn.split_whitespace().nth(k).unwrap())
                            })
                        });
                        if hit {
                            let entry = (table.name.clone(), column.name.clone());
                            match &mut best {
                                Some((d, cands)) if *d == dist => {
                                    if !cands.contains(&entry) {
                                        cands.push(entry);
                                    }
                                }
                                Some((d, _)) if *d < dist => {}
                                _ => best = Some((dist, vec![entry])),
                            }
                            break;
                        }
                    }
                }
            }
            match best {
                Some((_, mut cands)) if cands.len() == 1 => {
                    let (table, column) = cands.remove(0);
                    matches.push(ConstantMatch {
                        span: (spans[i].start, spans[i].end),
                        constant: words[i].to_string(),
                        resolution: MatchResolution::Resolved { table, column },
                    });
                }
                Some((_, cands)) => {
                    matches.push(ConstantMatch {
                        span: (spans[i].start, spans[i].end),
                        constant: words[i].to_string(),
                        resolution: MatchResolution::Ambiguous { candidates: cands },
                    });
                }
                None => diagnostics
                    .push(format!("numeric literal `{}` has no adjacent column cue", words[i])),
            }
        } else if i > 0
            && crate::text::starts_capitalized(words[i])
            && !is_placeholder_token(words[i])
        {
            diagnostics.push(format!("unrecognized capitalized token `{}`", words[i]));
        }
        i += 1;
    }

    // placeholder tokens for resolved matches, ordinals on repeats
    let resolved_columns: Vec<(String, String)> = matches
        .iter()
        .filter_map(|m| match &m.resolution {
            MatchResolution::Resolved { table, column } => Some((table.clone(), column.clone())),
            MatchResolution::Ambiguous { .. } => None,
        })
        .collect();
    let placeholders = assign_placeholder_tokens(schema, &resolved_columns);

    let mut anonymized = String::new();
    let mut entries = Vec::new();
    let mut prev_end = 0;
    let mut ph_iter = placeholders.into_iter();
    for m in matches {
        anonymized.push_str(&nl[prev_end..m.span.0]);
        match m.resolution {
            MatchResolution::Resolved { .. } => {
                let placeholder = ph_iter.next().expect("one placeholder per resolved match");
                anonymized.push_str(&placeholder.token);
                entries.push(BindingEntry::Resolved(Binding {
                    placeholder,
                    constant: m.constant,
                    span: m.span,
                }));
            }
            MatchResolution::Ambiguous { candidates } => {
                anonymized.push_str(&nl[m.span.0..m.span.1]);
                entries.push(BindingEntry::Ambiguous {
                    constant: m.constant,
                    span: m.span,
                    candidates,
                });
            }
        }
        prev_end = m.span.1;
    }
    anonymized.push_str(&nl[prev_end..]);

    AnonymizeResult { anonymized, map: BindingMap { entries }, diagnostics }
}

/// Replaces a placeholder token at word boundaries only, so `@AGE` never
/// matches inside `@AGE_1` or `@AGE_OTHER`.
fn replace_token_once(text: &str, token: &str, replacement: &str) -> Option<String> {
    let mut from = 0;
    while let Some(off) = text[from..].find(token) {
        let at = from + off;
        let after = at + token.len();
        let boundary = text[after..]
            .chars()
            .next()
            .map(|c| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(true);
        if boundary {
            let mut out = String::with_capacity(text.len() + replacement.len());
            out.push_str(&text[..at]);
            out.push_str(replacement);
            out.push_str(&text[after..]);
            return Some(out);
        }
        from = after;
    }
    None
}

/// Substitutes the recorded constants back into an anonymized NL string;
/// inverse of [`anonymize`].
pub fn reapply(anonymized: &str, map: &BindingMap) -> String {
    let mut text = anonymized.to_string();
    for binding in map.resolved() {
        if let Some(next) = replace_token_once(&text, &binding.placeholder.token, &binding.constant)
        {
            text = next;
        }
    }
    text
}

fn render_constant(
    schema: &Schema,
    binding: &Binding,
) -> Result<String, BridgeError> {
    let column = schema
        .column(&binding.placeholder.table, &binding.placeholder.column)
        .ok_or_else(|| BridgeError::UnknownPlaceholderColumn(binding.placeholder.token.clone()))?;
    if column.data_kind.is_quoted() {
        Ok(sql::quote_text_literal(&binding.constant))
    } else {
        if !is_numeric_literal(&binding.constant) {
            return Err(BridgeError::IncompatibleConstant {
                placeholder: binding.placeholder.token.clone(),
                constant: binding.constant.clone(),
            });
        }
        Ok(binding.constant.clone())
    }
}

/// Substitutes constants for placeholders in translated SQL, with
/// data-kind-appropriate quoting, and validates the result parses.
pub fn bind(
    sql_with_placeholders: &str,
    map: &BindingMap,
    schema: &Schema,
) -> Result<String, BridgeError> {
    if let Some(BindingEntry::Ambiguous { constant, .. }) =
        map.entries.iter().find(|e| matches!(e, BindingEntry::Ambiguous { .. }))
    {
        return Err(BridgeError::AmbiguousBinding { constant: constant.clone() });
    }
    let tokens = sql::extract_placeholders(sql_with_placeholders)
        .map_err(|e| BridgeError::InvalidBoundSql(e.to_string()))?;
    let mut text = sql_with_placeholders.to_string();
    for token in tokens {
        let binding =
            map.get(&token).ok_or_else(|| BridgeError::UnboundPlaceholder(token.clone()))?;
        let literal = render_constant(schema, binding)?;
        text = replace_token_once(&text, &token, &literal)
            .ok_or_else(|| BridgeError::UnboundPlaceholder(token))?;
    }
    sql::parse_query(&text).map_err(|e| BridgeError::InvalidBoundSql(e.to_string()))?;
    Ok(text)
}

/// Finds a bare numeric literal at token boundaries.
fn find_numeric_literal(text: &str, literal: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(off) = text[from..].find(literal) {
        let at = from + off;
        let after = at + literal.len();
        let before_ok = at == 0
            || text[..at]
                .chars()
                .last()
                .map(|c| !c.is_ascii_alphanumeric() && c != '_' && c != '.')
                .unwrap_or(true);
        let after_ok = text[after..]
            .chars()
            .next()
            .map(|c| !c.is_ascii_alphanumeric() && c != '_' && c != '.')
            .unwrap_or(true);
        if before_ok && after_ok {
            return Some(at);
        }
        from = after;
    }
    None
}

/// Replaces bound constants in concrete SQL with their placeholder tokens —
/// the SQL-side counterpart of [`anonymize`], used to delexicalize corpora
/// and to check the anonymize→bind round trip.
pub fn anonymize_sql(
    concrete_sql: &str,
    map: &BindingMap,
    schema: &Schema,
) -> Result<String, BridgeError> {
    let mut text = concrete_sql.to_string();
    for binding in map.resolved() {
        let literal = render_constant(schema, binding)?;
        let at = if literal.starts_with('\'') {
            text.find(&literal)
        } else {
            find_numeric_literal(&text, &literal)
        }
        .ok_or_else(|| BridgeError::LiteralNotFound(literal.clone()))?;
        text.replace_range(at..at + literal.len(), &binding.placeholder.token);
    }
    Ok(text)
}

/// The translation plug point: anonymized NL in, SQL with placeholders out.
pub trait Translator {
    fn translate(&self, anonymized_nl: &str) -> Result<String, BridgeError>;
}

fn similarity_tokens(text: &str) -> std::collections::BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(|c| c.is_alphanumeric() || c == '@'))
        .map(|t| t.to_lowercase())
        .collect()
}

struct BaselineEntry {
    nl: String,
    sql: String,
    template_id: String,
    tokens: std::collections::BTreeSet<String>,
}

/// Retrieval baseline standing in for a trained translation model: returns
/// the SQL of the corpus pair with the highest token-set Jaccard overlap.
/// An exact NL match always wins; ties break toward the lower template id,
/// then the lexicographically lower NL, making the result a pure function
/// of the corpus as a set.
pub struct BaselineTranslator {
    entries: Vec<BaselineEntry>,
}

impl BaselineTranslator {
    pub fn new(corpus: &[TrainingPair]) -> Result<Self, BridgeError> {
        if corpus.is_empty() {
            return Err(BridgeError::EmptyCorpus);
        }
        Ok(BaselineTranslator {
            entries: corpus
                .iter()
                .map(|p| BaselineEntry {
                    nl: p.nl.clone(),
                    sql: p.sql.clone(),
                    template_id: p.template_id.clone(),
                    tokens: similarity_tokens(&p.nl),
                })
                .collect(),
        })
    }
}

impl Translator for BaselineTranslator {
    fn translate(&self, anonymized_nl: &str) -> Result<String, BridgeError> {
        let query = similarity_tokens(anonymized_nl);
        let mut best: Option<(f64, &BaselineEntry)> = None;
        for entry in &self.entries {
            let score = if entry.nl == anonymized_nl {
                2.0
            } else {
                let inter = entry.tokens.intersection(&query).count();
                let union = entry.tokens.union(&query).count();
                if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                }
            };
            let better = match &best {
                None => true,
                Some((s, e)) => {
                    score > *s
                        || (score == *s
                            && (entry.template_id < e.template_id
                                || (entry.template_id == e.template_id && entry.nl < e.nl)))
                }
            };
            if better {
                best = Some((score, entry));
            }
        }
        Ok(best.expect("corpus is nonempty").1.sql.clone())
    }
}

/// Line-oriented external translator: one anonymized NL line in, one SQL
/// line out, so a trained model can replace the baseline without
/// recompiling.
pub struct SubprocessTranslator {
    child: Mutex<(Child, BufReader<std::process::ChildStdout>)>,
}

impl SubprocessTranslator {
    pub fn spawn(command: &str) -> Result<Self, BridgeError> {
        let parts: Vec<&str> = command.split_whitespace().collect();
        if parts.is_empty() {
            return Err(BridgeError::Subprocess("empty command".into()));
        }
        let mut child = Command::new(parts[0])
            .args(&parts[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| BridgeError::Subprocess(e.to_string()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| BridgeError::Subprocess("no stdout".into()))?;
        Ok(SubprocessTranslator { child: Mutex::new((child, BufReader::new(stdout))) })
    }
}

impl Translator for SubprocessTranslator {
    fn translate(&self, anonymized_nl: &str) -> Result<String, BridgeError> {
        if anonymized_nl.contains('\n') {
            return Err(BridgeError::Subprocess("input contains a newline".into()));
        }
        let mut guard = self.child.lock().expect("translator mutex");
        let (child, reader) = &mut *guard;
        let stdin = child
            .stdin
            .as_mut()
            .ok_or_else(|| BridgeError::Subprocess("no stdin".into()))?;
        writeln!(stdin, "{anonymized_nl}").map_err(|e| BridgeError::Subprocess(e.to_string()))?;
        stdin.flush().map_err(|e| BridgeError::Subprocess(e.to_string()))?;
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|e| BridgeError::Subprocess(e.to_string()))?;
        if n == 0 {
            return Err(BridgeError::Subprocess("translator closed its output".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl Drop for SubprocessTranslator {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.child.lock() {
            let _ = guard.0.kill();
            let _ = guard.0.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{build_value_index, load_schema, load_values};
    use crate::templates::ParaphraseCategory;

    fn cities() -> (Schema, ValueIndex) {
        let schema = load_schema(
            r#"{"format_version":1,"name":"geo","tables":[
                {"name":"cities","columns":[
                    {"name":"name","type":"text"},
                    {"name":"state","type":"text"}]}]}"#,
        )
        .unwrap();
        let values = "{\"format_version\":1}\n\
            {\"table\":\"cities\",\"column\":\"state\",\"value\":\"California\"}\n\
            {\"table\":\"cities\",\"column\":\"state\",\"value\":\"Texas\"}\n\
            {\"table\":\"cities\",\"column\":\"name\",\"value\":\"Sacramento\"}\n";
        let index = build_value_index(&schema, &load_values(values).unwrap()).unwrap();
        (schema, index)
    }

    fn patients() -> (Schema, ValueIndex) {
        let schema = load_schema(
            r#"{"format_version":1,"name":"hospital","tables":[
                {"name":"patients","columns":[
                    {"name":"name","type":"text"},
                    {"name":"age","type":"integer"},
                    {"name":"diagnosis","type":"text"}]}]}"#,
        )
        .unwrap();
        let values = "{\"format_version\":1}\n\
            {\"table\":\"patients\",\"column\":\"diagnosis\",\"value\":\"flu\"}\n\
            {\"table\":\"patients\",\"column\":\"name\",\"value\":\"Alice Wonder\"}\n";
        let index = build_value_index(&schema, &load_values(values).unwrap()).unwrap();
        (schema, index)
    }

    #[test]
    fn anonymizes_state_constant() {
        let (schema, index) = cities();
        let result = anonymize("What are cities whose state is California?", &schema, &index);
        assert_eq!(result.anonymized, "What are cities whose state is @STATE?");
        let binding = result.map.get("@STATE").unwrap();
        assert_eq!(binding.constant, "California");
        assert_eq!(binding.placeholder.column, "state");
        assert_eq!(
            reapply(&result.anonymized, &result.map),
            "What are cities whose state is California?"
        );
    }

    #[test]
    fn no_constants_mean_no_changes() {
        let (schema, index) = cities();
        let result = anonymize("show every city please", &schema, &index);
        assert_eq!(result.anonymized, "show every city please");
        assert!(result.map.is_empty());
    }

    #[test]
    fn repeated_column_gets_ordinals() {
        // hand application of the ordinal rule: both numerics cue on "age",
        // so the tokens must be @AGE_1 then @AGE_2
        let (schema, index) = patients();
        let result = anonymize("patients with age 20 or age 30", &schema, &index);
        assert_eq!(result.anonymized, "patients with age @AGE_1 or age @AGE_2");
        let bindings: Vec<_> = result.map.resolved().collect();
        assert_eq!(bindings.len(), 2);
        assert_eq!(bindings[0].constant, "20");
        assert_eq!(bindings[0].placeholder.ordinal, Some(1));
        assert_eq!(bindings[1].constant, "30");
        assert_eq!(bindings[1].placeholder.ordinal, Some(2));
        assert_eq!(reapply(&result.anonymized, &result.map), "patients with age 20 or age 30");
    }

    #[test]
    fn multiword_value_matches_longest_first() {
        let (schema, index) = patients();
        let result = anonymize("records of Alice Wonder please", &schema, &index);
        assert_eq!(result.anonymized, "records of @NAME please");
        assert_eq!(result.map.get("@NAME").unwrap().constant, "Alice Wonder");
    }

    #[test]
    fn numeric_without_cue_is_flagged_not_replaced() {
        let (schema, index) = patients();
        let result = anonymize("show me 20 of them", &schema, &index);
        assert_eq!(result.anonymized, "show me 20 of them");
        assert!(result.map.is_empty());
        assert!(result.diagnostics.iter().any(|d| d.contains("20")));
    }

    #[test]
    fn ambiguous_value_without_cue_is_surfaced() {
        let schema = load_schema(
            r#"{"format_version":1,"name":"d","tables":[
                {"name":"patients","columns":[
                    {"name":"home_state","type":"text"},
                    {"name":"birth_state","type":"text"}]}]}"#,
        )
        .unwrap();
        let values = "{\"format_version\":1}\n\
            {\"table\":\"patients\",\"column\":\"home_state\",\"value\":\"Ohio\"}\n\
            {\"table\":\"patients\",\"column\":\"birth_state\",\"value\":\"Ohio\"}\n";
        let index = build_value_index(&schema, &load_values(values).unwrap()).unwrap();
        let result = anonymize("patients from Ohio", &schema, &index);
        assert_eq!(result.anonymized, "patients from Ohio");
        assert!(result.map.has_ambiguous());
        match &result.map.entries[0] {
            BindingEntry::Ambiguous { constant, candidates, .. } => {
                assert_eq!(constant, "Ohio");
                assert_eq!(candidates.len(), 2);
            }
            other => panic!("unexpected: {other:?}"),
        }
        // an adjacent cue resolves it
        let cued = anonymize("patients whose home state is Ohio", &schema, &index);
        assert_eq!(cued.anonymized, "patients whose home state is @HOME_STATE");
    }

    #[test]
    fn bind_substitutes_with_quoting() {
        let (schema, index) = cities();
        let result = anonymize("What are cities whose state is California?", &schema, &index);
        let bound =
            bind("SELECT name FROM cities WHERE state = @STATE", &result.map, &schema).unwrap();
        assert_eq!(bound, "SELECT name FROM cities WHERE state = 'California'");
    }

    #[test]
    fn bind_without_placeholders_is_identity() {
        let (schema, _) = cities();
        let bound =
            bind("SELECT name FROM cities", &BindingMap::default(), &schema).unwrap();
        assert_eq!(bound, "SELECT name FROM cities");
    }

    #[test]
    fn bind_reports_unbound_placeholder() {
        let (schema, _) = patients();
        match bind("SELECT * FROM patients WHERE age = @AGE", &BindingMap::default(), &schema) {
            Err(BridgeError::UnboundPlaceholder(token)) => assert_eq!(token, "@AGE"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn bind_rejects_ambiguous_map() {
        let (schema, index) = patients();
        let mut result = anonymize("patients with flu", &schema, &index);
        result.map.entries.push(BindingEntry::Ambiguous {
            constant: "x".into(),
            span: (0, 1),
            candidates: vec![],
        });
        assert!(matches!(
            bind("SELECT * FROM patients WHERE diagnosis = @DIAGNOSIS", &result.map, &schema),
            Err(BridgeError::AmbiguousBinding { .. })
        ));
    }

    #[test]
    fn anonymize_sql_then_bind_roundtrips() {
        let (schema, index) = patients();
        let result = anonymize("Show the names of all patients with age 20.", &schema, &index);
        assert_eq!(result.anonymized, "Show the names of all patients with age @AGE.");
        let concrete = "SELECT name FROM patients WHERE age = 20";
        let anon_sql = anonymize_sql(concrete, &result.map, &schema).unwrap();
        assert_eq!(anon_sql, "SELECT name FROM patients WHERE age = @AGE");
        assert_eq!(bind(&anon_sql, &result.map, &schema).unwrap(), concrete);
    }

    #[test]
    fn placeholder_tokens_prefix_on_cross_table_collision() {
        let schema = load_schema(
            r#"{"format_version":1,"name":"d","tables":[
                {"name":"patients","columns":[{"name":"name","type":"text"},{"name":"ward_id","type":"integer"}],
                 "foreign_keys":[{"column":"ward_id","ref_table":"wards","ref_column":"id"}]},
                {"name":"wards","columns":[{"name":"id","type":"integer"},{"name":"name","type":"text"}]}]}"#,
        )
        .unwrap();
        assert_eq!(placeholder_base(&schema, "patients", "name"), "PATIENTS_NAME");
        assert_eq!(placeholder_base(&schema, "wards", "name"), "WARDS_NAME");
        assert_eq!(placeholder_base(&schema, "patients", "ward_id"), "WARD_ID");
        let ph = Placeholder::resolve_token("@WARDS_NAME", &schema).unwrap();
        assert_eq!((ph.table.as_str(), ph.column.as_str()), ("wards", "name"));
        let ph = Placeholder::resolve_token("@WARD_ID", &schema).unwrap();
        assert_eq!(ph.table, "patients");
    }

    #[test]
    fn resolve_token_handles_ordinals() {
        let (schema, _) = patients();
        let ph = Placeholder::resolve_token("@AGE_2", &schema).unwrap();
        assert_eq!(ph.column, "age");
        assert_eq!(ph.ordinal, Some(2));
        assert!(Placeholder::resolve_token("@BOGUS", &schema).is_none());
    }

    fn mini_corpus() -> Vec<TrainingPair> {
        let mk = |nl: &str, sql: &str, id: &str| TrainingPair {
            nl: nl.into(),
            sql: sql.into(),
            template_id: id.into(),
            category: ParaphraseCategory::Base,
            augmentations: vec![],
            seed_lineage: String::new(),
        };
        vec![
            mk(
                "Show the names of all patients with age @AGE.",
                "SELECT name FROM patients WHERE age = @AGE",
                "select_filter",
            ),
            mk(
                "Show the ages of all patients with diagnosis @DIAGNOSIS.",
                "SELECT age FROM patients WHERE diagnosis = @DIAGNOSIS",
                "select_filter",
            ),
            mk("How many patients are there?", "SELECT COUNT(*) FROM patients", "count_rows"),
        ]
    }

    #[test]
    fn baseline_exact_match_dominates() {
        let corpus = mini_corpus();
        let baseline = BaselineTranslator::new(&corpus).unwrap();
        let sql = baseline.translate("How many patients are there?").unwrap();
        assert_eq!(sql, "SELECT COUNT(*) FROM patients");
    }

    #[test]
    fn baseline_picks_highest_jaccard() {
        // hand-computed: query tokens {display,the,names,of,all,patients,with,age,@age}
        // vs pair 1 tokens {show,the,names,of,all,patients,with,age,@age}:
        // intersection 8, union 10 -> 0.80; vs pair 2: intersection 6
        // {the,of,all,patients,with,.->dropped} plus ages/diagnosis differ ->
        // 6/12 = 0.50; vs pair 3: near zero. Pair 1 wins.
        let corpus = mini_corpus();
        let baseline = BaselineTranslator::new(&corpus).unwrap();
        let sql =
            baseline.translate("display the names of all patients with age @AGE").unwrap();
        assert_eq!(sql, "SELECT name FROM patients WHERE age = @AGE");
    }

    #[test]
    fn baseline_is_invariant_under_corpus_reordering() {
        let mut corpus = mini_corpus();
        let baseline = BaselineTranslator::new(&corpus).unwrap();
        let a = baseline.translate("zzz unrelated words").unwrap();
        corpus.reverse();
        let baseline = BaselineTranslator::new(&corpus).unwrap();
        let b = baseline.translate("zzz unrelated words").unwrap();
        // empty overlap: the tie-break minimal corpus sql, regardless of order
        assert_eq!(a, b);
        assert_eq!(a, "SELECT COUNT(*) FROM patients");
    }

    #[test]
    fn baseline_rejects_empty_corpus() {
        assert!(matches!(BaselineTranslator::new(&[]), Err(BridgeError::EmptyCorpus)));
    }

    #[test]
    fn subprocess_translator_roundtrips_lines() {
        let t = SubprocessTranslator::spawn("cat").unwrap();
        assert_eq!(t.translate("hello @AGE").unwrap(), "hello @AGE");
        assert_eq!(t.translate("second line").unwrap(), "second line");
    }
}
