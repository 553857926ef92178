//! SQL/NL template pairs with typed slots, and the phrase dictionaries that
//! fill the speech-variation slots.
//!
//! Slot markers are written `{SlotKind}` in template text, with an optional
//! `(s)` plural marker. Database-object slots (Attribute, Table, Filter)
//! must appear with equal multiplicity on the NL and SQL sides; speech slots
//! (SelectPhrase, FromPhrase, WherePhrase, AggregatePhrase, GroupPhrase) are
//! NL-only and draw from the [`PhraseLexicon`].

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub const TEMPLATE_FORMAT_VERSION: u64 = 1;
pub const LEXICON_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template parse error: {0}")]
    Parse(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    FormatVersion { found: u64, expected: u64 },
    #[error("template `{template}`: unknown slot kind `{kind}`")]
    UnknownSlotKind { template: String, kind: String },
    #[error("template `{template}`: plural marker `(s)` is not allowed on {kind} slots")]
    BadPluralMarker { template: String, kind: SlotKind },
    #[error("template `{template}`: speech slot {kind} may not appear on the SQL side")]
    SpeechSlotInSql { template: String, kind: SlotKind },
    #[error("template `{template}` has no NL templates")]
    EmptyNlList { template: String },
    #[error("template `{template}` NL variant {variant}: slot {kind} appears {nl_count}x on the NL side but {sql_count}x on the SQL side")]
    SlotMismatch { template: String, variant: usize, kind: SlotKind, nl_count: usize, sql_count: usize },
    #[error("template `{template}`: at most two Table slots are supported, found {count}")]
    TooManyTables { template: String, count: usize },
    #[error("duplicate template id `{0}`")]
    DuplicateId(String),
    #[error("lexicon parse error: {0}")]
    LexiconParse(String),
    #[error("lexicon: unknown slot kind `{0}`")]
    LexiconUnknownKind(String),
    #[error("lexicon: {kind} is not a speech slot kind")]
    LexiconNotSpeech { kind: SlotKind },
    #[error("lexicon: duplicate phrase `{phrase}` under {kind}")]
    DuplicatePhrase { kind: SlotKind, phrase: String },
    #[error("lexicon: empty phrase list for {0}")]
    EmptyPhraseList(SlotKind),
    #[error("lexicon is missing phrases for slot kind {kind} used by template `{template}`")]
    MissingSlotKind { kind: SlotKind, template: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotKind {
    Attribute,
    Table,
    Filter,
    SelectPhrase,
    FromPhrase,
    WherePhrase,
    AggregatePhrase,
    GroupPhrase,
}

impl SlotKind {
    pub fn is_db_object(self) -> bool {
        matches!(self, SlotKind::Attribute | SlotKind::Table | SlotKind::Filter)
    }

    pub fn is_speech(self) -> bool {
        !self.is_db_object()
    }

    pub fn parse(name: &str) -> Option<SlotKind> {
        Some(match name {
            "Attribute" => SlotKind::Attribute,
            "Table" => SlotKind::Table,
            "Filter" => SlotKind::Filter,
            "SelectPhrase" => SlotKind::SelectPhrase,
            "FromPhrase" => SlotKind::FromPhrase,
            "WherePhrase" => SlotKind::WherePhrase,
            "AggregatePhrase" => SlotKind::AggregatePhrase,
            "GroupPhrase" => SlotKind::GroupPhrase,
            _ => return None,
        })
    }

    pub const ALL_SPEECH: [SlotKind; 5] = [
        SlotKind::SelectPhrase,
        SlotKind::FromPhrase,
        SlotKind::WherePhrase,
        SlotKind::AggregatePhrase,
        SlotKind::GroupPhrase,
    ];
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Min/max value count for a slot occurrence. Only `{Attribute}(s)` slots
/// take more than one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotArity {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSlot {
    pub kind: SlotKind,
    pub arity: SlotArity,
    /// Set by the `(s)` marker; pluralizes the NL surface form.
    pub plural: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TemplateToken {
    Literal(String),
    Slot(TemplateSlot),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryClass {
    SelectFilter,
    Aggregate,
    GroupAggregate,
    SimpleNested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParaphraseCategory {
    Base,
    Syntactic,
    Lexical,
    Morphological,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlTemplate {
    pub text: String,
    pub category: ParaphraseCategory,
    #[serde(skip)]
    pub tokens: Vec<TemplateToken>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplatePair {
    pub id: String,
    pub query_class: QueryClass,
    pub experimental: bool,
    pub sql_text: String,
    pub nl_templates: Vec<NlTemplate>,
    #[serde(skip)]
    pub sql_tokens: Vec<TemplateToken>,
}

impl TemplatePair {
    /// Slot occurrences of a token sequence, in textual order.
    pub fn slots(tokens: &[TemplateToken]) -> impl Iterator<Item = &TemplateSlot> {
        tokens.iter().filter_map(|t| match t {
            TemplateToken::Slot(s) => Some(s),
            TemplateToken::Literal(_) => None,
        })
    }

    pub fn db_slot_counts(tokens: &[TemplateToken]) -> BTreeMap<SlotKind, usize> {
        let mut counts = BTreeMap::new();
        for slot in Self::slots(tokens) {
            if slot.kind.is_db_object() {
                *counts.entry(slot.kind).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn table_slot_count(&self) -> usize {
        Self::slots(&self.sql_tokens).filter(|s| s.kind == SlotKind::Table).count()
    }

    /// Speech slot kinds used by any NL variant.
    pub fn speech_kinds(&self) -> Vec<SlotKind> {
        let mut kinds = Vec::new();
        for nl in &self.nl_templates {
            for slot in Self::slots(&nl.tokens) {
                if slot.kind.is_speech() && !kinds.contains(&slot.kind) {
                    kinds.push(slot.kind);
                }
            }
        }
        kinds
    }
}

/// Parses template text into literal and slot tokens.
pub fn parse_template_text(text: &str, template_id: &str) -> Result<Vec<TemplateToken>, TemplateError> {
    let mut tokens = Vec::new();
    let mut literal = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c != '{' {
            literal.push(c);
            continue;
        }
        let end = text[start..]
            .find('}')
            .map(|off| start + off)
            .ok_or_else(|| TemplateError::Parse(format!(
                "template `{template_id}`: unclosed slot marker at byte {start}"
            )))?;
        let name = &text[start + 1..end];
        let kind = SlotKind::parse(name).ok_or_else(|| TemplateError::UnknownSlotKind {
            template: template_id.to_string(),
            kind: name.to_string(),
        })?;
        // advance past '}'
        while let Some((i, _)) = chars.peek() {
            if *i <= end {
                chars.next();
            } else {
                break;
            }
        }
        // optional plural marker
        let mut plural = false;
        if text[end + 1..].starts_with("(s)") {
            plural = true;
            for _ in 0..3 {
                chars.next();
            }
        }
        if plural && !matches!(kind, SlotKind::Attribute | SlotKind::Table) {
            return Err(TemplateError::BadPluralMarker {
                template: template_id.to_string(),
                kind,
            });
        }
        if !literal.is_empty() {
            tokens.push(TemplateToken::Literal(std::mem::take(&mut literal)));
        }
        let max = if kind == SlotKind::Attribute && plural { 2 } else { 1 };
        tokens.push(TemplateToken::Slot(TemplateSlot {
            kind,
            arity: SlotArity { min: 1, max },
            plural,
        }));
    }
    if !literal.is_empty() {
        tokens.push(TemplateToken::Literal(literal));
    }
    Ok(tokens)
}

#[derive(Deserialize)]
struct NlTemplateDoc {
    text: String,
    category: ParaphraseCategory,
}

#[derive(Deserialize)]
struct TemplateDoc {
    id: String,
    class: QueryClass,
    #[serde(default)]
    experimental: bool,
    sql: String,
    nl: Vec<NlTemplateDoc>,
}

#[derive(Deserialize)]
struct CatalogDoc {
    format_version: u64,
    catalog_version: String,
    templates: Vec<TemplateDoc>,
}

#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    pub catalog_version: String,
    pub templates: Vec<TemplatePair>,
}

/// Loads and validates the template catalog. Every pair must satisfy the
/// slot-balance invariant: per database-object slot kind, the NL side of
/// each variant carries exactly as many occurrences as the SQL side.
pub fn load_templates(document: &str) -> Result<TemplateCatalog, TemplateError> {
    let doc: CatalogDoc =
        serde_json::from_str(document).map_err(|e| TemplateError::Parse(e.to_string()))?;
    if doc.format_version != TEMPLATE_FORMAT_VERSION {
        return Err(TemplateError::FormatVersion {
            found: doc.format_version,
            expected: TEMPLATE_FORMAT_VERSION,
        });
    }
    let mut templates = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for tdoc in doc.templates {
        if !seen.insert(tdoc.id.clone()) {
            return Err(TemplateError::DuplicateId(tdoc.id));
        }
        if tdoc.nl.is_empty() {
            return Err(TemplateError::EmptyNlList { template: tdoc.id });
        }
        let sql_tokens = parse_template_text(&tdoc.sql, &tdoc.id)?;
        for slot in TemplatePair::slots(&sql_tokens) {
            if slot.kind.is_speech() {
                return Err(TemplateError::SpeechSlotInSql {
                    template: tdoc.id.clone(),
                    kind: slot.kind,
                });
            }
        }
        let sql_counts = TemplatePair::db_slot_counts(&sql_tokens);
        let table_count = sql_counts.get(&SlotKind::Table).copied().unwrap_or(0);
        if table_count > 2 {
            return Err(TemplateError::TooManyTables { template: tdoc.id, count: table_count });
        }
        let mut nl_templates = Vec::new();
        for (variant, nl_doc) in tdoc.nl.into_iter().enumerate() {
            let tokens = parse_template_text(&nl_doc.text, &tdoc.id)?;
            let nl_counts = TemplatePair::db_slot_counts(&tokens);
            for kind in [SlotKind::Attribute, SlotKind::Table, SlotKind::Filter] {
                let nl_count = nl_counts.get(&kind).copied().unwrap_or(0);
                let sql_count = sql_counts.get(&kind).copied().unwrap_or(0);
                if nl_count != sql_count {
                    return Err(TemplateError::SlotMismatch {
                        template: tdoc.id.clone(),
                        variant,
                        kind,
                        nl_count,
                        sql_count,
                    });
                }
            }
            nl_templates.push(NlTemplate { text: nl_doc.text, category: nl_doc.category, tokens });
        }
        templates.push(TemplatePair {
            id: tdoc.id,
            query_class: tdoc.class,
            experimental: tdoc.experimental,
            sql_text: tdoc.sql,
            nl_templates,
            sql_tokens,
        });
    }
    Ok(TemplateCatalog { catalog_version: doc.catalog_version, templates })
}

/// Phrase dictionaries for the speech-variation slots.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PhraseLexicon {
    phrases: BTreeMap<SlotKind, Vec<String>>,
}

impl PhraseLexicon {
    pub fn phrases(&self, kind: SlotKind) -> &[String] {
        self.phrases.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Checks that every speech slot kind used by the templates has at
    /// least one phrase.
    pub fn validate_for(&self, templates: &[TemplatePair]) -> Result<(), TemplateError> {
        for template in templates {
            for kind in template.speech_kinds() {
                if self.phrases(kind).is_empty() {
                    return Err(TemplateError::MissingSlotKind {
                        kind,
                        template: template.id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn from_parts(parts: &[(SlotKind, &[&str])]) -> Self {
        let mut phrases = BTreeMap::new();
        for (kind, list) in parts {
            phrases.insert(*kind, list.iter().map(|s| s.to_string()).collect());
        }
        PhraseLexicon { phrases }
    }
}

#[derive(Deserialize)]
struct LexiconDoc {
    format_version: u64,
    phrases: BTreeMap<String, Vec<String>>,
}

/// Loads the phrase lexicon: `{"format_version":1, "phrases": {kind: [..]}}`.
pub fn load_phrase_lexicon(document: &str) -> Result<PhraseLexicon, TemplateError> {
    let doc: LexiconDoc =
        serde_json::from_str(document).map_err(|e| TemplateError::LexiconParse(e.to_string()))?;
    if doc.format_version != LEXICON_FORMAT_VERSION {
        return Err(TemplateError::FormatVersion {
            found: doc.format_version,
            expected: LEXICON_FORMAT_VERSION,
        });
    }
    let mut phrases = BTreeMap::new();
    for (name, list) in doc.phrases {
        let kind = SlotKind::parse(&name).ok_or(TemplateError::LexiconUnknownKind(name))?;
        if !kind.is_speech() {
            return Err(TemplateError::LexiconNotSpeech { kind });
        }
        if list.is_empty() {
            return Err(TemplateError::EmptyPhraseList(kind));
        }
        let mut seen = std::collections::BTreeSet::new();
        for phrase in &list {
            if !seen.insert(crate::text::normalize(phrase)) {
                return Err(TemplateError::DuplicatePhrase { kind, phrase: phrase.clone() });
            }
        }
        phrases.insert(kind, list);
    }
    Ok(PhraseLexicon { phrases })
}
