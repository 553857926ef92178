//! Training-corpus generation: slot-filling enumeration over the schema and
//! phrase lexicon, template instantiation, per-template subsampling, and
//! cross-template balancing.
//!
//! Filling enumeration is indexable: each (variant, table-assignment) pair
//! contributes a block whose remaining slot dimensions are independent, so
//! the i-th filling decodes in O(slots) without materializing the stream.
//! Deterministic order: tables, then columns, then lexicon phrases, each in
//! catalog order. Balancing subsamples each template to the cap with a
//! per-template RNG stream, then clips every template to
//! `floor(anchor * balance_ratio_max)` where the anchor is the smallest
//! retained template.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeSet, HashSet};
use thiserror::Error;

use crate::bridge::assign_placeholder_tokens;
use crate::pairs::TrainingPair;
use crate::schema::{DataKind, Schema, ValueIndex};
use crate::templates::{PhraseLexicon, SlotKind, TemplatePair, TemplateToken};
use crate::text::{fnv1a, pluralize, sentence_case, stream_seed};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("template set is empty")]
    EmptyTemplates,
    #[error("schema has no tables")]
    NoTables,
    #[error("per_template_cap must be at least 1")]
    BadCap,
    #[error("balance_ratio_max must be at least 1.0")]
    BadRatio,
    #[error(transparent)]
    Lexicon(#[from] crate::templates::TemplateError),
    #[error("internal invariant violated in template `{template}`: {detail}")]
    Internal { template: String, detail: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationConfig {
    pub per_template_cap: usize,
    pub balance_ratio_max: f64,
    pub seed: u64,
    /// Emit placeholder tokens for filter values instead of concrete
    /// constants (the runtime model's training form).
    pub anonymize_values: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            per_template_cap: 500,
            balance_ratio_max: 2.0,
            seed: 0,
            anonymize_values: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Comparator {
    pub fn sql(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
        }
    }

    /// NL connective between the column surface and the value. Numeric
    /// equality reads "age 20"; text equality reads "state is California".
    fn nl_connective(self, kind: DataKind) -> &'static str {
        match self {
            Comparator::Eq => {
                if kind.is_numeric() {
                    ""
                } else {
                    "is"
                }
            }
            Comparator::Lt => "less than",
            Comparator::Gt => "greater than",
            Comparator::Le => "at most",
            Comparator::Ge => "at least",
        }
    }

    const NUMERIC_ALL: [Comparator; 5] =
        [Comparator::Eq, Comparator::Lt, Comparator::Gt, Comparator::Le, Comparator::Ge];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPick {
    pub table: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinEdge {
    pub left_table: String,
    pub left_column: String,
    pub right_table: String,
    pub right_column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TablePick {
    pub name: String,
    pub join: Option<JoinEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterValue {
    Placeholder,
    Concrete(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPick {
    pub table: String,
    pub column: String,
    pub comparator: Comparator,
    pub value: FilterValue,
}

/// Chosen values for every slot occurrence of one template variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotFilling {
    /// Table occurrences in SQL order.
    pub tables: Vec<TablePick>,
    /// Attribute occurrences in SQL order; each holds 1..=arity columns.
    pub attributes: Vec<Vec<ColumnPick>>,
    /// Filter occurrences in SQL order.
    pub filters: Vec<FilterPick>,
    /// Speech occurrences in NL order.
    pub speech: Vec<String>,
}

struct Block {
    tables: Vec<TablePick>,
    attr_options: Vec<Vec<Vec<ColumnPick>>>,
    filter_options: Vec<Vec<FilterPick>>,
    speech_options: Vec<Vec<String>>,
    len: u64,
}

impl Block {
    fn decode(&self, mut offset: u64) -> SlotFilling {
        let mut dims: Vec<u64> = Vec::new();
        dims.extend(self.attr_options.iter().map(|d| d.len() as u64));
        dims.extend(self.filter_options.iter().map(|d| d.len() as u64));
        dims.extend(self.speech_options.iter().map(|d| d.len() as u64));
        let mut picks = vec![0usize; dims.len()];
        for (j, dim) in dims.iter().enumerate().rev() {
            picks[j] = (offset % dim) as usize;
            offset /= dim;
        }
        let mut it = picks.into_iter();
        let attributes =
            self.attr_options.iter().map(|d| d[it.next().unwrap()].clone()).collect();
        let filters =
            self.filter_options.iter().map(|d| d[it.next().unwrap()].clone()).collect();
        let speech =
            self.speech_options.iter().map(|d| d[it.next().unwrap()].clone()).collect();
        SlotFilling { tables: self.tables.clone(), attributes, filters, speech }
    }
}

/// Indexable filling stream for one NL variant.
pub struct VariantSpace {
    pub variant_index: usize,
    blocks: Vec<Block>,
    pub total: u64,
}

impl VariantSpace {
    pub fn get(&self, mut i: u64) -> SlotFilling {
        for block in &self.blocks {
            if i < block.len {
                return block.decode(i);
            }
            i -= block.len;
        }
        panic!("filling index out of range");
    }
}

/// Indexable filling stream for a whole template (all NL variants).
pub struct TemplateSpace {
    pub variants: Vec<VariantSpace>,
    pub total: u64,
    /// Reasons for skipped table assignments or an empty stream.
    pub diagnostics: Vec<String>,
}

impl TemplateSpace {
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Decodes the i-th filling as (variant index, filling).
    pub fn get(&self, mut i: u64) -> (usize, SlotFilling) {
        for variant in &self.variants {
            if i < variant.total {
                return (variant.variant_index, variant.get(i));
            }
            i -= variant.total;
        }
        panic!("filling index out of range");
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, SlotFilling)> + '_ {
        (0..self.total).map(|i| self.get(i))
    }
}

/// Whether an Attribute occurrence on the SQL side must be numeric: inside
/// AVG/MIN/MAX/SUM parentheses, or compared against a scalar subquery.
fn numeric_constraints(sql_tokens: &[TemplateToken]) -> Vec<bool> {
    let mut constraints = Vec::new();
    for (i, token) in sql_tokens.iter().enumerate() {
        let TemplateToken::Slot(slot) = token else { continue };
        if slot.kind != SlotKind::Attribute {
            continue;
        }
        let mut numeric = false;
        if i > 0 {
            if let TemplateToken::Literal(before) = &sql_tokens[i - 1] {
                let before = before.trim_end().to_uppercase();
                for agg in ["AVG(", "MIN(", "MAX(", "SUM("] {
                    if before.ends_with(agg) {
                        numeric = true;
                    }
                }
            }
        }
        if let Some(TemplateToken::Literal(after)) = sql_tokens.get(i + 1) {
            let after = after.trim_start();
            if after.starts_with('<') || after.starts_with('>') {
                numeric = true;
            }
        }
        constraints.push(numeric);
    }
    constraints
}

fn attribute_combinations(columns: &[ColumnPick], max_arity: usize) -> Vec<Vec<ColumnPick>> {
    let mut combos: Vec<Vec<ColumnPick>> = columns.iter().map(|c| vec![c.clone()]).collect();
    if max_arity >= 2 {
        for i in 0..columns.len() {
            for j in (i + 1)..columns.len() {
                combos.push(vec![columns[i].clone(), columns[j].clone()]);
            }
        }
    }
    combos
}

fn filter_comparators(template: &TemplatePair, kind: DataKind) -> &'static [Comparator] {
    use crate::templates::QueryClass::*;
    match template.query_class {
        SelectFilter | GroupAggregate => &[Comparator::Eq],
        Aggregate | SimpleNested => {
            if kind.is_numeric() {
                &Comparator::NUMERIC_ALL
            } else {
                &[Comparator::Eq]
            }
        }
    }
}

/// Enumerates the admissible slot fillings of a template as an indexable
/// stream covering the cross product of slot values. Templates whose filter
/// slot has no admissible column yield an empty stream plus a diagnostic,
/// not an error.
pub fn enumerate_slot_fillings(
    template: &TemplatePair,
    schema: &Schema,
    lexicon: &PhraseLexicon,
    value_index: &ValueIndex,
    placeholder_values: bool,
) -> TemplateSpace {
    let mut diagnostics = Vec::new();

    // table assignments shared by all variants
    let table_slots = template.table_slot_count();
    let assignments: Vec<Vec<TablePick>> = match table_slots {
        0 => vec![vec![]],
        1 => schema
            .tables
            .iter()
            .map(|t| vec![TablePick { name: t.name.clone(), join: None }])
            .collect(),
        _ => {
            let mut pairs = Vec::new();
            for table in &schema.tables {
                for fk in &table.foreign_keys {
                    pairs.push(vec![
                        TablePick { name: table.name.clone(), join: None },
                        TablePick {
                            name: fk.ref_table.clone(),
                            join: Some(JoinEdge {
                                left_table: table.name.clone(),
                                left_column: fk.column.clone(),
                                right_table: fk.ref_table.clone(),
                                right_column: fk.ref_column.clone(),
                            }),
                        },
                    ]);
                }
            }
            if pairs.is_empty() {
                diagnostics
                    .push(format!("template `{}`: no foreign-key table pair in schema", template.id));
            }
            pairs
        }
    };

    let attr_numeric = numeric_constraints(&template.sql_tokens);
    let sql_attr_slots: Vec<_> = TemplatePair::slots(&template.sql_tokens)
        .filter(|s| s.kind == SlotKind::Attribute)
        .collect();
    let filter_count = TemplatePair::slots(&template.sql_tokens)
        .filter(|s| s.kind == SlotKind::Filter)
        .count();

    let mut variants = Vec::new();
    let mut total: u64 = 0;
    for (variant_index, nl) in template.nl_templates.iter().enumerate() {
        let speech_kinds: Vec<SlotKind> = TemplatePair::slots(&nl.tokens)
            .filter(|s| s.kind.is_speech())
            .map(|s| s.kind)
            .collect();
        let mut blocks = Vec::new();
        for assignment in &assignments {
            let tables: Vec<&str> = assignment.iter().map(|t| t.name.as_str()).collect();
            let columns: Vec<ColumnPick> = tables
                .iter()
                .filter_map(|name| schema.table(name))
                .flat_map(|t| {
                    t.columns.iter().map(|c| ColumnPick {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    })
                })
                .collect();

            let mut attr_options = Vec::new();
            for (occ, slot) in sql_attr_slots.iter().enumerate() {
                let admissible: Vec<ColumnPick> = columns
                    .iter()
                    .filter(|pick| {
                        !attr_numeric[occ]
                            || schema
                                .column(&pick.table, &pick.column)
                                .map(|c| c.data_kind.is_numeric())
                                .unwrap_or(false)
                    })
                    .cloned()
                    .collect();
                attr_options.push(attribute_combinations(&admissible, slot.arity.max));
            }

            let mut filter_options = Vec::new();
            for _ in 0..filter_count {
                let mut options = Vec::new();
                for pick in &columns {
                    let column = schema.column(&pick.table, &pick.column).expect("pick from schema");
                    if !column.is_filterable {
                        continue;
                    }
                    for &comparator in filter_comparators(template, column.data_kind) {
                        if placeholder_values {
                            options.push(FilterPick {
                                table: pick.table.clone(),
                                column: pick.column.clone(),
                                comparator,
                                value: FilterValue::Placeholder,
                            });
                        } else {
                            for value in value_index.samples(&pick.table, &pick.column) {
                                options.push(FilterPick {
                                    table: pick.table.clone(),
                                    column: pick.column.clone(),
                                    comparator,
                                    value: FilterValue::Concrete(value.clone()),
                                });
                            }
                        }
                    }
                }
                filter_options.push(options);
            }

            let speech_options: Vec<Vec<String>> =
                speech_kinds.iter().map(|k| lexicon.phrases(*k).to_vec()).collect();

            let mut len: u64 = 1;
            for dim in attr_options
                .iter()
                .map(Vec::len)
                .chain(filter_options.iter().map(Vec::len))
                .chain(speech_options.iter().map(Vec::len))
            {
                len = len.saturating_mul(dim as u64);
            }
            if len == 0 {
                continue;
            }
            blocks.push(Block {
                tables: assignment.clone(),
                attr_options,
                filter_options,
                speech_options,
                len,
            });
        }
        let variant_total: u64 = blocks.iter().map(|b| b.len).sum();
        total += variant_total;
        variants.push(VariantSpace { variant_index, blocks, total: variant_total });
    }

    if total == 0 && filter_count > 0 {
        diagnostics.push(format!(
            "template `{}` skipped: no admissible filter column (filterable with values when concrete)",
            template.id
        ));
    } else if total == 0 {
        diagnostics.push(format!("template `{}` skipped: no admissible slot values", template.id));
    }

    TemplateSpace { variants, total, diagnostics }
}

fn qualify(pick_table: &str, column: &str, multi_table: bool) -> String {
    if multi_table {
        format!("{pick_table}.{column}")
    } else {
        column.to_string()
    }
}

/// Instantiates one training pair by token substitution. Placeholder tokens
/// are assigned with ordinals when the same column repeats, using the same
/// naming as the runtime anonymizer.
pub fn instantiate_pair(
    template: &TemplatePair,
    nl_variant_index: usize,
    filling: &SlotFilling,
    schema: &Schema,
) -> TrainingPair {
    let nl_template = &template.nl_templates[nl_variant_index];
    let multi_table = filling.tables.len() > 1;

    // placeholder tokens for filter occurrences carrying placeholder values
    let placeholder_columns: Vec<(String, String)> = filling
        .filters
        .iter()
        .filter(|f| f.value == FilterValue::Placeholder)
        .map(|f| (f.table.clone(), f.column.clone()))
        .collect();
    let assigned = assign_placeholder_tokens(schema, &placeholder_columns);
    let mut tokens_by_occurrence = Vec::new();
    let mut next = assigned.into_iter();
    for filter in &filling.filters {
        if filter.value == FilterValue::Placeholder {
            tokens_by_occurrence.push(Some(next.next().expect("token per placeholder").token));
        } else {
            tokens_by_occurrence.push(None);
        }
    }

    let render_filter_sql = |occ: usize| -> String {
        let f = &filling.filters[occ];
        let column = schema.column(&f.table, &f.column).expect("filter column in schema");
        let lhs = qualify(&f.table, &f.column, multi_table);
        let rhs = match &f.value {
            FilterValue::Placeholder => tokens_by_occurrence[occ].clone().expect("assigned token"),
            FilterValue::Concrete(v) => {
                if column.data_kind.is_quoted() {
                    crate::sql::quote_text_literal(v)
                } else {
                    v.clone()
                }
            }
        };
        format!("{} {} {}", lhs, f.comparator.sql(), rhs)
    };

    let mut sql = String::new();
    let mut attr_occ = 0;
    let mut table_occ = 0;
    let mut filter_occ = 0;
    for token in &template.sql_tokens {
        match token {
            TemplateToken::Literal(text) => sql.push_str(text),
            TemplateToken::Slot(slot) => match slot.kind {
                SlotKind::Attribute => {
                    let picks = &filling.attributes[attr_occ];
                    attr_occ += 1;
                    let rendered: Vec<String> =
                        picks.iter().map(|p| qualify(&p.table, &p.column, multi_table)).collect();
                    sql.push_str(&rendered.join(", "));
                }
                SlotKind::Table => {
                    let pick = &filling.tables[table_occ];
                    table_occ += 1;
                    match &pick.join {
                        None => sql.push_str(&pick.name),
                        Some(edge) => sql.push_str(&format!(
                            "{} ON {}.{} = {}.{}",
                            pick.name,
                            edge.left_table,
                            edge.left_column,
                            edge.right_table,
                            edge.right_column
                        )),
                    }
                }
                SlotKind::Filter => {
                    sql.push_str(&render_filter_sql(filter_occ));
                    filter_occ += 1;
                }
                speech => unreachable!("speech slot {speech} on SQL side"),
            },
        }
    }

    let mut nl = String::new();
    let mut attr_occ = 0;
    let mut table_occ = 0;
    let mut filter_occ = 0;
    let mut speech_occ = 0;
    for token in &nl_template.tokens {
        match token {
            TemplateToken::Literal(text) => nl.push_str(text),
            TemplateToken::Slot(slot) => match slot.kind {
                SlotKind::Attribute => {
                    let picks = &filling.attributes[attr_occ];
                    attr_occ += 1;
                    let surfaces: Vec<String> = picks
                        .iter()
                        .map(|p| {
                            let surface =
                                schema.column(&p.table, &p.column).expect("column in schema").surface();
                            if slot.plural {
                                pluralize(surface)
                            } else {
                                surface.to_string()
                            }
                        })
                        .collect();
                    nl.push_str(&surfaces.join(" and "));
                }
                SlotKind::Table => {
                    let pick = &filling.tables[table_occ];
                    table_occ += 1;
                    let surface = schema.table(&pick.name).expect("table in schema").surface();
                    if slot.plural {
                        nl.push_str(&pluralize(&surface));
                    } else {
                        nl.push_str(&surface);
                    }
                }
                SlotKind::Filter => {
                    let f = &filling.filters[filter_occ];
                    let column = schema.column(&f.table, &f.column).expect("filter column");
                    let value = match &f.value {
                        FilterValue::Placeholder => {
                            tokens_by_occurrence[filter_occ].clone().expect("assigned token")
                        }
                        FilterValue::Concrete(v) => v.clone(),
                    };
                    filter_occ += 1;
                    let connective = f.comparator.nl_connective(column.data_kind);
                    if connective.is_empty() {
                        nl.push_str(&format!("{} {}", column.surface(), value));
                    } else {
                        nl.push_str(&format!("{} {} {}", column.surface(), connective, value));
                    }
                }
                _ => {
                    nl.push_str(&filling.speech[speech_occ]);
                    speech_occ += 1;
                }
            },
        }
    }

    TrainingPair {
        nl: sentence_case(&nl),
        sql,
        template_id: template.id.clone(),
        category: nl_template.category,
        augmentations: Vec::new(),
        seed_lineage: format!("tpl:{}:v{}", template.id, nl_variant_index),
    }
}

/// The balancing rule: subsample each template to the cap, then clip all
/// templates to `floor(anchor * ratio)` where the anchor is the smallest
/// retained count. Templates below the floor are kept whole.
pub fn balanced_retention(admissible: &[u64], cap: usize, ratio: f64) -> Vec<usize> {
    let base: Vec<u64> = admissible.iter().map(|&n| n.min(cap as u64)).collect();
    let anchor = base.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
    let floor = (anchor as f64 * ratio).floor() as u64;
    base.iter().map(|&n| n.min(floor) as usize).collect()
}

fn floyd_sample(n: u64, m: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut chosen = BTreeSet::new();
    for j in (n - m)..n {
        let t = rng.gen_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TemplateReport {
    pub template_id: String,
    pub admissible: u64,
    pub retained: usize,
    /// Template had fewer admissible fillings than the ratio floor and was
    /// kept whole.
    pub kept_whole_below_floor: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationReport {
    pub per_template: Vec<TemplateReport>,
    pub duplicates_removed: usize,
    pub total: usize,
}

fn whitespace_normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Generates the balanced training corpus. Pure function of its inputs:
/// identical schema, templates, lexicon, values, and config produce
/// byte-identical output, independent of worker parallelism.
pub fn generate(
    schema: &Schema,
    templates: &[TemplatePair],
    lexicon: &PhraseLexicon,
    value_index: &ValueIndex,
    config: &GenerationConfig,
) -> Result<(Vec<TrainingPair>, GenerationReport), GenerateError> {
    if templates.is_empty() {
        return Err(GenerateError::EmptyTemplates);
    }
    if schema.tables.is_empty() {
        return Err(GenerateError::NoTables);
    }
    if config.per_template_cap == 0 {
        return Err(GenerateError::BadCap);
    }
    if config.balance_ratio_max < 1.0 {
        return Err(GenerateError::BadRatio);
    }
    lexicon.validate_for(templates)?;

    let spaces: Vec<TemplateSpace> = templates
        .par_iter()
        .map(|t| {
            enumerate_slot_fillings(t, schema, lexicon, value_index, config.anonymize_values)
        })
        .collect();

    let admissible: Vec<u64> = spaces.iter().map(|s| s.total).collect();
    let retained = balanced_retention(&admissible, config.per_template_cap, config.balance_ratio_max);
    let floor_hint: Vec<bool> = admissible
        .iter()
        .zip(&retained)
        .map(|(&n, &m)| n > 0 && (n as usize) == m && (n as u64) < config.per_template_cap as u64)
        .collect();

    let per_template_pairs: Vec<Result<Vec<TrainingPair>, GenerateError>> = templates
        .par_iter()
        .zip(&spaces)
        .zip(&retained)
        .map(|((template, space), &m)| {
            let n = space.total;
            let indices: Vec<u64> = if (m as u64) >= n {
                (0..n).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[
                    config.seed,
                    fnv1a(template.id.as_bytes()),
                ]));
                floyd_sample(n, m as u64, &mut rng)
            };
            let mut pairs = Vec::with_capacity(indices.len());
            for i in indices {
                let (variant, filling) = space.get(i);
                let mut pair = instantiate_pair(template, variant, &filling, schema);
                pair.seed_lineage = format!("gen:{}:v{}:f{}", template.id, variant, i);
                if !pair.placeholders_balanced() {
                    return Err(GenerateError::Internal {
                        template: template.id.clone(),
                        detail: format!("placeholder multiset mismatch in `{}`", pair.nl),
                    });
                }
                if let Err(e) = crate::sql::parse_query(&pair.sql) {
                    return Err(GenerateError::Internal {
                        template: template.id.clone(),
                        detail: format!("generated SQL does not parse: {e}: `{}`", pair.sql),
                    });
                }
                pairs.push(pair);
            }
            Ok(pairs)
        })
        .collect();

    let mut output = Vec::new();
    let mut per_template = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut duplicates_removed = 0;
    for (((template, space), pairs), (&n, below_floor)) in templates
        .iter()
        .zip(&spaces)
        .zip(per_template_pairs)
        .zip(admissible.iter().zip(floor_hint))
    {
        let pairs = pairs?;
        let mut kept = 0;
        for pair in pairs {
            let key = (whitespace_normalize(&pair.nl), whitespace_normalize(&pair.sql));
            if seen.insert(key) {
                output.push(pair);
                kept += 1;
            } else {
                duplicates_removed += 1;
            }
        }
        per_template.push(TemplateReport {
            template_id: template.id.clone(),
            admissible: n,
            retained: kept,
            kept_whole_below_floor: below_floor,
            skipped: if n == 0 { space.diagnostics.first().cloned() } else { None },
        });
    }

    let total = output.len();
    Ok((output, GenerationReport { per_template, duplicates_removed, total }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{build_value_index, load_schema, load_values};
    use crate::templates::{load_templates, PhraseLexicon, SlotKind};

    fn patients_schema() -> Schema {
        load_schema(
            r#"{"format_version":1,"name":"hospital","tables":[
                {"name":"patients","columns":[
                    {"name":"name","type":"text","filterable":false},
                    {"name":"age","type":"integer"},
                    {"name":"diagnosis","type":"text"}]}]}"#,
        )
        .unwrap()
    }

    fn select_filter_catalog() -> crate::templates::TemplateCatalog {
        load_templates(
            r#"{
            "format_version": 1,
            "catalog_version": "test",
            "templates": [{
                "id": "select_filter",
                "class": "select-filter",
                "sql": "SELECT {Attribute} FROM {Table} WHERE {Filter}",
                "nl": [{"text": "{SelectPhrase} the {Attribute} {FromPhrase} {Table} {WherePhrase} {Filter}.", "category": "base"}]
            }]
        }"#,
        )
        .unwrap()
    }

    fn spec_lexicon() -> PhraseLexicon {
        PhraseLexicon::from_parts(&[
            (SlotKind::SelectPhrase, &["what is", "show me", "show", "list"]),
            (SlotKind::FromPhrase, &["of all"]),
            (SlotKind::WherePhrase, &["with", "whose", "where"]),
        ])
    }

    // Brute-force oracle: count the cross product by nested loops,
    // independent of the block/odometer implementation.
    fn oracle_count(attrs: usize, filters: usize, selects: usize, froms: usize, wheres: usize) -> u64 {
        let mut count = 0u64;
        for _ in 0..attrs {
            for _ in 0..filters {
                for _ in 0..selects {
                    for _ in 0..froms {
                        for _ in 0..wheres {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn enumeration_matches_cross_product_oracle() {
        let schema = patients_schema();
        let catalog = select_filter_catalog();
        let lexicon = spec_lexicon();
        let index = ValueIndex::default();
        let space =
            enumerate_slot_fillings(&catalog.templates[0], &schema, &lexicon, &index, true);
        // 3 attributes x 2 filterable columns x 4 SelectPhrases x 3 WherePhrases
        // (FromPhrase has a single entry) = 72
        assert_eq!(oracle_count(3, 2, 4, 1, 3), 72);
        assert_eq!(space.len(), 72);
        // every decoded filling is distinct
        let all: Vec<_> = space.iter().collect();
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                assert_ne!(all[i].1, all[j].1, "fillings {i} and {j} collide");
            }
        }
    }

    #[test]
    fn no_filterable_column_yields_empty_stream_with_diagnostic() {
        let schema = load_schema(
            r#"{"format_version":1,"name":"d","tables":[
                {"name":"t","columns":[{"name":"a","type":"text","filterable":false}]}]}"#,
        )
        .unwrap();
        let catalog = select_filter_catalog();
        let space = enumerate_slot_fillings(
            &catalog.templates[0],
            &schema,
            &spec_lexicon(),
            &ValueIndex::default(),
            true,
        );
        assert!(space.is_empty());
        assert!(space.diagnostics.iter().any(|d| d.contains("skipped")));
    }

    #[test]
    fn instantiates_the_worked_select_filter_pair() {
        let schema = load_schema(
            r#"{"format_version":1,"name":"hospital","tables":[
                {"name":"patients","columns":[
                    {"name":"name","type":"text"},
                    {"name":"age","type":"integer"},
                    {"name":"diagnosis","type":"text"}]}]}"#,
        )
        .unwrap();
        let catalog = load_templates(
            r#"{
            "format_version": 1,
            "catalog_version": "test",
            "templates": [{
                "id": "select_filter",
                "class": "select-filter",
                "sql": "SELECT {Attribute}(s) FROM {Table} WHERE {Filter}",
                "nl": [{"text": "{SelectPhrase} the {Attribute}(s) {FromPhrase} {Table} {WherePhrase} {Filter}.", "category": "base"}]
            }]
        }"#,
        )
        .unwrap();
        let filling = SlotFilling {
            tables: vec![TablePick { name: "patients".into(), join: None }],
            attributes: vec![vec![ColumnPick { table: "patients".into(), column: "name".into() }]],
            filters: vec![FilterPick {
                table: "patients".into(),
                column: "age".into(),
                comparator: Comparator::Eq,
                value: FilterValue::Concrete("20".into()),
            }],
            speech: vec!["show".into(), "of all".into(), "with".into()],
        };
        let pair = instantiate_pair(&catalog.templates[0], 0, &filling, &schema);
        assert_eq!(pair.nl, "Show the names of all patients with age 20.");
        assert_eq!(pair.sql, "SELECT name FROM patients WHERE age = 20");

        // same filling under placeholder values
        let anonymized = SlotFilling {
            filters: vec![FilterPick {
                table: "patients".into(),
                column: "age".into(),
                comparator: Comparator::Eq,
                value: FilterValue::Placeholder,
            }],
            ..filling
        };
        let pair = instantiate_pair(&catalog.templates[0], 0, &anonymized, &schema);
        assert_eq!(pair.nl, "Show the names of all patients with age @AGE.");
        assert_eq!(pair.sql, "SELECT name FROM patients WHERE age = @AGE");
    }

    #[test]
    fn zero_speech_slots_renders_bare_values() {
        let schema = patients_schema();
        let catalog = load_templates(
            r#"{
            "format_version": 1,
            "catalog_version": "test",
            "templates": [{
                "id": "bare",
                "class": "select-filter",
                "sql": "SELECT {Attribute} FROM {Table}",
                "nl": [{"text": "{Attribute} {Table}", "category": "base"}]
            }]
        }"#,
        )
        .unwrap();
        let filling = SlotFilling {
            tables: vec![TablePick { name: "patients".into(), join: None }],
            attributes: vec![vec![ColumnPick { table: "patients".into(), column: "age".into() }]],
            filters: vec![],
            speech: vec![],
        };
        let pair = instantiate_pair(&catalog.templates[0], 0, &filling, &schema);
        assert_eq!(pair.nl, "Age patients");
        assert_eq!(pair.sql, "SELECT age FROM patients");
    }

    #[test]
    fn cities_yield_the_entity_filter_shape() {
        let schema = load_schema(
            r#"{"format_version":1,"name":"geo","tables":[
                {"name":"cities","columns":[
                    {"name":"name","type":"text"},
                    {"name":"state","type":"text"}]}]}"#,
        )
        .unwrap();
        let catalog = load_templates(
            r#"{
            "format_version": 1,
            "catalog_version": "test",
            "templates": [{
                "id": "select_entities",
                "class": "select-filter",
                "sql": "SELECT * FROM {Table} WHERE {Filter}",
                "nl": [{"text": "{SelectPhrase} {Table} {WherePhrase} {Filter}?", "category": "base"}]
            }]
        }"#,
        )
        .unwrap();
        let lexicon = PhraseLexicon::from_parts(&[
            (SlotKind::SelectPhrase, &["what are"]),
            (SlotKind::WherePhrase, &["whose"]),
        ]);
        let space = enumerate_slot_fillings(
            &catalog.templates[0],
            &schema,
            &lexicon,
            &ValueIndex::default(),
            true,
        );
        let pairs: Vec<TrainingPair> = space
            .iter()
            .map(|(v, f)| instantiate_pair(&catalog.templates[0], v, &f, &schema))
            .collect();
        assert!(pairs.iter().any(|p| p.nl == "What are cities whose state is @STATE?"
            && p.sql == "SELECT * FROM cities WHERE state = @STATE"));
    }

    #[test]
    fn balancing_matches_the_worked_example() {
        // oracle, worked by hand: caps are (72, 500); the anchor is 72, the
        // floor is 144, so the big template subsamples down to 144 while the
        // small one is kept whole.
        assert_eq!(balanced_retention(&[72, 7200], 500, 2.0), vec![72, 144]);
        assert_eq!(balanced_retention(&[600, 7200], 500, 2.0), vec![500, 500]);
        assert_eq!(balanced_retention(&[0, 7200], 500, 2.0), vec![0, 500]);
        assert_eq!(balanced_retention(&[10], 500, 2.0), vec![10]);
    }

    #[test]
    fn single_template_below_cap_retains_everything_once() {
        let schema = patients_schema();
        let catalog = select_filter_catalog();
        let (pairs, report) = generate(
            &schema,
            &catalog.templates,
            &spec_lexicon(),
            &ValueIndex::default(),
            &GenerationConfig { per_template_cap: 10_000, ..Default::default() },
        )
        .unwrap();
        assert_eq!(pairs.len(), 72);
        assert_eq!(report.per_template[0].admissible, 72);
        assert_eq!(report.per_template[0].retained, 72);
        let mut unique: Vec<&str> = pairs.iter().map(|p| p.nl.as_str()).collect();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 72);
    }

    #[test]
    fn generation_is_deterministic() {
        let schema = patients_schema();
        let catalog = select_filter_catalog();
        let config = GenerationConfig { per_template_cap: 20, ..Default::default() };
        let run = || {
            let (pairs, _) = generate(
                &schema,
                &catalog.templates,
                &spec_lexicon(),
                &ValueIndex::default(),
                &config,
            )
            .unwrap();
            crate::pairs::pairs_to_string(&pairs)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_template_set_is_an_error() {
        let schema = patients_schema();
        assert!(matches!(
            generate(
                &schema,
                &[],
                &spec_lexicon(),
                &ValueIndex::default(),
                &GenerationConfig::default()
            ),
            Err(GenerateError::EmptyTemplates)
        ));
    }

    #[test]
    fn concrete_values_come_from_the_value_index() {
        let schema = patients_schema();
        let catalog = select_filter_catalog();
        let values = "{\"format_version\":1}\n\
            {\"table\":\"patients\",\"column\":\"age\",\"value\":20}\n\
            {\"table\":\"patients\",\"column\":\"diagnosis\",\"value\":\"flu\"}\n";
        let index = build_value_index(&schema, &load_values(values).unwrap()).unwrap();
        let (pairs, _) = generate(
            &schema,
            &catalog.templates,
            &spec_lexicon(),
            &index,
            &GenerationConfig {
                per_template_cap: 10_000,
                anonymize_values: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(pairs.iter().all(|p| !p.sql.contains('@')));
        assert!(pairs.iter().any(|p| p.sql.ends_with("WHERE age = 20")));
        assert!(pairs.iter().any(|p| p.sql.ends_with("WHERE diagnosis = 'flu'")));
    }

    #[test]
    fn join_template_renders_on_clause() {
        let schema = load_schema(
            r#"{"format_version":1,"name":"d","tables":[
                {"name":"patients","columns":[
                    {"name":"name","type":"text"},
                    {"name":"ward_id","type":"integer","filterable":false}],
                 "foreign_keys":[{"column":"ward_id","ref_table":"wards","ref_column":"id"}]},
                {"name":"wards","columns":[
                    {"name":"id","type":"integer","filterable":false},
                    {"name":"name","type":"text"}]}]}"#,
        )
        .unwrap();
        let catalog = load_templates(
            r#"{
            "format_version": 1,
            "catalog_version": "test",
            "templates": [{
                "id": "join_filter",
                "class": "select-filter",
                "experimental": true,
                "sql": "SELECT {Attribute} FROM {Table} JOIN {Table} WHERE {Filter}",
                "nl": [{"text": "{SelectPhrase} the {Attribute} of {Table} and their {Table} {WherePhrase} {Filter}.", "category": "base"}]
            }]
        }"#,
        )
        .unwrap();
        let lexicon = PhraseLexicon::from_parts(&[
            (SlotKind::SelectPhrase, &["show"]),
            (SlotKind::WherePhrase, &["with"]),
        ]);
        let space = enumerate_slot_fillings(
            &catalog.templates[0],
            &schema,
            &lexicon,
            &ValueIndex::default(),
            true,
        );
        assert!(space.len() > 0);
        let (v, f) = space.get(0);
        let pair = instantiate_pair(&catalog.templates[0], v, &f, &schema);
        assert!(
            pair.sql.contains("FROM patients JOIN wards ON patients.ward_id = wards.id"),
            "sql: {}",
            pair.sql
        );
        crate::sql::parse_query(&pair.sql).unwrap();
        assert!(pair.placeholders_balanced());
    }

    #[test]
    fn numeric_constraint_detected_for_aggregates_and_subqueries() {
        let catalog = load_templates(
            r#"{
            "format_version": 1,
            "catalog_version": "test",
            "templates": [{
                "id": "nested",
                "class": "simple-nested",
                "sql": "SELECT {Attribute} FROM {Table} WHERE {Attribute} > (SELECT AVG({Attribute}) FROM {Table})",
                "nl": [{"text": "{SelectPhrase} the {Attribute} of {Table} whose {Attribute} is above the average {Attribute} of all {Table}.", "category": "base"}]
            }]
        }"#,
        )
        .unwrap();
        let constraints = numeric_constraints(&catalog.templates[0].sql_tokens);
        assert_eq!(constraints, vec![false, true, true]);
    }
}
