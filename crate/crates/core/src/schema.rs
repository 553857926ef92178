//! Database schema ingestion and the value index used for constant
//! recognition and filter-slot filling.
//!
//! The schema file is the sole required input of the pipeline: a JSON
//! document with one object per table (columns carry a type, optional
//! synonym list, and a filterable flag; foreign keys reference other
//! tables). The value file supplies per-column sample values, one JSON
//! record per line behind a `format_version` header line.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::text::normalize;

pub const SCHEMA_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    FormatVersion { found: u64, expected: u64 },
    #[error("schema has no tables")]
    NoTables,
    #[error("invalid identifier `{0}`")]
    BadIdentifier(String),
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("table `{0}` has no columns")]
    NoColumns(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("unknown column type `{kind}` for {table}.{column}")]
    UnknownType { table: String, column: String, kind: String },
    #[error("foreign key {table}.{column} references missing {ref_table}.{ref_column}")]
    DanglingForeignKey { table: String, column: String, ref_table: String, ref_column: String },
    #[error("foreign key {table}.{column} ({local:?}) incompatible with {ref_table}.{ref_column} ({remote:?})")]
    ForeignKeyType {
        table: String,
        column: String,
        local: DataKind,
        ref_table: String,
        ref_column: String,
        remote: DataKind,
    },
    #[error("value file parse error on line {line}: {message}")]
    ValueParse { line: usize, message: String },
    #[error("value file is missing the format_version header line")]
    MissingVersionHeader,
    #[error("value record on line {line} names unknown column {table}.{column}")]
    UnknownColumn { line: usize, table: String, column: String },
    #[error("value `{value}` on line {line} incompatible with {table}.{column} ({kind:?})")]
    IncompatibleValue { line: usize, table: String, column: String, value: String, kind: DataKind },
}

/// Storage class of a column; fixed per column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Text,
    Integer,
    Real,
    Date,
}

impl DataKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataKind::Integer | DataKind::Real)
    }

    /// Whether a raw value string is storable under this kind.
    pub fn accepts(self, raw: &str) -> bool {
        match self {
            DataKind::Text => true,
            DataKind::Integer => {
                let body = raw.strip_prefix(['+', '-']).unwrap_or(raw);
                !body.is_empty() && body.chars().all(|c| c.is_ascii_digit())
            }
            DataKind::Real => crate::text::is_numeric_literal(raw),
            DataKind::Date => !raw.trim().is_empty(),
        }
    }

    pub fn sqlite_type(self) -> &'static str {
        match self {
            DataKind::Text | DataKind::Date => "TEXT",
            DataKind::Integer => "INTEGER",
            DataKind::Real => "REAL",
        }
    }

    /// Kinds whose SQL literals are written quoted.
    pub fn is_quoted(self) -> bool {
        matches!(self, DataKind::Text | DataKind::Date)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data_kind: DataKind,
    /// NL surface forms; the first entry is the canonical rendering surface.
    pub synonyms: Vec<String>,
    pub is_filterable: bool,
}

impl Column {
    /// Canonical NL surface form.
    pub fn surface(&self) -> &str {
        &self.synonyms[0]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// NL surface form of the table name.
    pub fn surface(&self) -> String {
        self.name.replace('_', " ")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub tables: Vec<Table>,
}

impl Schema {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&Column> {
        self.table(table).and_then(|t| t.column(column))
    }

    /// Number of tables containing a column of this name; drives the
    /// table-prefixing rule for placeholder tokens.
    pub fn tables_with_column(&self, column_name: &str) -> usize {
        self.tables.iter().filter(|t| t.column(column_name).is_some()).count()
    }
}

fn valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct ColumnDoc {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    synonyms: Vec<String>,
    #[serde(default = "default_true")]
    filterable: bool,
}

#[derive(Deserialize)]
struct TableDoc {
    name: String,
    columns: Vec<ColumnDoc>,
    #[serde(default)]
    foreign_keys: Vec<ForeignKey>,
}

#[derive(Deserialize)]
struct SchemaDoc {
    format_version: u64,
    name: String,
    tables: Vec<TableDoc>,
}

/// Parses and validates a schema document. Pure: identical documents yield
/// structurally equal schemas.
pub fn load_schema(document: &str) -> Result<Schema, SchemaError> {
    if document.trim().is_empty() {
        return Err(SchemaError::Parse("empty document".into()));
    }
    let doc: SchemaDoc =
        serde_json::from_str(document).map_err(|e| SchemaError::Parse(e.to_string()))?;
    if doc.format_version != SCHEMA_FORMAT_VERSION {
        return Err(SchemaError::FormatVersion {
            found: doc.format_version,
            expected: SCHEMA_FORMAT_VERSION,
        });
    }
    if doc.tables.is_empty() {
        return Err(SchemaError::NoTables);
    }
    if !valid_identifier(&doc.name) {
        return Err(SchemaError::BadIdentifier(doc.name));
    }

    let mut tables = Vec::new();
    let mut seen_tables = BTreeSet::new();
    for tdoc in doc.tables {
        if !valid_identifier(&tdoc.name) {
            return Err(SchemaError::BadIdentifier(tdoc.name));
        }
        if !seen_tables.insert(tdoc.name.clone()) {
            return Err(SchemaError::DuplicateTable(tdoc.name));
        }
        if tdoc.columns.is_empty() {
            return Err(SchemaError::NoColumns(tdoc.name));
        }
        let mut columns = Vec::new();
        let mut seen_cols = BTreeSet::new();
        for cdoc in tdoc.columns {
            if !valid_identifier(&cdoc.name) {
                return Err(SchemaError::BadIdentifier(cdoc.name));
            }
            if !seen_cols.insert(cdoc.name.clone()) {
                return Err(SchemaError::DuplicateColumn {
                    table: tdoc.name.clone(),
                    column: cdoc.name,
                });
            }
            let data_kind = match cdoc.kind.to_lowercase().as_str() {
                "text" => DataKind::Text,
                "integer" | "int" => DataKind::Integer,
                "real" | "float" | "double" => DataKind::Real,
                "date" => DataKind::Date,
                other => {
                    return Err(SchemaError::UnknownType {
                        table: tdoc.name.clone(),
                        column: cdoc.name,
                        kind: other.to_string(),
                    })
                }
            };
            let mut synonyms: Vec<String> =
                cdoc.synonyms.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if synonyms.is_empty() {
                synonyms.push(cdoc.name.replace('_', " "));
            }
            columns.push(Column {
                name: cdoc.name,
                data_kind,
                synonyms,
                is_filterable: cdoc.filterable,
            });
        }
        tables.push(Table { name: tdoc.name, columns, foreign_keys: tdoc.foreign_keys });
    }

    let schema = Schema { name: doc.name, tables };
    for table in &schema.tables {
        for fk in &table.foreign_keys {
            let local = table.column(&fk.column).ok_or_else(|| SchemaError::DanglingForeignKey {
                table: table.name.clone(),
                column: fk.column.clone(),
                ref_table: fk.ref_table.clone(),
                ref_column: fk.ref_column.clone(),
            })?;
            let remote = schema.column(&fk.ref_table, &fk.ref_column).ok_or_else(|| {
                SchemaError::DanglingForeignKey {
                    table: table.name.clone(),
                    column: fk.column.clone(),
                    ref_table: fk.ref_table.clone(),
                    ref_column: fk.ref_column.clone(),
                }
            })?;
            if local.data_kind != remote.data_kind {
                return Err(SchemaError::ForeignKeyType {
                    table: table.name.clone(),
                    column: fk.column.clone(),
                    local: local.data_kind,
                    ref_table: fk.ref_table.clone(),
                    ref_column: fk.ref_column.clone(),
                    remote: remote.data_kind,
                });
            }
        }
    }
    Ok(schema)
}

/// One (table, column, value) record from the value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRecord {
    pub table: String,
    pub column: String,
    pub value: serde_json::Value,
}

impl ValueRecord {
    fn value_string(&self) -> String {
        match &self.value {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct ValueHeader {
    format_version: u64,
}

/// Reads the value file: a `{"format_version":1}` header line followed by
/// one `{"table":..,"column":..,"value":..}` record per line.
pub fn load_values(text: &str) -> Result<Vec<ValueRecord>, SchemaError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (line_no, header) = lines.next().ok_or(SchemaError::MissingVersionHeader)?;
    let header: ValueHeader = serde_json::from_str(header)
        .map_err(|e| SchemaError::ValueParse { line: line_no + 1, message: e.to_string() })?;
    if header.format_version != SCHEMA_FORMAT_VERSION {
        return Err(SchemaError::FormatVersion {
            found: header.format_version,
            expected: SCHEMA_FORMAT_VERSION,
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let rec: ValueRecord = serde_json::from_str(line)
            .map_err(|e| SchemaError::ValueParse { line: idx + 1, message: e.to_string() })?;
        records.push(rec);
    }
    Ok(records)
}

/// A binding returned by [`ValueIndex::lookup`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueBinding {
    pub table: String,
    pub column: String,
    /// Verbatim value as supplied, preserved for reversible anonymization.
    pub value: String,
}

/// Maps normalized value surfaces to the columns that contain them, and
/// retains per-column samples for filter-slot filling.
#[derive(Debug, Clone, Default)]
pub struct ValueIndex {
    entries: BTreeMap<String, Vec<ValueBinding>>,
    samples: BTreeMap<(String, String), Vec<String>>,
    max_phrase_words: usize,
}

impl ValueIndex {
    /// All bindings whose normalized value equals `normalize(surface)`.
    pub fn lookup(&self, surface: &str) -> &[ValueBinding] {
        self.entries.get(&normalize(surface)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sample values recorded for a column, in file order.
    pub fn samples(&self, table: &str, column: &str) -> &[String] {
        self.samples
            .get(&(table.to_string(), column.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest indexed value in whitespace words; bounds the anonymizer's
    /// n-gram scan.
    pub fn max_phrase_words(&self) -> usize {
        self.max_phrase_words
    }

    /// All (normalized surface, bindings) entries, for audits and tests.
    pub fn entries(&self) -> impl Iterator<Item = (&String, &Vec<ValueBinding>)> {
        self.entries.iter()
    }
}

/// Builds the value index, validating every record against the schema.
pub fn build_value_index(
    schema: &Schema,
    records: &[ValueRecord],
) -> Result<ValueIndex, SchemaError> {
    let mut index = ValueIndex::default();
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2; // 1-based, after the header line
        let column = schema.column(&rec.table, &rec.column).ok_or_else(|| {
            SchemaError::UnknownColumn { line, table: rec.table.clone(), column: rec.column.clone() }
        })?;
        let value = rec.value_string();
        if !column.data_kind.accepts(&value) {
            return Err(SchemaError::IncompatibleValue {
                line,
                table: rec.table.clone(),
                column: rec.column.clone(),
                value,
                kind: column.data_kind,
            });
        }
        let key = normalize(&value);
        let binding =
            ValueBinding { table: rec.table.clone(), column: rec.column.clone(), value: value.clone() };
        let slot = index.entries.entry(key.clone()).or_default();
        if !slot.contains(&binding) {
            slot.push(binding);
        }
        index.max_phrase_words = index.max_phrase_words.max(key.split_whitespace().count());
        let samples =
            index.samples.entry((rec.table.clone(), rec.column.clone())).or_default();
        if !samples.contains(&value) {
            samples.push(value);
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn patients_doc() -> &'static str {
        r#"{
            "format_version": 1,
            "name": "hospital",
            "tables": [
                {
                    "name": "patients",
                    "columns": [
                        {"name": "name", "type": "text"},
                        {"name": "age", "type": "integer"},
                        {"name": "diagnosis", "type": "text"}
                    ]
                }
            ]
        }"#
    }

    #[test]
    fn loads_patients_schema() {
        let schema = load_schema(patients_doc()).unwrap();
        assert_eq!(schema.tables.len(), 1);
        assert_eq!(schema.tables[0].columns.len(), 3);
        assert_eq!(schema.tables[0].columns[1].data_kind, DataKind::Integer);
    }

    #[test]
    fn loads_cities_schema() {
        let doc = r#"{
            "format_version": 1,
            "name": "geo",
            "tables": [
                {"name": "cities", "columns": [
                    {"name": "name", "type": "text"},
                    {"name": "state", "type": "text"}
                ]}
            ]
        }"#;
        let schema = load_schema(doc).unwrap();
        assert_eq!(schema.tables.len(), 1);
        assert_eq!(schema.tables[0].columns.len(), 2);
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        assert!(matches!(load_schema("  \n"), Err(SchemaError::Parse(_))));
    }

    #[test]
    fn duplicate_table_rejected() {
        let doc = r#"{"format_version":1,"name":"d","tables":[
            {"name":"t","columns":[{"name":"a","type":"text"}]},
            {"name":"t","columns":[{"name":"b","type":"text"}]}]}"#;
        match load_schema(doc) {
            Err(SchemaError::DuplicateTable(name)) => assert_eq!(name, "t"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn dangling_foreign_key_rejected() {
        let doc = r#"{"format_version":1,"name":"d","tables":[
            {"name":"t","columns":[{"name":"a","type":"integer"}],
             "foreign_keys":[{"column":"a","ref_table":"u","ref_column":"id"}]}]}"#;
        assert!(matches!(load_schema(doc), Err(SchemaError::DanglingForeignKey { .. })));
    }

    #[test]
    fn foreign_key_type_mismatch_rejected() {
        let doc = r#"{"format_version":1,"name":"d","tables":[
            {"name":"t","columns":[{"name":"a","type":"integer"}],
             "foreign_keys":[{"column":"a","ref_table":"u","ref_column":"id"}]},
            {"name":"u","columns":[{"name":"id","type":"text"}]}]}"#;
        assert!(matches!(load_schema(doc), Err(SchemaError::ForeignKeyType { .. })));
    }

    #[test]
    fn synonyms_default_to_underscore_split() {
        let doc = r#"{"format_version":1,"name":"d","tables":[
            {"name":"t","columns":[{"name":"length_of_stay","type":"integer"}]}]}"#;
        let schema = load_schema(doc).unwrap();
        assert_eq!(schema.tables[0].columns[0].surface(), "length of stay");
    }

    #[test]
    fn load_schema_is_pure() {
        let a = load_schema(patients_doc()).unwrap();
        let b = load_schema(patients_doc()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    fn cities_index() -> (Schema, ValueIndex) {
        let doc = r#"{"format_version":1,"name":"geo","tables":[
            {"name":"cities","columns":[
                {"name":"name","type":"text"},
                {"name":"state","type":"text"}]}]}"#;
        let schema = load_schema(doc).unwrap();
        let values = "{\"format_version\":1}\n\
            {\"table\":\"cities\",\"column\":\"state\",\"value\":\"California\"}\n\
            {\"table\":\"cities\",\"column\":\"state\",\"value\":\"Texas\"}\n";
        let records = load_values(values).unwrap();
        let index = build_value_index(&schema, &records).unwrap();
        (schema, index)
    }

    #[test]
    fn lookup_is_case_folded() {
        let (_, index) = cities_index();
        let hits = index.lookup("california");
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].table, "cities");
        assert_eq!(hits[0].column, "state");
        assert_eq!(hits[0].value, "California");
    }

    #[test]
    fn empty_value_list_builds_empty_index() {
        let schema = load_schema(patients_doc()).unwrap();
        let index = build_value_index(&schema, &[]).unwrap();
        assert!(index.is_empty());
        assert!(index.lookup("anything").is_empty());
    }

    #[test]
    fn colliding_value_returns_both_bindings() {
        // The expected bindings are enumerated by hand for this two-column
        // collision: "20" lives in patients.age and rooms.number.
        let doc = r#"{"format_version":1,"name":"d","tables":[
            {"name":"patients","columns":[{"name":"age","type":"integer"}]},
            {"name":"rooms","columns":[{"name":"number","type":"integer"}]}]}"#;
        let schema = load_schema(doc).unwrap();
        let records = vec![
            ValueRecord { table: "patients".into(), column: "age".into(), value: 20.into() },
            ValueRecord { table: "rooms".into(), column: "number".into(), value: 20.into() },
        ];
        let index = build_value_index(&schema, &records).unwrap();
        let hits = index.lookup("20");
        assert_eq!(hits.len(), 2);
        assert_eq!((hits[0].table.as_str(), hits[0].column.as_str()), ("patients", "age"));
        assert_eq!((hits[1].table.as_str(), hits[1].column.as_str()), ("rooms", "number"));
    }

    #[test]
    fn unknown_column_and_bad_type_rejected() {
        let schema = load_schema(patients_doc()).unwrap();
        let bad_col =
            vec![ValueRecord { table: "patients".into(), column: "zip".into(), value: "x".into() }];
        assert!(matches!(
            build_value_index(&schema, &bad_col),
            Err(SchemaError::UnknownColumn { .. })
        ));
        let bad_val = vec![ValueRecord {
            table: "patients".into(),
            column: "age".into(),
            value: "twenty".into(),
        }];
        assert!(matches!(
            build_value_index(&schema, &bad_val),
            Err(SchemaError::IncompatibleValue { .. })
        ));
    }

    proptest! {
        // Completeness and soundness against a brute-force re-scan of the
        // inserted records.
        #[test]
        fn index_is_complete_and_sound(
            values in proptest::collection::vec("[a-zA-Z][a-zA-Z ]{0,10}", 1..20)
        ) {
            let doc = r#"{"format_version":1,"name":"d","tables":[
                {"name":"t","columns":[{"name":"a","type":"text"},{"name":"b","type":"text"}]}]}"#;
            let schema = load_schema(doc).unwrap();
            let records: Vec<ValueRecord> = values
                .iter()
                .enumerate()
                .map(|(i, v)| ValueRecord {
                    table: "t".into(),
                    column: if i % 2 == 0 { "a".into() } else { "b".into() },
                    value: v.clone().into(),
                })
                .collect();
            let index = build_value_index(&schema, &records).unwrap();
            // Completeness: every inserted value is found under its column.
            for rec in &records {
                let v = match &rec.value { serde_json::Value::String(s) => s.clone(), o => o.to_string() };
                let hits = index.lookup(&v);
                prop_assert!(hits.iter().any(|h| h.column == rec.column));
            }
            // Soundness: every indexed binding was inserted.
            for (_, bindings) in index.entries() {
                for b in bindings {
                    let inserted = records.iter().any(|r| {
                        let v = match &r.value { serde_json::Value::String(s) => s.clone(), o => o.to_string() };
                        r.table == b.table && r.column == b.column && v == b.value
                    });
                    prop_assert!(inserted);
                }
            }
        }
    }
}
