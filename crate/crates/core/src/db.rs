//! In-memory SQLite databases instantiated from a schema, with seeding
//! helpers for benchmarks and executability sweeps.

use rusqlite::Connection;
use thiserror::Error;

use crate::bridge::{BindingMap, Placeholder};
use crate::schema::{Schema, ValueIndex};

#[derive(Debug, Error)]
pub enum DbError {
    #[error("sqlite error: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("placeholder {0} does not resolve against the schema")]
    UnresolvedPlaceholder(String),
    #[error("no sample values recorded for {table}.{column}")]
    NoSamples { table: String, column: String },
    #[error(transparent)]
    Sql(#[from] crate::sql::SqlError),
}

/// Creates an in-memory database with one table per schema table.
pub fn create_database(schema: &Schema) -> Result<Connection, DbError> {
    let conn = Connection::open_in_memory()?;
    for table in &schema.tables {
        let columns: Vec<String> = table
            .columns
            .iter()
            .map(|c| format!("{} {}", c.name, c.data_kind.sqlite_type()))
            .collect();
        conn.execute_batch(&format!(
            "CREATE TABLE {} ({});",
            table.name,
            columns.join(", ")
        ))?;
    }
    Ok(conn)
}

/// Runs a seed script (typically INSERT statements) against the database.
pub fn seed_with_script(conn: &Connection, script: &str) -> Result<(), DbError> {
    conn.execute_batch(script)?;
    Ok(())
}

/// Synthesizes rows from per-column sample values: table row i takes each
/// column's i-th sample (cycling), NULL where a column has no samples.
/// Returns the number of rows inserted.
pub fn seed_rows_from_values(
    conn: &Connection,
    schema: &Schema,
    index: &ValueIndex,
) -> Result<usize, DbError> {
    let mut inserted = 0;
    for table in &schema.tables {
        let counts: Vec<usize> =
            table.columns.iter().map(|c| index.samples(&table.name, &c.name).len()).collect();
        let rows = counts.iter().copied().max().unwrap_or(0);
        for i in 0..rows {
            let values: Vec<String> = table
                .columns
                .iter()
                .zip(&counts)
                .map(|(c, &n)| {
                    if n == 0 {
                        "NULL".to_string()
                    } else {
                        let v = &index.samples(&table.name, &c.name)[i % n];
                        if c.data_kind.is_quoted() {
                            crate::sql::quote_text_literal(v)
                        } else {
                            v.clone()
                        }
                    }
                })
                .collect();
            conn.execute_batch(&format!(
                "INSERT INTO {} VALUES ({});",
                table.name,
                values.join(", ")
            ))?;
            inserted += 1;
        }
    }
    Ok(inserted)
}

/// Builds a binding map for every placeholder of a SQL string from the
/// value index's per-column samples, choosing samples deterministically by
/// ordinal. Used to prove generated corpora executable.
pub fn sample_binding_map(
    sql: &str,
    schema: &Schema,
    index: &ValueIndex,
) -> Result<BindingMap, DbError> {
    let mut bindings = Vec::new();
    for token in crate::sql::extract_placeholders(sql)? {
        let placeholder = Placeholder::resolve_token(&token, schema)
            .ok_or_else(|| DbError::UnresolvedPlaceholder(token.clone()))?;
        let samples = index.samples(&placeholder.table, &placeholder.column);
        if samples.is_empty() {
            return Err(DbError::NoSamples {
                table: placeholder.table,
                column: placeholder.column,
            });
        }
        let pick = samples[(placeholder.ordinal.unwrap_or(1) - 1) % samples.len()].clone();
        bindings.push((placeholder, pick));
    }
    Ok(BindingMap::manual(bindings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{build_value_index, load_schema, load_values};

    fn fixture() -> (Schema, ValueIndex) {
        let schema = load_schema(
            r#"{"format_version":1,"name":"hospital","tables":[
                {"name":"patients","columns":[
                    {"name":"name","type":"text"},
                    {"name":"age","type":"integer"}]}]}"#,
        )
        .unwrap();
        let values = "{\"format_version\":1}\n\
            {\"table\":\"patients\",\"column\":\"name\",\"value\":\"Alice\"}\n\
            {\"table\":\"patients\",\"column\":\"name\",\"value\":\"Bob\"}\n\
            {\"table\":\"patients\",\"column\":\"age\",\"value\":20}\n\
            {\"table\":\"patients\",\"column\":\"age\",\"value\":30}\n";
        let index = build_value_index(&schema, &load_values(values).unwrap()).unwrap();
        (schema, index)
    }

    #[test]
    fn creates_and_seeds_tables_from_values() {
        let (schema, index) = fixture();
        let conn = create_database(&schema).unwrap();
        let rows = seed_rows_from_values(&conn, &schema, &index).unwrap();
        assert_eq!(rows, 2);
        let count: i64 =
            conn.query_row("SELECT COUNT(*) FROM patients", [], |r| r.get(0)).unwrap();
        assert_eq!(count, 2);
    }

    #[test]
    fn seed_script_applies() {
        let (schema, _) = fixture();
        let conn = create_database(&schema).unwrap();
        seed_with_script(&conn, "INSERT INTO patients VALUES ('Z', 9);").unwrap();
        let count: i64 =
            conn.query_row("SELECT COUNT(*) FROM patients", [], |r| r.get(0)).unwrap();
        assert_eq!(count, 1);
    }

    #[test]
    fn sample_bindings_resolve_placeholders_and_ordinals() {
        let (schema, index) = fixture();
        let map = sample_binding_map(
            "SELECT * FROM patients WHERE age = @AGE_1 OR age = @AGE_2",
            &schema,
            &index,
        )
        .unwrap();
        let constants: Vec<&str> =
            map.resolved().map(|b| b.constant.as_str()).collect();
        assert_eq!(constants, vec!["20", "30"]);
        let bound = crate::bridge::bind(
            "SELECT * FROM patients WHERE age = @AGE_1 OR age = @AGE_2",
            &map,
            &schema,
        )
        .unwrap();
        assert_eq!(bound, "SELECT * FROM patients WHERE age = 20 OR age = 30");
    }

    #[test]
    fn missing_samples_are_reported() {
        let (schema, _) = fixture();
        let empty = ValueIndex::default();
        assert!(matches!(
            sample_binding_map("SELECT * FROM patients WHERE age = @AGE", &schema, &empty),
            Err(DbError::NoSamples { .. })
        ));
    }
}
