//! Execution-based evaluation with the relaxed correctness criterion: a
//! prediction counts as correct when its execution result carries at least
//! the requested information — there must be an injective mapping from gold
//! columns onto predicted columns under which the projected row multisets
//! agree. Row order is ignored, rows are bags, column names are ignored
//! (translators may alias), and extra predicted columns are allowed.

use rusqlite::types::ValueRef;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::bridge::{anonymize, bind, Translator};
use crate::schema::{Schema, ValueIndex};

/// Relative tolerance for floating-point result cells, absorbing engine
/// formatting differences.
const REAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown variant label `{label}` on line {line} of {file}")]
    UnknownVariant { file: String, line: usize, label: String },
    #[error("malformed case on line {line} of {file}: {message}")]
    MalformedCase { file: String, line: usize, message: String },
    #[error("variant `{variant}`: {nl_lines} NL lines but {sql_lines} SQL lines")]
    MisalignedFiles { variant: String, nl_lines: usize, sql_lines: usize },
    #[error("gold SQL on line {line} of {file} does not parse: {message}")]
    BadGoldSql { file: String, line: usize, message: String },
    #[error("benchmark path {0} is neither a directory nor a file")]
    BadPath(String),
}

/// The seven linguistic variant categories of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Naive,
    Syntactic,
    Lexical,
    Morphological,
    Semantic,
    Missing,
    Mixed,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Naive,
        Variant::Syntactic,
        Variant::Lexical,
        Variant::Morphological,
        Variant::Semantic,
        Variant::Missing,
        Variant::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Syntactic => "syntactic",
            Variant::Lexical => "lexical",
            Variant::Morphological => "morphological",
            Variant::Semantic => "semantic",
            Variant::Missing => "missing",
            Variant::Mixed => "mixed",
        }
    }
}

impl FromStr for Variant {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim().to_lowercase())
            .ok_or(())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCase {
    pub nl: String,
    pub gold_sql: String,
    pub variant: Variant,
}

#[derive(Debug, Clone)]
pub struct BenchmarkLoad {
    pub cases: Vec<EvalCase>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct CaseRecord {
    nl: String,
    sql: String,
    variant: String,
}

fn validate_gold(sql: &str, file: &str, line: usize) -> Result<(), EvalError> {
    crate::sql::parse_query(sql).map_err(|e| EvalError::BadGoldSql {
        file: file.to_string(),
        line,
        message: e.to_string(),
    })?;
    Ok(())
}

/// Loads a benchmark from either a directory of per-variant paired line
/// files (`<variant>.nl` + `<variant>.sql`, aligned by line number) or a
/// consolidated JSONL record file with `{nl, sql, variant}` fields.
pub fn load_benchmark(path: &Path) -> Result<BenchmarkLoad, EvalError> {
    let mut cases = Vec::new();
    let mut warnings = Vec::new();
    if path.is_dir() {
        for variant in Variant::ALL {
            let nl_path = path.join(format!("{}.nl", variant.name()));
            let sql_path = path.join(format!("{}.sql", variant.name()));
            if !nl_path.exists() && !sql_path.exists() {
                continue;
            }
            let nl_text = std::fs::read_to_string(&nl_path)?;
            let sql_text = std::fs::read_to_string(&sql_path)?;
            let nl_lines: Vec<&str> = nl_text.lines().collect();
            let sql_lines: Vec<&str> = sql_text.lines().collect();
            if nl_lines.len() != sql_lines.len() {
                return Err(EvalError::MisalignedFiles {
                    variant: variant.name().to_string(),
                    nl_lines: nl_lines.len(),
                    sql_lines: sql_lines.len(),
                });
            }
            for (i, (nl, sql)) in nl_lines.iter().zip(&sql_lines).enumerate() {
                let (nl, sql) = (nl.trim(), sql.trim());
                if nl.is_empty() && sql.is_empty() {
                    continue;
                }
                if nl.is_empty() || sql.is_empty() {
                    return Err(EvalError::MalformedCase {
                        file: nl_path.display().to_string(),
                        line: i + 1,
                        message: "NL/SQL line blank on one side only".into(),
                    });
                }
                validate_gold(sql, &sql_path.display().to_string(), i + 1)?;
                cases.push(EvalCase { nl: nl.to_string(), gold_sql: sql.to_string(), variant });
            }
        }
    } else if path.is_file() {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CaseRecord =
                serde_json::from_str(line).map_err(|e| EvalError::MalformedCase {
                    file: file.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let variant =
                Variant::from_str(&record.variant).map_err(|_| EvalError::UnknownVariant {
                    file: file.clone(),
                    line: i + 1,
                    label: record.variant.clone(),
                })?;
            validate_gold(&record.sql, &file, i + 1)?;
            cases.push(EvalCase { nl: record.nl, gold_sql: record.sql, variant });
        }
    } else {
        return Err(EvalError::BadPath(path.display().to_string()));
    }
    if cases.is_empty() {
        warnings.push("benchmark contains no cases".to_string());
    }
    Ok(BenchmarkLoad { cases, warnings })
}

/// One result cell. NULL equals NULL for comparison purposes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SqlValue {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

impl SqlValue {
    fn rank(&self) -> u8 {
        match self {
            SqlValue::Null => 0,
            SqlValue::Int(_) | SqlValue::Real(_) => 1,
            SqlValue::Text(_) => 2,
        }
    }

    fn as_f64(&self) -> f64 {
        match self {
            SqlValue::Int(i) => *i as f64,
            SqlValue::Real(r) => *r,
            _ => f64::NAN,
        }
    }
}

/// Total order used only to sort multisets before tolerant comparison.
fn cmp_values(a: &SqlValue, b: &SqlValue) -> Ordering {
    match a.rank().cmp(&b.rank()) {
        Ordering::Equal => match (a, b) {
            (SqlValue::Null, SqlValue::Null) => Ordering::Equal,
            (SqlValue::Text(x), SqlValue::Text(y)) => x.cmp(y),
            _ => a
                .as_f64()
                .total_cmp(&b.as_f64())
                .then_with(|| matches!(a, SqlValue::Real(_)).cmp(&matches!(b, SqlValue::Real(_)))),
        },
        other => other,
    }
}

fn values_eq(a: &SqlValue, b: &SqlValue) -> bool {
    match (a, b) {
        (SqlValue::Null, SqlValue::Null) => true,
        (SqlValue::Text(x), SqlValue::Text(y)) => x == y,
        (SqlValue::Int(x), SqlValue::Int(y)) => x == y,
        (x, y) if x.rank() == 1 && y.rank() == 1 => {
            let (x, y) = (x.as_f64(), y.as_f64());
            x == y || (x - y).abs() <= REAL_TOLERANCE * x.abs().max(y.abs())
        }
        _ => false,
    }
}

/// Execution result: column names plus a bag of rows.
#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
}

/// Runs a query, capturing columns and the row bag. Engine errors come back
/// as `Err(message)` so the harness can record an execution-failure verdict
/// instead of crashing.
pub fn execute(conn: &Connection, sql: &str) -> Result<ResultTable, String> {
    let mut stmt = conn.prepare(sql).map_err(|e| e.to_string())?;
    let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    let mut raw = stmt.query([]).map_err(|e| e.to_string())?;
    while let Some(row) = raw.next().map_err(|e| e.to_string())? {
        let mut cells = Vec::with_capacity(columns.len());
        for i in 0..columns.len() {
            let value = match row.get_ref(i).map_err(|e| e.to_string())? {
                ValueRef::Null => SqlValue::Null,
                ValueRef::Integer(v) => SqlValue::Int(v),
                ValueRef::Real(v) => SqlValue::Real(v),
                ValueRef::Text(t) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => SqlValue::Text(hex::encode(b)),
            };
            cells.push(value);
        }
        rows.push(cells);
    }
    Ok(ResultTable { columns, rows })
}

fn multiset_eq(a: &mut Vec<&SqlValue>, b: &mut Vec<&SqlValue>) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.sort_by(|x, y| cmp_values(x, y));
    b.sort_by(|x, y| cmp_values(x, y));
    a.iter().zip(b.iter()).all(|(x, y)| values_eq(x, y))
}

fn rows_multiset_eq(mut a: Vec<Vec<&SqlValue>>, mut b: Vec<Vec<&SqlValue>>) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let row_cmp = |x: &Vec<&SqlValue>, y: &Vec<&SqlValue>| {
        for (u, v) in x.iter().zip(y.iter()) {
            match cmp_values(u, v) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        x.len().cmp(&y.len())
    };
    a.sort_by(row_cmp);
    b.sort_by(row_cmp);
    a.iter()
        .zip(b.iter())
        .all(|(x, y)| x.len() == y.len() && x.iter().zip(y.iter()).all(|(u, v)| values_eq(u, v)))
}

/// The relaxed correctness criterion: true iff some injective mapping from
/// gold columns to predicted columns makes the projected predicted row bag
/// equal the gold row bag. Column mapping is by value multiset with
/// backtracking over ambiguous columns; names are ignored.
pub fn results_match(predicted: &ResultTable, gold: &ResultTable) -> bool {
    let g = gold.columns.len();
    let p = predicted.columns.len();
    if g > p || gold.rows.len() != predicted.rows.len() {
        return false;
    }
    if g == 0 {
        return true;
    }
    let gold_cols: Vec<Vec<&SqlValue>> =
        (0..g).map(|j| gold.rows.iter().map(|r| &r[j]).collect()).collect();
    let pred_cols: Vec<Vec<&SqlValue>> =
        (0..p).map(|j| predicted.rows.iter().map(|r| &r[j]).collect()).collect();

    // candidate predicted columns per gold column, pruned by column multiset
    let candidates: Vec<Vec<usize>> = gold_cols
        .iter()
        .map(|gc| {
            (0..p)
                .filter(|&j| multiset_eq(&mut gc.clone(), &mut pred_cols[j].clone()))
                .collect()
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return false;
    }

    fn assign(
        i: usize,
        mapping: &mut Vec<usize>,
        used: &mut Vec<bool>,
        candidates: &[Vec<usize>],
        predicted: &ResultTable,
        gold: &ResultTable,
    ) -> bool {
        if i == candidates.len() {
            let projected: Vec<Vec<&SqlValue>> = predicted
                .rows
                .iter()
                .map(|r| mapping.iter().map(|&j| &r[j]).collect())
                .collect();
            let gold_rows: Vec<Vec<&SqlValue>> =
                gold.rows.iter().map(|r| r.iter().collect()).collect();
            return rows_multiset_eq(projected, gold_rows);
        }
        for &j in &candidates[i] {
            if used[j] {
                continue;
            }
            used[j] = true;
            mapping.push(j);
            if assign(i + 1, mapping, used, candidates, predicted, gold) {
                return true;
            }
            mapping.pop();
            used[j] = false;
        }
        false
    }

    let mut mapping = Vec::with_capacity(g);
    let mut used = vec![false; p];
    assign(0, &mut mapping, &mut used, &candidates, predicted, gold)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Correct,
    Mismatch,
    TranslateFailed,
    BindFailed,
    PredictedExecutionFailed,
    GoldExecutionFailed,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseVerdict {
    pub case_index: usize,
    pub variant: Variant,
    pub kind: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_sql: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CaseVerdict {
    pub fn is_correct(&self) -> bool {
        self.kind == VerdictKind::Correct
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VariantStats {
    pub correct: usize,
    pub total: usize,
}

impl VariantStats {
    /// Exact accuracy as a rational; display uses [`Self::accuracy_display`].
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// Percentage truncated toward zero at two decimals, exactly as the
    /// breakdown tables format it: 11/57 displays as 19.29.
    pub fn accuracy_display(&self) -> String {
        let scaled = (self.correct as u128 * 10_000) / self.total as u128;
        format!("{}.{:02}", scaled / 100, scaled % 100)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub per_variant: Vec<(Variant, VariantStats)>,
    pub overall: VariantStats,
    pub verdicts: Vec<CaseVerdict>,
}

impl EvalReport {
    /// Assembles the report from per-case verdicts; variants without cases
    /// are omitted rather than reported as 0/0.
    pub fn from_verdicts(verdicts: Vec<CaseVerdict>) -> EvalReport {
        let mut per_variant = Vec::new();
        for variant in Variant::ALL {
            let total = verdicts.iter().filter(|v| v.variant == variant).count();
            if total == 0 {
                continue;
            }
            let correct =
                verdicts.iter().filter(|v| v.variant == variant && v.is_correct()).count();
            per_variant.push((variant, VariantStats { correct, total }));
        }
        let overall = VariantStats {
            correct: per_variant.iter().map(|(_, s)| s.correct).sum(),
            total: per_variant.iter().map(|(_, s)| s.total).sum(),
        };
        EvalReport { per_variant, overall, verdicts }
    }

    /// Human-readable accuracy table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<15} {:>8} {:>7} {:>9}\n", "variant", "correct", "total", "accuracy"));
        for (variant, stats) in &self.per_variant {
            out.push_str(&format!(
                "{:<15} {:>8} {:>7} {:>8}%\n",
                variant.name(),
                stats.correct,
                stats.total,
                stats.accuracy_display()
            ));
        }
        if self.overall.total > 0 {
            out.push_str(&format!(
                "{:<15} {:>8} {:>7} {:>8}%\n",
                "overall",
                self.overall.correct,
                self.overall.total,
                self.overall.accuracy_display()
            ));
        }
        out
    }
}

fn run_case(
    translator: &dyn Translator,
    case: &EvalCase,
    conn: &Connection,
    schema: &Schema,
    index: &ValueIndex,
) -> (VerdictKind, Option<String>, Option<String>) {
    let anon = anonymize(&case.nl, schema, index);
    let sql_with_placeholders = match translator.translate(&anon.anonymized) {
        Ok(sql) => sql,
        Err(e) => return (VerdictKind::TranslateFailed, None, Some(e.to_string())),
    };
    let bound = match bind(&sql_with_placeholders, &anon.map, schema) {
        Ok(sql) => sql,
        Err(e) => {
            return (
                VerdictKind::BindFailed,
                Some(sql_with_placeholders),
                Some(e.to_string()),
            )
        }
    };
    let predicted = match execute(conn, &bound) {
        Ok(table) => table,
        Err(e) => return (VerdictKind::PredictedExecutionFailed, Some(bound), Some(e)),
    };
    let gold = match execute(conn, &case.gold_sql) {
        Ok(table) => table,
        Err(e) => return (VerdictKind::GoldExecutionFailed, Some(bound), Some(e)),
    };
    if results_match(&predicted, &gold) {
        (VerdictKind::Correct, Some(bound), None)
    } else {
        (VerdictKind::Mismatch, Some(bound), None)
    }
}

/// Runs every case through anonymize → translate → bind → execute →
/// results_match, recording a stage-of-failure verdict per case.
pub fn evaluate(
    translator: &dyn Translator,
    cases: &[EvalCase],
    conn: &Connection,
    schema: &Schema,
    index: &ValueIndex,
) -> EvalReport {
    let verdicts = cases
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let (kind, predicted_sql, detail) = run_case(translator, case, conn, schema, index);
            CaseVerdict { case_index: i, variant: case.variant, kind, predicted_sql, detail }
        })
        .collect();
    EvalReport::from_verdicts(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(columns: &[&str], rows: &[&[&str]]) -> ResultTable {
        // cells starting with '#' become integers, "NULL" becomes NULL
        ResultTable {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| {
                            if *c == "NULL" {
                                SqlValue::Null
                            } else if let Some(n) = c.strip_prefix('#') {
                                SqlValue::Int(n.parse().unwrap())
                            } else {
                                SqlValue::Text(c.to_string())
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn identical_tables_match() {
        let t = table(&["name"], &[&["Alice"], &["Bob"]]);
        assert!(results_match(&t, &t));
    }

    #[test]
    fn superset_of_requested_columns_matches() {
        let gold = table(&["name"], &[&["Alice"], &["Bob"]]);
        let predicted =
            table(&["name", "age"], &[&["Alice", "#20"], &["Bob", "#20"]]);
        assert!(results_match(&predicted, &gold));
        // the relaxation is one-directional
        assert!(!results_match(&gold, &predicted));
    }

    #[test]
    fn extra_rows_break_the_match() {
        let gold = table(&["name"], &[&["Alice"]]);
        let predicted = table(&["name"], &[&["Alice"], &["Bob"]]);
        assert!(!results_match(&predicted, &gold));
    }

    #[test]
    fn row_order_is_ignored_and_bags_are_respected() {
        let gold = table(&["n"], &[&["a"], &["b"], &["a"]]);
        let shuffled = table(&["n"], &[&["b"], &["a"], &["a"]]);
        assert!(results_match(&shuffled, &gold));
        let collapsed = table(&["n"], &[&["a"], &["b"], &["b"]]);
        assert!(!results_match(&collapsed, &gold));
    }

    #[test]
    fn columnwise_equality_is_not_enough() {
        // columns have equal multisets but the rows pair differently
        let gold = table(&["a", "b"], &[&["#1", "#2"], &["#3", "#4"]]);
        let crossed = table(&["a", "b"], &[&["#1", "#4"], &["#3", "#2"]]);
        assert!(!results_match(&crossed, &gold));
    }

    #[test]
    fn column_mapping_ignores_names_and_order() {
        let gold = table(&["name", "age"], &[&["Alice", "#20"], &["Bob", "#30"]]);
        let swapped = table(&["x", "y"], &[&["#20", "Alice"], &["#30", "Bob"]]);
        assert!(results_match(&swapped, &gold));
    }

    #[test]
    fn null_equals_null() {
        let gold = table(&["n"], &[&["NULL"]]);
        let predicted = table(&["n"], &[&["NULL"]]);
        assert!(results_match(&predicted, &gold));
    }

    #[test]
    fn real_cells_compare_with_relative_tolerance() {
        let gold = ResultTable {
            columns: vec!["avg".into()],
            rows: vec![vec![SqlValue::Real(10.0)]],
        };
        let predicted = ResultTable {
            columns: vec!["avg".into()],
            rows: vec![vec![SqlValue::Real(10.0 + 1e-12)]],
        };
        assert!(results_match(&predicted, &gold));
        let off = ResultTable {
            columns: vec!["avg".into()],
            rows: vec![vec![SqlValue::Real(10.1)]],
        };
        assert!(!results_match(&off, &gold));
        // integer vs real of the same magnitude also matches
        let int_gold = ResultTable {
            columns: vec!["avg".into()],
            rows: vec![vec![SqlValue::Int(10)]],
        };
        assert!(results_match(&predicted, &int_gold));
    }

    #[test]
    fn empty_results_still_compare() {
        let gold = table(&["n"], &[]);
        let predicted = table(&["n", "m"], &[]);
        assert!(results_match(&predicted, &gold));
        let nonempty = table(&["n"], &[&["x"]]);
        assert!(!results_match(&gold, &nonempty));
    }

    #[test]
    fn accuracy_display_truncates_like_the_breakdown_table() {
        assert_eq!(VariantStats { correct: 11, total: 57 }.accuracy_display(), "19.29");
        assert_eq!(VariantStats { correct: 12, total: 57 }.accuracy_display(), "21.05");
        assert_eq!(VariantStats { correct: 16, total: 57 }.accuracy_display(), "28.07");
        assert_eq!(VariantStats { correct: 8, total: 57 }.accuracy_display(), "14.03");
        assert_eq!(VariantStats { correct: 10, total: 57 }.accuracy_display(), "17.54");
        assert_eq!(VariantStats { correct: 4, total: 57 }.accuracy_display(), "7.01");
        assert_eq!(VariantStats { correct: 13, total: 57 }.accuracy_display(), "22.80");
        assert_eq!(VariantStats { correct: 57, total: 57 }.accuracy_display(), "100.00");
    }

    #[test]
    fn report_assembles_per_variant_and_overall() {
        let mut verdicts = Vec::new();
        for i in 0..57 {
            verdicts.push(CaseVerdict {
                case_index: i,
                variant: Variant::Naive,
                kind: if i < 11 { VerdictKind::Correct } else { VerdictKind::Mismatch },
                predicted_sql: None,
                detail: None,
            });
        }
        let report = EvalReport::from_verdicts(verdicts);
        assert_eq!(report.per_variant.len(), 1);
        let (variant, stats) = report.per_variant[0];
        assert_eq!(variant, Variant::Naive);
        assert_eq!(stats.correct, 11);
        assert_eq!(stats.accuracy_display(), "19.29");
        assert_eq!(report.overall.correct, 11);
        assert_eq!(report.overall.total, 57);
        // empty variants omitted, not reported as 0/0
        assert!(report.per_variant.iter().all(|(v, _)| *v == Variant::Naive));
    }

    #[test]
    fn unknown_variant_label_is_rejected() {
        assert!(Variant::from_str("sarcastic").is_err());
        assert_eq!(Variant::from_str("naive"), Ok(Variant::Naive));
    }

    #[test]
    fn execution_failure_is_a_verdict_value_not_a_crash() {
        let conn = Connection::open_in_memory().unwrap();
        conn.execute_batch("CREATE TABLE t (x INTEGER); INSERT INTO t VALUES (1);").unwrap();
        assert!(execute(&conn, "SELECT nope FROM t").is_err());
        let table = execute(&conn, "SELECT x FROM t WHERE x > 99").unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.columns, vec!["x"]);
    }
}
