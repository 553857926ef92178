//! Tokenizer and recursive-descent parser for the supported SQL subset.
//!
//! The subset covers single-table SELECT queries with optional aggregates,
//! a single FK equi-join, AND/OR filter predicates (including comparison to
//! a one-level scalar subquery), and GROUP BY on a column or ordinal. It is
//! used to validate generated and bound queries and to locate placeholders.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SqlError {
    #[error("sql lex error at byte {at}: {message}")]
    Lex { at: usize, message: String },
    #[error("sql parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SqlToken {
    Ident(String),
    Number(String),
    Str(String),
    Placeholder(String),
    Cmp(String),
    Star,
    LParen,
    RParen,
    Comma,
    Dot,
}

/// Lexes SQL text into tokens. Keywords stay as `Ident`s; comparison of
/// keywords is case-insensitive in the parser.
pub fn lex(sql: &str) -> Result<Vec<SqlToken>, SqlError> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '*' => {
                tokens.push(SqlToken::Star);
                i += 1;
            }
            '(' => {
                tokens.push(SqlToken::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(SqlToken::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(SqlToken::Comma);
                i += 1;
            }
            '.' if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() => {
                return Err(SqlError::Lex { at: i, message: "number may not start with '.'".into() })
            }
            '.' => {
                tokens.push(SqlToken::Dot);
                i += 1;
            }
            '=' => {
                tokens.push(SqlToken::Cmp("=".into()));
                i += 1;
            }
            '<' | '>' => {
                let mut op = c.to_string();
                if i + 1 < bytes.len() && (bytes[i + 1] == b'=' || (c == '<' && bytes[i + 1] == b'>')) {
                    op.push(bytes[i + 1] as char);
                    i += 1;
                }
                tokens.push(SqlToken::Cmp(op));
                i += 1;
            }
            '\'' => {
                let mut raw = Vec::new();
                let mut j = i + 1;
                loop {
                    if j >= bytes.len() {
                        return Err(SqlError::Lex { at: i, message: "unterminated string literal".into() });
                    }
                    if bytes[j] == b'\'' {
                        if j + 1 < bytes.len() && bytes[j + 1] == b'\'' {
                            raw.push(b'\'');
                            j += 2;
                        } else {
                            j += 1;
                            break;
                        }
                    } else {
                        raw.push(bytes[j]);
                        j += 1;
                    }
                }
                let value = String::from_utf8(raw)
                    .map_err(|_| SqlError::Lex { at: i, message: "invalid utf-8 in string".into() })?;
                tokens.push(SqlToken::Str(value));
                i = j;
            }
            '@' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                if j == start {
                    return Err(SqlError::Lex { at: i, message: "bare '@'".into() });
                }
                tokens.push(SqlToken::Placeholder(format!("@{}", &sql[start..j])));
                i = j;
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' => {
                let start = i;
                let mut j = if c == '-' || c == '+' { i + 1 } else { i };
                if j >= bytes.len() || !bytes[j].is_ascii_digit() {
                    return Err(SqlError::Lex { at: i, message: format!("stray '{c}'") });
                }
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    if j >= bytes.len() || !bytes[j].is_ascii_digit() {
                        return Err(SqlError::Lex { at: i, message: "trailing '.' in number".into() });
                    }
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                tokens.push(SqlToken::Number(sql[start..j].to_string()));
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                tokens.push(SqlToken::Ident(sql[start..j].to_string()));
                i = j;
            }
            other => {
                return Err(SqlError::Lex { at: i, message: format!("unexpected character '{other}'") })
            }
        }
    }
    Ok(tokens)
}

/// Placeholders appearing in SQL text, in order of appearance.
pub fn extract_placeholders(sql: &str) -> Result<Vec<String>, SqlError> {
    Ok(lex(sql)?
        .into_iter()
        .filter_map(|t| match t {
            SqlToken::Placeholder(p) => Some(p),
            _ => None,
        })
        .collect())
}

/// Quotes a text literal for SQL, doubling embedded quotes.
pub fn quote_text_literal(value: &str) -> String {
    format!("'{}'", value.replace('\'', "''"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateFn {
    Count,
    Min,
    Max,
    Avg,
    Sum,
}

impl AggregateFn {
    fn parse(name: &str) -> Option<AggregateFn> {
        Some(match name.to_uppercase().as_str() {
            "COUNT" => AggregateFn::Count,
            "MIN" => AggregateFn::Min,
            "MAX" => AggregateFn::Max,
            "AVG" => AggregateFn::Avg,
            "SUM" => AggregateFn::Sum,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Star,
    Column(ColumnRef),
    Aggregate(AggregateFn, Option<ColumnRef>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RhsValue {
    Number(String),
    Str(String),
    Placeholder(String),
    Subquery(Box<SubQuery>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: ColumnRef,
    pub cmp: String,
    pub rhs: RhsValue,
}

/// Disjunction of conjunctions: `(p11 AND p12 ..) OR (p21 ..) OR ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub disjuncts: Vec<Vec<Predicate>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubQuery {
    pub aggregate: AggregateFn,
    pub column: Option<ColumnRef>,
    pub table: String,
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub table: String,
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupKey {
    Column(ColumnRef),
    Ordinal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectQuery {
    pub items: Vec<SelectItem>,
    pub table: String,
    pub join: Option<Join>,
    pub condition: Option<Condition>,
    pub group_by: Option<GroupKey>,
}

struct Parser {
    tokens: Vec<SqlToken>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&SqlToken> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<SqlToken> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        match self.next() {
            Some(SqlToken::Ident(w)) if w.eq_ignore_ascii_case(kw) => Ok(()),
            other => Err(SqlError::Parse(format!("expected {kw}, found {other:?}"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(SqlToken::Ident(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn parse_ident(&mut self, what: &str) -> Result<String, SqlError> {
        match self.next() {
            Some(SqlToken::Ident(w)) => Ok(w),
            other => Err(SqlError::Parse(format!("expected {what}, found {other:?}"))),
        }
    }

    fn parse_column_ref(&mut self) -> Result<ColumnRef, SqlError> {
        let first = self.parse_ident("column name")?;
        if matches!(self.peek(), Some(SqlToken::Dot)) {
            self.next();
            let column = self.parse_ident("column name after '.'")?;
            Ok(ColumnRef { table: Some(first), column })
        } else {
            Ok(ColumnRef { table: None, column: first })
        }
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, SqlError> {
        if matches!(self.peek(), Some(SqlToken::Star)) {
            self.next();
            return Ok(SelectItem::Star);
        }
        let name = self.parse_ident("select item")?;
        if let Some(agg) = AggregateFn::parse(&name) {
            if matches!(self.peek(), Some(SqlToken::LParen)) {
                self.next();
                let col = if matches!(self.peek(), Some(SqlToken::Star)) {
                    self.next();
                    if agg != AggregateFn::Count {
                        return Err(SqlError::Parse(format!("{agg:?}(*) is not supported")));
                    }
                    None
                } else {
                    Some(self.parse_column_ref()?)
                };
                match self.next() {
                    Some(SqlToken::RParen) => {}
                    other => return Err(SqlError::Parse(format!("expected ')', found {other:?}"))),
                }
                return Ok(SelectItem::Aggregate(agg, col));
            }
        }
        // plain column, possibly qualified
        if matches!(self.peek(), Some(SqlToken::Dot)) {
            self.next();
            let column = self.parse_ident("column name after '.'")?;
            Ok(SelectItem::Column(ColumnRef { table: Some(name), column }))
        } else {
            Ok(SelectItem::Column(ColumnRef { table: None, column: name }))
        }
    }

    fn parse_rhs(&mut self) -> Result<RhsValue, SqlError> {
        match self.next() {
            Some(SqlToken::Number(n)) => Ok(RhsValue::Number(n)),
            Some(SqlToken::Str(s)) => Ok(RhsValue::Str(s)),
            Some(SqlToken::Placeholder(p)) => Ok(RhsValue::Placeholder(p)),
            Some(SqlToken::LParen) => {
                let sub = self.parse_subquery()?;
                match self.next() {
                    Some(SqlToken::RParen) => Ok(RhsValue::Subquery(Box::new(sub))),
                    other => Err(SqlError::Parse(format!("expected ')', found {other:?}"))),
                }
            }
            other => Err(SqlError::Parse(format!("expected comparison value, found {other:?}"))),
        }
    }

    fn parse_predicate(&mut self) -> Result<Predicate, SqlError> {
        let column = self.parse_column_ref()?;
        let cmp = match self.next() {
            Some(SqlToken::Cmp(op)) => op,
            other => Err(SqlError::Parse(format!("expected comparator, found {other:?}")))?,
        };
        let rhs = self.parse_rhs()?;
        Ok(Predicate { column, cmp, rhs })
    }

    fn parse_condition(&mut self) -> Result<Condition, SqlError> {
        let mut disjuncts = Vec::new();
        let mut conj = vec![self.parse_predicate()?];
        loop {
            if self.at_keyword("AND") {
                self.next();
                conj.push(self.parse_predicate()?);
            } else if self.at_keyword("OR") {
                self.next();
                disjuncts.push(std::mem::take(&mut conj));
                conj.push(self.parse_predicate()?);
            } else {
                break;
            }
        }
        disjuncts.push(conj);
        Ok(Condition { disjuncts })
    }

    fn parse_subquery(&mut self) -> Result<SubQuery, SqlError> {
        self.expect_keyword("SELECT")?;
        let name = self.parse_ident("aggregate function")?;
        let aggregate = AggregateFn::parse(&name)
            .ok_or_else(|| SqlError::Parse(format!("expected aggregate in subquery, found {name}")))?;
        match self.next() {
            Some(SqlToken::LParen) => {}
            other => return Err(SqlError::Parse(format!("expected '(', found {other:?}"))),
        }
        let column = if matches!(self.peek(), Some(SqlToken::Star)) {
            self.next();
            if aggregate != AggregateFn::Count {
                return Err(SqlError::Parse(format!("{aggregate:?}(*) is not supported")));
            }
            None
        } else {
            Some(self.parse_column_ref()?)
        };
        match self.next() {
            Some(SqlToken::RParen) => {}
            other => return Err(SqlError::Parse(format!("expected ')', found {other:?}"))),
        }
        self.expect_keyword("FROM")?;
        let table = self.parse_ident("table name")?;
        let condition = if self.at_keyword("WHERE") {
            self.next();
            Some(self.parse_condition()?)
        } else {
            None
        };
        Ok(SubQuery { aggregate, column, table, condition })
    }

    fn parse_query(&mut self) -> Result<SelectQuery, SqlError> {
        self.expect_keyword("SELECT")?;
        let mut items = vec![self.parse_select_item()?];
        while matches!(self.peek(), Some(SqlToken::Comma)) {
            self.next();
            items.push(self.parse_select_item()?);
        }
        self.expect_keyword("FROM")?;
        let table = self.parse_ident("table name")?;
        let join = if self.at_keyword("JOIN") {
            self.next();
            let join_table = self.parse_ident("join table name")?;
            self.expect_keyword("ON")?;
            let left = self.parse_column_ref()?;
            match self.next() {
                Some(SqlToken::Cmp(op)) if op == "=" => {}
                other => {
                    return Err(SqlError::Parse(format!("expected '=' in join, found {other:?}")))
                }
            }
            let right = self.parse_column_ref()?;
            Some(Join { table: join_table, left, right })
        } else {
            None
        };
        let condition = if self.at_keyword("WHERE") {
            self.next();
            Some(self.parse_condition()?)
        } else {
            None
        };
        let group_by = if self.at_keyword("GROUP") {
            self.next();
            self.expect_keyword("BY")?;
            match self.peek() {
                Some(SqlToken::Number(_)) => {
                    let n = match self.next() {
                        Some(SqlToken::Number(n)) => n,
                        _ => unreachable!(),
                    };
                    let ordinal: usize = n
                        .parse()
                        .map_err(|_| SqlError::Parse(format!("bad GROUP BY ordinal {n}")))?;
                    if ordinal == 0 {
                        return Err(SqlError::Parse("GROUP BY ordinal must be >= 1".into()));
                    }
                    Some(GroupKey::Ordinal(ordinal))
                }
                _ => Some(GroupKey::Column(self.parse_column_ref()?)),
            }
        } else {
            None
        };
        if let Some(extra) = self.peek() {
            return Err(SqlError::Parse(format!("unexpected trailing token {extra:?}")));
        }
        Ok(SelectQuery { items, table, join, condition, group_by })
    }
}

/// Parses a query under the supported subset grammar.
pub fn parse_query(sql: &str) -> Result<SelectQuery, SqlError> {
    let tokens = lex(sql)?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.parse_query()
}
