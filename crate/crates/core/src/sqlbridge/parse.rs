//! Parser for the SQL subset. Clause boundaries are found by scanning
//! top-level keywords; expressions inside clauses go to the expression parser.

use crate::error::{Error, Result};
use crate::expr::{parse_expr_at, Expr};

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Star,
    /// `alias.*`
    TableStar(String),
    Expr { expr: Expr, alias: Option<String>, text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    /// Placeholder id or a registered name.
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    pub fn qualifier(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub table: TableRef,
    pub on: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqlStatement {
    pub select: Vec<SelectItem>,
    pub from: TableRef,
    pub joins: Vec<Join>,
    pub filter: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub order_by: Vec<OrderKey>,
}

#[derive(Debug, Clone, Copy)]
struct Word<'a> {
    text: &'a str,
    at: usize,
    depth: usize,
}

/// Words outside string literals, with their paren depth.
fn words(sql: &str) -> Result<Vec<Word<'_>>> {
    let b = sql.as_bytes();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            b'\'' => {
                i += 1;
                loop {
                    match b.get(i) {
                        None => return Err(Error::parse(i, "unterminated string literal")),
                        Some(b'\'') if b.get(i + 1) == Some(&b'\'') => i += 2,
                        Some(b'\'') => break,
                        _ => i += 1,
                    }
                }
                i += 1;
            }
            b'(' => {
                depth += 1;
                i += 1;
            }
            b')' => {
                depth = depth.checked_sub(1).ok_or_else(|| Error::parse(i, "unbalanced ')'"))?;
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let s = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                    i += 1;
                }
                out.push(Word { text: &sql[s..i], at: s, depth });
            }
            c if c.is_ascii_digit() => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'.') {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    if depth != 0 {
        return Err(Error::parse(sql.len(), "unbalanced '('"));
    }
    Ok(out)
}

fn is(w: &Word, kw: &str) -> bool {
    w.text.eq_ignore_ascii_case(kw)
}

fn unsupported(what: &str) -> Error {
    Error::UnsupportedSql(what.to_string())
}

/// Rejects constructs outside the subset, naming the construct.
fn check_subset(ws: &[Word]) -> Result<()> {
    for (i, w) in ws.iter().enumerate() {
        let next = ws.get(i + 1);
        let lower = w.text.to_ascii_lowercase();
        let found = match lower.as_str() {
            "select" if i > 0 => Some("subquery"),
            "distinct" => Some("DISTINCT"),
            "having" => Some("HAVING"),
            "limit" => Some("LIMIT"),
            "offset" => Some("OFFSET"),
            "union" => Some("UNION"),
            "intersect" => Some("INTERSECT"),
            "except" => Some("EXCEPT"),
            "with" if i == 0 => Some("WITH"),
            "over" => Some("window function"),
            "left" | "right" | "full" | "outer" => Some("outer join"),
            "cross" => Some("CROSS JOIN"),
            "natural" => Some("NATURAL JOIN"),
            "using" => Some("JOIN ... USING"),
            "case" => Some("CASE"),
            "between" => Some("BETWEEN"),
            "is" if next.is_some_and(|n| is(n, "null") || is(n, "not")) => Some("IS NULL"),
            "exists" => Some("EXISTS"),
            _ => None,
        };
        if let Some(f) = found {
            return Err(unsupported(f));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Clause {
    Select,
    From,
    Join,
    On,
    Where,
    GroupBy,
    OrderBy,
}

/// Splits `text` at top-level commas.
fn split_commas(text: &str) -> Vec<(usize, &str)> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let (mut depth, mut start, mut i) = (0usize, 0usize, 0usize);
    while i < b.len() {
        match b[i] {
            b'\'' => {
                i += 1;
                while i < b.len() && !(b[i] == b'\'' && b.get(i + 1) != Some(&b'\'')) {
                    i += if b[i] == b'\'' { 2 } else { 1 };
                }
            }
            b'(' => depth += 1,
            b')' => depth -= 1,
            b',' if depth == 0 => {
                out.push((start, &text[start..i]));
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    out.push((start, &text[start..]));
    out
}

fn expr_at(text: &str, at: usize) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(Error::parse(at, "expected an expression"));
    }
    parse_expr_at(text, at)
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    c.next().is_some_and(|f| f.is_ascii_alphabetic() || f == '_') && c.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `expr [as] alias`: the alias is a trailing identifier after `as`, or after
/// a token that can end an expression.
fn split_alias(text: &str) -> (&str, Option<String>) {
    let t = text.trim_end();
    let Some(sp) = t.rfind(|c: char| c.is_whitespace()) else { return (t, None) };
    let last = &t[sp + 1..];
    if !is_ident(last) {
        return (t, None);
    }
    let head = t[..sp].trim_end();
    if let Some(h) = head.strip_suffix(" as").or_else(|| head.strip_suffix(" AS")).or_else(|| head.strip_suffix(" As")) {
        return (h, Some(last.to_string()));
    }
    let ends_expr = head.ends_with(|c: char| c.is_ascii_alphanumeric() || c == '_' || c == ')' || c == '\'');
    let kw = head.rsplit(|c: char| c.is_whitespace()).next().unwrap_or("").to_ascii_lowercase();
    if ends_expr && !matches!(kw.as_str(), "and" | "or" | "not" | "in" | "like") {
        (head, Some(last.to_string()))
    } else {
        (t, None)
    }
}

fn table_ref(text: &str, at: usize) -> Result<TableRef> {
    if text.contains(',') {
        return Err(unsupported("comma join"));
    }
    let parts: Vec<&str> = text.split_whitespace().collect();
    let (name, alias) = match parts.as_slice() {
        [n] => (*n, None),
        [n, a] => (*n, Some(*a)),
        [n, kw, a] if kw.eq_ignore_ascii_case("as") => (*n, Some(*a)),
        [] => return Err(Error::parse(at, "expected a table")),
        _ => {
            return Err(Error::parse(at, format!("cannot read table reference '{}'", text.trim())));
        }
    };
    if name.starts_with('(') {
        return Err(unsupported("subquery"));
    }
    if !is_ident(name) {
        return Err(Error::parse(at, format!("unexpected table name '{name}'")));
    }
    Ok(TableRef { name: name.to_string(), alias: alias.map(str::to_string) })
}

/// Parses a statement whose relation placeholders have already been replaced
/// by identifiers.
pub fn parse_statement(sql: &str) -> Result<SqlStatement> {
    let sql = sql.trim_end().trim_end_matches(';');
    let ws = words(sql)?;
    if !ws.first().is_some_and(|w| is(w, "select")) {
        return Err(Error::parse(0, "expected SELECT"));
    }
    check_subset(&ws)?;
    // clause starts: (clause, start of body, start of keyword)
    let mut marks: Vec<(Clause, usize, usize)> = vec![(Clause::Select, ws[0].at + 6, 0)];
    let top: Vec<&Word> = ws.iter().filter(|w| w.depth == 0).collect();
    let mut i = 1;
    while i < top.len() {
        let w = top[i];
        let end = w.at + w.text.len();
        let two = |kw: &str| top.get(i + 1).is_some_and(|n| is(n, kw));
        let next_end = top.get(i + 1).map(|n| n.at + n.text.len()).unwrap_or(end);
        match w.text.to_ascii_lowercase().as_str() {
            "from" => marks.push((Clause::From, end, w.at)),
            "inner" if two("join") => {
                marks.push((Clause::Join, next_end, w.at));
                i += 1;
            }
            "join" => marks.push((Clause::Join, end, w.at)),
            "on" => marks.push((Clause::On, end, w.at)),
            "where" => marks.push((Clause::Where, end, w.at)),
            "group" if two("by") => {
                marks.push((Clause::GroupBy, next_end, w.at));
                i += 1;
            }
            "order" if two("by") => {
                marks.push((Clause::OrderBy, next_end, w.at));
                i += 1;
            }
            "group" | "order" => return Err(Error::parse(w.at, format!("expected BY after {}", w.text))),
            _ => {}
        }
        i += 1;
    }
    let bodies: Vec<(Clause, usize, &str)> = marks
        .iter()
        .enumerate()
        .map(|(k, &(c, s, _))| {
            let e = marks.get(k + 1).map(|m| m.2).unwrap_or(sql.len());
            (c, s, &sql[s..e])
        })
        .collect();

    let mut stmt = SqlStatement {
        select: Vec::new(),
        from: TableRef { name: String::new(), alias: None },
        joins: Vec::new(),
        filter: None,
        group_by: Vec::new(),
        order_by: Vec::new(),
    };
    let mut seen_from = false;
    let mut k = 0;
    let order = [Clause::Select, Clause::From, Clause::Join, Clause::Where, Clause::GroupBy, Clause::OrderBy];
    let mut last_rank = 0;
    while k < bodies.len() {
        let (c, at, body) = bodies[k];
        let rank = order.iter().position(|o| *o == c).unwrap_or(2);
        if c != Clause::On && rank < last_rank {
            return Err(Error::parse(marks[k].2, "clauses out of order"));
        }
        if c != Clause::On {
            last_rank = rank;
        }
        match c {
            Clause::Select => {
                for (off, item) in split_commas(body) {
                    let t = item.trim();
                    let at = at + off + (item.len() - item.trim_start().len());
                    if t == "*" {
                        stmt.select.push(SelectItem::Star);
                    } else if let Some(q) = t.strip_suffix(".*") {
                        stmt.select.push(SelectItem::TableStar(q.to_string()));
                    } else {
                        let (e, alias) = split_alias(t);
                        stmt.select.push(SelectItem::Expr { expr: expr_at(e, at)?, alias, text: e.to_string() });
                    }
                }
            }
            Clause::From => {
                stmt.from = table_ref(body, at)?;
                seen_from = true;
            }
            Clause::Join => {
                let table = table_ref(body, at)?;
                let Some(&(Clause::On, on_at, on)) = bodies.get(k + 1) else {
                    return Err(unsupported("JOIN without ON"));
                };
                stmt.joins.push(Join { table, on: expr_at(on, on_at)? });
                k += 1;
            }
            Clause::On => return Err(Error::parse(marks[k].2, "ON without JOIN")),
            Clause::Where => stmt.filter = Some(expr_at(body, at)?),
            Clause::GroupBy => {
                for (off, item) in split_commas(body) {
                    stmt.group_by.push(expr_at(item, at + off)?);
                }
            }
            Clause::OrderBy => {
                for (off, item) in split_commas(body) {
                    let t = item.trim_end();
                    let lower = t.to_ascii_lowercase();
                    let (e, desc) = if lower.ends_with(" desc") {
                        (&t[..t.len() - 5], true)
                    } else if lower.ends_with(" asc") {
                        (&t[..t.len() - 4], false)
                    } else {
                        (t, false)
                    };
                    stmt.order_by.push(OrderKey { expr: expr_at(e, at + off)?, desc });
                }
            }
        }
        k += 1;
    }
    if !seen_from {
        return Err(unsupported("SELECT without FROM"));
    }
    if stmt.select.is_empty() {
        return Err(Error::parse(0, "empty select list"));
    }
    Ok(stmt)
}
