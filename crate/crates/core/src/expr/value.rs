use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Result of evaluating an expression. `Cell` is raw column text whose type is
/// decided by the operation consuming it.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Cell(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    List(Vec<String>),
}

/// Parses numeric cell text. Words like `inf` or `NaN` are not numbers here.
pub fn parse_number(s: &str) -> Option<Num> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(i) = t.parse::<i64>() {
        return Some(Num::Int(i));
    }
    let looks_numeric = t.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'))
        && t.bytes().any(|b| b.is_ascii_digit());
    if looks_numeric {
        if let Ok(f) = t.parse::<f64>() {
            return Some(Num::Float(f));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    pub fn as_f64(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Float(f) => f,
        }
    }

    pub fn into_value(self) -> Value {
        match self {
            Num::Int(i) => Value::Int(i),
            Num::Float(f) => Value::Float(f),
        }
    }

    pub fn cmp(self, other: Num) -> Ordering {
        match (self, other) {
            (Num::Int(a), Num::Int(b)) => a.cmp(&b),
            (a, b) => a.as_f64().total_cmp(&b.as_f64()),
        }
    }
}

pub fn format_float(f: f64) -> String {
    if f.is_finite() && f == f.trunc() && f.abs() < 1e15 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    /// Numeric view, if the value is a number or a numeric cell.
    pub fn as_num(&self) -> Option<Num> {
        match self {
            Value::Int(i) => Some(Num::Int(*i)),
            Value::Float(f) => Some(Num::Float(*f)),
            Value::Cell(s) => parse_number(s),
            _ => None,
        }
    }

    pub fn require_num(&self) -> Result<Num> {
        self.as_num()
            .ok_or_else(|| Error::TypeMismatch(format!("'{}' is not numeric", self.to_text())))
    }

    pub fn require_int(&self) -> Result<i64> {
        match self.require_num()? {
            Num::Int(i) => Ok(i),
            Num::Float(f) if f == f.trunc() && f.abs() < 9.0e15 => Ok(f as i64),
            Num::Float(f) => Err(Error::TypeMismatch(format!("'{f}' is not an integer"))),
        }
    }

    /// Only `true`/`false` (any case) count as booleans.
    pub fn as_bool(&self) -> Result<bool> {
        match self {
            Value::Bool(b) => Ok(*b),
            Value::Text(s) | Value::Cell(s) if s.eq_ignore_ascii_case("true") => Ok(true),
            Value::Text(s) | Value::Cell(s) if s.eq_ignore_ascii_case("false") => Ok(false),
            other => Err(Error::TypeMismatch(format!(
                "'{}' is not a boolean",
                other.to_text()
            ))),
        }
    }

    pub fn is_texty(&self) -> bool {
        matches!(self, Value::Text(_) | Value::List(_))
    }

    pub fn to_text(&self) -> String {
        match self {
            Value::Text(s) | Value::Cell(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => format_float(*f),
            Value::Bool(b) => b.to_string(),
            Value::List(l) => l.join(","),
        }
    }

    /// Comparison used by `=`, `<` and friends: numeric when both sides are
    /// numeric (numbers or numeric cells), textual otherwise.
    pub fn compare(&self, other: &Value) -> Ordering {
        if let (Value::Bool(a), Value::Bool(b)) = (self, other) {
            return a.cmp(b);
        }
        if !self.is_texty() && !other.is_texty() {
            if let (Some(a), Some(b)) = (self.as_num(), other.as_num()) {
                return a.cmp(b);
            }
        }
        self.to_text().cmp(&other.to_text())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Ordering for sort keys and group output: numbers before text, numbers
/// numerically, text lexicographically.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (parse_number(a), parse_number(b)) {
        (Some(x), Some(y)) => x.cmp(y).then_with(|| a.cmp(b)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}
