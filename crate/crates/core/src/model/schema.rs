use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Text,
    Integer,
    Float,
}

impl ColumnKind {
    /// Narrowest kind that holds `cell`. Empty cells fit every kind.
    pub fn of_cell(cell: &str) -> Option<ColumnKind> {
        if cell.is_empty() {
            None
        } else if cell.parse::<i64>().is_ok() {
            Some(ColumnKind::Integer)
        } else if cell.parse::<f64>().is_ok() {
            Some(ColumnKind::Float)
        } else {
            Some(ColumnKind::Text)
        }
    }

    pub fn widen(self, other: ColumnKind) -> ColumnKind {
        use ColumnKind::*;
        match (self, other) {
            (Text, _) | (_, Text) => Text,
            (Float, _) | (_, Float) => Float,
            _ => Integer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn text(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Text }
    }
}

/// Column list plus the genome-order flag. Names are compared
/// case-insensitively and displayed as written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<Column>,
    ordered: bool,
}

impl Schema {
    pub fn new(columns: Vec<Column>, ordered: bool) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() || c.name.contains(['\t', '\n']) {
                return Err(Error::SchemaError(format!("invalid column name {:?}", c.name)));
            }
            if columns[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        if ordered && columns.len() < 2 {
            return Err(Error::SchemaError(
                "genome-ordered schema needs contig and position columns".into(),
            ));
        }
        Ok(Schema { columns, ordered })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], ordered: bool) -> Result<Self> {
        Schema::new(names.iter().map(|n| Column::text(n.as_ref())).collect(), ordered)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn is_ordered(&self) -> bool {
        self.ordered
    }

    pub fn with_ordered(mut self, ordered: bool) -> Result<Self> {
        if ordered && self.columns.len() < 2 {
            return Err(Error::SchemaError(
                "genome-ordered schema needs contig and position columns".into(),
            ));
        }
        self.ordered = ordered;
        Ok(self)
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.columns[idx].name
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Resolves a column by name or by 1-based `#N` position.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        if let Some(n) = name.strip_prefix('#') {
            if let Ok(i) = n.parse::<usize>() {
                if i >= 1 && i <= self.columns.len() {
                    return Ok(i - 1);
                }
            }
            return Err(Error::UnknownColumn(name.to_string()));
        }
        self.find(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn header_line(&self) -> String {
        self.names().collect::<Vec<_>>().join("\t")
    }

    /// Name that does not collide with existing columns: `x`-prefixed until unique.
    pub fn unique_name(&self, name: &str, taken: &[String]) -> String {
        let mut n = name.to_string();
        while self.find(&n).is_some() || taken.iter().any(|t| t.eq_ignore_ascii_case(&n)) {
            n = format!("x{n}");
        }
        n
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str("\t")?;
            }
            f.write_str(&c.name)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_insensitive_lookup() {
        let s = Schema::from_names(&["Chrom", "pos", "rsID"], true).unwrap();
        assert_eq!(s.index_of("chrom").unwrap(), 0);
        assert_eq!(s.index_of("RSID").unwrap(), 2);
        assert_eq!(s.index_of("#2").unwrap(), 1);
        assert!(matches!(s.index_of("#4"), Err(Error::UnknownColumn(_))));
        assert_eq!(s.name(0), "Chrom");
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(matches!(
            Schema::from_names(&["a", "A"], false),
            Err(Error::DuplicateColumn(_))
        ));
    }

    #[test]
    fn kind_widening() {
        assert_eq!(ColumnKind::of_cell("12"), Some(ColumnKind::Integer));
        assert_eq!(ColumnKind::of_cell("1.5"), Some(ColumnKind::Float));
        assert_eq!(ColumnKind::of_cell("rs1"), Some(ColumnKind::Text));
        assert_eq!(ColumnKind::Integer.widen(ColumnKind::Float), ColumnKind::Float);
    }
}
