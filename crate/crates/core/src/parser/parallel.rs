//! `#{col:name}` placeholders in PARALLEL task bodies.

use crate::error::{Error, Result};
use crate::model::{Row, Schema};

const OPEN: &str = "#{col:";

/// Distinct placeholder column names in order of first use.
pub fn placeholder_columns(text: &str, base: usize) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    let mut from = 0;
    while let Some(p) = text[from..].find(OPEN) {
        let start = from + p;
        let body = start + OPEN.len();
        let end = text[body..]
            .find('}')
            .map(|e| body + e)
            .ok_or_else(|| Error::parse(base + start, "unterminated #{col:...} placeholder"))?;
        let name = text[body..end].trim();
        if name.is_empty() {
            return Err(Error::parse(base + start, "empty #{col:} placeholder"));
        }
        if !out.iter().any(|n| n == name) {
            out.push(name.to_string());
        }
        from = end + 1;
    }
    Ok(out)
}

/// Replaces each `#{col:name}` with the row's cell, verbatim.
pub fn substitute_parallel_columns(text: &str, row: &Row, schema: &Schema) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut from = 0;
    while let Some(p) = text[from..].find(OPEN) {
        let start = from + p;
        let body = start + OPEN.len();
        let end = text[body..]
            .find('}')
            .map(|e| body + e)
            .ok_or_else(|| Error::parse(start, "unterminated #{col:...} placeholder"))?;
        let idx = schema.index_of(text[body..end].trim())?;
        out.push_str(&text[from..start]);
        out.push_str(row.cell(idx));
        from = end + 1;
    }
    out.push_str(&text[from..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution() {
        let schema = Schema::from_names(&["chrom", "bpStart", "bpStop", "lis_sample_id"], false).unwrap();
        let row = Row::from_cells(["chr1", "1", "5000", "'s1','s2'"]);
        let t = "-p #{col:chrom}:#{col:bpStart}-#{col:bpStop} -f #{col:lis_sample_id}";
        assert_eq!(substitute_parallel_columns(t, &row, &schema).unwrap(), "-p chr1:1-5000 -f 's1','s2'");
        assert_eq!(substitute_parallel_columns("gor x", &row, &schema).unwrap(), "gor x");
        assert!(matches!(
            substitute_parallel_columns("#{col:missing}", &row, &schema),
            Err(Error::UnknownColumn(_))
        ));
        assert_eq!(placeholder_columns(t, 0).unwrap().len(), 4);
    }
}
