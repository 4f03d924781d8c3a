//! Carving relation placeholders out of SQL text.
//!
//! `[#name#]`, `<( ... )` and direct citations of table files are replaced by
//! generated identifiers; everything else is left for the SQL evaluator.

use crate::error::Result;
use crate::parser::ast::{RelRef, SqlBinding, SqlText};
use crate::parser::query::parse_query_at;
use crate::parser::scan::{is_ident_char, match_paren};

const TABLE_EXTS: &[&str] = &[".gorz", ".gord", ".rgc", ".tsv", ".parquet"];

fn path_char(c: u8) -> bool {
    is_ident_char(c) || c == b'.' || c == b'/'
}

/// An id prefix that no identifier in `raw` already uses.
fn fresh_prefix(raw: &str) -> String {
    let lower = raw.to_ascii_lowercase();
    let mut prefix = "t_".to_string();
    while lower.match_indices(&prefix).any(|(p, _)| {
        (p == 0 || !is_ident_char(lower.as_bytes()[p - 1]))
            && lower.as_bytes().get(p + prefix.len()).is_some_and(u8::is_ascii_digit)
    }) {
        prefix.insert(1, '_');
    }
    prefix
}

pub fn extract_sql_placeholders(raw: &str, base: usize) -> Result<SqlText> {
    let prefix = fresh_prefix(raw);
    let b = raw.as_bytes();
    let mut template = String::with_capacity(raw.len());
    let mut bindings: Vec<SqlBinding> = Vec::new();
    let mut last = 0;
    let mut i = 0;
    let mut bind = |template: &mut String, start: usize, end: usize, rel: RelRef, last: &mut usize| {
        let id = format!("{prefix}{}", bindings.len() + 1);
        template.push_str(&raw[*last..start]);
        template.push_str(&id);
        bindings.push(SqlBinding { id, text: raw[start..end].to_string(), rel });
        *last = end;
    };
    while i < b.len() {
        match b[i] {
            b'\'' => {
                i += 1;
                while i < b.len() {
                    if b[i] == b'\'' {
                        if b.get(i + 1) == Some(&b'\'') {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
                if i >= b.len() {
                    return Err(crate::Error::parse(base + raw[..i].rfind('\'').unwrap_or(0), "unterminated string literal"));
                }
                i += 1;
            }
            b'[' if b.get(i + 1) == Some(&b'#') => {
                let Some(e) = raw[i + 2..].find("#]") else {
                    return Err(crate::Error::parse(base + i, "unterminated relation reference"));
                };
                let end = i + 2 + e + 2;
                let name = raw[i + 2..end - 2].to_string();
                bind(&mut template, i, end, RelRef::Virtual(name), &mut last);
                i = end;
            }
            b'<' if b.get(i + 1) == Some(&b'(') => {
                let close = match_paren(raw, i + 1, base)?;
                let q = parse_query_at(&raw[i + 2..close], base + i + 2)?;
                bind(&mut template, i, close + 1, RelRef::Nested(Box::new(q)), &mut last);
                i = close + 1;
            }
            c if path_char(c) && (i == 0 || !path_char(b[i - 1])) => {
                let mut j = i;
                while j < b.len() && path_char(b[j]) {
                    j += 1;
                }
                let word = &raw[i..j];
                let lower = word.to_ascii_lowercase();
                if TABLE_EXTS.iter().any(|x| lower.ends_with(x) && lower.len() > x.len()) {
                    bind(&mut template, i, j, RelRef::File(word.to_string()), &mut last);
                }
                i = j;
            }
            _ => i += 1,
        }
    }
    template.push_str(&raw[last..]);
    Ok(SqlText { template, bindings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_citation() {
        let s = extract_sql_placeholders("select * from genes.gorz where chrom='chr1'", 0).unwrap();
        assert_eq!(s.template, "select * from t_1 where chrom='chr1'");
        assert_eq!(s.bindings[0].rel, RelRef::File("genes.gorz".into()));
        assert_eq!(s.raw(), "select * from genes.gorz where chrom='chr1'");
    }

    #[test]
    fn nested_and_virtual() {
        let raw = "select * from <(pgor dbsnp.gorz | split rsIDs | rename rsIDs rsID) order by rsID";
        let s = extract_sql_placeholders(raw, 0).unwrap();
        assert_eq!(s.bindings.len(), 1);
        assert!(matches!(s.bindings[0].rel, RelRef::Nested(_)));
        assert_eq!(s.raw(), raw);
        let s = extract_sql_placeholders("select a from [#x#] j join t_1 on j.a = t_1.a", 0).unwrap();
        assert_eq!(s.bindings[0].id, "t__1");
        assert_eq!(s.raw(), "select a from [#x#] j join t_1 on j.a = t_1.a");
    }

    #[test]
    fn literals_untouched() {
        let s = extract_sql_placeholders("select 'a [#x#] b.gorz' from t", 0).unwrap();
        assert!(s.bindings.is_empty());
    }
}
