//! Quote- and parenthesis-aware scanning shared by the statement, pipe and
//! SQL layers. Only single quotes delimit strings; `''` escapes a quote.

use crate::error::{Error, Result};

/// Replaces `/* ... */` comments with spaces so offsets are preserved.
pub fn strip_comments(text: &str) -> Result<String> {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut quoted = false;
    let mut copied = 0;
    while i < b.len() {
        match b[i] {
            b'\'' => quoted = !quoted,
            b'/' if !quoted && b.get(i + 1) == Some(&b'*') => {
                let Some(end) = text[i + 2..].find("*/") else {
                    return Err(Error::parse(i, "unterminated comment"));
                };
                let end = i + 2 + end + 2;
                out.push_str(&text[copied..i]);
                out.extend(text[i..end].chars().map(|c| if c == '\n' { '\n' } else { ' ' }));
                // multi-byte chars inside comments become one space each; pad to keep offsets
                let pad = (end - i) - text[i..end].chars().count();
                out.extend(std::iter::repeat_n(' ', pad));
                copied = end;
                i = end;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    out.push_str(&text[copied..]);
    Ok(out)
}

/// Index just past the closing quote of the string starting at `open`.
fn skip_quote(b: &[u8], open: usize) -> Result<usize> {
    let mut i = open + 1;
    while i < b.len() {
        if b[i] == b'\'' {
            if b.get(i + 1) == Some(&b'\'') {
                i += 2;
                continue;
            }
            return Ok(i + 1);
        }
        i += 1;
    }
    Err(Error::parse(open, "unterminated string literal"))
}

/// Index of the `)` matching the `(` at `open`.
pub fn match_paren(text: &str, open: usize, base: usize) -> Result<usize> {
    let b = text.as_bytes();
    let nested = open > 0 && b[open - 1] == b'<';
    let mut depth = 0usize;
    let mut i = open;
    while i < b.len() {
        match b[i] {
            b'\'' => {
                i = skip_quote(b, i).map_err(|e| shift(e, base))?;
                continue;
            }
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    if nested {
        Err(Error::NestedUnterminated { offset: base + open - 1 })
    } else {
        Err(Error::parse(base + open, "unbalanced '('"))
    }
}

pub fn shift(e: Error, base: usize) -> Error {
    match e {
        Error::Parse { offset, msg } => Error::Parse { offset: offset + base, msg },
        Error::NestedUnterminated { offset } => Error::NestedUnterminated { offset: offset + base },
        e => e,
    }
}

/// Splits at `sep` where it is outside quotes and parentheses. Returns each
/// piece with its offset.
pub fn split_top(text: &str, sep: u8, base: usize) -> Result<Vec<(usize, &str)>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\'' => {
                i = skip_quote(b, i).map_err(|e| shift(e, base))?;
                continue;
            }
            b'(' => {
                i = match_paren(text, i, base)? + 1;
                continue;
            }
            b')' => return Err(Error::parse(base + i, "unbalanced ')'")),
            c if c == sep => {
                out.push((base + start, &text[start..i]));
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    out.push((base + start, &text[start..]));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub offset: usize,
}

impl<'a> Token<'a> {
    /// Body of a `<( ... )` token with its offset.
    pub fn nested(&self) -> Option<(usize, &'a str)> {
        (self.text.starts_with("<(") && self.text.ends_with(')'))
            .then(|| (self.offset + 2, &self.text[2..self.text.len() - 1]))
    }
}

/// Whitespace-separated words; quotes and `<( ... )` bodies stay whole.
pub fn words(text: &str, base: usize) -> Result<Vec<Token<'_>>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && !b[i].is_ascii_whitespace() {
            match b[i] {
                b'\'' => i = skip_quote(b, i).map_err(|e| shift(e, base))?,
                b'(' => i = match_paren(text, i, base)? + 1,
                b')' => return Err(Error::parse(base + i, "unbalanced ')'")),
                _ => i += 1,
            }
        }
        out.push(Token { text: &text[start..i], offset: base + start });
    }
    Ok(out)
}

/// Strips one level of single quotes, undoing `''` escapes.
pub fn unquote(s: &str) -> String {
    if s.len() >= 2 && s.starts_with('\'') && s.ends_with('\'') {
        s[1..s.len() - 1].replace("''", "'")
    } else {
        s.to_string()
    }
}

/// Quotes a word for printing when it would not survive re-tokenizing.
pub fn quote_if_needed(s: &str) -> String {
    let plain = !s.is_empty()
        && !s.starts_with('-')
        && s.bytes().all(|c| !c.is_ascii_whitespace() && !matches!(c, b'\'' | b'|' | b';' | b'(' | b')'));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', "''"))
    }
}

/// Collapses whitespace runs outside quotes to one space.
pub fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut quoted = false;
    let mut pending = false;
    for c in text.trim().chars() {
        if c == '\'' {
            quoted = !quoted;
        }
        if !quoted && c.is_whitespace() {
            pending = true;
            continue;
        }
        if pending {
            out.push(' ');
            pending = false;
        }
        out.push(c);
    }
    out
}

/// Splits a comma list at top level, unquoting each item.
pub fn comma_list(s: &str) -> Result<Vec<String>> {
    Ok(split_top(s, b',', 0)?
        .into_iter()
        .map(|(_, t)| unquote(t.trim()))
        .filter(|t| !t.is_empty())
        .collect())
}

pub fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// Byte offsets of whole-word occurrences of `name` (the word-boundary test
/// also treats `.`, `#`, `/` as word characters, and skips `[#name#]`
/// references).
pub fn find_word(text: &str, name: &str) -> Vec<usize> {
    let word = |c: u8| is_ident_char(c) || matches!(c, b'.' | b'#' | b'/');
    let b = text.as_bytes();
    let nb = name.as_bytes();
    let mut hits = Vec::new();
    let mut from = 0;
    while let Some(p) = text[from..].find(name) {
        let p = from + p;
        let end = p + name.len();
        let before_ok = p == 0 || (b[p - 1] != b'[' && (!word(b[p - 1]) || !word(nb[0])));
        let after_ok = end >= b.len() || !word(b[end]) || !word(nb[nb.len() - 1]);
        if before_ok && after_ok {
            hits.push(p);
        }
        from = if before_ok && after_ok { end } else { p + 1 };
        while from < text.len() && !text.is_char_boundary(from) {
            from += 1;
        }
    }
    hits
}

/// Replaces whole-word occurrences of `name`, see [`find_word`].
pub fn replace_word(text: &str, name: &str, with: &str) -> (String, bool) {
    let hits = find_word(text, name);
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for &p in &hits {
        out.push_str(&text[last..p]);
        out.push_str(with);
        last = p + name.len();
    }
    out.push_str(&text[last..]);
    (out, !hits.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_keep_offsets() {
        let s = "a /* x */ b";
        let t = strip_comments(s).unwrap();
        assert_eq!(t.len(), s.len());
        assert_eq!(t.find('b'), s.find('b'));
        assert!(strip_comments("a '/*' b").unwrap().contains("/*"));
        assert!(strip_comments("a /* b").is_err());
    }

    #[test]
    fn top_level_split() {
        let parts = split_top("gor a | where x in ('a|b') | join <(gor b | top 1)", b'|', 0).unwrap();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[2].1.trim(), "join <(gor b | top 1)");
        assert!(matches!(split_top("gor <(nor x", b'|', 10), Err(Error::NestedUnterminated { offset: 14 })));
    }

    #[test]
    fn word_tokens() {
        let w = words("varjoin -e 'N A' <(gor x | y) b", 0).unwrap();
        let t: Vec<_> = w.iter().map(|t| t.text).collect();
        assert_eq!(t, vec!["varjoin", "-e", "'N A'", "<(gor x | y)", "b"]);
        assert_eq!(w[3].nested().unwrap(), (19, "gor x | y"));
    }

    #[test]
    fn def_words() {
        assert_eq!(replace_word("gor #x# | join [#x#]", "#x#", "a.gorz").0, "gor a.gorz | join [#x#]");
        assert_eq!(replace_word("genes.gorz genes", "genes", "g").0, "genes.gorz g");
    }
}
