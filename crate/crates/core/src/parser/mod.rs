//! The query language: `def` macros, `create` statements, GOR/NOR/PGOR/
//! PARALLEL pipe queries and SQL with carved-out relation placeholders.

mod ast;
pub mod catalog;
mod parallel;
mod query;
pub mod scan;
mod sql;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use ast::{
    template_references, Arg, Context, Create, Head, Query, RelRef, Script, SourceOptions, SourceSpec, Span,
    SplitArg, SqlBinding, SqlText, Step,
};
pub use parallel::{placeholder_columns, substitute_parallel_columns};
pub use sql::extract_sql_placeholders;

pub const MAX_DEF_DEPTH: usize = 16;

/// Textual macro expansion, repeated until nothing changes. Also returns,
/// for each byte of the expansion (and its end), the offset in `text` it
/// came from; inserted text maps to the start of the name it replaced.
pub fn expand_defs(text: &str, defs: &[(String, String)]) -> Result<(String, Vec<usize>)> {
    let mut cur = text.to_string();
    let mut origin: Vec<usize> = (0..=text.len()).collect();
    for _ in 0..=MAX_DEF_DEPTH {
        let mut changed = false;
        for (name, body) in defs {
            let hits = scan::find_word(&cur, name);
            if hits.is_empty() {
                continue;
            }
            let mut next = String::with_capacity(cur.len());
            let mut next_origin = Vec::with_capacity(origin.len());
            let mut last = 0;
            for &p in &hits {
                next.push_str(&cur[last..p]);
                next_origin.extend_from_slice(&origin[last..p]);
                next.push_str(body);
                next_origin.extend(std::iter::repeat_n(origin[p], body.len()));
                last = p + name.len();
            }
            next.push_str(&cur[last..]);
            next_origin.extend_from_slice(&origin[last..]);
            cur = next;
            origin = next_origin;
            changed = true;
        }
        if !changed {
            return Ok((cur, origin));
        }
    }
    Err(Error::parse(0, format!("def expansion exceeds depth {MAX_DEF_DEPTH}; is a def recursive?")))
}

/// Parses `text` after def expansion, reporting error offsets against the
/// unexpanded text. `base` is the offset of `text` in the whole script.
fn parse_expanded<T>(
    text: &str,
    base: usize,
    defs: &[(String, String)],
    parse: impl FnOnce(&str, usize) -> Result<T>,
) -> Result<T> {
    let (body, origin) = expand_defs(text, defs).map_err(|e| scan::shift(e, base))?;
    parse(&body, base).map_err(|e| e.map_offset(|o| base + origin[o.saturating_sub(base).min(origin.len() - 1)]))
}

fn split_statement<'a>(stmt: &'a str, at: usize, what: &str) -> Result<(&'a str, &'a str, usize)> {
    let eq = stmt.find('=').ok_or_else(|| Error::parse(at, format!("{what} expects 'name = ...'")))?;
    let name = stmt[..eq].trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(Error::parse(at, format!("{what} needs a single name before '='")));
    }
    Ok((name, &stmt[eq + 1..], at + eq + 1))
}

fn create_name(raw: &str, at: usize) -> Result<String> {
    let inner = raw.strip_prefix('#').and_then(|s| s.strip_suffix('#')).unwrap_or(raw);
    if inner.is_empty() || inner.contains(['#', '[', ']']) {
        return Err(Error::parse(at, format!("bad create name '{raw}', expected #name#")));
    }
    Ok(inner.to_string())
}

/// Parses statements with `outer` defs already in scope. The returned script
/// holds only the defs this text introduces.
pub fn parse_with_defs(text: &str, outer: &[(String, String)], require_query: bool) -> Result<Script> {
    let clean = scan::strip_comments(text)?;
    let stmts: Vec<(usize, &str)> = scan::split_top(&clean, b';', 0)?
        .into_iter()
        .filter(|(_, s)| !s.trim().is_empty())
        .map(|(at, s)| (at + s.len() - s.trim_start().len(), s.trim()))
        .collect();
    let keyword = |s: &str| s.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
    let mut script = Script::default();
    for &(at, s) in &stmts {
        if keyword(s) == "def" {
            let (name, body, _) = split_statement(&s[3..], at + 3, "def")?;
            script.defs.retain(|(n, _)| n != name);
            script.defs.push((name.to_string(), body.trim().to_string()));
        }
    }
    let all: Vec<(String, String)> = outer
        .iter()
        .filter(|(n, _)| !script.defs.iter().any(|(m, _)| m == n))
        .chain(script.defs.iter())
        .cloned()
        .collect();
    for (k, &(at, s)) in stmts.iter().enumerate() {
        match keyword(s).as_str() {
            "def" => {}
            "create" => {
                let (raw, body, body_at) = split_statement(&s[6..], at + 6, "create")?;
                let name = create_name(raw, at + 6)?;
                if script.creates.iter().any(|c| c.name == name) {
                    return Err(Error::DuplicateCreate { name, offset: at });
                }
                let query = parse_expanded(body, body_at, &all, query::parse_query_at)?;
                script.creates.push(Create { name, query, span: ast::Span(at) });
            }
            _ => {
                if k + 1 != stmts.len() {
                    return Err(Error::parse(at, "only the last statement may be a query; earlier ones must be def or create"));
                }
                script.query = Some(parse_expanded(s, at, &all, query::parse_query_at)?);
            }
        }
    }
    if require_query && script.query.is_none() {
        return Err(Error::parse(clean.trim_end().len(), "script has no final query"));
    }
    check_cycles(script.creates.iter().map(|c| (c.name.as_str(), c.span.0, c.query.references())))?;
    Ok(script)
}

/// A whole script: defs, creates and exactly one final query.
pub fn parse_script(text: &str) -> Result<Script> {
    parse_with_defs(text, &[], true)
}

/// A single query, with defs expanded.
pub fn parse_query(text: &str, defs: &[(String, String)]) -> Result<Query> {
    let clean = scan::strip_comments(text)?;
    let lead = clean.len() - clean.trim_start().len();
    parse_expanded(clean.trim(), lead, defs, query::parse_query_at)
}

/// A bare pipe tail such as `sort genome | rename a b`.
pub fn parse_tail(text: &str, defs: &[(String, String)]) -> Result<Vec<Step>> {
    let clean = scan::strip_comments(text)?;
    parse_expanded(&clean, 0, defs, query::parse_steps_at)
}

/// Rejects cycles among creates, given as (name, offset, references).
/// References to names outside the set are left for resolution at
/// evaluation time.
pub fn check_cycles<'a>(graph: impl IntoIterator<Item = (&'a str, usize, Vec<String>)>) -> Result<()> {
    let mut offsets: HashMap<&str, usize> = HashMap::new();
    let graph: HashMap<&str, Vec<String>> = graph
        .into_iter()
        .map(|(n, at, refs)| {
            offsets.insert(n, at);
            (n, refs)
        })
        .collect();
    let mut names: Vec<&str> = graph.keys().copied().collect();
    names.sort();
    // 0 = unseen, 1 = on stack, 2 = done
    let mut state: HashMap<&str, u8> = HashMap::new();
    for &root in &names {
        if state.get(root).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
        state.insert(root, 1);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let deps = &graph[node];
            if *next < deps.len() {
                let d = deps[*next].as_str();
                *next += 1;
                let Some((&d, _)) = graph.get_key_value(d) else { continue };
                match state.get(d).copied().unwrap_or(0) {
                    0 => {
                        state.insert(d, 1);
                        stack.push((d, 0));
                    }
                    1 => {
                        let from = stack.iter().position(|(n, _)| *n == d).unwrap();
                        let mut cycle: Vec<String> = stack[from..].iter().map(|(n, _)| n.to_string()).collect();
                        cycle.push(d.to_string());
                        return Err(Error::CreateCycle { cycle, offset: offsets[d] });
                    }
                    _ => {}
                }
            } else {
                state.insert(node, 2);
                stack.pop();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one() {
        let s = parse_script("create #r1# = select * from genes.gorz\n   where chrom = 'chr1';\nnor [#r1#]").unwrap();
        assert_eq!(s.creates.len(), 1);
        assert_eq!(s.creates[0].query.context, Context::Sql);
        let q = s.query.unwrap();
        assert_eq!(q.context, Context::Nor);
        assert_eq!(q.source().unwrap().rel, RelRef::Virtual("r1".into()));
    }

    #[test]
    fn defs_expand() {
        let s = parse_script("def #exons# = exons.gorz; def #e2# = #exons#; gor #e2# | where x = 1").unwrap();
        assert_eq!(s.query.unwrap().source().unwrap().rel, RelRef::File("exons.gorz".into()));
        let e = parse_script("def #a# = #b#; def #b# = #a#; gor #a#").unwrap_err();
        assert!(e.to_string().contains("depth"));
    }

    #[test]
    fn offsets_survive_def_expansion() {
        let text = "def #long# = a_much_longer_file_name.gorz; gor #long# | bogus";
        let e = parse_script(text).unwrap_err();
        assert_eq!(e.offset(), text.find("bogus"), "{e}");
    }

    #[test]
    fn create_errors() {
        let e = parse_script("create #a# = gor [#b#]; create #b# = gor [#a#]; gor [#a#]").unwrap_err();
        assert!(matches!(e, Error::CreateCycle { ref cycle, offset: 0 } if cycle == &["a", "b", "a"]), "{e}");
        let e = parse_script("create #a# = gor x; create #a# = gor y; gor [#a#]").unwrap_err();
        assert!(matches!(e, Error::DuplicateCreate { offset: 20, .. }), "{e}");
        assert!(parse_script("gor x; gor y").is_err());
        assert!(parse_script("create #a# = gor x").is_err());
    }

    #[test]
    fn comments() {
        let s = parse_script("nor [#x#] /* -p is one-based */ | replace #2 #2+1").unwrap();
        assert_eq!(s.query.unwrap().steps.len(), 1);
    }

    #[test]
    fn pretty_round_trip() {
        let text = "create #orddbsnp# = select * from <(pgor dbsnp.gorz | split rsIDs | rename rsIDs rsID) order by rsID;\
                    create #x# = select PID,hpo_code from phenotypes.parquet where year(date) > 2000 order by PID\
                    | where hpo_code indag(hpo_parent_child.tsv,'HP:0001507') | group -gc PID -lis -sc hpo_code;\
                    gor exons.gorz | where gene_symbol = 'BRCA2' | join -segsnp -f 20 -ir <(gor variants.gord -ff [#x#])";
        let s = parse_script(text).unwrap();
        let printed = s.to_string();
        let again = parse_script(&printed).unwrap();
        assert_eq!(s, again, "{printed}");
        assert_eq!(printed, again.to_string());
    }
}
