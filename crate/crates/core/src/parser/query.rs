//! Queries and pipe steps.

use crate::error::{Error, Result};
use crate::expr::parse_expr_at;
use crate::parser::ast::*;
use crate::parser::catalog::{self, Flag, Shape, SOURCE_FLAGS};
use crate::parser::scan::{self, comma_list, split_top, unquote, words, Token};
use crate::parser::sql::extract_sql_placeholders;

/// Parses one query; `base` is the offset of `text` in the script.
pub fn parse_query_at(text: &str, base: usize) -> Result<Query> {
    let segments = split_top(text, b'|', base)?;
    let (head_at, head) = segments[0];
    let lead = head.len() - head.trim_start().len();
    let head_at = head_at + lead;
    let head = head.trim();
    let word_end = head.find(|c: char| c.is_whitespace()).unwrap_or(head.len());
    let word = &head[..word_end];
    let context = match word.to_ascii_lowercase().as_str() {
        "gor" => Context::Gor,
        "nor" => Context::Nor,
        "pgor" => Context::Pgor,
        "parallel" => Context::Parallel,
        "select" => Context::Sql,
        _ => return Err(Error::UnknownContext { word: word.to_string(), offset: head_at }),
    };
    let head = if context == Context::Sql {
        Head::Sql(extract_sql_placeholders(head, head_at)?)
    } else {
        Head::Pipe(parse_source(context, &head[word_end..], head_at + word_end)?)
    };
    let mut steps = Vec::with_capacity(segments.len() - 1);
    for (at, seg) in &segments[1..] {
        steps.push(parse_step(seg, *at)?);
    }
    Ok(Query { context, head, steps, span: Span(head_at) })
}

/// Parses a bare pipe tail (`step | step ...`).
pub fn parse_steps_at(text: &str, base: usize) -> Result<Vec<Step>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    split_top(text, b'|', base)?.into_iter().map(|(at, s)| parse_step(s, at)).collect()
}

fn flag_name<'a>(t: &Token<'a>) -> Option<&'a str> {
    let n = t.text.strip_prefix('-')?;
    (!n.is_empty() && n.as_bytes()[0].is_ascii_alphabetic()).then(|| n)
}

pub fn parse_rel(t: &Token) -> Result<RelRef> {
    if let Some((at, body)) = t.nested() {
        return Ok(RelRef::Nested(Box::new(parse_query_at(body, at)?)));
    }
    if let Some(name) = t.text.strip_prefix("[#").and_then(|s| s.strip_suffix("#]")) {
        if name.is_empty() {
            return Err(Error::parse(t.offset, "empty relation reference"));
        }
        return Ok(RelRef::Virtual(name.to_string()));
    }
    if t.text.starts_with("<(") || t.text.starts_with('(') {
        return Err(Error::parse(t.offset, format!("malformed nested expression '{}'", t.text)));
    }
    let p = unquote(t.text);
    if p.is_empty() {
        return Err(Error::parse(t.offset, "empty file name"));
    }
    Ok(RelRef::File(p))
}

/// A PARALLEL body. It may only be parsed once `#{col:...}` is substituted,
/// so here it is checked with placeholders replaced by a dummy word.
fn parse_template(t: &Token) -> Result<RelRef> {
    let (at, body) = t
        .nested()
        .ok_or_else(|| Error::parse(t.offset, "parallel expects a nested expression <(...)"))?;
    let columns = crate::parser::parallel::placeholder_columns(body, at)?;
    let mut probe = body.to_string();
    for c in &columns {
        probe = probe.replace(&format!("#{{col:{c}}}"), "x");
    }
    parse_query_at(&probe, at)?;
    Ok(RelRef::Template { text: scan::normalize_ws(body), columns })
}

fn parse_source(context: Context, text: &str, base: usize) -> Result<SourceSpec> {
    let toks = words(text, base)?;
    let mut opts = SourceOptions::default();
    let mut rel = None;
    let mut i = 0;
    while i < toks.len() {
        let t = &toks[i];
        i += 1;
        if let Some(name) = flag_name(t) {
            let kind = SOURCE_FLAGS.iter().find(|(n, _)| *n == name).map(|(_, k)| *k).ok_or_else(|| {
                let hint = catalog::suggest(name, SOURCE_FLAGS.iter().map(|(n, _)| *n))
                    .map(|s| format!(", did you mean -{s}?"))
                    .unwrap_or_default();
                Error::parse(t.offset, format!("unknown source option -{name}{hint}"))
            })?;
            let value = if kind == Flag::Switch {
                None
            } else {
                let v = toks.get(i).ok_or_else(|| Error::parse(t.offset, format!("-{name} expects a value")))?;
                i += 1;
                Some(v)
            };
            let dup = match name {
                "p" => opts.range.replace(unquote(value.unwrap().text)).is_some(),
                "f" => opts.tags.replace(comma_list(value.unwrap().text)?).is_some(),
                "ff" => opts.tag_file.replace(parse_rel(value.unwrap())?).is_some(),
                "nf" => std::mem::replace(&mut opts.no_fail, true),
                "split" => {
                    if context != Context::Pgor {
                        return Err(Error::parse(t.offset, "-split is only valid after pgor"));
                    }
                    let v = value.unwrap();
                    let s = match v.text.parse::<usize>() {
                        Ok(0) => return Err(Error::parse(v.offset, "-split count must be at least 1")),
                        Ok(n) => SplitArg::Count(n),
                        Err(_) => SplitArg::Relation(parse_rel(v)?),
                    };
                    opts.split.replace(s).is_some()
                }
                "parts" => {
                    if context != Context::Parallel {
                        return Err(Error::parse(t.offset, "-parts is only valid after parallel"));
                    }
                    opts.parts.replace(parse_rel(value.unwrap())?).is_some()
                }
                _ => unreachable!(),
            };
            if dup {
                return Err(Error::parse(t.offset, format!("option -{name} given twice")));
            }
            continue;
        }
        if rel.is_some() {
            return Err(Error::parse(t.offset, format!("unexpected '{}': a query has one source", t.text)));
        }
        rel = Some(if context == Context::Parallel { parse_template(t)? } else { parse_rel(t)? });
    }
    let rel = rel.ok_or_else(|| Error::parse(base, format!("{} expects a source", context.keyword())))?;
    if context == Context::Parallel && opts.parts.is_none() {
        return Err(Error::parse(base, "parallel requires -parts <relation>"));
    }
    Ok(SourceSpec { rel, options: opts })
}

pub fn parse_step(seg: &str, base: usize) -> Result<Step> {
    let lead = seg.len() - seg.trim_start().len();
    let at = base + lead;
    let seg = seg.trim();
    if seg.is_empty() {
        return Err(Error::parse(base, "empty pipe step"));
    }
    let cmd_end = seg.find(|c: char| c.is_whitespace()).unwrap_or(seg.len());
    let command = seg[..cmd_end].to_ascii_lowercase();
    let spec = catalog::command(&command).ok_or_else(|| Error::UnknownCommand {
        command: seg[..cmd_end].to_string(),
        offset: at,
        suggestion: catalog::suggest(&command, catalog::COMMANDS.iter().map(|c| c.name)),
    })?;
    let rest = &seg[cmd_end..];
    let rest_at = at + cmd_end;
    let mut step = Step { command, flags: Vec::new(), args: Vec::new(), expr: None, span: Span(at) };
    match spec.shape {
        Shape::Expr => {
            if rest.trim().is_empty() {
                return Err(Error::parse(at, format!("{} expects an expression", spec.name)));
            }
            step.expr = Some(parse_expr_at(rest, rest_at)?);
        }
        Shape::NamedExpr => {
            let toks = words(rest, rest_at)?;
            let name = toks.first().ok_or_else(|| Error::parse(at, format!("{} expects a column name", spec.name)))?;
            let name_end = name.offset - rest_at + name.text.len();
            let mut body = &rest[name_end..];
            let mut body_at = rest_at + name_end;
            let trimmed = body.trim_start();
            if trimmed.starts_with('=') && !trimmed.starts_with("==") {
                body_at += body.len() - trimmed.len() + 1;
                body = &trimmed[1..];
            }
            if body.trim().is_empty() {
                return Err(Error::parse(name.offset, format!("{} expects an expression after the name", spec.name)));
            }
            step.args.push(Arg::Word(unquote(name.text)));
            step.expr = Some(parse_expr_at(body, body_at)?);
        }
        Shape::Columns => {
            for (off, c) in split_top(rest, b',', rest_at)? {
                let c = c.trim();
                if c.is_empty() || c.contains(char::is_whitespace) {
                    return Err(Error::parse(off, "malformed column list"));
                }
                step.args.push(Arg::Word(c.to_string()));
            }
        }
        Shape::Args { min, max, rels } => {
            let toks = words(rest, rest_at)?;
            let mut i = 0;
            let mut positional = Vec::new();
            while i < toks.len() {
                let t = &toks[i];
                i += 1;
                if let Some(name) = flag_name(t) {
                    let kind = spec.flag(name).ok_or_else(|| {
                        let hint = catalog::suggest(name, spec.flags.iter().map(|(n, _)| *n))
                            .map(|s| format!(", did you mean -{s}?"))
                            .unwrap_or_default();
                        Error::parse(t.offset, format!("unknown flag -{name} for {}{hint}", spec.name))
                    })?;
                    if step.has(name) {
                        return Err(Error::parse(t.offset, format!("flag -{name} given twice")));
                    }
                    let value = if kind == Flag::Switch {
                        None
                    } else {
                        let v = toks
                            .get(i)
                            .ok_or_else(|| Error::parse(t.offset, format!("-{name} expects a value")))?;
                        i += 1;
                        Some(unquote(v.text))
                    };
                    step.flags.push((name.to_string(), value));
                    continue;
                }
                positional.push(*t);
            }
            if positional.len() < min || positional.len() > max {
                let want = if min == max { format!("{min}") } else { format!("{min} to {max}") };
                return Err(Error::parse(
                    positional.get(max).map(|t| t.offset).unwrap_or(at),
                    format!("{} expects {want} argument(s), found {}", spec.name, positional.len()),
                ));
            }
            for (k, t) in positional.iter().enumerate() {
                step.args.push(if rels.contains(&k) { Arg::Rel(parse_rel(t)?) } else { Arg::Word(unquote(t.text)) });
            }
        }
    }
    Ok(step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    #[test]
    fn minimal() {
        let q = parse_query_at("gor a.gorz", 0).unwrap();
        assert_eq!(q.context, Context::Gor);
        assert_eq!(q.source().unwrap().rel, RelRef::File("a.gorz".into()));
        assert!(q.steps.is_empty());
    }

    #[test]
    fn source_options() {
        let q = parse_query_at("pgor -split [#regionsplit#]\n variants.gord -nf -ff [#samples#] | varjoin -i x.gorz", 0)
            .unwrap();
        let s = q.source().unwrap();
        assert_eq!(s.options.split, Some(SplitArg::Relation(RelRef::Virtual("regionsplit".into()))));
        assert!(s.options.no_fail);
        assert_eq!(s.options.tag_file, Some(RelRef::Virtual("samples".into())));
        assert_eq!(q.steps[0].command, "varjoin");
        assert!(q.steps[0].has("i"));
        let q = parse_query_at("gor v.gord -p chr1:1-5000 -f 's1','s2'", 0).unwrap();
        let o = &q.source().unwrap().options;
        assert_eq!(o.range.as_deref(), Some("chr1:1-5000"));
        assert_eq!(o.tags, Some(vec!["s1".to_string(), "s2".to_string()]));
    }

    #[test]
    fn steps() {
        let s = parse_step("calc type = if(len(ref)=len(alt),'Snp','InDel')", 0).unwrap();
        assert_eq!(s.args, vec![Arg::Word("type".into())]);
        assert!(matches!(s.expr, Some(Expr::Call(..))));
        let s = parse_step("replace #2 #2+1", 0).unwrap();
        assert_eq!(s.args, vec![Arg::Word("#2".into())]);
        let s = parse_step("select 1-alt,consequence", 0).unwrap();
        assert_eq!(s.args.len(), 2);
        let s = parse_step("varjoin -r -l -e 'NA' <(gor x.gorz | select 1-alt,consequence)", 0).unwrap();
        assert_eq!(s.value("e"), Some("NA"));
        assert!(matches!(s.rel(0), Some(RelRef::Nested(_))));
        let s = parse_step("csvsel -u 3 -gc ref,alt -vs 1 varbuckets.tsv [#samples#]", 0).unwrap();
        assert_eq!(s.args.len(), 2);
        let s = parse_step("group 1 -gc ref,alt,type -set -sc rsID", 0).unwrap();
        assert_eq!(s.args, vec![Arg::Word("1".into())]);
        assert_eq!(s.value("gc"), Some("ref,alt,type"));
    }

    #[test]
    fn errors() {
        let e = parse_step("  varjion -l x", 5).unwrap_err();
        match e {
            Error::UnknownCommand { offset, suggestion, .. } => {
                assert_eq!(offset, 7);
                assert_eq!(suggestion.as_deref(), Some("varjoin"));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(parse_query_at("frob x", 0), Err(Error::UnknownContext { .. })));
        assert!(parse_step("join -zz x", 0).unwrap_err().to_string().contains("unknown flag"));
        assert!(parse_step("rename a", 0).is_err());
        assert!(matches!(parse_query_at("gor x | join <(gor y", 0), Err(Error::NestedUnterminated { offset: 13 })));
    }

    #[test]
    fn parallel_template() {
        let q = parse_query_at(
            "parallel -parts [#R#] <(gor v.gord -p #{col:chrom}:#{col:bpStart}-#{col:bpStop} -f #{col:s} | where s in (#{col:s}))",
            0,
        )
        .unwrap();
        match &q.source().unwrap().rel {
            RelRef::Template { columns, .. } => assert_eq!(columns, &vec!["chrom", "bpStart", "bpStop", "s"]),
            r => panic!("{r:?}"),
        }
    }
}
