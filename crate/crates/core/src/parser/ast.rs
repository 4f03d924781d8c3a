use std::fmt;

use crate::expr::Expr;
use crate::parser::scan::{normalize_ws, quote_if_needed};

/// Offset into the script text. Ignored by equality, so a pretty-printed and
/// re-parsed script compares equal to the original.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span(pub usize);

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Context {
    Gor,
    Nor,
    Pgor,
    Parallel,
    Sql,
}

impl Context {
    pub fn keyword(self) -> &'static str {
        match self {
            Context::Gor => "gor",
            Context::Nor => "nor",
            Context::Pgor => "pgor",
            Context::Parallel => "parallel",
            Context::Sql => "select",
        }
    }

    /// Whether rows flow in genome order.
    pub fn is_ordered(self) -> bool {
        matches!(self, Context::Gor | Context::Pgor)
    }
}

/// A relation used as a source or step argument.
#[derive(Debug, Clone, PartialEq)]
pub enum RelRef {
    File(String),
    /// `[#name#]`, naming a create or a registered relation.
    Virtual(String),
    Nested(Box<Query>),
    /// Body of a PARALLEL task, kept as text until `#{col:...}` substitution.
    Template { text: String, columns: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitArg {
    Count(usize),
    Relation(RelRef),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceOptions {
    /// `-p`, unparsed until binding.
    pub range: Option<String>,
    /// `-f`
    pub tags: Option<Vec<String>>,
    /// `-ff`
    pub tag_file: Option<RelRef>,
    /// `-nf`
    pub no_fail: bool,
    pub split: Option<SplitArg>,
    pub parts: Option<RelRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub rel: RelRef,
    pub options: SourceOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Word(String),
    Rel(RelRef),
}

impl Arg {
    pub fn word(&self) -> Option<&str> {
        match self {
            Arg::Word(w) => Some(w),
            Arg::Rel(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub command: String,
    pub flags: Vec<(String, Option<String>)>,
    pub args: Vec<Arg>,
    pub expr: Option<Expr>,
    pub span: Span,
}

impl Step {
    pub fn has(&self, flag: &str) -> bool {
        self.flags.iter().any(|(f, _)| f == flag)
    }

    pub fn value(&self, flag: &str) -> Option<&str> {
        self.flags.iter().find(|(f, _)| f == flag).and_then(|(_, v)| v.as_deref())
    }

    pub fn rel(&self, i: usize) -> Option<&RelRef> {
        self.args.iter().filter_map(|a| if let Arg::Rel(r) = a { Some(r) } else { None }).nth(i)
    }
}

/// A relation placeholder carved out of SQL text.
#[derive(Debug, Clone)]
pub struct SqlBinding {
    pub id: String,
    /// The original text the id replaced.
    pub text: String,
    pub rel: RelRef,
}

#[derive(Debug, Clone)]
pub struct SqlText {
    pub template: String,
    pub bindings: Vec<SqlBinding>,
}

impl PartialEq for SqlText {
    fn eq(&self, o: &SqlText) -> bool {
        normalize_ws(&self.template) == normalize_ws(&o.template)
            && self.bindings.len() == o.bindings.len()
            && self.bindings.iter().zip(&o.bindings).all(|(a, b)| a.id == b.id && a.rel == b.rel)
    }
}

impl SqlText {
    /// Re-substitutes every placeholder with `f(binding)`.
    pub fn render(&self, f: impl Fn(&SqlBinding) -> String) -> String {
        let mut out = String::with_capacity(self.template.len());
        let b = self.template.as_bytes();
        let mut i = 0;
        let mut last = 0;
        while i < b.len() {
            if b[i] == b'\'' {
                i += 1;
                while i < b.len() && b[i] != b'\'' {
                    i += 1;
                }
                i += 1;
                continue;
            }
            if crate::parser::scan::is_ident_char(b[i]) && (i == 0 || !crate::parser::scan::is_ident_char(b[i - 1])) {
                let mut j = i;
                while j < b.len() && crate::parser::scan::is_ident_char(b[j]) {
                    j += 1;
                }
                if let Some(bd) = self.bindings.iter().find(|bd| bd.id == self.template[i..j]) {
                    out.push_str(&self.template[last..i]);
                    out.push_str(&f(bd));
                    last = j;
                }
                i = j;
                continue;
            }
            i += 1;
        }
        out.push_str(&self.template[last..]);
        out
    }

    /// The SQL text as written.
    pub fn raw(&self) -> String {
        self.render(|b| b.text.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Pipe(SourceSpec),
    Sql(SqlText),
}

/// One GOR/NOR/PGOR/PARALLEL or SQL expression with its pipe steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub context: Context,
    pub head: Head,
    pub steps: Vec<Step>,
    pub span: Span,
}

impl Query {
    pub fn source(&self) -> Option<&SourceSpec> {
        match &self.head {
            Head::Pipe(s) => Some(s),
            Head::Sql(_) => None,
        }
    }

    /// Visits every relation reference, including those in nested queries.
    pub fn visit_rels<'a>(&'a self, f: &mut dyn FnMut(&'a RelRef)) {
        fn rel<'a>(r: &'a RelRef, f: &mut dyn FnMut(&'a RelRef)) {
            f(r);
            if let RelRef::Nested(q) = r {
                q.visit_rels(f);
            }
        }
        match &self.head {
            Head::Pipe(s) => {
                rel(&s.rel, f);
                let o = &s.options;
                for r in [&o.tag_file, &o.parts].into_iter().flatten() {
                    rel(r, f);
                }
                if let Some(SplitArg::Relation(r)) = &o.split {
                    rel(r, f);
                }
            }
            Head::Sql(sql) => {
                for b in &sql.bindings {
                    rel(&b.rel, f);
                }
            }
        }
        for s in &self.steps {
            for a in &s.args {
                if let Arg::Rel(r) = a {
                    rel(r, f);
                }
            }
        }
    }

    /// Names of `[#name#]` references, in first-appearance order.
    pub fn references(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut add = |n: &str| {
            if !out.iter().any(|o| o == n) {
                out.push(n.to_string());
            }
        };
        self.visit_rels(&mut |r| match r {
            RelRef::Virtual(n) => add(n),
            RelRef::Template { text, .. } => {
                for n in template_references(text) {
                    add(&n);
                }
            }
            _ => {}
        });
        out
    }

    /// Files cited directly, including in nested queries.
    pub fn files(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_rels(&mut |r| {
            if let RelRef::File(p) = r {
                if !out.contains(p) {
                    out.push(p.clone());
                }
            }
        });
        out
    }
}

pub fn template_references(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(p) = rest.find("[#") {
        let tail = &rest[p + 2..];
        match tail.find("#]") {
            Some(e) => {
                out.push(tail[..e].to_string());
                rest = &tail[e + 2..];
            }
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Create {
    pub name: String,
    pub query: Query,
    pub span: Span,
}

/// Parsed script: macro definitions, creates and the final query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub defs: Vec<(String, String)>,
    pub creates: Vec<Create>,
    pub query: Option<Query>,
}

impl fmt::Display for RelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelRef::File(p) => write!(f, "{}", quote_if_needed(p)),
            RelRef::Virtual(n) => write!(f, "[#{n}#]"),
            RelRef::Nested(q) => write!(f, "<({q})"),
            RelRef::Template { text, .. } => write!(f, "<({text})"),
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.command)?;
        for (k, v) in &self.flags {
            write!(f, " -{k}")?;
            if let Some(v) = v {
                write!(f, " {}", quote_if_needed(v))?;
            }
        }
        if self.command == "select" {
            let cols: Vec<&str> = self.args.iter().filter_map(Arg::word).collect();
            return write!(f, " {}", cols.join(","));
        }
        for a in &self.args {
            match a {
                Arg::Word(w) => write!(f, " {}", quote_if_needed(w))?,
                Arg::Rel(r) => write!(f, " {r}")?,
            }
        }
        if let Some(e) = &self.expr {
            write!(f, " {e}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.head {
            Head::Sql(sql) => write!(f, "{}", normalize_ws(&sql.render(|b| b.rel.to_string())))?,
            Head::Pipe(s) => {
                write!(f, "{}", self.context.keyword())?;
                let o = &s.options;
                match &o.split {
                    Some(SplitArg::Count(n)) => write!(f, " -split {n}")?,
                    Some(SplitArg::Relation(r)) => write!(f, " -split {r}")?,
                    None => {}
                }
                if let Some(p) = &o.parts {
                    write!(f, " -parts {p}")?;
                }
                write!(f, " {}", s.rel)?;
                if let Some(p) = &o.range {
                    write!(f, " -p {}", quote_if_needed(p))?;
                }
                if let Some(t) = &o.tags {
                    let t: Vec<String> = t.iter().map(|t| quote_if_needed(t)).collect();
                    write!(f, " -f {}", t.join(","))?;
                }
                if let Some(r) = &o.tag_file {
                    write!(f, " -ff {r}")?;
                }
                if o.no_fail {
                    write!(f, " -nf")?;
                }
            }
        }
        for s in &self.steps {
            write!(f, " | {s}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, body) in &self.defs {
            writeln!(f, "def {name} = {body};")?;
        }
        for c in &self.creates {
            writeln!(f, "create #{}# = {};", c.name, c.query)?;
        }
        if let Some(q) = &self.query {
            write!(f, "{q}")?;
        }
        Ok(())
    }
}
