//! Row-local steps: filters and projections.

use std::collections::{HashSet, VecDeque};

use crate::engine::{EngineCtx, Lookup, Resolver};
use crate::error::{Error, Result};
use crate::expr::BoundExpr;
use crate::model::{BoxStream, Locus, OrderChecked, Row, RowStream, Schema};
use crate::parser::Step;

pub(crate) type RowFn = Box<dyn FnMut(Row, &mut VecDeque<Row>) -> Result<()> + Send>;

/// A stream that maps each input row to zero or more output rows.
pub(crate) struct Xform {
    inner: BoxStream,
    schema: Schema,
    f: RowFn,
    queue: VecDeque<Row>,
    seekable: bool,
    keeps_span: bool,
}

impl Xform {
    pub fn new(inner: BoxStream, schema: Schema, f: RowFn) -> Self {
        Xform { inner, schema, f, queue: VecDeque::new(), seekable: true, keeps_span: false }
    }

    /// Whether positional columns 1-3 pass through unchanged.
    pub fn keeps_span(mut self) -> Self {
        self.keeps_span = true;
        self
    }

    pub fn no_seek(mut self) -> Self {
        self.seekable = false;
        self
    }
}

impl RowStream for Xform {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.queue.pop_front() {
                return Ok(Some(r));
            }
            match self.inner.next_row()? {
                Some(r) => (self.f)(r, &mut self.queue)?,
                None => return Ok(None),
            }
        }
    }

    fn can_seek(&self) -> bool {
        self.seekable && self.inner.can_seek()
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        if !self.seekable {
            return Err(Error::NotSeekable);
        }
        self.queue.clear();
        self.inner.seek(to)
    }

    fn progress(&self) -> Locus {
        if self.queue.is_empty() {
            self.inner.progress()
        } else {
            Locus::MIN
        }
    }

    fn span_bound(&self) -> Option<u64> {
        if self.keeps_span {
            self.inner.span_bound()
        } else {
            None
        }
    }
}

fn word<'a>(step: &'a Step, i: usize) -> Result<&'a str> {
    step.args
        .get(i)
        .and_then(|a| a.word())
        .ok_or_else(|| Error::Usage(format!("{} expects an argument at position {}", step.command, i + 1)))
}

fn expr<'a>(step: &'a Step) -> Result<&'a crate::expr::Expr> {
    step.expr.as_ref().ok_or_else(|| Error::Usage(format!("{} expects an expression", step.command)))
}

pub(crate) fn bind(input: BoxStream, step: &Step, ctx: &EngineCtx, res: &dyn Resolver) -> Result<BoxStream> {
    let schema = input.schema().clone();
    match step.command.as_str() {
        "where" => {
            let e = BoundExpr::bind(expr(step)?, &schema, &ctx.env)?;
            let f: RowFn = Box::new(move |r, out| {
                if e.eval_bool(&r)? {
                    out.push_back(r);
                }
                Ok(())
            });
            Ok(Box::new(Xform::new(input, schema, f).keeps_span()))
        }
        "inset" => {
            let col = schema.index_of(step.value("c").ok_or_else(|| Error::Usage("inset needs -c <column>".into()))?)?;
            let rel = step.rel(0).ok_or_else(|| Error::Usage("inset needs a relation".into()))?;
            let mut lookup = Lookup::new(res.open(rel, false)?);
            if lookup.schema.is_empty() {
                return Err(Error::SchemaError("inset relation has no columns".into()));
            }
            let mut set: Option<HashSet<String>> = None;
            let f: RowFn = Box::new(move |r, out| {
                if set.is_none() {
                    set = Some(lookup.rows()?.iter().map(|m| m.cell(0).to_string()).collect());
                }
                if set.as_ref().unwrap().contains(r.cell(col)) {
                    out.push_back(r);
                }
                Ok(())
            });
            Ok(Box::new(Xform::new(input, schema, f).keeps_span()))
        }
        "select" => {
            let mut idx = Vec::new();
            for a in &step.args {
                select_spec(&schema, a.word().unwrap_or_default(), &mut idx)?;
            }
            if schema.is_ordered() && !(idx.len() >= 2 && idx[0] == 0 && idx[1] == 1) {
                idx.retain(|&i| i > 1);
                idx.splice(0..0, [0, 1]);
            }
            let names: Vec<&str> = idx.iter().map(|&i| schema.name(i)).collect();
            let out_schema = Schema::from_names(&names, schema.is_ordered())?;
            let keep = idx.len() >= 3 && idx[..3] == [0, 1, 2];
            let f: RowFn = Box::new(move |r, out| {
                out.push_back(r.project(&idx));
                Ok(())
            });
            let x = Xform::new(input, out_schema, f);
            Ok(Box::new(if keep { x.keeps_span() } else { x }))
        }
        "rename" => {
            let (old, new) = (word(step, 0)?, word(step, 1)?);
            let i = schema.index_of(old)?;
            let mut names: Vec<String> = schema.names().map(str::to_string).collect();
            names[i] = new.to_string();
            let out_schema = Schema::from_names(&names, schema.is_ordered())?;
            let f: RowFn = Box::new(|r, out| {
                out.push_back(r);
                Ok(())
            });
            Ok(Box::new(Xform::new(input, out_schema, f).keeps_span()))
        }
        "replace" => {
            let i = schema.index_of(word(step, 0)?)?;
            let e = BoundExpr::bind(expr(step)?, &schema, &ctx.env)?;
            let f: RowFn = Box::new(move |r, out| {
                let v = e.eval_text(&r)?;
                out.push_back(r.with_cell(i, &v));
                Ok(())
            });
            let positional = i < 3;
            let x = Xform::new(input, schema.clone(), f);
            if schema.is_ordered() && positional {
                // rewritten positions may break order; seek targets no longer
                // correspond to output loci either
                let build = ctx.build("replace on a positional column")?;
                Ok(Box::new(OrderChecked::new(Box::new(x.no_seek()), build)))
            } else {
                Ok(Box::new(if positional { x } else { x.keeps_span() }))
            }
        }
        "calc" => {
            let name = word(step, 0)?;
            if schema.find(name).is_some() {
                return Err(Error::DuplicateColumn(name.to_string()));
            }
            let e = BoundExpr::bind(expr(step)?, &schema, &ctx.env)?;
            let out_schema = super::extend_schema(&schema, &[name.to_string()], schema.is_ordered())?;
            let f: RowFn = Box::new(move |mut r, out| {
                let v = e.eval_text(&r)?;
                r.push(&v);
                out.push_back(r);
                Ok(())
            });
            Ok(Box::new(Xform::new(input, out_schema, f).keeps_span()))
        }
        "rownum" => {
            if schema.find("rownum").is_some() {
                return Err(Error::DuplicateColumn("rownum".into()));
            }
            let out_schema = super::extend_schema(&schema, &["rownum".to_string()], schema.is_ordered())?;
            let mut n = 0u64;
            let f: RowFn = Box::new(move |mut r, out| {
                n += 1;
                r.push(&n.to_string());
                out.push_back(r);
                Ok(())
            });
            Ok(Box::new(Xform::new(input, out_schema, f).keeps_span().no_seek()))
        }
        c => unreachable!("rowops does not handle {c}"),
    }
}

/// Resolves one select item: a name, `#N`, a 1-based number, or a range
/// `a-b` of any of those.
fn select_spec(schema: &Schema, spec: &str, out: &mut Vec<usize>) -> Result<()> {
    if let Ok(i) = column_ref(schema, spec) {
        out.push(i);
        return Ok(());
    }
    if let Some((a, b)) = spec.split_once('-') {
        let lo = if a.is_empty() { 0 } else { column_ref(schema, a)? };
        let hi = if b.is_empty() { schema.len() - 1 } else { column_ref(schema, b)? };
        if lo > hi {
            return Err(Error::Usage(format!("select range {spec} is backwards")));
        }
        out.extend(lo..=hi);
        return Ok(());
    }
    Err(Error::UnknownColumn(spec.to_string()))
}

fn column_ref(schema: &Schema, s: &str) -> Result<usize> {
    if let Ok(n) = s.parse::<usize>() {
        if n >= 1 && n <= schema.len() {
            return Ok(n - 1);
        }
        return Err(Error::UnknownColumn(s.to_string()));
    }
    schema.index_of(s)
}
