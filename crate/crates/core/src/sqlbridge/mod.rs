//! The embedded SQL subset: binds placeholder tables, pushes single-table
//! predicates down to the scans, and evaluates joins, aggregates and ORDER BY
//! in memory.
//!
//! Supported: `SELECT` lists of `*`, `t.*`, expressions with aliases and the
//! aggregates `count`, `collect_list`, `concat_ws(sep, collect_list(x))`,
//! `sum`, `min`, `max` and `avg`; `FROM` with inner `JOIN ... ON` equality;
//! `WHERE` with comparisons, `LIKE`, `IN`, `AND`/`OR` and `year()`;
//! `GROUP BY`; `ORDER BY` with `ASC`/`DESC`. Anything else is rejected with
//! [`Error::UnsupportedSql`].

mod parse;

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{format_float, natural_cmp, parse_number, BinOp, BoundExpr, Expr, ExprEnv, Num, Value};
use crate::model::{BoxStream, Column, ContigOrder, Locus, Row, RowStream, Schema, VecStream};
use crate::parser::{RelRef, SqlText};

pub use parse::{parse_statement, Join, OrderKey, SelectItem, SqlStatement, TableRef};

/// Advice passed to a table scan. Scans may ignore it; the evaluator
/// re-applies every predicate.
#[derive(Debug, Clone, Default)]
pub struct ScanHint {
    pub range: Option<(Locus, Locus)>,
    /// Conjunction over the table's columns, as `#N` (1-based).
    pub predicate: Option<Expr>,
}

impl ScanHint {
    fn is_empty(&self) -> bool {
        self.range.is_none() && self.predicate.is_none()
    }
}

/// Where SQL table references come from.
pub trait SqlSources {
    /// Opens a bound placeholder relation.
    fn sql_table(&self, rel: &RelRef, hint: &ScanHint) -> Result<BoxStream>;
    /// Opens a table referenced by bare name, if one is registered.
    fn sql_named(&self, name: &str, hint: &ScanHint) -> Result<Option<BoxStream>>;
    fn sql_build(&self) -> Option<Arc<ContigOrder>>;
    fn sql_env(&self) -> ExprEnv {
        ExprEnv::default()
    }
}

fn semantic(msg: impl Into<String>) -> Error {
    Error::SqlSemantic(msg.into())
}

fn conjuncts(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary(BinOp::And, l, r) => {
            conjuncts(l, out);
            conjuncts(r, out);
        }
        _ => out.push(e.clone()),
    }
}

fn and_all(es: impl IntoIterator<Item = Expr>) -> Option<Expr> {
    es.into_iter().reduce(|a, b| Expr::binary(BinOp::And, a, b))
}

fn col_index(c: &str) -> usize {
    c.strip_prefix('#').and_then(|n| n.parse::<usize>().ok()).expect("resolved column") - 1
}

fn pos_col(i: usize) -> Expr {
    Expr::Col(format!("#{}", i + 1))
}

/// Rebuilds `e` bottom-up, letting `f` replace any node first.
fn rewrite(e: &Expr, f: &mut dyn FnMut(&Expr) -> Result<Option<Expr>>) -> Result<Expr> {
    if let Some(r) = f(e)? {
        return Ok(r);
    }
    let mut b = |x: &Expr| rewrite(x, f).map(Box::new);
    Ok(match e {
        Expr::Lit(_) | Expr::Col(_) | Expr::Star => e.clone(),
        Expr::Neg(x) => Expr::Neg(b(x)?),
        Expr::Not(x) => Expr::Not(b(x)?),
        Expr::Binary(op, l, r) => Expr::Binary(*op, b(l)?, b(r)?),
        Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(|a| rewrite(a, f)).collect::<Result<_>>()?),
        Expr::In { expr, list, negated } => Expr::In {
            expr: b(expr)?,
            list: list.iter().map(|a| rewrite(a, f)).collect::<Result<_>>()?,
            negated: *negated,
        },
        Expr::Like { expr, pattern, negated } => Expr::Like { expr: b(expr)?, pattern: b(pattern)?, negated: *negated },
        Expr::InDag { expr, file, term } => Expr::InDag { expr: b(expr)?, file: file.clone(), term: b(term)? },
    })
}

const AGG_NAMES: &[&str] = &["count", "collect_list", "sum", "min", "max", "avg"];

fn has_aggregate(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |x| {
        if let Expr::Call(n, _) = x {
            if AGG_NAMES.contains(&n.as_str()) || n == "concat_ws" {
                found = true;
            }
        }
    });
    found
}

struct BoundTable {
    qualifier: String,
    schema: Schema,
    offset: usize,
    open: Box<dyn FnOnce() -> Result<BoxStream> + Send>,
}

/// Column resolution over the tables of a FROM clause. Resolved columns are
/// `#N` positions in the concatenated row.
struct Scope {
    tables: Vec<(String, Schema, usize)>,
    width: usize,
}

impl Scope {
    fn resolve(&self, name: &str) -> Result<usize> {
        if name.starts_with('#') {
            return Err(semantic(format!("positional column '{name}' is not valid in SQL")));
        }
        if let Some((q, c)) = name.rsplit_once('.') {
            let (_, s, off) = self
                .tables
                .iter()
                .find(|(tq, _, _)| tq.eq_ignore_ascii_case(q))
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
            return Ok(off + s.find(c).ok_or_else(|| Error::UnknownColumn(name.to_string()))?);
        }
        let hits: Vec<usize> = self.tables.iter().filter_map(|(_, s, off)| s.find(name).map(|i| off + i)).collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::UnknownColumn(name.to_string())),
            _ => Err(semantic(format!("column '{name}' is ambiguous"))),
        }
    }

    fn table_of(&self, global: usize) -> usize {
        self.tables.iter().rposition(|(_, _, off)| *off <= global).unwrap_or(0)
    }

    /// `e` with every column replaced by its `#N` position.
    fn bind(&self, e: &Expr) -> Result<Expr> {
        let err = RefCell::new(None);
        let out = e.map_cols(&mut |c| match self.resolve(c) {
            Ok(i) => pos_col(i),
            Err(x) => {
                err.borrow_mut().get_or_insert(x);
                Expr::Col(c.to_string())
            }
        });
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn schema(&self) -> Schema {
        let cols = (1..=self.width).map(|i| Column::text(format!("c{i}"))).collect();
        Schema::new(cols, false).expect("synthetic names")
    }
}

/// `e`'s columns all lie in `[lo, hi)`; shifts them down by `lo`.
fn localize(e: &Expr, lo: usize, hi: usize) -> Option<Expr> {
    let cols: Vec<usize> = e.columns().iter().map(|c| col_index(c)).collect();
    if cols.is_empty() || !cols.iter().all(|&c| c >= lo && c < hi) {
        return None;
    }
    Some(e.map_cols(&mut |c| pos_col(col_index(c) - lo)))
}

fn literal(e: &Expr) -> Option<&Value> {
    match e {
        Expr::Lit(v) => Some(v),
        _ => None,
    }
}

/// Whether a scan can use `e` to skip row groups.
fn prunable(e: &Expr) -> bool {
    match e {
        Expr::Binary(op, l, r) if op.is_comparison() => {
            matches!((l.as_ref(), r.as_ref()), (Expr::Col(_), Expr::Lit(_)) | (Expr::Lit(_), Expr::Col(_)))
        }
        Expr::In { expr, list, negated: false } => {
            matches!(expr.as_ref(), Expr::Col(_)) && list.iter().all(|x| literal(x).is_some())
        }
        Expr::Like { expr, pattern, negated: false } => {
            matches!(expr.as_ref(), Expr::Col(_)) && matches!(pattern.as_ref(), Expr::Lit(Value::Text(_)))
        }
        _ => false,
    }
}

/// A genome range implied by local conjuncts on an ordered table's contig
/// (`#1`) and position (`#2`) columns.
fn range_hint(local: &[Expr], build: &ContigOrder) -> Option<(Locus, Locus)> {
    let mut contig = None;
    let (mut lo, mut hi) = (0u64, u64::MAX);
    for e in local {
        let Expr::Binary(op, l, r) = e else { continue };
        let (c, v, op) = match (l.as_ref(), r.as_ref()) {
            (Expr::Col(c), Expr::Lit(v)) => (c, v, *op),
            (Expr::Lit(v), Expr::Col(c)) => (c, v, flip(*op)),
            _ => continue,
        };
        match (col_index(c), op) {
            (0, BinOp::Eq) => contig = build.index_of(&v.to_text()).ok(),
            (1, _) => {
                let Some(n) = v.as_num() else { continue };
                let f = n.as_f64();
                if f < 0.0 {
                    continue;
                }
                match op {
                    BinOp::Eq => {
                        lo = lo.max(f.ceil() as u64);
                        hi = hi.min(f.floor() as u64);
                    }
                    BinOp::Ge => lo = lo.max(f.ceil() as u64),
                    BinOp::Gt => lo = lo.max(f.floor() as u64 + 1),
                    BinOp::Le => hi = hi.min(f.floor() as u64),
                    BinOp::Lt => hi = hi.min((f.ceil() as u64).saturating_sub(1)),
                    _ => {}
                }
            }
            _ => {}
        }
    }
    let c = contig?;
    Some((Locus::new(c, lo), Locus::new(c, hi)))
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        o => o,
    }
}

#[derive(Debug, Clone)]
enum AggKind {
    CountAll,
    Count,
    List(String),
    Sum,
    Min,
    Max,
    Avg,
}

struct Agg {
    kind: AggKind,
    arg: Option<BoundExpr>,
}

#[derive(Default, Clone)]
struct AggState {
    n: u64,
    items: Vec<String>,
    sum: Option<Num>,
    best: Option<String>,
}

fn add_num(a: Option<Num>, b: Num) -> Num {
    match (a, b) {
        (None, b) => b,
        (Some(Num::Int(x)), Num::Int(y)) => x.checked_add(y).map(Num::Int).unwrap_or(Num::Float(x as f64 + y as f64)),
        (Some(a), b) => Num::Float(a.as_f64() + b.as_f64()),
    }
}

impl Agg {
    fn update(&self, st: &mut AggState, row: &Row) -> Result<()> {
        let v = match &self.arg {
            Some(a) => a.eval(row)?.to_text(),
            None => {
                st.n += 1;
                return Ok(());
            }
        };
        if v.is_empty() {
            return Ok(());
        }
        st.n += 1;
        match self.kind {
            AggKind::CountAll | AggKind::Count => {}
            AggKind::List(_) => st.items.push(v),
            AggKind::Sum | AggKind::Avg => {
                let n = parse_number(&v).ok_or_else(|| Error::TypeMismatch(format!("cannot sum non-numeric '{v}'")))?;
                st.sum = Some(add_num(st.sum, n));
            }
            AggKind::Min | AggKind::Max => {
                let better = match &st.best {
                    None => true,
                    Some(b) => {
                        let o = natural_cmp(&v, b);
                        if matches!(self.kind, AggKind::Min) {
                            o == Ordering::Less
                        } else {
                            o == Ordering::Greater
                        }
                    }
                };
                if better {
                    st.best = Some(v);
                }
            }
        }
        Ok(())
    }

    fn finish(&self, st: &AggState) -> String {
        match &self.kind {
            AggKind::CountAll | AggKind::Count => st.n.to_string(),
            AggKind::List(sep) => st.items.join(sep),
            AggKind::Sum => st.sum.map(|s| s.into_value().to_text()).unwrap_or_default(),
            AggKind::Avg => match st.sum {
                Some(s) if st.n > 0 => format_float(s.as_f64() / st.n as f64),
                _ => String::new(),
            },
            AggKind::Min | AggKind::Max => st.best.clone().unwrap_or_default(),
        }
    }
}

/// How output rows get their sort keys.
enum KeySource {
    Output(usize),
    Expr(BoundExpr),
}

struct Plan {
    tables: Vec<BoundTable>,
    /// Per-table filters over each table's own columns.
    local_filters: Vec<Option<BoundExpr>>,
    /// Per join: key expressions over the left prefix and over the new table.
    join_keys: Vec<(Vec<BoundExpr>, Vec<BoundExpr>)>,
    residual: Option<BoundExpr>,
    /// Non-aggregate: output expressions over the joined row.
    project: Vec<BoundExpr>,
    aggregate: Option<Aggregate>,
    order: Vec<(KeySource, bool)>,
    genome_order: Option<Arc<ContigOrder>>,
    schema: Schema,
}

struct Aggregate {
    keys: Vec<BoundExpr>,
    aggs: Vec<Agg>,
    /// Output expressions over `[keys.., aggregates..]`.
    project: Vec<BoundExpr>,
    global: bool,
}

fn output_name(item_text: &str, expr: &Expr, alias: &Option<String>) -> String {
    if let Some(a) = alias {
        return a.clone();
    }
    if let Expr::Col(c) = expr {
        return c.rsplit_once('.').map(|(_, n)| n).unwrap_or(c).to_string();
    }
    crate::parser::scan::normalize_ws(item_text)
}

fn open_table(t: &TableRef, sql: &SqlText, src: &dyn SqlSources, hint: &ScanHint) -> Result<BoxStream> {
    match sql.bindings.iter().find(|b| b.id == t.name) {
        Some(b) => src.sql_table(&b.rel, hint),
        None => src.sql_named(&t.name, hint)?.ok_or_else(|| Error::UnresolvedRelation(t.name.clone())),
    }
}

/// Binds a SQL statement into a lazy stream. Sources are opened at bind time
/// for their schemas; rows are read on first pull.
pub fn evaluate(sql: &SqlText, src: &dyn SqlSources) -> Result<BoxStream> {
    let stmt = parse_statement(&sql.template)?;
    let env = src.sql_env();
    let build = src.sql_build();
    let bind = |e: &Expr, s: &Schema| BoundExpr::bind(e, s, &env);

    let refs: Vec<&TableRef> = std::iter::once(&stmt.from).chain(stmt.joins.iter().map(|j| &j.table)).collect();
    let mut probes = Vec::with_capacity(refs.len());
    let mut scope = Scope { tables: Vec::new(), width: 0 };
    for t in &refs {
        let s = open_table(t, sql, src, &ScanHint::default())?;
        let schema = s.schema().clone();
        if scope.tables.iter().any(|(q, _, _)| q.eq_ignore_ascii_case(t.qualifier())) {
            return Err(semantic(format!("table name '{}' used twice; give it an alias", t.qualifier())));
        }
        scope.tables.push((t.qualifier().to_string(), schema.clone(), scope.width));
        scope.width += schema.len();
        probes.push(s);
    }

    // WHERE and ON conjuncts, split into per-table filters, join keys and
    // the residual
    let mut where_parts = Vec::new();
    if let Some(f) = &stmt.filter {
        if has_aggregate(f) {
            return Err(semantic("aggregate functions are not allowed in WHERE"));
        }
        conjuncts(&scope.bind(f)?, &mut where_parts);
    }
    let mut join_pairs: Vec<Vec<(Expr, Expr)>> = Vec::new();
    for (j, join) in stmt.joins.iter().enumerate() {
        let (_, s, off) = &scope.tables[j + 1];
        let (lo, hi) = (*off, off + s.len());
        let mut parts = Vec::new();
        conjuncts(&scope.bind(&join.on)?, &mut parts);
        let mut pairs = Vec::new();
        for p in parts {
            if let Expr::Binary(BinOp::Eq, l, r) = &p {
                let left_only = |e: &Expr| !e.columns().is_empty() && e.columns().iter().all(|c| col_index(c) < lo);
                if left_only(l) {
                    if let Some(rl) = localize(r, lo, hi) {
                        pairs.push(((**l).clone(), rl));
                        continue;
                    }
                }
                if left_only(r) {
                    if let Some(ll) = localize(l, lo, hi) {
                        pairs.push(((**r).clone(), ll));
                        continue;
                    }
                }
            }
            where_parts.push(p);
        }
        if pairs.is_empty() {
            return Err(Error::UnsupportedSql("JOIN without an equality condition between its tables".into()));
        }
        join_pairs.push(pairs);
    }
    let mut local: Vec<Vec<Expr>> = vec![Vec::new(); refs.len()];
    let mut residual = Vec::new();
    for p in where_parts {
        let cols: Vec<usize> = p.columns().iter().map(|c| col_index(c)).collect();
        let t = cols.first().map(|&c| scope.table_of(c));
        match t {
            Some(t) if cols.iter().all(|&c| scope.table_of(c) == t) => {
                let (_, s, off) = &scope.tables[t];
                local[t].push(localize(&p, *off, off + s.len()).expect("single table"));
            }
            _ => residual.push(p),
        }
    }

    let mut tables = Vec::with_capacity(refs.len());
    let mut local_filters = Vec::with_capacity(refs.len());
    for (i, (t, probe)) in refs.iter().zip(probes).enumerate() {
        let (q, schema, offset) = scope.tables[i].clone();
        let hint = ScanHint {
            range: match &build {
                Some(b) if schema.is_ordered() => range_hint(&local[i], b),
                _ => None,
            },
            predicate: and_all(local[i].iter().filter(|e| prunable(e)).cloned()),
        };
        let stream = if hint.is_empty() { probe } else { open_table(t, sql, src, &hint)? };
        local_filters.push(and_all(local[i].clone()).map(|e| bind(&e, &schema)).transpose()?);
        tables.push(BoundTable { qualifier: q, schema, offset, open: Box::new(move || Ok(stream)) });
    }

    let joined = scope.schema();
    let mut join_keys = Vec::new();
    for (j, pairs) in join_pairs.iter().enumerate() {
        let left_schema = Schema::new(joined.columns()[..tables[j + 1].offset].to_vec(), false)?;
        let right = &tables[j + 1].schema;
        let mut lk = Vec::new();
        let mut rk = Vec::new();
        for (l, r) in pairs {
            lk.push(bind(l, &left_schema)?);
            rk.push(bind(r, right)?);
        }
        join_keys.push((lk, rk));
    }

    // select list
    let agg_mode = !stmt.group_by.is_empty()
        || stmt.select.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if has_aggregate(expr)));
    let mut names: Vec<String> = Vec::new();
    let mut exprs: Vec<Expr> = Vec::new();
    for item in &stmt.select {
        match item {
            SelectItem::Star | SelectItem::TableStar(_) => {
                if agg_mode {
                    return Err(semantic("'*' cannot be selected with GROUP BY or aggregates"));
                }
                let mut any = false;
                for (q, s, off) in &scope.tables {
                    if let SelectItem::TableStar(want) = item {
                        if !want.eq_ignore_ascii_case(q) {
                            continue;
                        }
                    }
                    any = true;
                    for (i, n) in s.names().enumerate() {
                        names.push(n.to_string());
                        exprs.push(pos_col(off + i));
                    }
                }
                if !any {
                    return Err(Error::UnresolvedRelation(format!("{item:?}")));
                }
            }
            SelectItem::Expr { expr, alias, text } => {
                names.push(output_name(text, expr, alias));
                exprs.push(scope.bind(expr)?);
            }
        }
    }
    let mut unique: Vec<String> = Vec::with_capacity(names.len());
    let empty = Schema::new(Vec::new(), false)?;
    for n in names {
        let u = empty.unique_name(&n, &unique);
        unique.push(u);
    }

    // ORDER BY keys: output columns by name, or expressions
    let mut order_exprs: Vec<(Result<Expr>, Option<usize>, bool)> = Vec::new();
    for k in &stmt.order_by {
        let by_name = match &k.expr {
            Expr::Col(c) => unique.iter().position(|n| n.eq_ignore_ascii_case(c)),
            _ => None,
        };
        let bound = scope.bind(&k.expr);
        let out = match &bound {
            Ok(b) => exprs.iter().position(|e| e == b).or(by_name),
            Err(_) => by_name,
        };
        order_exprs.push((bound, out, k.desc));
    }

    let (project, aggregate, order) = if agg_mode {
        let group: Vec<Expr> = stmt.group_by.iter().map(|g| scope.bind(g)).collect::<Result<_>>()?;
        if group.iter().any(has_aggregate) {
            return Err(semantic("aggregate functions are not allowed in GROUP BY"));
        }
        let mut aggs: Vec<(AggKind, Option<Expr>)> = Vec::new();
        let k = group.len();
        let mut lift = |e: &Expr| -> Result<Expr> {
            rewrite(e, &mut |x| {
                if let Some(i) = group.iter().position(|g| g == x) {
                    return Ok(Some(pos_col(i)));
                }
                let Expr::Call(name, args) = x else {
                    if let Expr::Col(c) = x {
                        return Err(semantic(format!(
                            "column {} must appear in GROUP BY or inside an aggregate",
                            joined_name(&scope, c)
                        )));
                    }
                    return Ok(None);
                };
                let kind = match (name.as_str(), args.as_slice()) {
                    ("count", [Expr::Star]) => (AggKind::CountAll, None),
                    ("count", [a]) => (AggKind::Count, Some(a.clone())),
                    ("collect_list", [a]) => (AggKind::List(",".into()), Some(a.clone())),
                    ("concat_ws", [sep, Expr::Call(inner, ia)]) if inner == "collect_list" && ia.len() == 1 => {
                        let Some(Value::Text(s)) = literal(sep) else {
                            return Err(Error::UnsupportedSql("concat_ws with a non-literal separator".into()));
                        };
                        (AggKind::List(s.clone()), Some(ia[0].clone()))
                    }
                    ("concat_ws", _) => return Err(Error::UnsupportedSql("concat_ws outside collect_list".into())),
                    ("sum", [a]) => (AggKind::Sum, Some(a.clone())),
                    ("min", [a]) => (AggKind::Min, Some(a.clone())),
                    ("max", [a]) => (AggKind::Max, Some(a.clone())),
                    ("avg", [a]) => (AggKind::Avg, Some(a.clone())),
                    (n, _) if AGG_NAMES.contains(&n) => {
                        return Err(semantic(format!("wrong number of arguments to {n}")));
                    }
                    _ => return Ok(None),
                };
                if kind.1.as_ref().is_some_and(has_aggregate) {
                    return Err(semantic("aggregate functions cannot be nested"));
                }
                aggs.push(kind);
                Ok(Some(pos_col(k + aggs.len() - 1)))
            })
        };
        let lifted: Vec<Expr> = exprs.iter().map(&mut lift).collect::<Result<_>>()?;
        let mut order = Vec::new();
        let mut order_lifted = Vec::new();
        for (bound, out, desc) in order_exprs {
            match out {
                Some(i) => order.push((Some(i), desc)),
                None => {
                    order_lifted.push(lift(&bound?)?);
                    order.push((None, desc));
                }
            }
        }
        let width = k + aggs.len();
        let synth = Schema::new((1..=width.max(1)).map(|i| Column::text(format!("a{i}"))).collect(), false)?;
        let project = lifted.iter().map(|e| bind(e, &synth)).collect::<Result<Vec<_>>>()?;
        let mut ol = order_lifted.into_iter();
        let order: Vec<(KeySource, bool)> = order
            .into_iter()
            .map(|(o, d)| match o {
                Some(i) => Ok((KeySource::Output(i), d)),
                None => Ok((KeySource::Expr(bind(&ol.next().unwrap(), &synth)?), d)),
            })
            .collect::<Result<_>>()?;
        let aggs = aggs
            .into_iter()
            .map(|(kind, a)| Ok(Agg { kind, arg: a.map(|a| bind(&a, &joined)).transpose()? }))
            .collect::<Result<Vec<_>>>()?;
        let keys = group.iter().map(|g| bind(g, &joined)).collect::<Result<Vec<_>>>()?;
        let global = keys.is_empty();
        (Vec::new(), Some(Aggregate { keys, aggs, project, global }), order)
    } else {
        let project = exprs.iter().map(|e| bind(e, &joined)).collect::<Result<Vec<_>>>()?;
        let order = order_exprs
            .into_iter()
            .map(|(bound, out, desc)| match out {
                Some(i) => Ok((KeySource::Output(i), desc)),
                None => Ok((KeySource::Expr(bind(&bound?, &joined)?), desc)),
            })
            .collect::<Result<_>>()?;
        (project, None, order)
    };

    // ORDER BY on the first two output columns sorts by the genome
    let genome_order = match (&build, order.as_slice()) {
        (Some(b), [(KeySource::Output(0), false), (KeySource::Output(1), false), ..]) if unique.len() >= 2 => {
            Some(b.clone())
        }
        _ => None,
    };
    let cols = unique.iter().map(|n| Column::text(n.clone())).collect();
    let schema = Schema::new(cols, genome_order.is_some())?;

    let plan = Plan {
        tables,
        local_filters,
        join_keys,
        residual: and_all(residual).map(|e| bind(&e, &joined)).transpose()?,
        project,
        aggregate,
        order,
        genome_order,
        schema: schema.clone(),
    };
    Ok(Box::new(SqlStream { schema, plan: Some(plan), rows: None }))
}

fn joined_name(scope: &Scope, c: &str) -> String {
    let i = col_index(c);
    let t = scope.table_of(i);
    let (q, s, off) = &scope.tables[t];
    format!("{q}.{}", s.name(i - off))
}

/// Lazily evaluated statement result.
struct SqlStream {
    schema: Schema,
    plan: Option<Plan>,
    rows: Option<BoxStream>,
}

impl RowStream for SqlStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if let Some(plan) = self.plan.take() {
            self.rows = Some(plan.run()?);
        }
        match &mut self.rows {
            Some(s) => s.next_row(),
            None => Ok(None),
        }
    }
}

/// Rows of one table passing its filter.
struct Filtered {
    inner: BoxStream,
    filter: Option<BoundExpr>,
}

impl RowStream for Filtered {
    fn schema(&self) -> &Schema {
        self.inner.schema()
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        while let Some(r) = self.inner.next_row()? {
            match &self.filter {
                Some(f) if !f.eval_bool(&r)? => continue,
                _ => return Ok(Some(r)),
            }
        }
        Ok(None)
    }
}

/// Filter-and-project over a single table, streamed.
struct Projected {
    inner: Filtered,
    residual: Option<BoundExpr>,
    project: Vec<BoundExpr>,
    schema: Schema,
}

impl RowStream for Projected {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        while let Some(r) = self.inner.next_row()? {
            if let Some(f) = &self.residual {
                if !f.eval_bool(&r)? {
                    continue;
                }
            }
            return project(&self.project, &r).map(Some);
        }
        Ok(None)
    }
}

fn project(exprs: &[BoundExpr], row: &Row) -> Result<Row> {
    let cells = exprs.iter().map(|e| e.eval(row).map(|v| v.to_text())).collect::<Result<Vec<_>>>()?;
    Row::try_from_cells(cells)
}

fn keys(exprs: &[BoundExpr], row: &Row) -> Result<Vec<String>> {
    exprs.iter().map(|e| e.eval(row).map(|v| v.to_text())).collect()
}

/// Inner equi-join, hashing the smaller side. Output keeps left-major order.
fn hash_join(left: Vec<Row>, right: Vec<Row>, lk: &[BoundExpr], rk: &[BoundExpr]) -> Result<Vec<Row>> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if left.len() <= right.len() {
        let mut h: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        for (i, r) in left.iter().enumerate() {
            h.entry(keys(lk, r)?).or_default().push(i);
        }
        for (j, r) in right.iter().enumerate() {
            if let Some(is) = h.get(&keys(rk, r)?) {
                pairs.extend(is.iter().map(|&i| (i, j)));
            }
        }
        pairs.sort_unstable();
    } else {
        let mut h: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        for (j, r) in right.iter().enumerate() {
            h.entry(keys(rk, r)?).or_default().push(j);
        }
        for (i, r) in left.iter().enumerate() {
            if let Some(js) = h.get(&keys(lk, r)?) {
                pairs.extend(js.iter().map(|&j| (i, j)));
            }
        }
    }
    Ok(pairs.into_iter().map(|(i, j)| left[i].appended(&right[j].to_vec())).collect())
}

impl Plan {
    fn run(self) -> Result<BoxStream> {
        let Plan { tables, local_filters, join_keys, residual, project, aggregate, order, genome_order, schema } = self;
        let mut inputs: Vec<Filtered> = Vec::with_capacity(tables.len());
        for (t, f) in tables.into_iter().zip(local_filters) {
            let _ = &t.qualifier;
            inputs.push(Filtered { inner: (t.open)()?, filter: f });
        }
        if inputs.len() == 1 && aggregate.is_none() && order.is_empty() {
            let inner = inputs.pop().unwrap();
            return Ok(Box::new(Projected { inner, residual, project, schema }));
        }

        // independent sources are read concurrently
        let mut sides = std::thread::scope(|s| {
            let handles: Vec<_> = inputs
                .into_iter()
                .map(|mut f| s.spawn(move || crate::model::collect_rows(&mut f)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("SQL source thread panicked")).collect::<Vec<_>>()
        })
        .into_iter();
        let mut rows = sides.next().unwrap()?;
        for (lk, rk) in &join_keys {
            rows = hash_join(rows, sides.next().unwrap()?, lk, rk)?;
        }
        if let Some(f) = &residual {
            let mut kept = Vec::with_capacity(rows.len());
            for r in rows {
                if f.eval_bool(&r)? {
                    kept.push(r);
                }
            }
            rows = kept;
        }

        // (output row, sort keys)
        let mut out: Vec<(Row, Vec<String>)> = Vec::new();
        let sort_keys = |o: &Row, src: &Row| -> Result<Vec<String>> {
            order
                .iter()
                .map(|(k, _)| match k {
                    KeySource::Output(i) => Ok(o.cell(*i).to_string()),
                    KeySource::Expr(e) => e.eval(src).map(|v| v.to_text()),
                })
                .collect()
        };
        match &aggregate {
            None => {
                for r in &rows {
                    let o = project_row(&project, r)?;
                    let k = sort_keys(&o, r)?;
                    out.push((o, k));
                }
            }
            Some(a) => {
                let mut index: HashMap<Vec<String>, usize> = HashMap::new();
                let mut groups: Vec<(Vec<String>, Vec<AggState>)> = Vec::new();
                for r in &rows {
                    let key = keys(&a.keys, r)?;
                    let g = match index.get(&key) {
                        Some(&g) => g,
                        None => {
                            index.insert(key.clone(), groups.len());
                            groups.push((key, vec![AggState::default(); a.aggs.len()]));
                            groups.len() - 1
                        }
                    };
                    for (agg, st) in a.aggs.iter().zip(groups[g].1.iter_mut()) {
                        agg.update(st, r)?;
                    }
                }
                if groups.is_empty() && a.global {
                    groups.push((Vec::new(), vec![AggState::default(); a.aggs.len()]));
                }
                for (key, states) in groups {
                    let mut cells = key;
                    cells.extend(a.aggs.iter().zip(&states).map(|(agg, st)| agg.finish(st)));
                    if cells.is_empty() {
                        cells.push(String::new());
                    }
                    let synth = Row::try_from_cells(cells)?;
                    let o = project_row(&a.project, &synth)?;
                    let k = sort_keys(&o, &synth)?;
                    out.push((o, k));
                }
            }
        }

        if let Some(b) = &genome_order {
            let mut keyed = Vec::with_capacity(out.len());
            for (o, k) in out {
                let l = b.row_locus(&o)?;
                keyed.push((l, k, o));
            }
            keyed.sort_by(|a, b| {
                a.0.cmp(&b.0).then_with(|| cmp_keys(&a.1[2.min(a.1.len())..], &b.1[2.min(b.1.len())..], &order[2.min(order.len())..]))
            });
            let rows = keyed.into_iter().map(|(_, _, o)| o).collect();
            return Ok(Box::new(VecStream::new(schema, rows)));
        }
        if !order.is_empty() {
            out.sort_by(|a, b| cmp_keys(&a.1, &b.1, &order));
        }
        Ok(Box::new(VecStream::new(schema, out.into_iter().map(|(o, _)| o).collect())))
    }
}

fn project_row(exprs: &[BoundExpr], row: &Row) -> Result<Row> {
    project(exprs, row)
}

fn cmp_keys(a: &[String], b: &[String], order: &[(KeySource, bool)]) -> Ordering {
    for ((x, y), (_, desc)) in a.iter().zip(b).zip(order) {
        let o = natural_cmp(x, y);
        let o = if *desc { o.reverse() } else { o };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}
