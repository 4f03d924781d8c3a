//! The pull-based row stream contract and the generic streams built on it.
//!
//! Unlike a plain iterator, an ordered stream can be repositioned with
//! [`RowStream::seek`] and reports [`RowStream::progress`]: the smallest
//! locus it may still emit. Consumers (joins, merges) use progress to decide
//! between scanning ahead and seeking.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ContigOrder, Locus, Row, Schema};

pub trait RowStream: Send {
    fn schema(&self) -> &Schema;

    fn next_row(&mut self) -> Result<Option<Row>>;

    fn can_seek(&self) -> bool {
        false
    }

    /// Repositions so that every subsequent row is at or after `to`.
    fn seek(&mut self, _to: Locus) -> Result<()> {
        Err(Error::NotSeekable)
    }

    /// Lower bound on the locus of any row still to come. `Locus::MAX` once
    /// exhausted; `Locus::MIN` when nothing is known.
    fn progress(&self) -> Locus {
        Locus::MIN
    }

    /// Upper bound on `stop - start` over segment rows, when known up front.
    fn span_bound(&self) -> Option<u64> {
        None
    }
}

pub type BoxStream = Box<dyn RowStream>;

/// Drains a stream into memory.
pub fn collect_rows(stream: &mut dyn RowStream) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    while let Some(r) = stream.next_row()? {
        out.push(r);
    }
    Ok(out)
}

/// A materialized relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self> {
        for r in &rows {
            if r.len() != schema.len() {
                return Err(Error::Arity { expected: schema.len(), found: r.len() });
            }
        }
        Ok(Table { schema, rows })
    }

    pub fn from_stream(mut s: BoxStream) -> Result<Self> {
        let rows = collect_rows(s.as_mut())?;
        Ok(Table { schema: s.schema().clone(), rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Headered TSV text.
    pub fn to_tsv(&self, header: bool) -> String {
        let mut s = String::new();
        if header {
            s.push_str(&self.schema.header_line());
            s.push('\n');
        }
        for r in &self.rows {
            s.push_str(r.line());
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.schema.index_of(name)?;
        Ok(self.rows.iter().map(|r| r.cell(i)).collect())
    }
}

/// Streams an in-memory table. Ordered tables bound to a build support seek
/// by binary search and report exact progress.
pub struct TableStream {
    table: Arc<Table>,
    loci: Option<Arc<Vec<Locus>>>,
    span: Option<u64>,
    next: usize,
}

impl TableStream {
    pub fn new(table: Arc<Table>) -> Self {
        TableStream { table, loci: None, span: None, next: 0 }
    }

    /// Seekable variant; fails if the rows are not in genome order.
    pub fn ordered(table: Arc<Table>, build: &ContigOrder) -> Result<Self> {
        let mut loci = Vec::with_capacity(table.rows.len());
        let mut span = 0u64;
        let has_stop = table.schema.len() >= 3;
        for r in &table.rows {
            let l = build.row_locus(r)?;
            if let Some(&prev) = loci.last() {
                if l < prev {
                    return Err(Error::OrderViolation {
                        previous: build.display(prev),
                        current: build.display(l),
                    });
                }
            }
            if has_stop {
                if let Ok(stop) = r.cell(2).parse::<u64>() {
                    span = span.max(stop.saturating_sub(l.pos));
                }
            }
            loci.push(l);
        }
        Ok(TableStream {
            table,
            loci: Some(Arc::new(loci)),
            span: if has_stop { Some(span) } else { Some(0) },
            next: 0,
        })
    }
}

impl RowStream for TableStream {
    fn schema(&self) -> &Schema {
        &self.table.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        let r = self.table.rows.get(self.next).cloned();
        if r.is_some() {
            self.next += 1;
        }
        Ok(r)
    }

    fn can_seek(&self) -> bool {
        self.loci.is_some()
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        let loci = self.loci.as_ref().ok_or(Error::NotSeekable)?;
        self.next = loci.partition_point(|l| *l < to);
        Ok(())
    }

    fn progress(&self) -> Locus {
        match &self.loci {
            Some(l) => l.get(self.next).copied().unwrap_or(Locus::MAX),
            None if self.next >= self.table.rows.len() => Locus::MAX,
            None => Locus::MIN,
        }
    }

    fn span_bound(&self) -> Option<u64> {
        self.span
    }
}

/// Owned rows as a stream (no seek).
pub struct VecStream {
    schema: Schema,
    rows: std::vec::IntoIter<Row>,
}

impl VecStream {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Self {
        VecStream { schema, rows: rows.into_iter() }
    }
}

impl RowStream for VecStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        Ok(self.rows.next())
    }

    fn progress(&self) -> Locus {
        if self.rows.len() == 0 {
            Locus::MAX
        } else {
            Locus::MIN
        }
    }
}

pub fn empty_stream(schema: Schema) -> BoxStream {
    Box::new(VecStream::new(schema, Vec::new()))
}

/// Verifies genome order as rows pass through; forwards seek.
pub struct OrderChecked {
    inner: BoxStream,
    build: Arc<ContigOrder>,
    last: Locus,
}

impl OrderChecked {
    pub fn new(inner: BoxStream, build: Arc<ContigOrder>) -> Self {
        OrderChecked { inner, build, last: Locus::MIN }
    }
}

impl RowStream for OrderChecked {
    fn schema(&self) -> &Schema {
        self.inner.schema()
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        let Some(r) = self.inner.next_row()? else { return Ok(None) };
        let l = self.build.row_locus(&r)?;
        if l < self.last {
            return Err(Error::OrderViolation {
                previous: self.build.display(self.last),
                current: self.build.display(l),
            });
        }
        self.last = l;
        Ok(Some(r))
    }

    fn can_seek(&self) -> bool {
        self.inner.can_seek()
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        self.inner.seek(to)?;
        self.last = Locus::MIN;
        Ok(())
    }

    fn progress(&self) -> Locus {
        self.inner.progress()
    }

    fn span_bound(&self) -> Option<u64> {
        self.inner.span_bound()
    }
}

/// Keeps rows whose locus lies in `[start, stop]`; used to clamp partition
/// task output to its range. A seekable input is positioned at `start` on
/// the first pull.
pub struct LocusClamp {
    inner: BoxStream,
    build: Arc<ContigOrder>,
    start: Locus,
    stop: Locus,
    done: bool,
    positioned: bool,
}

impl LocusClamp {
    pub fn new(inner: BoxStream, build: Arc<ContigOrder>, start: Locus, stop: Locus) -> Self {
        LocusClamp { inner, build, start, stop, done: false, positioned: false }
    }
}

impl RowStream for LocusClamp {
    fn schema(&self) -> &Schema {
        self.inner.schema()
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if self.done {
            return Ok(None);
        }
        if !self.positioned {
            self.positioned = true;
            if self.start > Locus::MIN && self.inner.can_seek() {
                self.inner.seek(self.start)?;
            }
        }
        while let Some(r) = self.inner.next_row()? {
            let l = self.build.row_locus(&r)?;
            if l < self.start {
                continue;
            }
            if l > self.stop {
                self.done = true;
                return Ok(None);
            }
            return Ok(Some(r));
        }
        self.done = true;
        Ok(None)
    }

    fn can_seek(&self) -> bool {
        self.inner.can_seek()
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        self.done = to > self.stop;
        self.positioned = true;
        self.inner.seek(to.max(self.start))
    }

    fn progress(&self) -> Locus {
        if self.done {
            Locus::MAX
        } else {
            self.inner.progress().max(self.start)
        }
    }
}

/// Ordered k-way merge. Ties go to the earlier source, so merging is stable
/// in source declaration order.
pub struct MergeStream {
    schema: Schema,
    build: Arc<ContigOrder>,
    sources: Vec<BoxStream>,
    heads: Vec<Option<(Locus, Row)>>,
    primed: bool,
}

impl MergeStream {
    pub fn new(schema: Schema, sources: Vec<BoxStream>, build: Arc<ContigOrder>) -> Result<Self> {
        for s in &sources {
            if s.schema().len() != schema.len() {
                return Err(Error::SchemaError(format!(
                    "cannot merge sources with {} and {} columns",
                    schema.len(),
                    s.schema().len()
                )));
            }
        }
        let n = sources.len();
        Ok(MergeStream { schema, build, sources, heads: vec![None; n], primed: false })
    }

    fn fill(&mut self, i: usize) -> Result<()> {
        self.heads[i] = match self.sources[i].next_row()? {
            Some(r) => Some((self.build.row_locus(&r)?, r)),
            None => None,
        };
        Ok(())
    }

    fn prime(&mut self) -> Result<()> {
        if !self.primed {
            for i in 0..self.sources.len() {
                self.fill(i)?;
            }
            self.primed = true;
        }
        Ok(())
    }
}

impl RowStream for MergeStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        self.prime()?;
        let mut best: Option<usize> = None;
        for (i, h) in self.heads.iter().enumerate() {
            if let Some((l, _)) = h {
                if best.is_none_or(|b| *l < self.heads[b].as_ref().unwrap().0) {
                    best = Some(i);
                }
            }
        }
        let Some(b) = best else { return Ok(None) };
        let (_, row) = self.heads[b].take().unwrap();
        self.fill(b)?;
        Ok(Some(row))
    }

    fn can_seek(&self) -> bool {
        self.sources.iter().all(|s| s.can_seek())
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        for i in 0..self.sources.len() {
            self.sources[i].seek(to)?;
            self.fill(i)?;
        }
        self.primed = true;
        Ok(())
    }

    fn progress(&self) -> Locus {
        if !self.primed {
            return self.sources.iter().map(|s| s.progress()).min().unwrap_or(Locus::MAX);
        }
        self.heads
            .iter()
            .zip(&self.sources)
            .map(|(h, s)| match h {
                Some((l, _)) => *l,
                None => s.progress(),
            })
            .min()
            .unwrap_or(Locus::MAX)
    }

    fn span_bound(&self) -> Option<u64> {
        self.sources.iter().try_fold(0u64, |m, s| s.span_bound().map(|b| m.max(b)))
    }
}

/// Sources back to back.
pub struct ConcatStream {
    schema: Schema,
    sources: std::collections::VecDeque<BoxStream>,
}

impl ConcatStream {
    pub fn new(schema: Schema, sources: Vec<BoxStream>) -> Self {
        ConcatStream { schema, sources: sources.into() }
    }
}

impl RowStream for ConcatStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        while let Some(s) = self.sources.front_mut() {
            if let Some(r) = s.next_row()? {
                return Ok(Some(r));
            }
            self.sources.pop_front();
        }
        Ok(None)
    }

    fn progress(&self) -> Locus {
        if self.sources.is_empty() {
            Locus::MAX
        } else {
            Locus::MIN
        }
    }
}

type Opener = Box<dyn FnOnce() -> Result<BoxStream> + Send>;

/// A stream whose schema is known now but whose rows are produced by an
/// opener that runs on first use (first pull, seek or progress query is
/// answered conservatively).
pub struct DeferredStream {
    schema: Schema,
    opener: Option<Opener>,
    inner: Option<BoxStream>,
    seekable: bool,
}

impl DeferredStream {
    pub fn new(schema: Schema, seekable: bool, opener: Opener) -> Self {
        DeferredStream { schema, opener: Some(opener), inner: None, seekable }
    }

    fn open(&mut self) -> Result<&mut BoxStream> {
        if self.inner.is_none() {
            let f = self.opener.take().expect("opener consumed once");
            let s = f()?;
            if s.schema().len() != self.schema.len() {
                return Err(Error::SchemaError(format!(
                    "deferred source produced {} columns, expected {}",
                    s.schema().len(),
                    self.schema.len()
                )));
            }
            self.inner = Some(s);
        }
        Ok(self.inner.as_mut().unwrap())
    }
}

impl RowStream for DeferredStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        self.open()?.next_row()
    }

    fn can_seek(&self) -> bool {
        match &self.inner {
            Some(s) => s.can_seek(),
            None => self.seekable,
        }
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        self.open()?.seek(to)
    }

    fn progress(&self) -> Locus {
        self.inner.as_ref().map(|s| s.progress()).unwrap_or(Locus::MIN)
    }

    fn span_bound(&self) -> Option<u64> {
        self.inner.as_ref().and_then(|s| s.span_bound())
    }
}
