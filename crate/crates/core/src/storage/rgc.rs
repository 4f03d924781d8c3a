//! RGC: row-group columnar files with per-chunk statistics.
//!
//! Layout: deflate-compressed column chunks (cells joined by `\n`), then a
//! JSON footer describing columns, groups and chunk statistics, then
//! `u64 footer_offset` and the magic `RGC\0\0\0v1`. Not Parquet-compatible.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::pattern::like_prefix;
use crate::expr::{parse_number, BinOp, BoundExpr, Expr, ExprEnv, Value};
use crate::model::{Column, ColumnKind, ContigOrder, Locus, Row, RowStream, Schema};
use crate::storage::{atomic_file, IoStats, SharedStats};

pub const MAGIC: &[u8; 8] = b"RGC\0\0\0v1";
pub const DEFAULT_GROUP_ROWS: usize = 8192;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChunkMeta {
    pub offset: u64,
    pub len: u64,
    /// Lexicographic bounds over every cell, empty cells included.
    pub min: String,
    pub max: String,
    /// Numeric bounds, present when every non-empty cell is numeric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_max: Option<String>,
    pub null_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroupMeta {
    pub rows: u64,
    pub chunks: Vec<ChunkMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Footer {
    pub columns: Vec<Column>,
    pub ordered: bool,
    pub rows: u64,
    pub groups: Vec<GroupMeta>,
}

fn corrupt(path: &Path, msg: impl Into<String>) -> Error {
    Error::FormatCorrupt { path: path.to_path_buf(), msg: msg.into() }
}

/// Writes a stream as RGC. When the stream's schema is ordered, order is
/// checked against `build` and recorded in the footer.
pub fn write_rgc(
    stream: &mut dyn RowStream,
    path: &Path,
    group_rows: usize,
    build: Option<&ContigOrder>,
) -> Result<u64> {
    let schema = stream.schema().clone();
    let ordered = schema.is_ordered();
    if ordered && build.is_none() {
        return Err(Error::BuildRequired("writing genome-ordered RGC".into()));
    }
    let group_rows = group_rows.max(1);
    atomic_file(path, |file| {
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let width = schema.len();
        let mut offset = 0u64;
        let mut groups = Vec::new();
        let mut kinds: Vec<Option<ColumnKind>> = vec![None; width];
        let mut buf: Vec<Row> = Vec::with_capacity(group_rows);
        let mut last = Locus::MIN;
        let mut total = 0u64;
        let mut flush = |buf: &mut Vec<Row>, offset: &mut u64, out: &mut BufWriter<File>| -> Result<()> {
            if buf.is_empty() {
                return Ok(());
            }
            let mut chunks = Vec::with_capacity(width);
            for c in 0..width {
                let mut text = String::new();
                let (mut min, mut max): (Option<&str>, Option<&str>) = (None, None);
                let mut nums = true;
                let (mut nmin, mut nmax) = (None, None);
                let mut nulls = 0;
                let mut kind: Option<ColumnKind> = None;
                for (i, r) in buf.iter().enumerate() {
                    let v = r.cell(c);
                    if i > 0 {
                        text.push('\n');
                    }
                    text.push_str(v);
                    if min.is_none_or(|m| v < m) {
                        min = Some(v);
                    }
                    if max.is_none_or(|m| v > m) {
                        max = Some(v);
                    }
                    if v.is_empty() {
                        nulls += 1;
                        continue;
                    }
                    let k = ColumnKind::of_cell(v);
                    kind = Some(match (kind, k) {
                        (None, Some(k)) => k,
                        (Some(a), Some(b)) => a.widen(b),
                        _ => ColumnKind::Text,
                    });
                    match parse_number(v) {
                        Some(n) if nums => {
                            if nmin.is_none_or(|(m, _): (crate::expr::Num, &str)| n.cmp(m) == Ordering::Less) {
                                nmin = Some((n, v));
                            }
                            if nmax.is_none_or(|(m, _): (crate::expr::Num, &str)| n.cmp(m) == Ordering::Greater) {
                                nmax = Some((n, v));
                            }
                        }
                        _ => nums = false,
                    }
                }
                if let Some(k) = kind {
                    kinds[c] = Some(match kinds[c] {
                        Some(prev) => prev.widen(k),
                        None => k,
                    });
                }
                let mut enc = DeflateEncoder::new(Vec::new(), Compression::fast());
                enc.write_all(text.as_bytes()).map_err(io)?;
                let payload = enc.finish().map_err(io)?;
                out.write_all(&payload).map_err(io)?;
                let has_nums = nums && nmin.is_some();
                chunks.push(ChunkMeta {
                    offset: *offset,
                    len: payload.len() as u64,
                    min: min.unwrap_or("").to_string(),
                    max: max.unwrap_or("").to_string(),
                    num_min: if has_nums { nmin.map(|(_, s)| s.to_string()) } else { None },
                    num_max: if has_nums { nmax.map(|(_, s)| s.to_string()) } else { None },
                    null_count: nulls,
                });
                *offset += payload.len() as u64;
            }
            groups.push(GroupMeta { rows: buf.len() as u64, chunks });
            buf.clear();
            Ok(())
        };
        while let Some(r) = stream.next_row()? {
            if r.len() != width {
                return Err(Error::Arity { expected: width, found: r.len() });
            }
            if ordered {
                let b = build.unwrap();
                let l = b.row_locus(&r)?;
                if l < last {
                    return Err(Error::OrderViolation { previous: b.display(last), current: b.display(l) });
                }
                last = l;
            }
            buf.push(r);
            total += 1;
            if buf.len() >= group_rows {
                flush(&mut buf, &mut offset, &mut out)?;
            }
        }
        flush(&mut buf, &mut offset, &mut out)?;
        let columns = schema
            .columns()
            .iter()
            .zip(&kinds)
            .map(|(c, k)| Column { name: c.name.clone(), kind: k.unwrap_or(ColumnKind::Text) })
            .collect();
        let footer = Footer { columns, ordered, rows: total, groups };
        let json = serde_json::to_vec(&footer).map_err(|e| Error::FormatCorrupt { path: path.to_path_buf(), msg: e.to_string() })?;
        out.write_all(&json).map_err(io)?;
        out.write_all(&offset.to_le_bytes()).map_err(io)?;
        out.write_all(MAGIC).map_err(io)?;
        out.flush().map_err(io)?;
        Ok(total)
    })
}

#[derive(Debug)]
pub struct RgcFile {
    pub path: PathBuf,
    pub footer: Footer,
    pub schema: Schema,
}

impl RgcFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let io = |e| Error::io(path, e);
        let len = f.metadata().map_err(io)?.len();
        if len < 16 {
            return Err(corrupt(path, "truncated trailer"));
        }
        let mut trailer = [0u8; 16];
        f.seek(SeekFrom::Start(len - 16)).map_err(io)?;
        f.read_exact(&mut trailer).map_err(io)?;
        if &trailer[8..] != MAGIC {
            return Err(corrupt(path, "bad magic"));
        }
        let off = u64::from_le_bytes(trailer[..8].try_into().unwrap());
        if off > len - 16 {
            return Err(corrupt(path, "bad footer offset"));
        }
        let mut json = vec![0u8; (len - 16 - off) as usize];
        f.seek(SeekFrom::Start(off)).map_err(io)?;
        f.read_exact(&mut json).map_err(io)?;
        let footer: Footer = serde_json::from_slice(&json).map_err(|e| corrupt(path, format!("footer: {e}")))?;
        for g in &footer.groups {
            if g.chunks.len() != footer.columns.len() {
                return Err(corrupt(path, "group chunk count differs from column count"));
            }
            if g.chunks.iter().any(|c| c.offset + c.len > off) {
                return Err(corrupt(path, "chunk extends past data section"));
            }
        }
        let schema = Schema::new(footer.columns.clone(), footer.ordered).map_err(|e| corrupt(path, e.to_string()))?;
        Ok(RgcFile { path: path.to_path_buf(), footer, schema })
    }

    pub fn group_count(&self) -> usize {
        self.footer.groups.len()
    }

    /// Decodes the chunks of the given columns for one group.
    pub fn read_group(&self, file: &mut File, g: usize, cols: &[usize], stats: &IoStats) -> Result<Vec<Vec<String>>> {
        let group = &self.footer.groups[g];
        let mut out = Vec::with_capacity(cols.len());
        for &c in cols {
            let ch = &group.chunks[c];
            let mut payload = vec![0u8; ch.len as usize];
            file.seek(SeekFrom::Start(ch.offset)).map_err(|e| Error::io(&self.path, e))?;
            file.read_exact(&mut payload).map_err(|e| Error::io(&self.path, e))?;
            let mut text = String::new();
            DeflateDecoder::new(&payload[..])
                .read_to_string(&mut text)
                .map_err(|e| corrupt(&self.path, format!("group {g} column {c}: {e}")))?;
            let cells: Vec<String> = text.split('\n').map(str::to_string).collect();
            if cells.len() as u64 != group.rows {
                return Err(corrupt(&self.path, format!("group {g} column {c} holds {} cells, expected {}", cells.len(), group.rows)));
            }
            IoStats::bump(&stats.chunks_read);
            out.push(cells);
        }
        Ok(out)
    }

    /// Whether group `g` may hold a row satisfying `pred`, judged from chunk
    /// statistics alone. Errs on the side of `true`.
    pub fn group_may_match(&self, g: usize, pred: &Expr) -> bool {
        may_match(pred, &|name: &str| {
            let i = self.schema.index_of(name).ok()?;
            Some(&self.footer.groups[g].chunks[i])
        })
    }

    pub fn scan(self: Arc<Self>, projection: Option<Vec<usize>>, predicate: Option<Expr>, stats: SharedStats) -> Result<RgcStream> {
        let proj = projection.unwrap_or_else(|| (0..self.schema.len()).collect());
        let mut needed = proj.clone();
        if let Some(p) = &predicate {
            for c in p.columns() {
                let i = self.schema.index_of(&c)?;
                if !needed.contains(&i) {
                    needed.push(i);
                }
            }
        }
        let work_cols: Vec<Column> = needed.iter().map(|&i| self.schema.columns()[i].clone()).collect();
        let work_schema = Schema::new(work_cols, false)?;
        let bound = match &predicate {
            Some(p) => {
                // `#N` refers to the file schema; rewrite to work positions.
                let rewritten = p.map_cols(&mut |c| {
                    let i = self.schema.index_of(c).unwrap();
                    Expr::Col(format!("#{}", needed.iter().position(|&x| x == i).unwrap() + 1))
                });
                Some(BoundExpr::bind(&rewritten, &work_schema, &ExprEnv::default())?)
            }
            None => None,
        };
        let out_cols: Vec<Column> = proj.iter().map(|&i| self.schema.columns()[i].clone()).collect();
        let ordered = self.schema.is_ordered() && proj.len() >= 2 && proj[0] == 0 && proj[1] == 1;
        let schema = Schema::new(out_cols, ordered)?;
        let file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        IoStats::bump(&stats.files_opened);
        let out_idx = (0..proj.len()).collect();
        Ok(RgcStream {
            rgc: self,
            file,
            stats,
            schema,
            needed,
            out_idx,
            predicate,
            bound,
            group: 0,
            rows: Vec::new().into_iter(),
            done: false,
        })
    }

    /// Decodes everything, checking chunk sizes and statistics.
    pub fn verify(&self) -> Result<u64> {
        let mut f = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let cols: Vec<usize> = (0..self.schema.len()).collect();
        let stats = IoStats::default();
        for g in 0..self.group_count() {
            let data = self.read_group(&mut f, g, &cols, &stats)?;
            for (c, cells) in data.iter().enumerate() {
                let ch = &self.footer.groups[g].chunks[c];
                if cells.iter().any(|v| v.as_str() < ch.min.as_str() || v.as_str() > ch.max.as_str()) {
                    return Err(corrupt(&self.path, format!("group {g} column {c}: value outside min/max")));
                }
            }
        }
        Ok(self.footer.rows)
    }
}

/// Streams rows of an RGC file, skipping groups refuted by statistics.
pub struct RgcStream {
    rgc: Arc<RgcFile>,
    file: File,
    stats: SharedStats,
    schema: Schema,
    needed: Vec<usize>,
    out_idx: Vec<usize>,
    predicate: Option<Expr>,
    bound: Option<BoundExpr>,
    group: usize,
    rows: std::vec::IntoIter<Row>,
    done: bool,
}

impl RgcStream {
    fn load_next_group(&mut self) -> Result<bool> {
        while self.group < self.rgc.group_count() {
            let g = self.group;
            self.group += 1;
            if let Some(p) = &self.predicate {
                if !self.rgc.group_may_match(g, p) {
                    IoStats::bump(&self.stats.groups_skipped);
                    continue;
                }
            }
            IoStats::bump(&self.stats.groups_read);
            let cols = self.rgc.read_group(&mut self.file, g, &self.needed, &self.stats)?;
            let n = self.rgc.footer.groups[g].rows as usize;
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                let work = Row::from_cells(cols.iter().map(|c| c[i].as_str()));
                if let Some(b) = &self.bound {
                    if !b.eval_bool(&work)? {
                        continue;
                    }
                }
                rows.push(if work.len() == self.out_idx.len() { work } else { work.project(&self.out_idx) });
            }
            IoStats::add(&self.stats.rows_read, n as u64);
            self.rows = rows.into_iter();
            return Ok(true);
        }
        self.done = true;
        Ok(false)
    }
}

impl RowStream for RgcStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.rows.next() {
                return Ok(Some(r));
            }
            if self.done || !self.load_next_group()? {
                return Ok(None);
            }
        }
    }

    fn progress(&self) -> Locus {
        if self.done && self.rows.len() == 0 {
            Locus::MAX
        } else {
            Locus::MIN
        }
    }
}

fn literal(e: &Expr) -> Option<&Value> {
    match e {
        Expr::Lit(v) => Some(v),
        _ => None,
    }
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

/// Can some value in `[min, max]` satisfy `v op lit`?
fn range_may<T: PartialOrd>(op: BinOp, min: &T, max: &T, lit: &T) -> bool {
    match op {
        BinOp::Eq => min <= lit && lit <= max,
        BinOp::Ne => !(min == lit && max == lit),
        BinOp::Lt => min < lit,
        BinOp::Le => min <= lit,
        BinOp::Gt => max > lit,
        BinOp::Ge => max >= lit,
        _ => true,
    }
}

fn compare_may(op: BinOp, ch: &ChunkMeta, lit: &Value) -> bool {
    match lit {
        Value::Text(s) => range_may(op, &ch.min.as_str(), &ch.max.as_str(), &s.as_str()),
        Value::Int(_) | Value::Float(_) => {
            if ch.null_count > 0 {
                return true;
            }
            let (Some(lo), Some(hi)) = (
                ch.num_min.as_deref().and_then(parse_number),
                ch.num_max.as_deref().and_then(parse_number),
            ) else {
                return true;
            };
            let l = match lit {
                Value::Int(i) => crate::expr::Num::Int(*i),
                Value::Float(f) => crate::expr::Num::Float(*f),
                _ => unreachable!(),
            };
            let cmp = |a: &crate::expr::Num, b: &crate::expr::Num| a.cmp(*b);
            match op {
                BinOp::Eq => cmp(&lo, &l) != Ordering::Greater && cmp(&l, &hi) != Ordering::Greater,
                BinOp::Ne => !(cmp(&lo, &l) == Ordering::Equal && cmp(&hi, &l) == Ordering::Equal),
                BinOp::Lt => cmp(&lo, &l) == Ordering::Less,
                BinOp::Le => cmp(&lo, &l) != Ordering::Greater,
                BinOp::Gt => cmp(&hi, &l) == Ordering::Greater,
                BinOp::Ge => cmp(&hi, &l) != Ordering::Less,
                _ => true,
            }
        }
        _ => true,
    }
}

/// Statistics-based refutation. Handles conjunctions, disjunctions,
/// column-vs-literal comparisons, IN lists and LIKE with a literal prefix.
pub fn may_match<'a>(e: &Expr, chunk: &dyn Fn(&str) -> Option<&'a ChunkMeta>) -> bool {
    match e {
        Expr::Binary(BinOp::And, l, r) => may_match(l, chunk) && may_match(r, chunk),
        Expr::Binary(BinOp::Or, l, r) => may_match(l, chunk) || may_match(r, chunk),
        Expr::Binary(op, l, r) if op.is_comparison() => {
            let (col, lit, op) = match (l.as_ref(), literal(r), literal(l), r.as_ref()) {
                (Expr::Col(c), Some(v), _, _) => (c, v, *op),
                (_, _, Some(v), Expr::Col(c)) => (c, v, flip(*op)),
                _ => return true,
            };
            match chunk(col) {
                Some(ch) => compare_may(op, ch, lit),
                None => true,
            }
        }
        Expr::In { expr, list, negated: false } => match expr.as_ref() {
            Expr::Col(c) => {
                let Some(ch) = chunk(c) else { return true };
                list.iter().any(|item| match literal(item) {
                    Some(v) => compare_may(BinOp::Eq, ch, v),
                    None => true,
                })
            }
            _ => true,
        },
        Expr::Like { expr, pattern, negated: false } => match (expr.as_ref(), literal(pattern)) {
            (Expr::Col(c), Some(Value::Text(p))) => {
                let prefix = like_prefix(p);
                if prefix.is_empty() {
                    return true;
                }
                let Some(ch) = chunk(c) else { return true };
                ch.max.as_str() >= prefix && (ch.min.as_str() <= prefix || ch.min.starts_with(prefix))
            }
            _ => true,
        },
        _ => true,
    }
}
