//! VARJOIN and the interval JOIN geometries as one sweep over two ordered
//! streams.
//!
//! Right rows that may still match a future left row live in a buffer. When
//! the right stream lags the window of the current left row, the join either
//! scans forward or, after `seek_threshold` wasted rows, seeks the right
//! stream. Results do not depend on which path is taken.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::engine::{append_names, require_ordered, EngineCtx, Resolver};
use crate::error::{Error, Result};
use crate::model::{BoxStream, ContigOrder, Locus, Row, RowStream, Schema};
use crate::parser::Step;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Equal position plus equal ref/alt.
    Var,
    /// Left segment, right point.
    SegSnp,
    /// Left point, right segment.
    SnpSeg,
    SegSeg,
}

impl Geometry {
    fn left_is_segment(self) -> bool {
        matches!(self, Geometry::SegSnp | Geometry::SegSeg)
    }

    fn right_is_segment(self) -> bool {
        matches!(self, Geometry::SnpSeg | Geometry::SegSeg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    /// Left outer join; misses are filled with the value.
    Left(String),
    /// Left rows with at least one match, once each.
    Semi,
    /// Right rows with at least one match, once each, in right order.
    RightSemi,
}

#[derive(Debug, Clone)]
pub struct JoinFlags {
    pub geometry: Geometry,
    pub kind: JoinKind,
    pub fuzz: u64,
    /// `-r`: leave out right columns that repeat the left's position (and,
    /// for VARJOIN, ref/alt).
    pub drop_positional: bool,
}

impl JoinFlags {
    pub fn from_step(step: &Step) -> Result<JoinFlags> {
        let geometry = if step.command == "varjoin" {
            Geometry::Var
        } else {
            match (step.has("segsnp"), step.has("snpseg"), step.has("segseg")) {
                (true, false, false) => Geometry::SegSnp,
                (false, true, false) => Geometry::SnpSeg,
                (false, false, true) => Geometry::SegSeg,
                _ => return Err(Error::Usage("join needs exactly one of -segsnp, -snpseg, -segseg".into())),
            }
        };
        let modes = [step.has("i"), step.has("ir"), step.has("l")];
        if modes.iter().filter(|m| **m).count() > 1 {
            return Err(Error::Usage(format!("{}: -i, -ir and -l are mutually exclusive", step.command)));
        }
        if step.value("e").is_some() && !step.has("l") {
            return Err(Error::Usage(format!("{}: -e only applies with -l", step.command)));
        }
        let kind = if modes[0] {
            JoinKind::Semi
        } else if modes[1] {
            JoinKind::RightSemi
        } else if modes[2] {
            JoinKind::Left(step.value("e").unwrap_or_default().to_string())
        } else {
            JoinKind::Inner
        };
        let fuzz = match step.value("f") {
            Some(f) => f.parse::<u64>().map_err(|_| Error::Usage(format!("join -f expects a non-negative integer, got '{f}'")))?,
            None => 0,
        };
        Ok(JoinFlags { geometry, kind, fuzz, drop_positional: step.has("r") })
    }
}

/// Column layout of one side.
#[derive(Debug, Clone)]
struct Side {
    /// Segment stop column, when the side holds segments.
    stop: Option<usize>,
    /// ref and alt columns, for VARJOIN.
    var: Option<(usize, usize)>,
}

fn side(schema: &Schema, segment: bool, var: bool, what: &str) -> Result<Side> {
    let need = if segment { 3 } else { 2 };
    if schema.len() < need {
        return Err(Error::SchemaError(format!(
            "{what} needs {} columns, found {}",
            if segment { "(contig, start, stop)" } else { "(contig, pos)" },
            schema.len()
        )));
    }
    let var = if var {
        match (schema.find("ref"), schema.find("alt")) {
            (Some(r), Some(a)) => Some((r, a)),
            _ => return Err(Error::SchemaError(format!("{what} needs ref and alt columns"))),
        }
    } else {
        None
    };
    Ok(Side { stop: segment.then_some(2), var })
}

/// Right-side columns appended to each left row.
fn payload_columns(right: &Schema, rside: &Side, flags: &JoinFlags) -> Vec<usize> {
    (1..right.len())
        .filter(|&i| {
            if flags.geometry == Geometry::Var {
                // position is always shared with the left
                i != 1 && !(flags.drop_positional && rside.var.is_some_and(|(r, a)| i == r || i == a))
            } else {
                !(flags.drop_positional && (i == 1 || Some(i) == rside.stop))
            }
        })
        .collect()
}

struct Entry {
    contig: u32,
    start: u64,
    end: u64,
    row: Row,
    matched: bool,
}

pub struct JoinStream {
    left: BoxStream,
    right: BoxStream,
    schema: Schema,
    build: Arc<ContigOrder>,
    flags: JoinFlags,
    lside: Side,
    rside: Side,
    payload: Vec<usize>,
    threshold: usize,
    buffer: VecDeque<Entry>,
    pending: Option<Entry>,
    right_done: bool,
    last_left: Locus,
    last_right: Locus,
    out: VecDeque<Row>,
    done: bool,
    /// Seeks issued on the right stream.
    pub seeks: usize,
    /// Right rows pulled (scanned) from the right stream.
    pub right_rows: usize,
}

fn num(row: &Row, i: usize) -> Result<u64> {
    row.cell(i)
        .parse::<u64>()
        .map_err(|_| Error::TypeMismatch(format!("expected a position in column {} of {:?}", i + 1, row.line())))
}

impl JoinStream {
    pub fn new(
        left: BoxStream,
        right: BoxStream,
        flags: JoinFlags,
        build: Arc<ContigOrder>,
        threshold: usize,
    ) -> Result<Self> {
        require_ordered(left.as_ref(), "join left input")?;
        require_ordered(right.as_ref(), "join right input")?;
        let var = flags.geometry == Geometry::Var;
        let lside = side(left.schema(), flags.geometry.left_is_segment(), var, "left input")?;
        let rside = side(right.schema(), flags.geometry.right_is_segment(), var, "right input")?;
        let payload = payload_columns(right.schema(), &rside, &flags);
        let schema = match flags.kind {
            JoinKind::RightSemi => right.schema().clone(),
            JoinKind::Semi => left.schema().clone(),
            _ => {
                let extra = append_names(left.schema(), payload.iter().map(|&i| right.schema().name(i).to_string()));
                super::extend_schema(left.schema(), &extra, true)?
            }
        };
        Ok(JoinStream {
            left,
            right,
            schema,
            build,
            flags,
            lside,
            rside,
            payload,
            threshold,
            buffer: VecDeque::new(),
            pending: None,
            right_done: false,
            last_left: Locus::MIN,
            last_right: Locus::MIN,
            out: VecDeque::new(),
            done: false,
            seeks: 0,
            right_rows: 0,
        })
    }

    fn read_right(&mut self) -> Result<Option<Entry>> {
        let Some(row) = self.right.next_row()? else {
            self.right_done = true;
            return Ok(None);
        };
        self.right_rows += 1;
        let l = self.build.row_locus(&row)?;
        if l < self.last_right {
            return Err(Error::OrderViolation {
                previous: self.build.display(self.last_right),
                current: self.build.display(l),
            });
        }
        self.last_right = l;
        let end = match self.rside.stop {
            Some(s) => num(&row, s)?,
            None => l.pos,
        };
        Ok(Some(Entry { contig: l.contig, start: l.pos, end, row, matched: false }))
    }

    /// Drops right rows before `target`, seeking once the scan has wasted
    /// `threshold` rows.
    fn skip_right_to(&mut self, target: Locus) -> Result<()> {
        let mut wasted = 0usize;
        loop {
            if self.pending.is_none() {
                if self.right_done {
                    return Ok(());
                }
                self.pending = self.read_right()?;
                if self.pending.is_none() {
                    return Ok(());
                }
            }
            let p = self.pending.as_ref().unwrap();
            if Locus::new(p.contig, p.start) >= target {
                return Ok(());
            }
            self.pending = None;
            if wasted >= self.threshold && self.right.can_seek() {
                self.right.seek(target)?;
                self.seeks += 1;
                wasted = 0;
            } else {
                wasted += 1;
            }
        }
    }

    /// Whether a buffered right row can no longer match a left row at
    /// `(contig, pos)` or later.
    fn is_dead(&self, e: &Entry, contig: u32, pos: u64) -> bool {
        let reach = if self.flags.geometry.right_is_segment() { e.end } else { e.start };
        e.contig < contig || (e.contig == contig && reach.saturating_add(self.flags.fuzz) < pos)
    }

    fn evict(&mut self, contig: u32, pos: u64) {
        while let Some(front) = self.buffer.front() {
            if !self.is_dead(front, contig, pos) {
                break;
            }
            let e = self.buffer.pop_front().unwrap();
            if self.flags.kind == JoinKind::RightSemi && e.matched {
                self.out.push_back(e.row);
            }
        }
    }

    fn matches(&self, left: &Row, contig: u32, ls: u64, le: u64, e: &Entry) -> bool {
        if e.contig != contig {
            return false;
        }
        let f = self.flags.fuzz;
        match self.flags.geometry {
            Geometry::Var => {
                let (lr, la) = self.lside.var.unwrap();
                let (rr, ra) = self.rside.var.unwrap();
                e.start == ls && left.cell(lr) == e.row.cell(rr) && left.cell(la) == e.row.cell(ra)
            }
            Geometry::SegSnp => ls <= e.start + f && e.start <= le + f,
            Geometry::SnpSeg => e.start <= ls + f && ls <= e.end + f,
            Geometry::SegSeg => e.start <= le + f && ls <= e.end + f,
        }
    }

    fn process_left(&mut self, left: Row) -> Result<()> {
        let l = self.build.row_locus(&left)?;
        if l < self.last_left {
            return Err(Error::OrderViolation {
                previous: self.build.display(self.last_left),
                current: self.build.display(l),
            });
        }
        self.last_left = l;
        let (c, ls) = (l.contig, l.pos);
        let le = match self.lside.stop {
            Some(s) => num(&left, s)?,
            None => ls,
        };
        let f = self.flags.fuzz;
        let lo = if self.flags.geometry.right_is_segment() {
            match self.right.span_bound() {
                Some(span) => ls.saturating_sub(f).saturating_sub(span),
                None => 0,
            }
        } else {
            ls.saturating_sub(f)
        };
        let hi = match self.flags.geometry {
            Geometry::Var => ls,
            Geometry::SegSnp | Geometry::SegSeg => le.saturating_add(f),
            Geometry::SnpSeg => ls.saturating_add(f),
        };
        self.evict(c, ls);
        self.skip_right_to(Locus::new(c, lo))?;
        let hi_locus = Locus::new(c, hi);
        while let Some(p) = &self.pending {
            if Locus::new(p.contig, p.start) > hi_locus {
                break;
            }
            let e = self.pending.take().unwrap();
            if !self.is_dead(&e, c, ls) {
                self.buffer.push_back(e);
            }
            if !self.right_done {
                self.pending = self.read_right()?;
            }
        }

        let mut hit = false;
        for i in 0..self.buffer.len() {
            if !self.matches(&left, c, ls, le, &self.buffer[i]) {
                continue;
            }
            hit = true;
            match &self.flags.kind {
                JoinKind::Inner | JoinKind::Left(_) => {
                    let e = &self.buffer[i];
                    let extra: Vec<&str> = self.payload.iter().map(|&k| e.row.cell(k)).collect();
                    self.out.push_back(left.appended(&extra));
                }
                JoinKind::RightSemi => self.buffer[i].matched = true,
                JoinKind::Semi => break,
            }
        }
        match &self.flags.kind {
            JoinKind::Semi if hit => self.out.push_back(left),
            JoinKind::Left(miss) if !hit => {
                let extra = vec![miss.as_str(); self.payload.len()];
                self.out.push_back(left.appended(&extra));
            }
            _ => {}
        }
        Ok(())
    }
}

impl RowStream for JoinStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.out.pop_front() {
                return Ok(Some(r));
            }
            if self.done {
                return Ok(None);
            }
            match self.left.next_row()? {
                Some(l) => self.process_left(l)?,
                None => {
                    self.done = true;
                    if self.flags.kind == JoinKind::RightSemi {
                        let rest: Vec<Row> = self.buffer.drain(..).filter(|e| e.matched).map(|e| e.row).collect();
                        self.out.extend(rest);
                    }
                }
            }
        }
    }
}

pub(crate) fn bind(input: BoxStream, step: &Step, ctx: &EngineCtx, res: &dyn Resolver) -> Result<BoxStream> {
    let flags = JoinFlags::from_step(step)?;
    let build = ctx.build(&step.command)?;
    let rel = step.rel(0).ok_or_else(|| Error::Usage(format!("{} needs a relation", step.command)))?;
    let right = res.open(rel, true)?;
    Ok(Box::new(JoinStream::new(input, right, flags, build, ctx.seek_threshold)?))
}
