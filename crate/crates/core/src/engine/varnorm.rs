//! Left-normalization of variants against the reference sequence.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::engine::{require_ordered, EngineCtx, RefSeq};
use crate::error::{Error, Result};
use crate::model::{BoxStream, ContigOrder, Locus, Row, RowStream, Schema};
use crate::parser::Step;

/// How far (bp) a variant may move left and still be re-ordered in stream.
pub const REORDER_WINDOW: u64 = 1000;

/// Normalizes one variant: trim shared trailing bases, extend empty alleles
/// with the preceding reference base, repeat; then trim shared leading bases.
pub fn normalize_left(refseq: &RefSeq, contig: &str, pos: u64, r: &str, a: &str) -> Result<(u64, String, String)> {
    if r == a || r.is_empty() || a.is_empty() {
        return Ok((pos, r.to_string(), a.to_string()));
    }
    let len = refseq.contig_len(contig)?;
    if pos == 0 || pos + r.len() as u64 - 1 > len {
        return Err(Error::RangeError(format!("{contig}:{pos} ({} bp ref) outside contig of length {len}", r.len())));
    }
    let (mut pos, mut r, mut a) = (pos, r.as_bytes().to_vec(), a.as_bytes().to_vec());
    loop {
        let mut changed = false;
        if !r.is_empty() && !a.is_empty() && r.last() == a.last() {
            r.pop();
            a.pop();
            changed = true;
        }
        if r.is_empty() || a.is_empty() {
            if pos > 1 {
                pos -= 1;
                let b = refseq.base(contig, pos)?;
                r.insert(0, b);
                a.insert(0, b);
            } else {
                // nothing to the left: anchor on the following base instead
                let b = refseq.base(contig, pos + r.len() as u64)?;
                r.push(b);
                a.push(b);
                break;
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }
    while r.len() >= 2 && a.len() >= 2 && r[0] == a[0] {
        r.remove(0);
        a.remove(0);
        pos += 1;
    }
    let text = |v: Vec<u8>| String::from_utf8(v).map_err(|_| Error::TypeMismatch("non-ASCII allele".into()));
    Ok((pos, text(r)?, text(a)?))
}

struct VarNorm {
    input: BoxStream,
    refseq: Arc<RefSeq>,
    build: Arc<ContigOrder>,
    cols: (usize, usize),
    pending: BTreeMap<(Locus, u64), Row>,
    ready: VecDeque<Row>,
    seq: u64,
    last_in: Locus,
    last_out: Locus,
    done: bool,
}

impl VarNorm {
    /// Releases buffered rows that no later input can precede.
    fn release(&mut self, below: Locus) {
        while let Some(e) = self.pending.first_entry() {
            if e.key().0 >= below {
                break;
            }
            self.last_out = e.key().0;
            self.ready.push_back(e.remove());
        }
    }
}

impl RowStream for VarNorm {
    fn schema(&self) -> &Schema {
        self.input.schema()
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.ready.pop_front() {
                return Ok(Some(r));
            }
            if self.done {
                return Ok(None);
            }
            let Some(row) = self.input.next_row()? else {
                self.done = true;
                self.release(Locus::MAX);
                continue;
            };
            let l = self.build.row_locus(&row)?;
            if l < self.last_in {
                return Err(Error::OrderViolation {
                    previous: self.build.display(self.last_in),
                    current: self.build.display(l),
                });
            }
            self.last_in = l;
            let (rc, ac) = self.cols;
            let (pos, r, a) = normalize_left(&self.refseq, row.cell(0), l.pos, row.cell(rc), row.cell(ac))?;
            let moved = Locus::new(l.contig, pos);
            if moved < self.last_out || l.pos - pos > REORDER_WINDOW {
                return Err(Error::OrderViolation {
                    previous: self.build.display(self.last_out.max(moved)),
                    current: format!("{} (normalization moved it more than {REORDER_WINDOW} bp)", self.build.display(moved)),
                });
            }
            let out = row.with_cell(1, &pos.to_string()).with_cell(rc, &r).with_cell(ac, &a);
            self.pending.insert((moved, self.seq), out);
            self.seq += 1;
            self.release(Locus::new(l.contig, l.pos.saturating_sub(REORDER_WINDOW)));
        }
    }
}

pub(crate) fn bind(input: BoxStream, step: &Step, ctx: &EngineCtx) -> Result<BoxStream> {
    if !step.has("left") {
        return Err(Error::Usage("varnorm only supports -left normalization".into()));
    }
    require_ordered(input.as_ref(), "varnorm")?;
    let schema = input.schema();
    let col = |i: usize| schema.index_of(step.args.get(i).and_then(|a| a.word()).unwrap_or_default());
    let cols = (col(0)?, col(1)?);
    let refseq = ctx.refseq.clone().ok_or_else(|| Error::ConfigError("refseqpath required for varnorm".into()))?;
    let build = ctx.build("varnorm")?;
    Ok(Box::new(VarNorm {
        input,
        refseq,
        build,
        cols,
        pending: BTreeMap::new(),
        ready: VecDeque::new(),
        seq: 0,
        last_in: Locus::MIN,
        last_out: Locus::MIN,
        done: false,
    }))
}
