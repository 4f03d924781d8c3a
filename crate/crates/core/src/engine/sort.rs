//! SORT genome and SORT -c, with external merge sort past a row threshold.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::sync::Arc;

use crate::engine::EngineCtx;
use crate::error::{Error, Result};
use crate::expr::{parse_number, Num};
use crate::model::{BoxStream, ContigOrder, Locus, Row, RowStream, Schema};
use crate::parser::Step;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortKey {
    pub column: usize,
    pub numeric: bool,
    pub reverse: bool,
}

impl SortKey {
    /// Parses `col[:n][:r]` items of a `-c` list.
    pub fn parse_list(spec: &str, schema: &Schema) -> Result<Vec<SortKey>> {
        let mut keys = Vec::new();
        for item in crate::parser::scan::comma_list(spec)? {
            let mut parts = item.split(':');
            let column = schema.index_of(parts.next().unwrap_or_default())?;
            let mut key = SortKey { column, numeric: false, reverse: false };
            for m in parts {
                match m {
                    "n" => key.numeric = true,
                    "r" => key.reverse = true,
                    "nr" | "rn" => {
                        key.numeric = true;
                        key.reverse = true;
                    }
                    _ => return Err(Error::Usage(format!("unknown sort modifier ':{m}' in '{item}'"))),
                }
            }
            keys.push(key);
        }
        if keys.is_empty() {
            return Err(Error::Usage("sort -c needs at least one column".into()));
        }
        Ok(keys)
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Num(Num),
    Text(String),
}

#[derive(Debug, Clone)]
enum Key {
    Locus(Locus),
    Cells(Vec<(Cell, bool)>),
}

fn cmp_cells(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Num(x), Cell::Num(y)) => x.cmp(*y),
        (Cell::Num(_), Cell::Text(_)) => Ordering::Less,
        (Cell::Text(_), Cell::Num(_)) => Ordering::Greater,
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
    }
}

fn cmp_keys(a: &Key, b: &Key) -> Ordering {
    match (a, b) {
        (Key::Locus(x), Key::Locus(y)) => x.cmp(y),
        (Key::Cells(x), Key::Cells(y)) => {
            for ((p, rev), (q, _)) in x.iter().zip(y) {
                let o = cmp_cells(p, q);
                let o = if *rev { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        }
        _ => unreachable!("keys of one sort share a kind"),
    }
}

#[derive(Clone)]
pub enum SortBy {
    Genome(Arc<ContigOrder>),
    Columns(Vec<SortKey>),
}

impl SortBy {
    fn key(&self, row: &Row) -> Result<Key> {
        Ok(match self {
            SortBy::Genome(b) => Key::Locus(b.row_locus(row)?),
            SortBy::Columns(keys) => Key::Cells(
                keys.iter()
                    .map(|k| {
                        let c = row.cell(k.column);
                        let cell = match (k.numeric, parse_number(c)) {
                            (true, Some(n)) => Cell::Num(n),
                            _ => Cell::Text(c.to_string()),
                        };
                        (cell, k.reverse)
                    })
                    .collect(),
            ),
        })
    }
}

struct Run {
    lines: std::io::Lines<BufReader<File>>,
    head: Option<(Key, Row)>,
}

enum State {
    Pending,
    Memory(std::vec::IntoIter<(Key, Row)>),
    Merging(Vec<Run>),
}

/// Stable full sort. Input is read on the first pull.
pub struct SortStream {
    input: BoxStream,
    schema: Schema,
    by: SortBy,
    spill_rows: usize,
    temp_dir: PathBuf,
    state: State,
    /// Runs written so far; exposed for tests of the spill path.
    pub runs_spilled: usize,
}

impl SortStream {
    pub fn new(input: BoxStream, by: SortBy, spill_rows: usize, temp_dir: PathBuf) -> Result<Self> {
        let ordered = matches!(by, SortBy::Genome(_));
        let schema = input.schema().clone().with_ordered(ordered)?;
        Ok(SortStream { input, schema, by, spill_rows: spill_rows.max(1), temp_dir, state: State::Pending, runs_spilled: 0 })
    }

    fn spill(&mut self, buf: &mut Vec<(Key, Row)>) -> Result<Run> {
        buf.sort_by(|a, b| cmp_keys(&a.0, &b.0));
        let file = tempfile::tempfile_in(&self.temp_dir).map_err(|e| Error::io(&self.temp_dir, e))?;
        let mut w = BufWriter::new(file);
        for (_, r) in buf.drain(..) {
            w.write_all(r.line().as_bytes()).and_then(|_| w.write_all(b"\n")).map_err(|e| Error::io(&self.temp_dir, e))?;
        }
        let mut file = w.into_inner().map_err(|e| Error::io(&self.temp_dir, e.into_error()))?;
        file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(&self.temp_dir, e))?;
        self.runs_spilled += 1;
        let mut run = Run { lines: BufReader::new(file).lines(), head: None };
        self.advance(&mut run)?;
        Ok(run)
    }

    fn advance(&self, run: &mut Run) -> Result<()> {
        run.head = match run.lines.next() {
            Some(line) => {
                let r = Row::from_line(line.map_err(|e| Error::io(&self.temp_dir, e))?);
                Some((self.by.key(&r)?, r))
            }
            None => None,
        };
        Ok(())
    }

    fn load(&mut self) -> Result<()> {
        let mut buf: Vec<(Key, Row)> = Vec::new();
        let mut runs = Vec::new();
        while let Some(r) = self.input.next_row()? {
            buf.push((self.by.key(&r)?, r));
            if buf.len() >= self.spill_rows {
                runs.push(self.spill(&mut buf)?);
            }
        }
        if runs.is_empty() {
            buf.sort_by(|a, b| cmp_keys(&a.0, &b.0));
            self.state = State::Memory(buf.into_iter());
        } else {
            if !buf.is_empty() {
                runs.push(self.spill(&mut buf)?);
            }
            self.state = State::Merging(runs);
        }
        Ok(())
    }
}

impl RowStream for SortStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if let State::Pending = self.state {
            self.load()?;
        }
        match &mut self.state {
            State::Memory(it) => Ok(it.next().map(|(_, r)| r)),
            State::Merging(runs) => {
                // earliest run wins ties, which keeps the merge stable
                let mut best: Option<usize> = None;
                for (i, run) in runs.iter().enumerate() {
                    if let Some((k, _)) = &run.head {
                        if best.is_none_or(|b| cmp_keys(k, &runs[b].head.as_ref().unwrap().0) == Ordering::Less) {
                            best = Some(i);
                        }
                    }
                }
                let Some(i) = best else { return Ok(None) };
                let mut runs = std::mem::take(runs);
                let (_, row) = runs[i].head.take().unwrap();
                let res = self.advance(&mut runs[i]);
                self.state = State::Merging(runs);
                res?;
                Ok(Some(row))
            }
            State::Pending => unreachable!(),
        }
    }
}

pub(crate) fn bind(input: BoxStream, step: &Step, ctx: &EngineCtx) -> Result<BoxStream> {
    let by = match (step.args.first().and_then(|a| a.word()), step.value("c")) {
        (Some("genome"), None) => SortBy::Genome(ctx.build("sort genome")?),
        (None, Some(c)) => SortBy::Columns(SortKey::parse_list(c, input.schema())?),
        _ => return Err(Error::Usage("sort expects 'genome' or -c <columns>".into())),
    };
    if matches!(by, SortBy::Genome(_)) && input.schema().len() < 2 {
        return Err(Error::SchemaError("sort genome needs contig and position columns".into()));
    }
    Ok(Box::new(SortStream::new(input, by, ctx.spill_rows, ctx.temp_dir.clone())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::testutil::*;
    use crate::model::{collect_rows, VecStream};
    use proptest::prelude::*;

    #[test]
    fn column_sort() {
        let t = table(&["rsID", "pval"], false, &[&["rs3", "0.5"], &["rs1", "1e-8"], &["rs2", "0.5"], &["rs0", "x"]]);
        let (s, rows) = run(&t, "sort -c pval:n,rsID", &Tables::default()).unwrap();
        assert!(!s.is_ordered());
        let ids: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(ids, ["rs1", "rs2", "rs3", "rs0"]);
        let (_, rows) = run(&t, "sort -c rsID:r", &Tables::default()).unwrap();
        assert_eq!(rows[0][0], "rs3");
    }

    #[test]
    fn genome_sort_declares_order() {
        let t = table(&["chrom", "pos"], false, &[&["chr2", "1"], &["chr1", "9"], &["chr1", "2"]]);
        let (s, rows) = run(&t, "sort genome", &Tables::default()).unwrap();
        assert!(s.is_ordered());
        assert_eq!(rows[0], ["chr1", "2"]);
        assert_eq!(rows[2], ["chr2", "1"]);
    }

    proptest! {
        #[test]
        fn spilled_sort_is_stable(vals in prop::collection::vec(0u8..6, 0..200), spill in 1usize..40) {
            let schema = Schema::from_names(&["k", "seq"], false).unwrap();
            let rows: Vec<Row> = vals.iter().enumerate().map(|(i, v)| Row::from_cells([v.to_string(), i.to_string()])).collect();
            let keys = SortKey::parse_list("k:n", &schema).unwrap();
            let mut s = SortStream::new(Box::new(VecStream::new(schema, rows.clone())), SortBy::Columns(keys), spill, std::env::temp_dir()).unwrap();
            let got = collect_rows(&mut s).unwrap();
            let mut want = rows;
            want.sort_by_key(|r| r.cell(0).parse::<u8>().unwrap());
            prop_assert_eq!(got, want);
            prop_assert_eq!(s.runs_spilled > 0, vals.len() >= spill);
        }
    }
}
