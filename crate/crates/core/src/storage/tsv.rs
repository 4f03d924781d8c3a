//! Plain tab-separated files.
//!
//! The first line is a header when it starts with `#` or when none of its
//! cells parse as numbers; otherwise columns are named `col1..colN`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::expr::parse_number;
use crate::model::{Locus, Row, RowStream, Schema};
use crate::storage::{atomic_file, IoStats, SharedStats};

fn header_names(first: &str) -> Option<Vec<String>> {
    let (line, forced) = match first.strip_prefix('#') {
        Some(rest) => (rest, true),
        None => (first, false),
    };
    let cells: Vec<&str> = line.split('\t').collect();
    if !forced && cells.iter().any(|c| parse_number(c).is_some()) {
        return None;
    }
    Some(
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if c.trim().is_empty() { format!("col{}", i + 1) } else { c.trim().to_string() })
            .collect(),
    )
}

fn generated_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("col{i}")).collect()
}

/// Streams rows of a TSV file.
pub struct TsvStream {
    path: PathBuf,
    schema: Schema,
    lines: std::io::Lines<BufReader<File>>,
    pending: Option<String>,
    stats: SharedStats,
    done: bool,
}

impl TsvStream {
    pub fn open(path: &Path, stats: SharedStats) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        IoStats::bump(&stats.files_opened);
        let mut lines = BufReader::new(f).lines();
        let first = match lines.next() {
            Some(l) => Some(l.map_err(|e| Error::io(path, e))?),
            None => None,
        };
        let (schema, pending) = match first {
            None => (Schema::from_names::<&str>(&[], false)?, None),
            Some(l) => {
                let l = l.trim_end_matches('\r').to_string();
                match header_names(&l) {
                    Some(names) => (Schema::from_names(&names, false)?, None),
                    None => (Schema::from_names(&generated_names(l.split('\t').count()), false)?, Some(l)),
                }
            }
        };
        Ok(TsvStream { path: path.to_path_buf(), schema, lines, pending, stats, done: false })
    }
}

impl RowStream for TsvStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            let line = match self.pending.take() {
                Some(l) => l,
                None => match self.lines.next() {
                    Some(l) => l.map_err(|e| Error::io(&self.path, e))?,
                    None => {
                        self.done = true;
                        return Ok(None);
                    }
                },
            };
            let line = line.trim_end_matches('\r');
            if line.is_empty() && self.schema.len() != 1 {
                continue;
            }
            let row = Row::from_line(line);
            if row.len() != self.schema.len() {
                return Err(Error::FormatCorrupt {
                    path: self.path.clone(),
                    msg: format!("row has {} cells, header has {}", row.len(), self.schema.len()),
                });
            }
            IoStats::bump(&self.stats.rows_read);
            return Ok(Some(row));
        }
    }

    fn progress(&self) -> Locus {
        if self.done {
            Locus::MAX
        } else {
            Locus::MIN
        }
    }
}

/// Schema from the first line only.
pub fn tsv_schema(path: &Path) -> Result<Schema> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let first = first.trim_end_matches(['\n', '\r']);
    if first.is_empty() {
        return Schema::from_names::<&str>(&[], false);
    }
    match header_names(first) {
        Some(names) => Schema::from_names(&names, false),
        None => Schema::from_names(&generated_names(first.split('\t').count()), false),
    }
}

/// Writes a stream as TSV. With `hash_header` the header line is `#`-prefixed,
/// which makes it unambiguous on read-back.
pub fn write_tsv(stream: &mut dyn RowStream, path: &Path, header: bool, hash_header: bool) -> Result<u64> {
    atomic_file(path, |file| {
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        if header {
            if hash_header {
                w.write_all(b"#").map_err(io)?;
            }
            w.write_all(stream.schema().header_line().as_bytes()).map_err(io)?;
            w.write_all(b"\n").map_err(io)?;
        }
        let mut n = 0;
        while let Some(r) = stream.next_row()? {
            w.write_all(r.line().as_bytes()).map_err(io)?;
            w.write_all(b"\n").map_err(io)?;
            n += 1;
        }
        w.flush().map_err(io)?;
        Ok(n)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{collect_rows, VecStream};

    #[test]
    fn header_detection() {
        assert_eq!(header_names("#chrom\tpos").unwrap(), vec!["chrom", "pos"]);
        assert_eq!(header_names("sample_id\tbucket").unwrap(), vec!["sample_id", "bucket"]);
        assert!(header_names("chr1\t100").is_none());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        let schema = Schema::from_names(&["a", "b"], false).unwrap();
        let rows = vec![Row::from_cells(["x", "1"]), Row::from_cells(["", "2"])];
        let mut s = VecStream::new(schema.clone(), rows.clone());
        write_tsv(&mut s, &p, true, false).unwrap();
        let stats = SharedStats::default();
        let mut r = TsvStream::open(&p, stats.clone()).unwrap();
        assert_eq!(r.schema(), &schema);
        assert_eq!(collect_rows(&mut r).unwrap(), rows);
        assert_eq!(tsv_schema(&p).unwrap(), schema);
        assert_eq!(stats.snapshot().rows_read, 2);
    }

    #[test]
    fn headerless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        std::fs::write(&p, "chr1\t5\nchr1\t6\n").unwrap();
        let mut r = TsvStream::open(&p, SharedStats::default()).unwrap();
        assert_eq!(r.schema().name(1), "col2");
        assert_eq!(collect_rows(&mut r).unwrap().len(), 2);
    }
}
