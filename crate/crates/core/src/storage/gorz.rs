//! GORZ: block-compressed, genome-ordered single-file tables.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! #col1<TAB>col2...\n            header line
//! u8 codec                       1 = deflate
//! { u32 len, payload[len] }*     blocks; payload inflates to newline-terminated rows
//! { u16 contig, u64 pos, u64 offset, u32 rows }*   one index entry per block
//! u64 index_offset, "GORZ\0\0v1"
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::model::{ContigOrder, Locus, Row, RowStream, Schema};
use crate::storage::{atomic_file, IoStats, SharedStats};

pub const MAGIC: &[u8; 8] = b"GORZ\0\0v1";
pub const CODEC_DEFLATE: u8 = 1;
pub const DEFAULT_BLOCK_ROWS: usize = 1024;
const ENTRY_LEN: u64 = 2 + 8 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub first: Locus,
    pub offset: u64,
    pub rows: u32,
}

fn corrupt(path: &Path, msg: impl Into<String>) -> Error {
    Error::FormatCorrupt { path: path.to_path_buf(), msg: msg.into() }
}

/// Incremental writer; rows must arrive in genome order.
pub struct GorzWriter<W: Write> {
    out: W,
    path: PathBuf,
    offset: u64,
    build: Arc<ContigOrder>,
    width: usize,
    block_rows: usize,
    buf: String,
    buf_rows: u32,
    first: Option<Locus>,
    last: Locus,
    index: Vec<IndexEntry>,
    rows: u64,
}

impl<W: Write> GorzWriter<W> {
    pub fn new(mut out: W, path: &Path, schema: &Schema, build: Arc<ContigOrder>, block_rows: usize) -> Result<Self> {
        if schema.len() < 2 {
            return Err(Error::SchemaError("GORZ tables need contig and position columns".into()));
        }
        if build.len() > u16::MAX as usize {
            return Err(Error::ConfigError("GORZ supports at most 65535 contigs".into()));
        }
        let header = format!("#{}\n", schema.header_line());
        out.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
        out.write_all(&[CODEC_DEFLATE]).map_err(|e| Error::io(path, e))?;
        Ok(GorzWriter {
            out,
            path: path.to_path_buf(),
            offset: header.len() as u64 + 1,
            build,
            width: schema.len(),
            block_rows: block_rows.max(1),
            buf: String::new(),
            buf_rows: 0,
            first: None,
            last: Locus::MIN,
            index: Vec::new(),
            rows: 0,
        })
    }

    pub fn push(&mut self, row: &Row) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::Arity { expected: self.width, found: row.len() });
        }
        let l = self.build.row_locus(row)?;
        if l < self.last {
            return Err(Error::OrderViolation {
                previous: self.build.display(self.last),
                current: self.build.display(l),
            });
        }
        self.last = l;
        if self.first.is_none() {
            self.first = Some(l);
        }
        self.buf.push_str(row.line());
        self.buf.push('\n');
        self.buf_rows += 1;
        self.rows += 1;
        if self.buf_rows as usize >= self.block_rows {
            self.flush_block()?;
        }
        Ok(())
    }

    fn flush_block(&mut self) -> Result<()> {
        let Some(first) = self.first.take() else { return Ok(()) };
        let mut enc = DeflateEncoder::new(Vec::with_capacity(self.buf.len() / 3), Compression::fast());
        enc.write_all(self.buf.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        let payload = enc.finish().map_err(|e| Error::io(&self.path, e))?;
        let io = |e| Error::io(&self.path, e);
        self.out.write_all(&(payload.len() as u32).to_le_bytes()).map_err(io)?;
        self.out.write_all(&payload).map_err(io)?;
        self.index.push(IndexEntry { first, offset: self.offset, rows: self.buf_rows });
        self.offset += 4 + payload.len() as u64;
        self.buf.clear();
        self.buf_rows = 0;
        Ok(())
    }

    /// Writes index and trailer; returns (rows, blocks) and the inner writer.
    pub fn finish(mut self) -> Result<(u64, usize, W)> {
        self.flush_block()?;
        let io = |e| Error::io(&self.path, e);
        let mut idx = Vec::with_capacity(self.index.len() * ENTRY_LEN as usize + 16);
        for e in &self.index {
            idx.extend_from_slice(&(e.first.contig as u16).to_le_bytes());
            idx.extend_from_slice(&e.first.pos.to_le_bytes());
            idx.extend_from_slice(&e.offset.to_le_bytes());
            idx.extend_from_slice(&e.rows.to_le_bytes());
        }
        idx.extend_from_slice(&self.offset.to_le_bytes());
        idx.extend_from_slice(MAGIC);
        self.out.write_all(&idx).map_err(io)?;
        self.out.flush().map_err(io)?;
        Ok((self.rows, self.index.len(), self.out))
    }
}

/// Writes a whole stream to `path` atomically. Returns (rows, blocks).
pub fn write_gorz(
    stream: &mut dyn RowStream,
    path: &Path,
    build: Arc<ContigOrder>,
    block_rows: usize,
) -> Result<(u64, usize)> {
    let schema = stream.schema().clone();
    atomic_file(path, |file| {
        let mut w = GorzWriter::new(BufWriter::new(file), path, &schema, build, block_rows)?;
        while let Some(r) = stream.next_row()? {
            w.push(&r)?;
        }
        let (rows, blocks, _) = w.finish()?;
        Ok((rows, blocks))
    })
}

/// Parsed header, index and trailer of a GORZ file.
#[derive(Debug)]
pub struct GorzFile {
    pub path: PathBuf,
    pub schema: Schema,
    pub index: Vec<IndexEntry>,
    build: Arc<ContigOrder>,
}

/// Reads only the header line of a GORZ file.
pub fn gorz_schema(path: &Path) -> Result<Schema> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line).map_err(|e| Error::io(path, e))?;
    header_schema(path, &line)
}

fn header_schema(path: &Path, line: &str) -> Result<Schema> {
    let Some(body) = line.strip_prefix('#').and_then(|l| l.strip_suffix('\n')) else {
        return Err(corrupt(path, "missing header line"));
    };
    let names: Vec<&str> = body.split('\t').collect();
    Schema::from_names(&names, true).map_err(|e| corrupt(path, e.to_string()))
}

impl GorzFile {
    pub fn open(path: &Path, build: Arc<ContigOrder>) -> Result<Self> {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let io = |e| Error::io(path, e);
        let len = f.metadata().map_err(io)?.len();
        let mut reader = BufReader::new(&mut f);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(io)?;
        let schema = header_schema(path, &line)?;
        let mut codec = [0u8; 1];
        reader.read_exact(&mut codec).map_err(|_| corrupt(path, "missing codec byte"))?;
        if codec[0] != CODEC_DEFLATE {
            return Err(corrupt(path, format!("unknown codec {}", codec[0])));
        }
        let data_start = line.len() as u64 + 1;
        drop(reader);
        if len < data_start + 16 {
            return Err(corrupt(path, "truncated trailer"));
        }
        let mut trailer = [0u8; 16];
        f.seek(SeekFrom::Start(len - 16)).map_err(io)?;
        f.read_exact(&mut trailer).map_err(io)?;
        if &trailer[8..] != MAGIC {
            return Err(corrupt(path, "bad magic"));
        }
        let index_offset = u64::from_le_bytes(trailer[..8].try_into().unwrap());
        if index_offset < data_start || index_offset > len - 16 || (len - 16 - index_offset) % ENTRY_LEN != 0 {
            return Err(corrupt(path, "bad index offset"));
        }
        let mut raw = vec![0u8; (len - 16 - index_offset) as usize];
        f.seek(SeekFrom::Start(index_offset)).map_err(io)?;
        f.read_exact(&mut raw).map_err(io)?;
        let mut index = Vec::with_capacity(raw.len() / ENTRY_LEN as usize);
        for e in raw.chunks_exact(ENTRY_LEN as usize) {
            let contig = u16::from_le_bytes(e[0..2].try_into().unwrap()) as u32;
            let pos = u64::from_le_bytes(e[2..10].try_into().unwrap());
            let offset = u64::from_le_bytes(e[10..18].try_into().unwrap());
            let rows = u32::from_le_bytes(e[18..22].try_into().unwrap());
            if contig as usize >= build.len() {
                return Err(corrupt(path, format!("index names contig #{contig}, not in the bound build")));
            }
            if offset < data_start || offset >= index_offset {
                return Err(corrupt(path, "index offset out of bounds"));
            }
            let first = Locus::new(contig, pos);
            if index.last().is_some_and(|p: &IndexEntry| p.first > first) {
                return Err(corrupt(path, "index positions decrease"));
            }
            index.push(IndexEntry { first, offset, rows });
        }
        Ok(GorzFile { path: path.to_path_buf(), schema, index, build })
    }

    pub fn row_count(&self) -> u64 {
        self.index.iter().map(|e| e.rows as u64).sum()
    }

    pub fn block_count(&self) -> usize {
        self.index.len()
    }

    /// Index of the first block that may hold rows at or after `start`.
    fn start_block(&self, start: Locus) -> usize {
        self.index.partition_point(|e| e.first < start).saturating_sub(1)
    }

    pub fn stream(self: Arc<Self>, range: Option<(Locus, Locus)>, stats: SharedStats) -> Result<GorzStream> {
        let file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        IoStats::bump(&stats.files_opened);
        let (start, stop) = range.unwrap_or((Locus::MIN, Locus::MAX));
        let next_block = self.start_block(start);
        Ok(GorzStream {
            file,
            gorz: self,
            stats,
            start,
            stop,
            next_block,
            current: None,
            rows: Vec::new().into_iter(),
            check: false,
            done: false,
        })
    }

    fn read_block(&self, file: &mut File, j: usize) -> Result<Vec<Row>> {
        let e = self.index[j];
        let io = |err| Error::io(&self.path, err);
        file.seek(SeekFrom::Start(e.offset)).map_err(io)?;
        let mut len = [0u8; 4];
        file.read_exact(&mut len).map_err(io)?;
        let len = u32::from_le_bytes(len) as usize;
        let mut payload = vec![0u8; len];
        file.read_exact(&mut payload).map_err(|_| corrupt(&self.path, format!("block {j} truncated")))?;
        let mut text = String::with_capacity(len * 4);
        DeflateDecoder::new(&payload[..])
            .read_to_string(&mut text)
            .map_err(|err| corrupt(&self.path, format!("block {j}: {err}")))?;
        let mut rows = Vec::with_capacity(e.rows as usize);
        for line in text.split_terminator('\n') {
            rows.push(Row::from_line(line));
        }
        if rows.len() != e.rows as usize {
            return Err(corrupt(&self.path, format!("block {j} holds {} rows, index says {}", rows.len(), e.rows)));
        }
        Ok(rows)
    }

    /// Decodes every block and checks counts, widths, order and index
    /// positions. Returns the number of rows.
    pub fn verify(&self) -> Result<u64> {
        let mut file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let mut last = Locus::MIN;
        let mut n = 0;
        for j in 0..self.index.len() {
            let rows = self.read_block(&mut file, j)?;
            for (i, r) in rows.iter().enumerate() {
                if r.len() != self.schema.len() {
                    return Err(corrupt(&self.path, format!("block {j} row {i} has {} cells", r.len())));
                }
                let l = self.build.row_locus(r)?;
                if i == 0 && l != self.index[j].first {
                    return Err(corrupt(&self.path, format!("block {j} first position disagrees with index")));
                }
                if l < last {
                    return Err(corrupt(&self.path, format!("rows out of order in block {j}")));
                }
                last = l;
            }
            n += rows.len() as u64;
        }
        Ok(n)
    }
}

/// Range-restricted, seekable reader over a [`GorzFile`].
pub struct GorzStream {
    file: File,
    gorz: Arc<GorzFile>,
    stats: SharedStats,
    start: Locus,
    stop: Locus,
    next_block: usize,
    current: Option<usize>,
    rows: std::vec::IntoIter<Row>,
    check: bool,
    done: bool,
}

impl GorzStream {
    fn load(&mut self, j: usize) -> Result<bool> {
        let idx = &self.gorz.index;
        if j >= idx.len() || idx[j].first > self.stop {
            self.done = true;
            self.rows = Vec::new().into_iter();
            return Ok(false);
        }
        let rows = self.gorz.read_block(&mut self.file, j)?;
        IoStats::bump(&self.stats.blocks_read);
        IoStats::add(&self.stats.rows_read, rows.len() as u64);
        let inside_start = idx[j].first >= self.start;
        let inside_stop = idx.get(j + 1).is_some_and(|n| n.first <= self.stop);
        self.check = !(inside_start && inside_stop);
        self.rows = rows.into_iter();
        self.current = Some(j);
        self.next_block = j + 1;
        Ok(true)
    }

    pub fn blocks_total(&self) -> usize {
        self.gorz.index.len()
    }
}

impl RowStream for GorzStream {
    fn schema(&self) -> &Schema {
        &self.gorz.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            if self.done {
                return Ok(None);
            }
            match self.rows.next() {
                Some(r) => {
                    if self.check {
                        let l = self.gorz.build.row_locus(&r)?;
                        if l < self.start {
                            continue;
                        }
                        if l > self.stop {
                            self.done = true;
                            return Ok(None);
                        }
                    }
                    return Ok(Some(r));
                }
                None => {
                    let j = self.next_block;
                    if !self.load(j)? {
                        return Ok(None);
                    }
                }
            }
        }
    }

    fn can_seek(&self) -> bool {
        true
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        let forward = to >= self.progress();
        let target = self.gorz.start_block(to);
        self.start = to;
        if to > self.stop {
            self.done = true;
            return Ok(());
        }
        self.done = false;
        match self.current {
            Some(c) if forward && c >= target => self.check = true,
            _ => {
                self.load(target)?;
            }
        }
        Ok(())
    }

    fn progress(&self) -> Locus {
        if self.done {
            return Locus::MAX;
        }
        if let Some(r) = self.rows.as_slice().first() {
            let l = self.gorz.build.row_locus(r).unwrap_or(Locus::MIN);
            return l.max(self.start);
        }
        match self.gorz.index.get(self.next_block) {
            Some(e) if e.first <= self.stop => e.first.max(self.start),
            _ => Locus::MAX,
        }
    }
}
