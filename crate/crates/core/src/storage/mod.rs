//! On-disk formats and their streaming drivers.

pub mod gord;
pub mod gorz;
pub mod rgc;
pub mod tsv;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr, Value};
use crate::model::{BoxStream, ConcatStream, ContigOrder, Locus, LocusClamp, MergeStream, RowStream, Schema};

pub use gord::{GordDictionary, GordOptions, ManifestEntry, TagPolicy};
pub use gorz::{GorzFile, GorzWriter};
pub use rgc::RgcFile;

/// I/O counters shared by every stream opened through one session.
#[derive(Debug, Default)]
pub struct IoStats {
    pub files_opened: AtomicU64,
    pub dictionary_opens: AtomicU64,
    pub blocks_read: AtomicU64,
    pub rows_read: AtomicU64,
    pub groups_read: AtomicU64,
    pub groups_skipped: AtomicU64,
    pub chunks_read: AtomicU64,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IoSnapshot {
    pub files_opened: u64,
    pub dictionary_opens: u64,
    pub blocks_read: u64,
    pub rows_read: u64,
    pub groups_read: u64,
    pub groups_skipped: u64,
    pub chunks_read: u64,
}

impl IoStats {
    pub fn bump(c: &AtomicU64) {
        c.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add(c: &AtomicU64, n: u64) {
        c.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> IoSnapshot {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        IoSnapshot {
            files_opened: g(&self.files_opened),
            dictionary_opens: g(&self.dictionary_opens),
            blocks_read: g(&self.blocks_read),
            rows_read: g(&self.rows_read),
            groups_read: g(&self.groups_read),
            groups_skipped: g(&self.groups_skipped),
            chunks_read: g(&self.chunks_read),
        }
    }

    pub fn reset(&self) {
        for c in [
            &self.files_opened,
            &self.dictionary_opens,
            &self.blocks_read,
            &self.rows_read,
            &self.groups_read,
            &self.groups_skipped,
            &self.chunks_read,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }
}

pub type SharedStats = Arc<IoStats>;

fn parent_dir(path: &Path) -> Result<PathBuf> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    Ok(parent)
}

/// Writes through a temp file in the target directory, renamed into place
/// only if `write` succeeds.
pub fn atomic_file<T>(path: &Path, write: impl FnOnce(File) -> Result<T>) -> Result<T> {
    let parent = parent_dir(path)?;
    let tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let file = tmp.reopen().map_err(|e| Error::io(tmp.path(), e))?;
    let out = write(file)?;
    if path.is_dir() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(out)
}

/// Directory analogue of [`atomic_file`].
pub fn atomic_dir<T>(path: &Path, write: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let parent = parent_dir(path)?;
    let tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let out = write(tmp.path())?;
    if path.is_dir() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    } else if path.exists() {
        fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    }
    let kept = tmp.keep();
    fs::rename(&kept, path).map_err(|e| Error::io(path, e))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Gorz,
    Gord,
    Rgc,
    /// Folder of RGC part files.
    RgcFolder,
    Tsv,
}

fn rgc_parts(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut parts: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rgc"))
        .collect();
    parts.sort();
    Ok(parts)
}

pub fn detect_format(path: &Path) -> Result<Format> {
    if path.is_dir() {
        if gord::is_dictionary(path) {
            return Ok(Format::Gord);
        }
        if !rgc_parts(path)?.is_empty() {
            return Ok(Format::RgcFolder);
        }
        return Err(Error::FormatCorrupt { path: path.to_path_buf(), msg: "folder is neither a dictionary nor RGC parts".into() });
    }
    if !path.exists() {
        return Err(Error::MissingDependency(path.to_path_buf()));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    Ok(match ext.as_str() {
        "gorz" => Format::Gorz,
        "rgc" | "parquet" => Format::Rgc,
        _ => Format::Tsv,
    })
}

/// Schema of a file, read from its header or footer only.
pub fn path_schema(path: &Path) -> Result<Schema> {
    match detect_format(path)? {
        Format::Gorz => gorz::gorz_schema(path),
        Format::Gord => {
            let entries = gord::read_manifest(path)?;
            let first = entries
                .first()
                .ok_or_else(|| Error::ManifestError(format!("{} lists no parts", path.display())))?;
            gorz::gorz_schema(&path.join(&first.file))
        }
        Format::Rgc => Ok(RgcFile::open(path)?.schema),
        Format::RgcFolder => Ok(RgcFile::open(&rgc_parts(path)?[0])?.schema),
        Format::Tsv => tsv::tsv_schema(path),
    }
}

/// Options a file source may carry (`-p`, `-f`/`-ff`, `-nf`).
#[derive(Debug, Clone, Default)]
pub struct SourceOptions {
    pub range: Option<(Locus, Locus)>,
    pub tags: Option<Vec<String>>,
    pub policy: TagPolicy,
    /// Row filter an RGC scan may use for group pruning. Other formats
    /// ignore it, so callers must still apply the filter themselves.
    pub predicate: Option<Expr>,
}

fn need_build(build: &Option<Arc<ContigOrder>>, what: &str) -> Result<Arc<ContigOrder>> {
    build.clone().ok_or_else(|| Error::BuildRequired(what.to_string()))
}

/// Range restriction as a predicate, for RGC statistics pruning.
fn range_predicate(schema: &Schema, build: &ContigOrder, (s, e): (Locus, Locus)) -> Option<Expr> {
    if s.contig != e.contig || s.contig as usize >= build.len() || schema.len() < 2 {
        return None;
    }
    let c = |i: usize| Expr::Col(format!("#{i}"));
    let mut p = Expr::binary(BinOp::Eq, c(1), Expr::Lit(Value::Text(build.name(s.contig).to_string())));
    if s.pos > 0 {
        p = Expr::binary(BinOp::And, p, Expr::binary(BinOp::Ge, c(2), Expr::Lit(Value::Int(s.pos as i64))));
    }
    if e.pos < i64::MAX as u64 {
        p = Expr::binary(BinOp::And, p, Expr::binary(BinOp::Le, c(2), Expr::Lit(Value::Int(e.pos as i64))));
    }
    Some(p)
}

fn open_rgc(path: &Path, opts: &SourceOptions, build: &Option<Arc<ContigOrder>>, stats: &SharedStats) -> Result<BoxStream> {
    let f = Arc::new(RgcFile::open(path)?);
    let and = |a: Option<Expr>, b: Option<Expr>| match (a, b) {
        (Some(a), Some(b)) => Some(Expr::binary(BinOp::And, a, b)),
        (a, b) => a.or(b),
    };
    match opts.range {
        None => Ok(Box::new(f.scan(None, opts.predicate.clone(), stats.clone())?)),
        Some(r) => {
            let b = need_build(build, "range restriction on an RGC source")?;
            match range_predicate(&f.schema, &b, r) {
                Some(p) => Ok(Box::new(f.scan(None, and(Some(p), opts.predicate.clone()), stats.clone())?)),
                None => {
                    let s = Box::new(f.scan(None, opts.predicate.clone(), stats.clone())?);
                    Ok(Box::new(LocusClamp::new(s, b, r.0, r.1)))
                }
            }
        }
    }
}

/// Opens any supported file or folder as a row stream.
pub fn open_path(
    path: &Path,
    opts: &SourceOptions,
    build: &Option<Arc<ContigOrder>>,
    stats: &SharedStats,
) -> Result<BoxStream> {
    let format = detect_format(path)?;
    if opts.tags.is_some() && format != Format::Gord {
        return Err(Error::Usage(format!("tag filters apply only to dictionaries, not {}", path.display())));
    }
    match format {
        Format::Gorz => {
            let b = need_build(build, "reading GORZ")?;
            let g = Arc::new(GorzFile::open(path, b)?);
            Ok(Box::new(g.stream(opts.range, stats.clone())?))
        }
        Format::Gord => {
            let b = need_build(build, "reading a dictionary")?;
            let d = GordDictionary::open(path)?;
            d.stream(&GordOptions { tags: opts.tags.clone(), policy: opts.policy, range: opts.range }, b, stats.clone())
        }
        Format::Rgc => open_rgc(path, opts, build, stats),
        Format::RgcFolder => {
            let parts = rgc_parts(path)?;
            let mut streams = Vec::new();
            for p in &parts {
                streams.push(open_rgc(p, opts, build, stats)?);
            }
            let schema = streams[0].schema().clone();
            if schema.is_ordered() && streams.iter().all(|s| s.schema().is_ordered()) {
                let b = need_build(build, "merging ordered RGC parts")?;
                Ok(Box::new(MergeStream::new(schema, streams, b)?))
            } else {
                let schema = schema.with_ordered(false)?;
                Ok(Box::new(ConcatStream::new(schema, streams)))
            }
        }
        Format::Tsv => {
            let s: BoxStream = Box::new(tsv::TsvStream::open(path, stats.clone())?);
            match opts.range {
                None => Ok(s),
                Some((a, z)) => {
                    let b = need_build(build, "range restriction on a TSV source")?;
                    Ok(Box::new(LocusClamp::new(s, b, a, z)))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartFormat {
    Gorz,
    Rgc,
}

fn safe_name(tag: &str) -> String {
    let s: String = tag
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .take(40)
        .collect();
    if s.is_empty() {
        "all".into()
    } else {
        s
    }
}

struct GorzPart {
    file: String,
    tag: String,
    writer: GorzWriter<BufWriter<File>>,
    first: Option<Locus>,
    last: Locus,
}

/// Writes one part per distinct value of `partition` (or a single part).
/// GORZ parts form a dictionary folder; RGC parts a plain folder.
pub fn write_partitioned(
    stream: &mut dyn RowStream,
    path: &Path,
    format: PartFormat,
    partition: Option<&str>,
    build: Option<Arc<ContigOrder>>,
    block_rows: usize,
) -> Result<usize> {
    let schema = stream.schema().clone();
    let key = partition.map(|p| schema.index_of(p)).transpose()?;
    match format {
        PartFormat::Gorz => {
            let b = need_build(&build, "writing GORZ partitions")?;
            atomic_dir(path, |dir| {
                let mut parts: Vec<GorzPart> = Vec::new();
                let mut by_tag: HashMap<String, usize> = HashMap::new();
                let open = |tag: &str, i: usize| -> Result<GorzPart> {
                    let file = format!("part_{i:04}_{}.gorz", safe_name(tag));
                    let p = dir.join(&file);
                    let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
                    let writer = GorzWriter::new(BufWriter::new(f), &p, &schema, b.clone(), block_rows)?;
                    Ok(GorzPart { file, tag: tag.to_string(), writer, first: None, last: Locus::MIN })
                };
                while let Some(r) = stream.next_row()? {
                    let tag = key.map(|k| r.cell(k)).unwrap_or("");
                    let i = match by_tag.get(tag) {
                        Some(&i) => i,
                        None => {
                            let i = parts.len();
                            parts.push(open(tag, i)?);
                            by_tag.insert(tag.to_string(), i);
                            i
                        }
                    };
                    let part = &mut parts[i];
                    part.writer.push(&r)?;
                    let l = b.row_locus(&r)?;
                    part.first.get_or_insert(l);
                    part.last = l;
                }
                if parts.is_empty() {
                    parts.push(open("", 0)?);
                }
                let mut entries = Vec::new();
                for p in parts {
                    p.writer.finish()?;
                    let first = p.first.unwrap_or(Locus::new(0, 1));
                    let last = if p.first.is_some() { p.last } else { first };
                    entries.push(ManifestEntry {
                        file: p.file,
                        tags: if p.tag.is_empty() { vec![] } else { vec![p.tag] },
                        start: (b.name(first.contig).to_string(), first.pos),
                        stop: (b.name(last.contig).to_string(), last.pos),
                    });
                }
                gord::write_manifest(dir, &entries)?;
                Ok(entries.len())
            })
        }
        PartFormat::Rgc => atomic_dir(path, |dir| {
            let mut groups: Vec<(String, Vec<crate::model::Row>)> = Vec::new();
            let mut by_tag: HashMap<String, usize> = HashMap::new();
            while let Some(r) = stream.next_row()? {
                let tag = key.map(|k| r.cell(k)).unwrap_or("").to_string();
                let i = *by_tag.entry(tag.clone()).or_insert_with(|| {
                    groups.push((tag, Vec::new()));
                    groups.len() - 1
                });
                groups[i].1.push(r);
            }
            if groups.is_empty() {
                groups.push((String::new(), Vec::new()));
            }
            let n = groups.len();
            for (i, (tag, rows)) in groups.into_iter().enumerate() {
                let p = dir.join(format!("part_{i:04}_{}.rgc", safe_name(&tag)));
                let mut s = crate::model::VecStream::new(schema.clone(), rows);
                rgc::write_rgc(&mut s, &p, rgc::DEFAULT_GROUP_ROWS, build.as_deref())?;
            }
            Ok(n)
        }),
    }
}

/// Integrity check for any supported format; returns the row count.
pub fn verify_path(path: &Path, build: Option<Arc<ContigOrder>>) -> Result<u64> {
    match detect_format(path)? {
        Format::Gorz => GorzFile::open(path, need_build(&build, "verifying GORZ")?)?.verify(),
        Format::Gord => GordDictionary::open(path)?.verify(need_build(&build, "verifying a dictionary")?),
        Format::Rgc => RgcFile::open(path)?.verify(),
        Format::RgcFolder => {
            let mut n = 0;
            for p in rgc_parts(path)? {
                n += RgcFile::open(&p)?.verify()?;
            }
            Ok(n)
        }
        Format::Tsv => {
            let mut s = tsv::TsvStream::open(path, SharedStats::default())?;
            let mut n = 0;
            while s.next_row()?.is_some() {
                n += 1;
            }
            Ok(n)
        }
    }
}
