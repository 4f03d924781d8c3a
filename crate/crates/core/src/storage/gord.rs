//! GORD dictionaries: a folder of GORZ parts plus `manifest.gord`.
//!
//! The manifest is headered TSV with columns `file, tag, chrom, bpStart, bpStop`.
//! Parts spanning several contigs use the six-column form
//! `file, tag, chrom, bpStart, chromStop, bpStop`. A tag cell may hold a
//! comma-separated tag set; a part is selected when any of its tags is.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{BoxStream, ContigOrder, Locus, LocusSpan, MergeStream, Schema};
use crate::storage::gorz::{gorz_schema, GorzFile};
use crate::storage::{IoStats, SharedStats};

pub const MANIFEST: &str = "manifest.gord";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub tags: Vec<String>,
    pub start: (String, u64),
    pub stop: (String, u64),
}

impl ManifestEntry {
    pub fn span(&self, build: &ContigOrder) -> Result<LocusSpan> {
        let c = |name: &str| {
            build.index_of(name).map_err(|_| Error::ManifestError(format!("part '{}' names unknown contig '{name}'", self.file)))
        };
        Ok(LocusSpan {
            start: Locus::new(c(&self.start.0)?, self.start.1),
            stop: Locus::new(c(&self.stop.0)?, self.stop.1),
        })
    }
}

/// How a tag filter treats tags that no part carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TagPolicy {
    #[default]
    Fail,
    Ignore,
}

#[derive(Debug, Clone, Default)]
pub struct GordOptions {
    pub tags: Option<Vec<String>>,
    pub policy: TagPolicy,
    pub range: Option<(Locus, Locus)>,
}

pub fn is_dictionary(path: &Path) -> bool {
    path.join(MANIFEST).is_file()
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let wide = entries.iter().any(|e| e.start.0 != e.stop.0);
    let mut s = String::from(if wide {
        "#file\ttag\tchrom\tbpStart\tchromStop\tbpStop\n"
    } else {
        "#file\ttag\tchrom\tbpStart\tbpStop\n"
    });
    for e in entries {
        let tag = e.tags.join(",");
        if wide {
            s.push_str(&format!("{}\t{tag}\t{}\t{}\t{}\t{}\n", e.file, e.start.0, e.start.1, e.stop.0, e.stop.1));
        } else {
            s.push_str(&format!("{}\t{tag}\t{}\t{}\t{}\n", e.file, e.start.0, e.start.1, e.stop.1));
        }
    }
    let p = dir.join(MANIFEST);
    fs::write(&p, s).map_err(|e| Error::io(p, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::ManifestError(format!("{} is empty", p.display())))?;
    let names: Vec<String> = header.trim_start_matches('#').split('\t').map(|s| s.trim().to_ascii_lowercase()).collect();
    let col = |n: &str| names.iter().position(|x| x == n);
    let (Some(fi), Some(ti), Some(ci), Some(si), Some(ei)) =
        (col("file"), col("tag"), col("chrom"), col("bpstart"), col("bpstop"))
    else {
        return Err(Error::ManifestError(format!("{}: header must name file, tag, chrom, bpStart, bpStop", p.display())));
    };
    let cstop = col("chromstop");
    let mut out: Vec<ManifestEntry> = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let get = |i: usize| {
            cells.get(i).copied().ok_or_else(|| Error::ManifestError(format!("{} line {}: too few columns", p.display(), n + 2)))
        };
        let num = |i: usize| -> Result<u64> {
            get(i)?.parse().map_err(|_| Error::ManifestError(format!("{} line {}: bad position", p.display(), n + 2)))
        };
        let file = get(fi)?.to_string();
        if !seen.insert(file.clone()) {
            return Err(Error::ManifestError(format!("part '{file}' listed twice")));
        }
        let tag = get(ti)?;
        let tags = if tag.is_empty() { Vec::new() } else { tag.split(',').map(str::to_string).collect() };
        let chrom = get(ci)?.to_string();
        let chrom_stop = match cstop {
            Some(i) => get(i)?.to_string(),
            None => chrom.clone(),
        };
        out.push(ManifestEntry { file, tags, start: (chrom, num(si)?), stop: (chrom_stop, num(ei)?) });
    }
    Ok(out)
}

#[derive(Debug)]
pub struct GordDictionary {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub schema: Schema,
}

impl GordDictionary {
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = read_manifest(dir)?;
        for e in &entries {
            if !dir.join(&e.file).is_file() {
                return Err(Error::ManifestError(format!("part '{}' missing from {}", e.file, dir.display())));
            }
        }
        let first = entries
            .first()
            .ok_or_else(|| Error::ManifestError(format!("{} lists no parts", dir.display())))?;
        let schema = gorz_schema(&dir.join(&first.file))?;
        Ok(GordDictionary { dir: dir.to_path_buf(), entries, schema })
    }

    /// All tags present in the dictionary.
    pub fn tags(&self) -> HashSet<&str> {
        self.entries.iter().flat_map(|e| e.tags.iter().map(String::as_str)).collect()
    }

    /// Entries selected by tag filter and range, without opening anything.
    pub fn select(&self, opts: &GordOptions, build: &ContigOrder) -> Result<Vec<&ManifestEntry>> {
        let wanted: Option<HashSet<&str>> = opts.tags.as_ref().map(|t| t.iter().map(String::as_str).collect());
        if let (Some(w), TagPolicy::Fail) = (&wanted, opts.policy) {
            let have = self.tags();
            let mut missing: Vec<String> = w.iter().filter(|t| !have.contains(*t)).map(|t| t.to_string()).collect();
            if !missing.is_empty() {
                missing.sort();
                return Err(Error::MissingTag(missing));
            }
        }
        let mut out = Vec::new();
        for e in &self.entries {
            if let Some(w) = &wanted {
                if !e.tags.iter().any(|t| w.contains(t.as_str())) {
                    continue;
                }
            }
            if let Some((s, t)) = opts.range {
                if !e.span(build)?.intersects(s, t) {
                    continue;
                }
            }
            out.push(e);
        }
        Ok(out)
    }

    pub fn stream(&self, opts: &GordOptions, build: Arc<ContigOrder>, stats: SharedStats) -> Result<BoxStream> {
        let parts = self.select(opts, &build)?;
        let mut streams: Vec<BoxStream> = Vec::with_capacity(parts.len());
        for e in parts {
            let g = Arc::new(GorzFile::open(&self.dir.join(&e.file), build.clone())?);
            if g.schema.len() != self.schema.len() {
                return Err(Error::ManifestError(format!("part '{}' has a different column count", e.file)));
            }
            streams.push(Box::new(g.stream(opts.range, stats.clone())?));
        }
        if streams.len() == 1 {
            return Ok(streams.pop().unwrap());
        }
        IoStats::bump(&stats.dictionary_opens);
        Ok(Box::new(MergeStream::new(self.schema.clone(), streams, build)?))
    }

    /// Checks every part and that its rows lie inside the manifest range.
    pub fn verify(&self, build: Arc<ContigOrder>) -> Result<u64> {
        let mut total = 0;
        for e in &self.entries {
            let span = e.span(&build)?;
            let g = GorzFile::open(&self.dir.join(&e.file), build.clone())?;
            total += g.verify()?;
            if let Some(first) = g.index.first().map(|i| i.first) {
                let mut s = Arc::new(g).stream(None, SharedStats::default())?;
                let mut last = first;
                while let Some(r) = crate::model::RowStream::next_row(&mut s)? {
                    last = build.row_locus(&r)?;
                }
                if first < span.start || last > span.stop {
                    return Err(Error::ManifestError(format!(
                        "part '{}' holds rows {}..{} outside its manifest range",
                        e.file,
                        build.display(first),
                        build.display(last)
                    )));
                }
            }
        }
        Ok(total)
    }
}
