//! Reference sequence lookup from a FASTA file, loaded on first use.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use crate::error::{Error, Result};

type Sequences = HashMap<String, Vec<u8>>;

pub struct RefSeq {
    path: Option<PathBuf>,
    seqs: OnceLock<std::result::Result<Sequences, String>>,
}

impl std::fmt::Debug for RefSeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RefSeq").field("path", &self.path).finish()
    }
}

impl RefSeq {
    /// Defers reading `path` until the first base is requested.
    pub fn open(path: impl Into<PathBuf>) -> Self {
        RefSeq { path: Some(path.into()), seqs: OnceLock::new() }
    }

    /// The FASTA file backing this reference, if it was opened from one.
    pub fn path(&self) -> Option<&std::path::Path> {
        self.path.as_deref()
    }

    pub fn from_sequences<I, S>(seqs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let map = seqs.into_iter().map(|(n, s)| (n.into(), s.into().to_ascii_uppercase().into_bytes())).collect();
        let cell = OnceLock::new();
        let _ = cell.set(Ok(map));
        RefSeq { path: None, seqs: cell }
    }

    fn seqs(&self) -> Result<&Sequences> {
        let loaded = self.seqs.get_or_init(|| {
            let path = self.path.as_deref().expect("eager refseq is always initialized");
            parse_fasta(path).map_err(|e| e.to_string())
        });
        loaded.as_ref().map_err(|e| Error::ConfigError(format!("cannot load reference sequence: {e}")))
    }

    fn contig(&self, contig: &str) -> Result<&[u8]> {
        self.seqs()?
            .get(contig)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::RangeError(format!("contig '{contig}' not in reference sequence")))
    }

    pub fn contig_len(&self, contig: &str) -> Result<u64> {
        Ok(self.contig(contig)?.len() as u64)
    }

    /// Bases `start..=stop`, 1-based.
    pub fn bases(&self, contig: &str, start: u64, stop: u64) -> Result<&[u8]> {
        let seq = self.contig(contig)?;
        if start == 0 || stop < start || stop > seq.len() as u64 {
            return Err(Error::RangeError(format!("{contig}:{start}-{stop} outside reference (length {})", seq.len())));
        }
        Ok(&seq[start as usize - 1..stop as usize])
    }

    pub fn base(&self, contig: &str, pos: u64) -> Result<u8> {
        Ok(self.bases(contig, pos, pos)?[0])
    }
}

fn parse_fasta(path: &Path) -> Result<Sequences> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seqs = Sequences::new();
    let mut cur: Option<(String, Vec<u8>)> = None;
    for line in text.lines() {
        let line = line.trim_end();
        if let Some(h) = line.strip_prefix('>') {
            if let Some((n, s)) = cur.take() {
                seqs.insert(n, s);
            }
            let name = h.split_whitespace().next().unwrap_or_default().to_string();
            cur = Some((name, Vec::new()));
        } else if let Some((_, s)) = cur.as_mut() {
            s.extend(line.bytes().map(|b| b.to_ascii_uppercase()));
        } else if !line.is_empty() {
            return Err(Error::FormatCorrupt { path: path.to_path_buf(), msg: "sequence before first '>' header".into() });
        }
    }
    if let Some((n, s)) = cur {
        seqs.insert(n, s);
    }
    Ok(seqs)
}
