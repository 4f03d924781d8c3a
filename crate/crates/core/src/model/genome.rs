//! Contig order, positions and ranges.
//!
//! Contigs are compared by their index in the bound build, never by name.
//! Positions are 1-based and inclusive everywhere.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::Row;

/// The contig universe of a reference build, in genome order.
#[derive(Debug, Clone)]
pub struct ContigOrder {
    names: Vec<String>,
    lengths: Vec<u64>,
    index: HashMap<String, u32>,
}

impl ContigOrder {
    pub fn new(contigs: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut names = Vec::new();
        let mut lengths = Vec::new();
        let mut index = HashMap::new();
        for (name, len) in contigs {
            if len == 0 {
                return Err(Error::ConfigError(format!("contig '{name}' has zero length")));
            }
            if index.insert(name.clone(), names.len() as u32).is_some() {
                return Err(Error::ConfigError(format!("contig '{name}' listed twice")));
            }
            names.push(name);
            lengths.push(len);
        }
        Ok(ContigOrder { names, lengths, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: u32) -> &str {
        &self.names[idx as usize]
    }

    pub fn length(&self, idx: u32) -> u64 {
        self.lengths[idx as usize]
    }

    pub fn index_of(&self, contig: &str) -> Result<u32> {
        self.index.get(contig).copied().ok_or_else(|| Error::UnknownContig(contig.to_string()))
    }

    pub fn contains(&self, contig: &str) -> bool {
        self.index.contains_key(contig)
    }

    pub fn genome_length(&self) -> u64 {
        self.lengths.iter().sum()
    }

    pub fn locus(&self, contig: &str, pos: &str) -> Result<Locus> {
        let c = self.index_of(contig)?;
        let p = pos
            .parse::<u64>()
            .map_err(|_| Error::TypeMismatch(format!("position '{pos}' is not a positive integer")))?;
        Ok(Locus::new(c, p))
    }

    /// Locus of an ordered row: columns 1 and 2 are contig and position.
    pub fn row_locus(&self, row: &Row) -> Result<Locus> {
        if row.len() < 2 {
            return Err(Error::SchemaError("ordered rows need contig and position columns".into()));
        }
        self.locus(row.cell(0), row.cell(1))
    }

    pub fn display(&self, locus: Locus) -> String {
        if locus == Locus::MIN {
            return "<start>".into();
        }
        if locus == Locus::MAX {
            return "<end>".into();
        }
        match self.names.get(locus.contig as usize) {
            Some(n) => format!("{n}:{}", locus.pos),
            None => format!("#{}:{}", locus.contig, locus.pos),
        }
    }

    /// Whole-contig range for every contig, in order.
    pub fn contig_ranges(&self) -> Vec<GenomicRange> {
        self.names
            .iter()
            .zip(&self.lengths)
            .map(|(n, &l)| GenomicRange { contig: n.clone(), start: 1, stop: l })
            .collect()
    }
}

/// Genome order over two ordered rows. Rows at the same position compare equal
/// regardless of their other columns.
pub fn compare_rows(a: &Row, b: &Row, order: &ContigOrder) -> Result<Ordering> {
    Ok(order.row_locus(a)?.cmp(&order.row_locus(b)?))
}

/// Position with the contig resolved to its build index; orders by
/// (contig index, pos).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Locus {
    pub contig: u32,
    pub pos: u64,
}

impl Locus {
    pub const MIN: Locus = Locus { contig: 0, pos: 0 };
    pub const MAX: Locus = Locus { contig: u32::MAX, pos: u64::MAX };

    pub fn new(contig: u32, pos: u64) -> Self {
        Locus { contig, pos }
    }

    /// Moves back `by` bases without leaving the contig.
    pub fn saturating_back(self, by: u64) -> Locus {
        if self == Locus::MAX {
            return self;
        }
        Locus { contig: self.contig, pos: self.pos.saturating_sub(by) }
    }
}

/// A named position, as users write it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenomicPosition {
    pub contig: String,
    pub pos: u64,
}

impl GenomicPosition {
    pub fn new(contig: impl Into<String>, pos: u64) -> Self {
        GenomicPosition { contig: contig.into(), pos }
    }

    pub fn resolve(&self, order: &ContigOrder) -> Result<Locus> {
        Ok(Locus::new(order.index_of(&self.contig)?, self.pos))
    }
}

impl fmt::Display for GenomicPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.contig, self.pos)
    }
}

/// Inclusive 1-based range on one contig. `stop == u64::MAX` means "to the end".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenomicRange {
    pub contig: String,
    pub start: u64,
    pub stop: u64,
}

impl GenomicRange {
    pub fn new(contig: impl Into<String>, start: u64, stop: u64) -> Result<Self> {
        let contig = contig.into();
        if start == 0 || stop < start {
            return Err(Error::RangeError(format!("invalid range {contig}:{start}-{stop}")));
        }
        Ok(GenomicRange { contig, start, stop })
    }

    pub fn whole(contig: impl Into<String>) -> Self {
        GenomicRange { contig: contig.into(), start: 1, stop: u64::MAX }
    }

    /// Parses `chr1`, `chr1:100`, `chr1:100-`, `chr1:100-200`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::RangeError(format!("malformed range '{text}'"));
        let Some((contig, rest)) = text.rsplit_once(':') else {
            if text.is_empty() {
                return Err(bad());
            }
            return Ok(GenomicRange::whole(text));
        };
        if contig.is_empty() {
            return Err(bad());
        }
        let num = |s: &str| s.trim().replace(',', "").parse::<u64>().map_err(|_| bad());
        let (start, stop) = match rest.split_once('-') {
            None => {
                let p = num(rest)?;
                (p, p)
            }
            Some((a, "")) => (num(a)?, u64::MAX),
            Some((a, b)) => (num(a)?, num(b)?),
        };
        GenomicRange::new(contig, start, stop)
    }

    /// Inclusive locus bounds under a build.
    pub fn bounds(&self, order: &ContigOrder) -> Result<(Locus, Locus)> {
        let c = order.index_of(&self.contig)?;
        Ok((Locus::new(c, self.start), Locus::new(c, self.stop)))
    }

    pub fn contains_pos(&self, contig: &str, pos: u64) -> bool {
        self.contig == contig && pos >= self.start && pos <= self.stop
    }

    /// Stop clamped to the contig length.
    pub fn clamp(&self, order: &ContigOrder) -> Result<GenomicRange> {
        let c = order.index_of(&self.contig)?;
        Ok(GenomicRange {
            contig: self.contig.clone(),
            start: self.start,
            stop: self.stop.min(order.length(c)),
        })
    }
}

impl fmt::Display for GenomicRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stop == u64::MAX {
            if self.start == 1 {
                write!(f, "{}", self.contig)
            } else {
                write!(f, "{}:{}-", self.contig, self.start)
            }
        } else {
            write!(f, "{}:{}-{}", self.contig, self.start, self.stop)
        }
    }
}

/// Locus interval spanning possibly several contigs; used for dictionary parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocusSpan {
    pub start: Locus,
    pub stop: Locus,
}

impl LocusSpan {
    pub fn intersects(&self, start: Locus, stop: Locus) -> bool {
        self.start <= stop && start <= self.stop
    }
}

pub type SharedOrder = Arc<ContigOrder>;

#[cfg(test)]
mod tests {
    use super::*;

    fn build() -> ContigOrder {
        ContigOrder::new(
            ["chr1", "chr2", "chr10"].iter().map(|s| (s.to_string(), 1000u64)),
        )
        .unwrap()
    }

    #[test]
    fn index_order_not_lexicographic() {
        let b = build();
        let a = Row::from_cells(["chr2", "5"]);
        let c = Row::from_cells(["chr10", "1"]);
        assert_eq!(compare_rows(&a, &c, &b).unwrap(), Ordering::Less);
        let d = Row::from_cells(["chr1", "100", "x"]);
        let e = Row::from_cells(["chr1", "100", "y"]);
        assert_eq!(compare_rows(&d, &e, &b).unwrap(), Ordering::Equal);
    }

    #[test]
    fn unknown_contig_is_named() {
        let b = build();
        let a = Row::from_cells(["chrZ", "5"]);
        let err = compare_rows(&a, &a, &b).unwrap_err();
        assert!(matches!(err, Error::UnknownContig(ref c) if c == "chrZ"));
    }

    #[test]
    fn range_parsing() {
        assert_eq!(GenomicRange::parse("chr1:1-5000").unwrap(), GenomicRange::new("chr1", 1, 5000).unwrap());
        assert_eq!(GenomicRange::parse("chr2").unwrap(), GenomicRange::whole("chr2"));
        assert_eq!(GenomicRange::parse("chr2:7").unwrap().stop, 7);
        assert_eq!(GenomicRange::parse("chr2:7-").unwrap().stop, u64::MAX);
        assert!(GenomicRange::parse("chr2:9-3").is_err());
        assert!(GenomicRange::parse("chr2:0-3").is_err());
        assert!(GenomicRange::parse(":3").is_err());
    }

    #[test]
    fn zero_length_contig_rejected() {
        assert!(ContigOrder::new(vec![("c".to_string(), 0)]).is_err());
        assert!(ContigOrder::new(vec![("c".to_string(), 1), ("c".to_string(), 2)]).is_err());
    }
}
