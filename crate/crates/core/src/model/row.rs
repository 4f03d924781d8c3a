use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A tab-delimited record. Cells live in one buffer; `ends[i]` is the byte
/// offset one past cell `i`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Row {
    buf: String,
    ends: SmallVec<[u32; 10]>,
}

impl Row {
    /// Builds a row from one line of text (no trailing newline).
    pub fn from_line(line: impl Into<String>) -> Self {
        let buf = line.into();
        let mut ends = SmallVec::new();
        for (i, b) in buf.bytes().enumerate() {
            if b == b'\t' {
                ends.push(i as u32);
            }
        }
        ends.push(buf.len() as u32);
        Row { buf, ends }
    }

    pub fn from_cells<I, S>(cells: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut b = RowBuilder::new();
        for c in cells {
            b.push(c.as_ref());
        }
        b.finish()
    }

    /// Like `from_cells` but rejects cells containing tabs or newlines.
    pub fn try_from_cells<I, S>(cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut b = RowBuilder::new();
        for c in cells {
            let c = c.as_ref();
            if c.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidCell(c.to_string()));
            }
            b.push(c);
        }
        Ok(b.finish())
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn cell(&self, i: usize) -> &str {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize + 1 };
        &self.buf[start..self.ends[i] as usize]
    }

    pub fn cells(&self) -> impl Iterator<Item = &str> + '_ {
        (0..self.len()).map(move |i| self.cell(i))
    }

    pub fn line(&self) -> &str {
        &self.buf
    }

    pub fn into_line(self) -> String {
        self.buf
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.cells().map(str::to_string).collect()
    }

    pub fn with_cell(&self, idx: usize, value: &str) -> Row {
        let mut b = RowBuilder::with_capacity(self.buf.len() + value.len());
        for (i, c) in self.cells().enumerate() {
            b.push(if i == idx { value } else { c });
        }
        b.finish()
    }

    pub fn appended<S: AsRef<str>>(&self, extra: &[S]) -> Row {
        let mut r = self.clone();
        for e in extra {
            r.push(e.as_ref());
        }
        r
    }

    pub fn push(&mut self, cell: &str) {
        if !self.ends.is_empty() {
            self.buf.push('\t');
        }
        self.buf.push_str(cell);
        self.ends.push(self.buf.len() as u32);
    }

    pub fn project(&self, idx: &[usize]) -> Row {
        let mut b = RowBuilder::new();
        for &i in idx {
            b.push(self.cell(i));
        }
        b.finish()
    }
}

impl fmt::Debug for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.cells()).finish()
    }
}

pub struct RowBuilder {
    row: Row,
}

impl Default for RowBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl RowBuilder {
    pub fn new() -> Self {
        RowBuilder { row: Row { buf: String::new(), ends: SmallVec::new() } }
    }

    pub fn with_capacity(n: usize) -> Self {
        RowBuilder { row: Row { buf: String::with_capacity(n), ends: SmallVec::new() } }
    }

    pub fn push(&mut self, cell: &str) -> &mut Self {
        self.row.push(cell);
        self
    }

    pub fn finish(self) -> Row {
        self.row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_and_edits() {
        let r = Row::from_line("chr1\t100\t\tx");
        assert_eq!(r.len(), 4);
        assert_eq!(r.cell(2), "");
        assert_eq!(r.cell(3), "x");
        let r2 = r.with_cell(1, "101");
        assert_eq!(r2.line(), "chr1\t101\t\tx");
        assert_eq!(r2.appended(&["y"]).cell(4), "y");
        assert_eq!(r.project(&[3, 0]).line(), "x\tchr1");
        assert_eq!(Row::from_cells(["a", "b"]), Row::from_line("a\tb"));
    }

    #[test]
    fn rejects_tabs_in_cells() {
        assert!(Row::try_from_cells(["a\tb"]).is_err());
    }
}
