//! Shared helpers for integration tests: generated fixture directories and
//! table formatting.

#![allow(dead_code)]

pub mod corpus;

use std::path::{Path, PathBuf};

use gorge::fixtures::{self, GenSpec};
use gorge::model::{Row, Schema, Table};
use gorge::session::Session;

/// The fixture spec the golden corpus was recorded against.
pub fn golden_spec() -> GenSpec {
    GenSpec { seed: 7, variants: 6000, ..GenSpec::default() }
}

/// A fresh directory with fixtures for `spec`. Each test gets its own copy
/// so that cache state never leaks between tests.
pub fn fixture_dir(spec: &GenSpec) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fixtures::generate(dir.path(), spec).unwrap();
    dir
}

pub fn session(dir: &Path) -> Session {
    Session::open(dir.join("gorconfig.txt")).unwrap()
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Header line plus rows, newline-terminated.
pub fn tsv(t: &Table) -> String {
    let mut s = t.schema.header_line();
    s.push('\n');
    for r in &t.rows {
        s.push_str(&r.line());
        s.push('\n');
    }
    s
}

pub fn table(names: &[&str], rows: &[&[&str]]) -> Table {
    Table::new(
        Schema::from_names(names, false).unwrap(),
        rows.iter().map(|r| Row::from_cells(r.iter().copied())).collect(),
    )
    .unwrap()
}

pub fn cells(t: &Table) -> Vec<Vec<String>> {
    t.rows.iter().map(|r| r.to_vec()).collect()
}

pub fn sorted(mut v: Vec<Vec<String>>) -> Vec<Vec<String>> {
    v.sort();
    v
}

/// Compares `got` with `tests/golden/<name>`; with `GORGE_BLESS` set, the
/// file is rewritten instead.
pub fn check_golden(name: &str, got: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("GORGE_BLESS").is_some() {
        std::fs::write(&path, got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if want != got {
        let line = want.lines().zip(got.lines()).position(|(a, b)| a != b);
        panic!(
            "{name}: output differs from golden (first differing line {:?}; {} vs {} lines)",
            line.map(|l| l + 1),
            want.lines().count(),
            got.lines().count()
        );
    }
}
