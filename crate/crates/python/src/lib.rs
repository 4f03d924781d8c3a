//! Python bindings: sessions, lazy relations and writes.
//!
//! Rows cross the boundary as lists of strings; query errors raise
//! `gorge.GorgeError` with the error kind as the message prefix.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use gorge::fixtures::{self, GenSpec};
use gorge::model::{Row, Schema, Table};
use gorge::session::{self, WriteFormat};

create_exception!(gorge, GorgeError, PyException);

fn err(e: gorge::Error) -> PyErr {
    GorgeError::new_err(format!("{}: {e}", e.kind()))
}

fn to_table(columns: Vec<String>, rows: Vec<Vec<String>>) -> PyResult<Table> {
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let schema = Schema::from_names(&names, false).map_err(err)?;
    Table::new(schema, rows.into_iter().map(Row::from_cells).collect()).map_err(err)
}

/// A query session: registered tables, defs and pending creates.
#[pyclass(module = "gorge")]
struct Session {
    inner: session::Session,
}

#[pymethods]
impl Session {
    /// Opens a session from a `gorconfig.txt`-style file. Without a config,
    /// `root` sets the base directory and no reference build is bound.
    #[new]
    #[pyo3(signature = (config=None, root=None, cache_dir=None))]
    fn new(config: Option<PathBuf>, root: Option<PathBuf>, cache_dir: Option<PathBuf>) -> PyResult<Self> {
        let inner = match config {
            Some(c) => session::Session::open(c).map_err(err)?,
            None => {
                let root = root.unwrap_or_else(|| PathBuf::from("."));
                let cache = cache_dir.unwrap_or_else(|| root.join("gorcache"));
                session::Session::without_build(root, cache)
            }
        };
        Ok(Session { inner })
    }

    /// Registers rows under `name`, visible as `[#name#]` and to SQL.
    fn register_table(&mut self, name: &str, columns: Vec<String>, rows: Vec<Vec<String>>) -> PyResult<()> {
        let t = to_table(columns, rows)?;
        self.inner.register_table(name, t).map_err(err)
    }

    fn register_file(&mut self, name: &str, path: PathBuf) -> PyResult<()> {
        self.inner.register_file(name, path).map_err(err)
    }

    fn unregister(&mut self, name: &str) -> bool {
        self.inner.unregister(name)
    }

    /// Adds `def` and `create` statements; nothing is evaluated.
    fn set_creates(&mut self, text: &str) -> PyResult<()> {
        self.inner.set_creates(text).map_err(err)
    }

    fn set_create(&mut self, name: &str, query: &str) -> PyResult<()> {
        self.inner.set_create(name, query).map_err(err)
    }

    fn set_def(&mut self, name: &str, value: &str) {
        self.inner.set_def(name, value)
    }

    fn relation(&self, query: &str) -> PyResult<Relation> {
        Ok(Relation { inner: self.inner.relation(query).map_err(err)? })
    }

    /// Runs a whole script; its creates and defs stay in the session.
    fn script(&mut self, text: &str) -> PyResult<Relation> {
        Ok(Relation { inner: self.inner.script(text).map_err(err)? })
    }

    fn explain(&self, query: &str) -> PyResult<String> {
        self.inner.explain(query).map_err(err)
    }

    #[getter]
    fn registered(&self) -> Vec<String> {
        self.inner.registered_names()
    }

    #[getter]
    fn creates(&self) -> Vec<String> {
        self.inner.creates().iter().map(|c| c.name.clone()).collect()
    }

    /// Create evaluations and cache hits so far.
    fn counters(&self) -> (u64, u64) {
        let c = &self.inner.env().counters;
        (c.evaluations(), c.cache_hits())
    }
}

/// A lazily evaluated query result.
#[pyclass(module = "gorge")]
struct Relation {
    inner: session::Relation,
}

#[pymethods]
impl Relation {
    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.schema().columns().iter().map(|c| c.name.clone()).collect()
    }

    #[getter]
    fn ordered(&self) -> bool {
        self.inner.schema().is_ordered()
    }

    fn collect(&self, py: Python<'_>) -> PyResult<Vec<Vec<String>>> {
        let t = py.detach(|| self.inner.collect()).map_err(err)?;
        Ok(t.rows.iter().map(|r| r.to_vec()).collect())
    }

    fn count(&self, py: Python<'_>) -> PyResult<u64> {
        py.detach(|| self.inner.count()).map_err(err)
    }

    /// Appends pipe steps, e.g. `rel.gor("calc x pos+1 | sort genome")`.
    fn gor(&self, tail: &str) -> PyResult<Relation> {
        Ok(Relation { inner: self.inner.gor(tail).map_err(err)? })
    }

    /// Writes as `tsv`, `gorz` or `rgc`; with `partition_by`, one tagged
    /// part per value.
    #[pyo3(signature = (path, format="tsv", partition_by=None))]
    fn write(&self, py: Python<'_>, path: PathBuf, format: &str, partition_by: Option<&str>) -> PyResult<()> {
        let format: WriteFormat = format.parse().map_err(|e: gorge::Error| PyValueError::new_err(e.to_string()))?;
        py.detach(|| self.inner.write(&path, format, partition_by)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Relation({})", self.inner.query())
    }
}

/// Writes the synthetic fixture set into `dir`; returns (file, rows) pairs.
#[pyfunction]
#[pyo3(signature = (dir, seed=7, variants=3000))]
fn generate_fixtures(dir: PathBuf, seed: u64, variants: usize) -> PyResult<Vec<(String, u64)>> {
    let spec = GenSpec { seed, variants, ..GenSpec::default() };
    Ok(fixtures::generate(&dir, &spec).map_err(err)?.files)
}

#[pymodule]
#[pyo3(name = "gorge")]
fn gorge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Session>()?;
    m.add_class::<Relation>()?;
    m.add_function(wrap_pyfunction!(generate_fixtures, m)?)?;
    m.add("GorgeError", m.py().get_type::<GorgeError>())?;
    Ok(())
}
