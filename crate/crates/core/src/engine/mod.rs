//! Streaming operators and the genomic join family.
//!
//! Every operator computes its output schema when it is bound, before any
//! row flows. Lookup relations (map, inset, csvsel inputs) are loaded on the
//! first pull, so binding a pipeline performs no source I/O.

mod csvsel;
mod expand;
mod group;
pub mod join;
pub mod refseq;
mod rowops;
mod sort;
pub mod varnorm;

use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::ExprEnv;
use crate::model::{BoxStream, ContigOrder, Row, Schema};
use crate::parser::{RelRef, Step};

pub use csvsel::{BucketLayout, CsvSel};
pub use group::{seghist_segments, Binning, Group, GroupSpec};
pub use join::{JoinFlags, JoinKind, JoinStream, Geometry};
pub use refseq::RefSeq;
pub use sort::{SortBy, SortKey, SortStream};

pub const DEFAULT_SEEK_THRESHOLD: usize = 512;
pub const DEFAULT_SPILL_ROWS: usize = 1_000_000;

/// Everything operators need besides their input.
#[derive(Clone)]
pub struct EngineCtx {
    pub build: Option<Arc<ContigOrder>>,
    pub env: ExprEnv,
    pub refseq: Option<Arc<RefSeq>>,
    /// Rows a join scans past before it seeks instead.
    pub seek_threshold: usize,
    /// Rows a sort holds in memory before spilling a run to disk.
    pub spill_rows: usize,
    pub temp_dir: PathBuf,
}

impl EngineCtx {
    pub fn new(build: Option<Arc<ContigOrder>>, base_dir: impl Into<PathBuf>) -> Self {
        EngineCtx {
            build,
            env: ExprEnv::new(base_dir),
            refseq: None,
            seek_threshold: DEFAULT_SEEK_THRESHOLD,
            spill_rows: DEFAULT_SPILL_ROWS,
            temp_dir: std::env::temp_dir(),
        }
    }

    pub fn build(&self, what: &str) -> Result<Arc<ContigOrder>> {
        self.build.clone().ok_or_else(|| Error::BuildRequired(what.to_string()))
    }
}

/// Turns relation arguments into streams. Implemented by the planner, which
/// knows about creates, registered tables and nested queries.
pub trait Resolver {
    /// A stream whose schema is known without reading rows. `ordered` asks
    /// for a genome-ordered (and where possible seekable) stream.
    fn open(&self, rel: &RelRef, ordered: bool) -> Result<BoxStream>;
}

pub(crate) fn require_ordered(input: &dyn crate::model::RowStream, what: &str) -> Result<()> {
    if input.schema().is_ordered() {
        Ok(())
    } else {
        Err(Error::OrderRequired(format!("{what} needs genome-ordered input (apply sort genome first)")))
    }
}

/// Names for appended columns, `x`-prefixed where they collide.
pub(crate) fn append_names(base: &Schema, extra: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut taken: Vec<String> = Vec::new();
    for n in extra {
        let u = base.unique_name(&n, &taken);
        taken.push(u);
    }
    taken
}

pub(crate) fn extend_schema(base: &Schema, extra: &[String], ordered: bool) -> Result<Schema> {
    let mut names: Vec<String> = base.names().map(str::to_string).collect();
    names.extend(extra.iter().cloned());
    Schema::from_names(&names, ordered)
}

/// Lazily materialized lookup relation.
pub(crate) struct Lookup {
    stream: Option<BoxStream>,
    pub schema: Schema,
    rows: Vec<Row>,
}

impl Lookup {
    pub fn new(stream: BoxStream) -> Self {
        let schema = stream.schema().clone();
        Lookup { stream: Some(stream), schema, rows: Vec::new() }
    }

    pub fn rows(&mut self) -> Result<&[Row]> {
        if let Some(mut s) = self.stream.take() {
            self.rows = crate::model::collect_rows(s.as_mut())?;
        }
        Ok(&self.rows)
    }
}

/// Binds one pipe step over `input`.
pub fn bind_step(input: BoxStream, step: &Step, ctx: &EngineCtx, res: &dyn Resolver) -> Result<BoxStream> {
    match step.command.as_str() {
        "where" | "calc" | "replace" | "select" | "rename" | "rownum" | "inset" => {
            rowops::bind(input, step, ctx, res)
        }
        "split" | "map" | "multimap" | "dagmap" => expand::bind(input, step, ctx, res),
        "group" | "distinct" | "seghist" => group::bind(input, step, ctx),
        "sort" => sort::bind(input, step, ctx),
        "varjoin" | "join" => join::bind(input, step, ctx, res),
        "varnorm" => varnorm::bind(input, step, ctx),
        "csvsel" => csvsel::bind(input, step, ctx, res),
        c => Err(Error::UnknownCommand { command: c.to_string(), offset: step.span.0, suggestion: None }),
    }
}

pub fn bind_steps(mut input: BoxStream, steps: &[Step], ctx: &EngineCtx, res: &dyn Resolver) -> Result<BoxStream> {
    for s in steps {
        input = bind_step(input, s, ctx, res)?;
    }
    Ok(input)
}

/// Whether a step keeps its output correct when the input is cut into
/// genomic ranges and the outputs concatenated. `granule` is the smallest
/// range boundary alignment, for binned GROUP.
pub fn step_is_splittable(step: &Step) -> std::result::Result<(), String> {
    match step.command.as_str() {
        "sort" if step.args.iter().any(|a| a.word() == Some("genome")) => Err("sort genome".into()),
        "sort" => Err("sort -c".into()),
        "group" => match step.args.first().and_then(|a| a.word()) {
            Some("genome") | None => Err("whole-genome group".into()),
            Some(_) => Ok(()),
        },
        "distinct" | "rownum" | "seghist" => Err(step.command.clone()),
        _ => Ok(()),
    }
}
