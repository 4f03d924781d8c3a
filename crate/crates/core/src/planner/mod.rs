//! Script evaluation: the create DAG, signature-keyed materialization cache,
//! and the PGOR and PARALLEL macros.

mod cache;
mod exec;
mod split;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::UNIX_EPOCH;

use sha2::{Digest, Sha256};

use crate::engine::{bind_step, EngineCtx, Resolver};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{
    collect_rows, BoxStream, ContigOrder, DeferredStream, Locus, LocusClamp, OrderChecked, Row, RowStream, Schema,
    Table, TableStream,
};
use crate::parser::{
    parse_query, substitute_parallel_columns, Arg, Context, Create, Head, Query, RelRef, SourceSpec, SplitArg, Step,
};
use crate::sqlbridge::{self, ScanHint, SqlSources};
use crate::storage::{self, Format, GorzWriter, ManifestEntry, SharedStats, TagPolicy};

pub use cache::{Cache, CacheEntry, Counters, CrashHook};
pub use exec::{run_scoped, ConcatExec, Task};
pub use split::{
    analyze_pipeline, default_split, default_split_aligned, relation_split, Reach, SplitAnalysis, SplitKind,
    SplitPlan, SplitTask,
};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A relation registered under a name, visible as `[#name#]` and in SQL FROM.
#[derive(Debug, Clone)]
pub enum Registered {
    Table { table: Arc<Table>, digest: String },
    File(PathBuf),
}

impl Registered {
    pub fn table(table: Table) -> Self {
        let mut h = Sha256::new();
        h.update(table.schema.header_line().as_bytes());
        for r in &table.rows {
            h.update(b"\n");
            h.update(r.line().as_bytes());
        }
        Registered::Table { table: Arc::new(table), digest: hex::encode(h.finalize()) }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Registered::File(path.into())
    }
}

/// Defs, creates and registered relations visible to queries.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub defs: Vec<(String, String)>,
    pub creates: Vec<Create>,
    pub registered: HashMap<String, Registered>,
}

impl Catalog {
    pub fn create(&self, name: &str) -> Option<&Create> {
        self.creates.iter().find(|c| c.name == name)
    }

    /// Exact name first, then case-insensitively (SQL identifiers).
    pub fn registered(&self, name: &str) -> Option<(&str, &Registered)> {
        self.registered.get_key_value(name).map(|(k, v)| (k.as_str(), v)).or_else(|| {
            self.registered.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(k, v)| (k.as_str(), v))
        })
    }
}

/// Session-wide execution settings and instrumentation.
pub struct Environment {
    pub ctx: EngineCtx,
    /// Relative file names resolve against this directory.
    pub root: PathBuf,
    pub workers: usize,
    /// Default PGOR split count; per contig when unset.
    pub split_count: Option<usize>,
    pub cache: Cache,
    pub stats: SharedStats,
    pub counters: Counters,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment").field("root", &self.root).field("workers", &self.workers).finish()
    }
}

impl Environment {
    pub fn new(ctx: EngineCtx, root: impl Into<PathBuf>, cache_dir: impl Into<PathBuf>) -> Self {
        Environment {
            ctx,
            root: root.into(),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4),
            split_count: None,
            cache: Cache::new(cache_dir),
            stats: SharedStats::default(),
            counters: Counters::default(),
        }
    }
}

#[derive(Debug, Clone)]
enum Artifact {
    Stored(PathBuf),
    /// Cache unwritable: the result is held in memory for this evaluation.
    Memory(Arc<Table>),
}

/// What a task reads and which rows it keeps.
#[derive(Debug, Clone, Copy)]
struct Window {
    read: (Locus, Locus),
    keep: (Locus, Locus),
    clamp_after: Option<usize>,
}

type Slot = Arc<Mutex<Option<Artifact>>>;

/// Evaluates queries against a catalog snapshot. Cheap to clone; clones
/// share the per-evaluation memo of materialized creates.
#[derive(Clone)]
pub struct Planner {
    env: Arc<Environment>,
    catalog: Arc<Catalog>,
    artifacts: Arc<Mutex<HashMap<String, Slot>>>,
    signatures: Arc<Mutex<HashMap<String, String>>>,
}

fn is_sort_genome(s: &Step) -> bool {
    s.command == "sort" && s.args.iter().any(|a| a.word() == Some("genome"))
}

/// Every query nested anywhere in `q`, including `q`.
fn all_queries(q: &Query) -> Vec<&Query> {
    let mut out = vec![q];
    q.visit_rels(&mut |r| {
        if let RelRef::Nested(n) = r {
            out.push(n);
        }
    });
    out
}

/// Files named inside expressions (`indag`).
fn expr_files(q: &Query) -> Vec<String> {
    let mut out = Vec::new();
    for s in &q.steps {
        if let Some(e) = &s.expr {
            e.walk(&mut |x| {
                if let Expr::InDag { file, .. } = x {
                    out.push(file.clone());
                }
            });
        }
    }
    out
}

/// Template bodies parsed with placeholders replaced, for dependency scans.
fn template_probe(q: &Query) -> Option<Query> {
    let mut out = None;
    q.visit_rels(&mut |r| {
        if let RelRef::Template { text, columns } = r {
            let mut probe = text.clone();
            for c in columns {
                probe = probe.replace(&format!("#{{col:{c}}}"), "x");
            }
            out = parse_query(&probe, &[]).ok();
        }
    });
    out
}

fn sql_words(q: &Query) -> Vec<String> {
    let Head::Sql(sql) = &q.head else { return Vec::new() };
    sql.template
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn nanos(t: std::io::Result<std::time::SystemTime>) -> u128 {
    t.ok().and_then(|t| t.duration_since(UNIX_EPOCH).ok()).map(|d| d.as_nanos()).unwrap_or(0)
}

/// `size:mtime` of a file, or of every file under a folder.
pub fn file_identity(path: &Path) -> Result<String> {
    let meta = fs::metadata(path).map_err(|_| Error::MissingDependency(path.to_path_buf()))?;
    if !meta.is_dir() {
        return Ok(format!("{}:{}", meta.len(), nanos(meta.modified())));
    }
    let mut parts = Vec::new();
    let mut names: Vec<PathBuf> =
        fs::read_dir(path).map_err(|e| Error::io(path, e))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    for p in names {
        let name = p.file_name().unwrap_or_default().to_string_lossy().to_string();
        if name.starts_with('.') {
            continue;
        }
        parts.push(format!("{name}={}", file_identity(&p)?));
    }
    Ok(parts.join(","))
}

impl Planner {
    pub fn new(env: Arc<Environment>, catalog: Arc<Catalog>) -> Self {
        Planner { env, catalog, artifacts: Default::default(), signatures: Default::default() }
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn ctx(&self) -> &EngineCtx {
        &self.env.ctx
    }

    fn build(&self, what: &str) -> Result<Arc<ContigOrder>> {
        self.ctx().build(what)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.ctx().env.resolve(name)
    }

    fn parse_range(&self, text: &str) -> Result<(Locus, Locus)> {
        let b = self.build("a -p range")?;
        crate::model::GenomicRange::parse(text)?.bounds(&b)
    }

    // ---- dependencies and signatures ----

    /// Creates `q` references directly, in first-use order.
    pub fn create_refs(&self, q: &Query) -> Vec<String> {
        let mut refs: Vec<String> = q.references().into_iter().filter(|n| self.catalog.create(n).is_some()).collect();
        if let Some(p) = template_probe(q) {
            for n in p.references() {
                if self.catalog.create(&n).is_some() && !refs.contains(&n) {
                    refs.push(n);
                }
            }
        }
        refs
    }

    /// Creates `q` depends on transitively, dependencies first.
    pub fn evaluation_order(&self, q: &Query) -> Vec<String> {
        fn visit(p: &Planner, name: &str, seen: &mut Vec<String>, out: &mut Vec<String>) {
            if seen.iter().any(|s| s == name) {
                return;
            }
            seen.push(name.to_string());
            if let Some(c) = p.catalog.create(name) {
                for d in p.create_refs(&c.query) {
                    visit(p, &d, seen, out);
                }
                out.push(name.to_string());
            }
        }
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for d in self.create_refs(q) {
            visit(self, &d, &mut seen, &mut out);
        }
        out
    }

    /// The lines a query's signature is computed from: canonical text, the
    /// signatures of referenced creates, registered-relation digests and the
    /// size and mtime of every file read.
    pub fn signature_lines(&self, q: &Query) -> Result<Vec<(String, String)>> {
        let mut lines = vec![("engine".to_string(), ENGINE_VERSION.to_string())];
        if let Some(b) = &self.ctx().build {
            let contigs: Vec<String> = b.names().iter().enumerate().map(|(i, n)| format!("{n}:{}", b.length(i as u32))).collect();
            lines.push(("build".into(), contigs.join(",")));
        }
        lines.push(("context".into(), q.context.keyword().into()));
        lines.push(("expression".into(), q.to_string()));
        let probe = template_probe(q);
        let queries: Vec<&Query> = all_queries(q).into_iter().chain(probe.as_ref()).collect();
        // (name, bare SQL name): bare names never resolve to creates.
        let mut refs: Vec<(String, bool)> = q.references().into_iter().map(|r| (r, false)).collect();
        if let Some(p) = &probe {
            refs.extend(p.references().into_iter().map(|r| (r, false)));
        }
        for w in queries.iter().flat_map(|q| sql_words(q)) {
            if let Some((name, _)) = self.catalog.registered(&w) {
                refs.push((name.to_string(), true));
            }
        }
        let mut seen_refs = Vec::new();
        for (r, bare) in refs {
            if seen_refs.contains(&(r.clone(), bare)) {
                continue;
            }
            seen_refs.push((r.clone(), bare));
            if !bare && self.catalog.create(&r).is_some() {
                lines.push(("dep".into(), format!("create\t{r}\t{}", self.signature(&r)?)));
            } else if let Some((name, reg)) = self.catalog.registered(&r) {
                let id = match reg {
                    Registered::Table { digest, .. } => digest.clone(),
                    Registered::File(p) => file_identity(&self.path(&p.to_string_lossy()))?,
                };
                lines.push(("dep".into(), format!("table\t{name}\t{id}")));
            } else {
                return Err(Error::UnresolvedRelation(r));
            }
        }
        let mut files = Vec::new();
        for q in &queries {
            for f in q.files().into_iter().chain(expr_files(q)) {
                if !files.contains(&f) {
                    files.push(f);
                }
            }
        }
        for f in files {
            lines.push(("dep".into(), format!("file\t{f}\t{}", file_identity(&self.path(&f))?)));
        }
        if queries.iter().any(|q| q.steps.iter().any(|s| s.command == "varnorm")) {
            if let Some(p) = self.refseq_path() {
                lines.push(("dep".into(), format!("refseq\t{}\t{}", p.display(), file_identity(&p)?)));
            }
        }
        Ok(lines)
    }

    fn refseq_path(&self) -> Option<PathBuf> {
        self.ctx().refseq.as_ref().and_then(|r| r.path().map(Path::to_path_buf))
    }

    pub fn digest(lines: &[(String, String)]) -> String {
        let mut h = Sha256::new();
        for (k, v) in lines {
            h.update(k.as_bytes());
            h.update(b"\t");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Transitive signature of a create.
    pub fn signature(&self, name: &str) -> Result<String> {
        if let Some(s) = self.signatures.lock().unwrap().get(name) {
            return Ok(s.clone());
        }
        let c = self.catalog.create(name).ok_or_else(|| Error::UnresolvedRelation(name.to_string()))?;
        let sig = Self::digest(&self.signature_lines(&c.query)?);
        self.signatures.lock().unwrap().insert(name.to_string(), sig.clone());
        Ok(sig)
    }

    // ---- materialization ----

    /// Evaluates (or finds in the cache) every create `q` depends on.
    pub fn materialize_dependencies(&self, q: &Query) -> Result<()> {
        for name in self.evaluation_order(q) {
            self.artifact(&name)?;
        }
        Ok(())
    }

    fn artifact(&self, name: &str) -> Result<Artifact> {
        let slot = self.artifacts.lock().unwrap().entry(name.to_string()).or_default().clone();
        let mut slot = slot.lock().unwrap();
        if let Some(a) = &*slot {
            return Ok(a.clone());
        }
        let a = self.materialize(name).map_err(|e| match e {
            Error::Dependency { .. } if matches!(&e, Error::Dependency { name: n, .. } if n == name) => e,
            e => Error::Dependency { name: name.to_string(), source: Box::new(e) },
        })?;
        *slot = Some(a.clone());
        Ok(a)
    }

    fn materialize(&self, name: &str) -> Result<Artifact> {
        let c = self.catalog.create(name).ok_or_else(|| Error::UnresolvedRelation(name.to_string()))?;
        let mut lines = self.signature_lines(&c.query)?;
        let digest = Self::digest(&lines);
        let counters = &self.env.counters;
        if let Some(e) = self.env.cache.lookup(&digest) {
            counters.cache_hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            return Ok(Artifact::Stored(e.artifact()));
        }
        for d in self.create_refs(&c.query) {
            self.artifact(&d)?;
        }
        let claim = match self.env.cache.claim(&digest) {
            Ok(claim) => claim,
            Err(e) => {
                log::warn!("cache unavailable ({e}); evaluating [#{name}#] without caching");
                counters.record(name);
                return Ok(Artifact::Memory(Arc::new(Table::from_stream(self.bind(&c.query)?)?)));
            }
        };
        if let Some(e) = claim.existing() {
            counters.cache_hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            return Ok(Artifact::Stored(e.artifact()));
        }
        counters.record(name);
        lines.insert(0, ("name".into(), name.to_string()));
        let entry = claim.publish(&lines, |dir| self.write_result(&c.query, dir))?;
        Ok(Artifact::Stored(entry.artifact()))
    }

    /// Writes a query's result into `dir` in the format its context calls
    /// for; returns the artifact's file name.
    fn write_result(&self, q: &Query, dir: &Path) -> Result<String> {
        let build = self.ctx().build.clone();
        if q.context == Context::Pgor {
            let name = "result.gord";
            self.pgor_materialize(q, &dir.join(name))?;
            return Ok(name.into());
        }
        let mut s = self.bind(q)?;
        if q.context == Context::Sql {
            let name = "result.rgc";
            storage::rgc::write_rgc(s.as_mut(), &dir.join(name), storage::rgc::DEFAULT_GROUP_ROWS, build.as_deref())?;
            return Ok(name.into());
        }
        if s.schema().is_ordered() && q.context != Context::Nor {
            let name = "result.gord";
            storage::write_partitioned(
                s.as_mut(),
                &dir.join(name),
                storage::PartFormat::Gorz,
                None,
                build,
                storage::gorz::DEFAULT_BLOCK_ROWS,
            )?;
            return Ok(name.into());
        }
        let name = "result.tsv";
        storage::tsv::write_tsv(s.as_mut(), &dir.join(name), true, true)?;
        Ok(name.into())
    }

    /// Schema a create's artifact will have, without evaluating it.
    fn create_schema(&self, c: &Create) -> Result<Schema> {
        let s = self.bind(&c.query)?.schema().clone();
        match c.query.context {
            Context::Nor => s.with_ordered(false),
            _ => Ok(s),
        }
    }

    fn open_artifact(&self, a: &Artifact, opts: &storage::SourceOptions) -> Result<BoxStream> {
        match a {
            Artifact::Stored(p) => storage::open_path(p, opts, &self.ctx().build, &self.env.stats),
            Artifact::Memory(t) => self.open_table(t.clone(), opts),
        }
    }

    fn open_table(&self, t: Arc<Table>, opts: &storage::SourceOptions) -> Result<BoxStream> {
        if opts.tags.is_some() {
            return Err(Error::Usage("tag filters apply only to dictionaries".into()));
        }
        let ordered = t.schema.is_ordered();
        let s: BoxStream = match (&self.ctx().build, ordered) {
            (Some(b), true) => Box::new(TableStream::ordered(t, b)?),
            _ => Box::new(TableStream::new(t)),
        };
        match opts.range {
            None => Ok(s),
            Some((a, z)) => Ok(Box::new(LocusClamp::new(s, self.build("a -p range")?, a, z))),
        }
    }

    // ---- sources ----

    /// Opens a relation lazily. The flag tells whether it is plain text whose
    /// ordering is only claimed, never recorded (TSV files and artifacts).
    /// `opts` with the tags listed in a `-ff` relation filled in.
    fn with_tag_file(&self, opts: &storage::SourceOptions, tag_file: Option<&RelRef>) -> Result<storage::SourceOptions> {
        let mut o = opts.clone();
        if let Some(r) = tag_file {
            let mut s = self.open_rel(r, &Default::default(), None)?.0;
            let rows = collect_rows(s.as_mut())?;
            o.tags = Some(rows.iter().map(|r| crate::parser::scan::unquote(r.cell(0))).collect());
        }
        Ok(o)
    }

    /// Opens a relation lazily. The flag tells whether it is plain text whose
    /// ordering is only claimed, never recorded (TSV files and artifacts).
    fn open_rel(&self, rel: &RelRef, opts: &storage::SourceOptions, tag_file: Option<&RelRef>) -> Result<(BoxStream, bool)> {
        match rel {
            RelRef::File(name) => {
                let path = self.path(name);
                let format = storage::detect_format(&path)?;
                let schema = storage::path_schema(&path)?;
                let seekable = matches!(format, Format::Gorz | Format::Gord);
                let (p, opts, tag_file) = (self.clone(), opts.clone(), tag_file.cloned());
                let opener = move || {
                    let o = p.with_tag_file(&opts, tag_file.as_ref())?;
                    storage::open_path(&path, &o, &p.ctx().build, &p.env.stats)
                };
                Ok((Box::new(DeferredStream::new(schema, seekable, Box::new(opener))), format == Format::Tsv))
            }
            RelRef::Virtual(name) => {
                if let Some(c) = self.catalog.create(name) {
                    let schema = self.create_schema(c)?;
                    let text_like = c.query.context != Context::Sql && !schema.is_ordered();
                    let seekable = schema.is_ordered() && c.query.context != Context::Sql;
                    let (p, n, opts, tag_file) = (self.clone(), name.clone(), opts.clone(), tag_file.cloned());
                    let opener = move || {
                        let a = p.artifact(&n)?;
                        let o = p.with_tag_file(&opts, tag_file.as_ref())?;
                        p.open_artifact(&a, &o)
                    };
                    return Ok((Box::new(DeferredStream::new(schema, seekable, Box::new(opener))), text_like));
                }
                self.open_registered(name, opts, tag_file)
            }
            RelRef::Nested(q) => {
                if opts.tags.is_some() || tag_file.is_some() {
                    return Err(Error::Usage("tag filters apply only to dictionaries".into()));
                }
                let s = self.bind(q)?;
                match opts.range {
                    None => Ok((s, false)),
                    Some((a, z)) => Ok((Box::new(LocusClamp::new(s, self.build("a -p range")?, a, z)), false)),
                }
            }
            RelRef::Template { .. } => Err(Error::Usage("a parallel template is not a relation".into())),
        }
    }

    fn open_registered(
        &self,
        name: &str,
        opts: &storage::SourceOptions,
        tag_file: Option<&RelRef>,
    ) -> Result<(BoxStream, bool)> {
        match self.catalog.registered(name) {
            Some((_, Registered::Table { table, .. })) => {
                if tag_file.is_some() {
                    return Err(Error::Usage("tag filters apply only to dictionaries".into()));
                }
                Ok((self.open_table(table.clone(), opts)?, false))
            }
            Some((_, Registered::File(p))) => self.open_rel(&RelRef::File(p.to_string_lossy().into_owned()), opts, tag_file),
            None => Err(Error::UnresolvedRelation(name.to_string())),
        }
    }

    fn source_options(&self, spec: &SourceSpec, range: Option<(Locus, Locus)>) -> Result<storage::SourceOptions> {
        let range = match (range, &spec.options.range) {
            (Some(r), _) => Some(r),
            (None, Some(t)) => Some(self.parse_range(t)?),
            (None, None) => None,
        };
        Ok(storage::SourceOptions {
            range,
            tags: spec.options.tags.clone(),
            policy: if spec.options.no_fail { TagPolicy::Ignore } else { TagPolicy::Fail },
            predicate: None,
        })
    }

    /// Makes a stream genome-ordered for a GOR context: text sources are
    /// taken at their word and checked as they stream; other unordered
    /// sources are accepted only when a `sort genome` follows.
    fn as_ordered(&self, s: BoxStream, text_like: bool, sort_follows: bool, what: &str) -> Result<BoxStream> {
        if s.schema().is_ordered() {
            return Ok(s);
        }
        if text_like {
            let b = self.build(what)?;
            return Ok(Box::new(OrderChecked::new(Box::new(Relabeled::new(s, Some(true))), b)));
        }
        if sort_follows {
            return Ok(s);
        }
        Err(Error::OrderRequired(format!("{what} is not genome-ordered; add 'sort genome' or order it by chrom, pos")))
    }

    // ---- binding ----

    /// Binds a query into a lazy stream. Creates are evaluated when their
    /// rows are first needed.
    pub fn bind(&self, q: &Query) -> Result<BoxStream> {
        match (&q.head, q.context) {
            (Head::Sql(sql), _) => {
                let s = sqlbridge::evaluate(sql, self)?;
                self.tail(s, &q.steps)
            }
            (Head::Pipe(spec), Context::Gor) => self.bind_gor(spec, &q.steps, None),
            (Head::Pipe(spec), Context::Nor) => {
                let opts = self.source_options(spec, None)?;
                let (s, _) = self.open_rel(&spec.rel, &opts, spec.options.tag_file.as_ref())?;
                let s: BoxStream = Box::new(Relabeled::new(s, Some(false)));
                self.tail(s, &q.steps)
            }
            (Head::Pipe(_), Context::Pgor) => self.pgor_stream(q),
            (Head::Pipe(_), Context::Parallel) => self.parallel_stream(q),
            (Head::Pipe(_), Context::Sql) => unreachable!("SQL queries have an SQL head"),
        }
    }

    /// Evaluates a query: its creates first, in dependency order, then the
    /// query itself as a stream.
    pub fn evaluate(&self, q: &Query) -> Result<BoxStream> {
        self.materialize_dependencies(q)?;
        self.bind(q)
    }

    /// Applies pipe steps to a stream.
    pub fn tail(&self, mut s: BoxStream, steps: &[Step]) -> Result<BoxStream> {
        for step in steps {
            s = bind_step(s, step, self.ctx(), self)?;
        }
        Ok(s)
    }

    fn bind_gor(&self, spec: &SourceSpec, steps: &[Step], window: Option<Window>) -> Result<BoxStream> {
        let opts = self.source_options(spec, window.map(|w| w.read))?;
        let (src, text_like) = self.open_rel(&spec.rel, &opts, spec.options.tag_file.as_ref())?;
        let sort_follows = steps.first().is_some_and(is_sort_genome);
        let mut s = self.as_ordered(src, text_like, sort_follows, &format!("gor source {}", spec.rel))?;
        let clamp = window.filter(|w| w.read != w.keep);
        for (i, step) in steps.iter().enumerate() {
            s = bind_step(s, step, self.ctx(), self)?;
            if let Some(w) = clamp {
                if w.clamp_after == Some(i) {
                    s = Box::new(LocusClamp::new(s, self.build("pgor")?, w.keep.0, w.keep.1));
                }
            }
        }
        if let Some(w) = clamp {
            if w.clamp_after.is_none() {
                s = Box::new(LocusClamp::new(s, self.build("pgor")?, w.keep.0, w.keep.1));
            }
        }
        Ok(s)
    }

    // ---- pgor ----

    /// The task plan of a PGOR query: its split option (or the configured
    /// default), clipped to its `-p` range.
    pub fn split_plan(&self, q: &Query) -> Result<(SplitPlan, SplitAnalysis)> {
        let build = self.build("pgor")?;
        let spec = q.source().ok_or_else(|| Error::Usage("pgor needs a pipe source".into()))?;
        let analysis = analyze_pipeline(&q.steps)?;
        let plan = match &spec.options.split {
            Some(SplitArg::Count(n)) => default_split_aligned(&build, Some(*n), analysis.granule),
            Some(SplitArg::Relation(r)) => {
                let mut s = self.open_rel(r, &Default::default(), None)?.0;
                if s.schema().len() < 2 {
                    return Err(Error::SchemaError("a split relation needs contig and start columns".into()));
                }
                let mut starts = Vec::new();
                while let Some(row) = s.next_row()? {
                    let pos = row.cell(1).parse::<u64>().map_err(|_| {
                        Error::TypeMismatch(format!("split relation start '{}' is not a position", row.cell(1)))
                    })?;
                    starts.push((row.cell(0).to_string(), pos));
                }
                relation_split(&build, &starts, analysis.granule)?
            }
            None => default_split_aligned(&build, self.env.split_count, analysis.granule),
        };
        let plan = match &spec.options.range {
            Some(t) => {
                let (a, z) = self.parse_range(t)?;
                plan.restrict(a, z)
            }
            None => plan,
        };
        Ok((plan, analysis))
    }

    fn pgor_tasks(&self, q: &Query) -> Result<Vec<(SplitTask, Window)>> {
        let (plan, analysis) = self.split_plan(q)?;
        let limit = match &q.source().unwrap().options.range {
            Some(t) => Some(self.parse_range(t)?),
            None => None,
        };
        Ok(plan
            .tasks
            .into_iter()
            .map(|t| {
                let (mut a, mut z) = analysis.read_range(&t);
                if let Some((la, lz)) = limit {
                    a = a.max(la);
                    z = z.min(lz);
                }
                (t, Window { read: (a, z), keep: (t.start, t.stop), clamp_after: analysis.clamp_after })
            })
            .collect())
    }

    fn pgor_stream(&self, q: &Query) -> Result<BoxStream> {
        let build = self.build("pgor")?;
        let spec = q.source().unwrap().clone();
        analyze_pipeline(&q.steps)?;
        let schema = self.bind_gor(&spec, &q.steps, None)?.schema().clone();
        let (p, q) = (self.clone(), q.clone());
        let plan = move || {
            let tasks = p.pgor_tasks(&q)?;
            Ok(tasks
                .into_iter()
                .map(|(t, w)| {
                    let (p, spec, steps) = (p.clone(), spec.clone(), q.steps.clone());
                    Task::new(t.label(&build), move || p.bind_gor(&spec, &steps, Some(w)))
                })
                .collect())
        };
        Ok(Box::new(ConcatExec::new(schema, self.env.workers, plan)))
    }

    /// Runs a PGOR query into a dictionary: one GORZ part per task, with the
    /// task's range in the manifest.
    pub fn pgor_materialize(&self, q: &Query, path: &Path) -> Result<()> {
        let build = self.build("pgor")?;
        let spec = q.source().unwrap();
        let tasks = self.pgor_tasks(q)?;
        let schema = self.bind_gor(spec, &q.steps, None)?.schema().clone();
        storage::atomic_dir(path, |dir| {
            let jobs: Vec<(usize, SplitTask, Window)> = tasks.into_iter().enumerate().map(|(i, (t, w))| (i, t, w)).collect();
            let results = run_scoped(jobs, self.env.workers, |(i, t, w)| -> Result<ManifestEntry> {
                let label = t.label(&build);
                let fail = |e| Error::TaskFailed { range: label.clone(), source: Box::new(e) };
                let file = format!("part_{i:05}.gorz");
                let p = dir.join(&file);
                let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                let mut w_ = GorzWriter::new(std::io::BufWriter::new(f), &p, &schema, build.clone(), storage::gorz::DEFAULT_BLOCK_ROWS)?;
                let mut s = self.bind_gor(spec, &q.steps, Some(w)).map_err(fail)?;
                while let Some(r) = s.next_row().map_err(fail)? {
                    w_.push(&r)?;
                }
                w_.finish()?;
                let clamp = |l: Locus| -> (String, u64) {
                    let c = l.contig.min(build.len() as u32 - 1);
                    let pos = if l.contig as usize >= build.len() { build.length(c) } else { l.pos.clamp(1, build.length(c)) };
                    (build.name(c).to_string(), pos)
                };
                let stop = if t.stop.pos == 0 && t.stop.contig > 0 {
                    let c = t.stop.contig - 1;
                    (build.name(c).to_string(), build.length(c))
                } else {
                    clamp(t.stop)
                };
                Ok(ManifestEntry { file, tags: Vec::new(), start: clamp(t.start), stop })
            });
            let mut entries = Vec::with_capacity(results.len());
            for r in results {
                entries.push(r?);
            }
            if entries.is_empty() {
                let p = dir.join("part_00000.gorz");
                let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                GorzWriter::new(std::io::BufWriter::new(f), &p, &schema, build.clone(), 1)?.finish()?;
                let first = (build.name(0).to_string(), 1);
                entries.push(ManifestEntry { file: "part_00000.gorz".into(), tags: vec![], start: first.clone(), stop: first });
            }
            storage::gord::write_manifest(dir, &entries)
        })
    }

    // ---- parallel ----

    /// Substitutes every parts row into the template and parses the result,
    /// failing before anything runs if any row does not work.
    pub fn parallel_queries(&self, q: &Query) -> Result<Vec<Query>> {
        let spec = q.source().unwrap();
        let RelRef::Template { text, columns } = &spec.rel else {
            return Err(Error::Usage("parallel expects a nested template <(...)".into()));
        };
        let parts = spec.options.parts.as_ref().ok_or_else(|| Error::Usage("parallel requires -parts".into()))?;
        let mut s = self.open_rel(parts, &Default::default(), None)?.0;
        let schema = s.schema().clone();
        for c in columns {
            schema.index_of(c)?;
        }
        let rows = collect_rows(s.as_mut())?;
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let fail = |e| Error::TaskFailed { range: format!("part {}", i + 1), source: Box::new(e) };
            let body = substitute_parallel_columns(text, row, &schema).map_err(fail)?;
            out.push(parse_query(&body, &self.catalog.defs).map_err(fail)?);
        }
        Ok(out)
    }

    fn parallel_stream(&self, q: &Query) -> Result<BoxStream> {
        let queries = self.parallel_queries(q)?;
        let Some(first) = queries.first() else {
            return Ok(crate::model::empty_stream(Schema::new(Vec::new(), false)?));
        };
        let schema = self.bind(first)?.schema().clone();
        let ordered = schema.is_ordered();
        let tasks: Vec<Task> = queries
            .into_iter()
            .enumerate()
            .map(|(i, q)| {
                let p = self.clone();
                Task::new(format!("part {}", i + 1), move || {
                    p.materialize_dependencies(&q)?;
                    p.bind(&q)
                })
            })
            .collect();
        let workers = self.env.workers;
        if ordered {
            let build = self.build("parallel")?;
            let temp = self.ctx().temp_dir.clone();
            let sc = schema.clone();
            let opener = move || exec::merged(sc, build, tasks, workers, temp);
            Ok(Box::new(DeferredStream::new(schema, false, Box::new(opener))))
        } else {
            let schema = schema.with_ordered(false)?;
            Ok(Box::new(ConcatExec::new(schema, workers, move || Ok(tasks))))
        }
    }
}

impl Resolver for Planner {
    fn open(&self, rel: &RelRef, ordered: bool) -> Result<BoxStream> {
        let (s, text_like) = self.open_rel(rel, &Default::default(), None)?;
        if ordered {
            self.as_ordered(s, text_like, false, &format!("relation {rel}"))
        } else {
            Ok(s)
        }
    }
}

impl SqlSources for Planner {
    fn sql_table(&self, rel: &RelRef, hint: &ScanHint) -> Result<BoxStream> {
        let opts = storage::SourceOptions { range: hint.range, predicate: hint.predicate.clone(), ..Default::default() };
        let (s, _) = match rel {
            RelRef::Nested(_) => self.open_rel(rel, &Default::default(), None)?,
            _ => self.open_rel(rel, &opts, None)?,
        };
        Ok(s)
    }

    fn sql_named(&self, name: &str, hint: &ScanHint) -> Result<Option<BoxStream>> {
        // Bare SQL names see only registered relations, even when a create
        // shadows the name for `[#name#]`.
        match self.catalog.registered(name) {
            Some((n, _)) => {
                let opts = storage::SourceOptions { range: hint.range, predicate: hint.predicate.clone(), ..Default::default() };
                Ok(Some(self.open_registered(n, &opts, None)?.0))
            }
            None => Ok(None),
        }
    }

    fn sql_build(&self) -> Option<Arc<ContigOrder>> {
        self.ctx().build.clone()
    }

    fn sql_env(&self) -> crate::expr::ExprEnv {
        self.ctx().env.clone()
    }
}

/// Re-declares a stream's ordering flag (or nothing), forwarding the rest.
pub struct Relabeled {
    inner: BoxStream,
    schema: Schema,
}

impl Relabeled {
    pub fn new(inner: BoxStream, ordered: Option<bool>) -> Self {
        let schema = match ordered {
            Some(o) if o != inner.schema().is_ordered() => {
                inner.schema().clone().with_ordered(o).unwrap_or_else(|_| inner.schema().clone())
            }
            _ => inner.schema().clone(),
        };
        Relabeled { inner, schema }
    }
}

impl RowStream for Relabeled {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        self.inner.next_row()
    }

    fn can_seek(&self) -> bool {
        self.schema.is_ordered() && self.inner.can_seek()
    }

    fn seek(&mut self, to: Locus) -> Result<()> {
        self.inner.seek(to)
    }

    fn progress(&self) -> Locus {
        self.inner.progress()
    }

    fn span_bound(&self) -> Option<u64> {
        self.inner.span_bound()
    }
}

#[allow(dead_code)]
fn word_args(step: &Step) -> Vec<&str> {
    step.args.iter().filter_map(Arg::word).collect()
}
