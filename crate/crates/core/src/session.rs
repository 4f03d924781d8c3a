//! The programmatic session: registered tables, accumulated defs and
//! creates, and lazy relations over them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::engine::refseq::RefSeq;
use crate::engine::EngineCtx;
use crate::error::{Error, Result};
use crate::model::{collect_rows, BoxStream, Config, Schema, Table};
use crate::parser::{check_cycles, parse_query, parse_tail, parse_with_defs, Create, Query, Span, Step};
use crate::planner::{Catalog, Environment, Planner, Registered};
use crate::storage::{self, PartFormat};

/// Output formats for [`Relation::write`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteFormat {
    Tsv,
    Gorz,
    Rgc,
}

impl std::str::FromStr for WriteFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(WriteFormat::Tsv),
            "gorz" | "gord" => Ok(WriteFormat::Gorz),
            "rgc" | "parquet" => Ok(WriteFormat::Rgc),
            other => Err(Error::Usage(format!("unknown format '{other}', expected tsv, gorz or rgc"))),
        }
    }
}

impl Environment {
    /// Engine settings from a loaded configuration.
    pub fn from_config(config: &Config) -> Environment {
        let s = &config.settings;
        let mut ctx = EngineCtx::new(Some(config.build.clone()), &s.root);
        ctx.refseq = s.refseq_path.as_ref().map(|p| Arc::new(RefSeq::open(p)));
        let mut env = Environment::new(ctx, &s.root, &s.cache_dir);
        env.workers = s.worker_count();
        env.split_count = s.split_count;
        env
    }
}

fn bare(name: &str) -> String {
    name.trim().trim_start_matches("[#").trim_end_matches("#]").trim_matches('#').to_string()
}

/// Holds the state queries are evaluated against. Mutation is not
/// synchronized with consumption; relations keep the catalog they were
/// defined with.
pub struct Session {
    env: Arc<Environment>,
    defs: Vec<(String, String)>,
    creates: Vec<Create>,
    registered: HashMap<String, Registered>,
}

impl Session {
    pub fn new(env: Environment) -> Session {
        Session { env: Arc::new(env), defs: Vec::new(), creates: Vec::new(), registered: HashMap::new() }
    }

    pub fn from_config(config: &Config) -> Session {
        Session::new(Environment::from_config(config))
    }

    /// Loads `gorconfig.txt`-style configuration.
    pub fn open(config_path: impl AsRef<Path>) -> Result<Session> {
        Ok(Session::from_config(&crate::model::load_config(config_path)?))
    }

    /// A session without a reference build; genome-ordered work fails with
    /// `BuildRequired`.
    pub fn without_build(root: impl Into<PathBuf>, cache_dir: impl Into<PathBuf>) -> Session {
        let root = root.into();
        Session::new(Environment::new(EngineCtx::new(None, &root), root, cache_dir))
    }

    pub fn env(&self) -> &Arc<Environment> {
        &self.env
    }

    pub fn defs(&self) -> &[(String, String)] {
        &self.defs
    }

    pub fn creates(&self) -> &[Create] {
        &self.creates
    }

    pub fn registered_names(&self) -> Vec<String> {
        let mut n: Vec<String> = self.registered.keys().cloned().collect();
        n.sort();
        n
    }

    fn catalog(&self) -> Arc<Catalog> {
        Arc::new(Catalog { defs: self.defs.clone(), creates: self.creates.clone(), registered: self.registered.clone() })
    }

    pub fn planner(&self) -> Planner {
        Planner::new(self.env.clone(), self.catalog())
    }

    fn register(&mut self, name: &str, rel: Registered) -> Result<()> {
        let name = bare(name);
        if name.is_empty() || !name.bytes().all(crate::parser::scan::is_ident_char) {
            return Err(Error::Usage(format!("invalid relation name '{name}'")));
        }
        if self.creates.iter().any(|c| c.name == name) {
            return Err(Error::NameCollision(name));
        }
        self.registered.insert(name, rel);
        Ok(())
    }

    /// Registers in-memory rows under `name`, replacing any earlier table of
    /// that name.
    pub fn register_table(&mut self, name: &str, table: Table) -> Result<()> {
        self.register(name, Registered::table(table))
    }

    /// Registers a file-backed table under `name`.
    pub fn register_file(&mut self, name: &str, path: impl Into<PathBuf>) -> Result<()> {
        self.register(name, Registered::file(path))
    }

    pub fn unregister(&mut self, name: &str) -> bool {
        self.registered.remove(&bare(name)).is_some()
    }

    fn merge(&mut self, defs: Vec<(String, String)>, creates: Vec<Create>) -> Result<()> {
        let mut merged = self.creates.clone();
        for c in creates {
            match merged.iter_mut().find(|m| m.name == c.name) {
                Some(m) => *m = c,
                None => merged.push(c),
            }
        }
        check_cycles(merged.iter().map(|c| (c.name.as_str(), c.span.0, c.query.references())))?;
        for (n, v) in defs {
            self.defs.retain(|(m, _)| *m != n);
            self.defs.push((n, v));
        }
        self.creates = merged;
        Ok(())
    }

    /// Adds the defs and creates of a script fragment. Nothing is evaluated.
    pub fn set_creates(&mut self, text: &str) -> Result<()> {
        let script = parse_with_defs(text, &self.defs, false)?;
        if script.query.is_some() {
            return Err(Error::Usage("set_creates takes only def and create statements".into()));
        }
        self.merge(script.defs, script.creates)
    }

    /// Adds or replaces one create.
    pub fn set_create(&mut self, name: &str, query: &str) -> Result<()> {
        let name = bare(name);
        let query = parse_query(query, &self.defs)?;
        self.merge(Vec::new(), vec![Create { name, query, span: Span(0) }])
    }

    /// Adds or replaces a def; `name` is used as written, e.g. `#VEP#`.
    pub fn set_def(&mut self, name: &str, value: &str) {
        self.defs.retain(|(m, _)| m != name);
        self.defs.push((name.to_string(), value.trim().to_string()));
    }

    /// A lazy relation over one query. Its schema is inferred now; rows are
    /// produced (and creates evaluated) only when it is consumed.
    pub fn relation(&self, text: &str) -> Result<Relation> {
        let query = parse_query(text, &self.defs)?;
        Relation::new(self.env.clone(), self.catalog(), query, Vec::new())
    }

    /// Runs a whole script: its defs and creates join the session and its
    /// final query becomes the returned relation.
    pub fn script(&mut self, text: &str) -> Result<Relation> {
        let script = parse_with_defs(text, &self.defs, true)?;
        self.merge(script.defs, script.creates)?;
        Relation::new(self.env.clone(), self.catalog(), script.query.expect("required"), Vec::new())
    }

    /// Evaluation order, signatures and cache state for a query.
    pub fn explain(&self, text: &str) -> Result<String> {
        let planner = self.planner();
        let query = parse_query(text, &self.defs)?;
        let mut out = format!("query\t{query}\n");
        for name in planner.evaluation_order(&query) {
            let sig = planner.signature(&name)?;
            let state = if self.env.cache.lookup(&sig).is_some() { "cached" } else { "pending" };
            out.push_str(&format!("create\t{name}\t{}\t{state}\n", &sig[..16]));
        }
        if query.context == crate::parser::Context::Pgor {
            let (plan, a) = planner.split_plan(&query)?;
            out.push_str(&format!("split\t{:?}\t{} tasks\tgranule {}\n", plan.kind, plan.tasks.len(), a.granule));
        }
        Ok(out)
    }
}

/// A query bound to a session snapshot. Consuming it twice re-executes,
/// reusing cached creates.
#[derive(Clone)]
pub struct Relation {
    env: Arc<Environment>,
    catalog: Arc<Catalog>,
    query: Query,
    tail: Vec<Step>,
    schema: Schema,
}

impl std::fmt::Debug for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Relation").field("query", &self.query.to_string()).field("schema", &self.schema).finish()
    }
}

impl Relation {
    fn new(env: Arc<Environment>, catalog: Arc<Catalog>, query: Query, tail: Vec<Step>) -> Result<Relation> {
        let planner = Planner::new(env.clone(), catalog.clone());
        let s = planner.tail(planner.bind(&query)?, &tail)?;
        let schema = s.schema().clone();
        Ok(Relation { env, catalog, query, tail, schema })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    /// Evaluates pending creates, then streams the rows.
    pub fn stream(&self) -> Result<BoxStream> {
        let planner = Planner::new(self.env.clone(), self.catalog.clone());
        let s = planner.evaluate(&self.query)?;
        planner.tail(s, &self.tail)
    }

    pub fn collect(&self) -> Result<Table> {
        let mut s = self.stream()?;
        let rows = collect_rows(s.as_mut())?;
        Ok(Table { schema: s.schema().clone(), rows })
    }

    pub fn count(&self) -> Result<u64> {
        let mut s = self.stream()?;
        let mut n = 0;
        while s.next_row()?.is_some() {
            n += 1;
        }
        Ok(n)
    }

    /// This relation followed by pipe steps, e.g. `sort genome`.
    pub fn gor(&self, tail: &str) -> Result<Relation> {
        let mut steps = self.tail.clone();
        steps.extend(parse_tail(tail, &self.catalog.defs)?);
        Relation::new(self.env.clone(), self.catalog.clone(), self.query.clone(), steps)
    }

    /// Writes the rows to `path`. GORZ output must be genome-ordered (within
    /// each partition when `partition_by` is given); partitioned output is a
    /// folder.
    pub fn write(&self, path: impl AsRef<Path>, format: WriteFormat, partition_by: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let build = self.env.ctx.build.clone();
        let mut s = self.stream()?;
        match (format, partition_by) {
            (WriteFormat::Tsv, None) => {
                storage::tsv::write_tsv(s.as_mut(), path, true, true)?;
            }
            (WriteFormat::Tsv, Some(_)) => {
                return Err(Error::Usage("partitionBy needs gorz or rgc output".into()));
            }
            (WriteFormat::Gorz, None) if !path.extension().is_some_and(|e| e == "gord") => {
                let b = self.env.ctx.build("writing GORZ")?;
                storage::gorz::write_gorz(s.as_mut(), path, b, storage::gorz::DEFAULT_BLOCK_ROWS)?;
            }
            (WriteFormat::Gorz, p) => {
                storage::write_partitioned(s.as_mut(), path, PartFormat::Gorz, p, build, storage::gorz::DEFAULT_BLOCK_ROWS)?;
            }
            (WriteFormat::Rgc, None) => {
                storage::rgc::write_rgc(s.as_mut(), path, storage::rgc::DEFAULT_GROUP_ROWS, build.as_deref())?;
            }
            (WriteFormat::Rgc, p) => {
                storage::write_partitioned(s.as_mut(), path, PartFormat::Rgc, p, build, storage::gorz::DEFAULT_BLOCK_ROWS)?;
            }
        }
        Ok(())
    }
}
