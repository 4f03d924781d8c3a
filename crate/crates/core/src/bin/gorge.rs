//! `gorge` command-line interface: script runner, interactive shell,
//! fixture generator and cache tools.

use std::io::{self, BufRead, BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use gorge::engine::EngineCtx;
use gorge::fixtures::{self, GenSpec};
use gorge::model::{load_config, RowStream};
use gorge::planner::Environment;
use gorge::session::{Relation, Session, WriteFormat};
use gorge::Error;

#[derive(Parser)]
#[command(name = "gorge", version, about = "Genome-ordered relational queries over GORZ, RGC and TSV files")]
struct Cli {
    /// Configuration file; defaults to ./gorconfig.txt when present.
    #[arg(long, global = true, env = "GORGE_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the cache directory.
    #[arg(long, global = true)]
    cachedir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output format for `run -o`; inferred from the extension if omitted.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Omit the header line from TSV output.
    #[arg(long, global = true)]
    no_header: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Gorz,
    Rgc,
}

impl From<Format> for WriteFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tsv => WriteFormat::Tsv,
            Format::Gorz => WriteFormat::Gorz,
            Format::Rgc => WriteFormat::Rgc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs a script and writes its final query's rows.
    Run {
        script: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Partition column for gorz/rgc output.
        #[arg(long)]
        partition_by: Option<String>,
    },
    /// Interactive shell; statements end with `;`.
    Shell,
    /// Writes synthetic fixtures.
    Gen {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = GenSpec::default().variants)]
        variants: usize,
        #[arg(long, default_value_t = GenSpec::default().genes)]
        genes: usize,
        #[arg(long, default_value_t = GenSpec::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = GenSpec::default().buckets)]
        buckets: usize,
        #[arg(long, default_value_t = GenSpec::default().genotype_variants)]
        genotype_variants: usize,
    },
    /// Inspects or clears the materialization cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Checks a file's integrity and prints its row count.
    Verify { path: PathBuf },
}

#[derive(Subcommand)]
enum CacheAction {
    Ls,
    /// Shows the metadata of entries whose digest starts with a prefix.
    Explain { digest: String },
    Clear,
}

/// Failures of the command line itself, as opposed to query errors.
struct UsageError(String);

enum Failure {
    Usage(UsageError),
    Query(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Query(e)
    }
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

fn io_failure(e: io::Error) -> Failure {
    Failure::Query(Error::io("<stdout>", e))
}

fn environment(cli: &Cli) -> Result<Environment, Failure> {
    let config = match &cli.config {
        Some(p) if !p.is_file() => return Err(UsageError(format!("config file {} not found", p.display())).into()),
        Some(p) => Some(p.clone()),
        None => Some(PathBuf::from("gorconfig.txt")).filter(|p| p.is_file()),
    };
    let mut env = match config {
        Some(p) => {
            let mut c = load_config(&p)?;
            if let Some(w) = cli.workers {
                c.settings.workers = Some(w);
            }
            Environment::from_config(&c)
        }
        None => {
            let mut env = Environment::new(EngineCtx::new(None, "."), ".", gorge::model::DEFAULT_CACHE_DIR);
            if let Some(w) = cli.workers {
                env.workers = w.max(1);
            }
            env
        }
    };
    if let Some(d) = &cli.cachedir {
        env.cache.dir = d.clone();
    }
    if std::env::var("GORGE_FAULT").as_deref() == Ok("abort-before-commit") {
        env.cache.crash_hook = Some(Arc::new(|_| std::process::abort()));
    }
    Ok(env)
}

fn infer_format(path: &Path) -> WriteFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("gorz" | "gord") => WriteFormat::Gorz,
        Some("rgc" | "parquet") => WriteFormat::Rgc,
        _ => WriteFormat::Tsv,
    }
}

fn print_stream(s: &mut dyn RowStream, header: bool, out: &mut dyn Write) -> Result<u64, Failure> {
    if header {
        writeln!(out, "{}", s.schema().header_line()).map_err(io_failure)?;
    }
    let mut n = 0;
    while let Some(r) = s.next_row()? {
        out.write_all(r.line().as_bytes()).map_err(io_failure)?;
        out.write_all(b"\n").map_err(io_failure)?;
        n += 1;
    }
    out.flush().map_err(io_failure)?;
    Ok(n)
}

fn run(cli: &Cli, script: &Path, out: Option<&Path>, partition_by: Option<&str>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(script)
        .map_err(|e| UsageError(format!("cannot read script {}: {e}", script.display())))?;
    let mut session = Session::new(environment(cli)?);
    let rel = session.script(&text)?;
    match out {
        Some(p) => {
            let format = cli.format.map(WriteFormat::from).unwrap_or_else(|| infer_format(p));
            rel.write(p, format, partition_by)?;
        }
        None => {
            if partition_by.is_some() {
                return Err(UsageError("--partition-by needs -o".into()).into());
            }
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            print_stream(rel.stream()?.as_mut(), !cli.no_header, &mut w)?;
        }
    }
    Ok(())
}

const META: [&str; 6] = ["\\schema", "\\explain", "\\timing", "\\help", "\\quit", "\\q"];

fn shell(cli: &Cli) -> Result<(), Failure> {
    let mut session = Session::new(environment(cli)?);
    let interactive = io::stdin().is_terminal();
    let mut timing = false;
    let mut pending = String::new();
    let stdout = io::stdout();
    let prompt = |pending: &str| {
        if interactive {
            eprint!("{}", if pending.is_empty() { "gorge> " } else { "  ...> " });
            let _ = io::stderr().flush();
        }
    };
    prompt(&pending);
    for line in io::stdin().lock().lines() {
        let line = line.map_err(|e| Failure::Query(Error::io("<stdin>", e)))?;
        let trimmed = line.trim();
        if pending.is_empty() && trimmed.starts_with('\\') {
            let (cmd, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
            let rest = rest.trim().trim_end_matches(';');
            let r: Result<(), Failure> = match cmd {
                "\\q" | "\\quit" => return Ok(()),
                "\\timing" => {
                    timing = !timing;
                    println!("timing {}", if timing { "on" } else { "off" });
                    Ok(())
                }
                "\\schema" => session.relation(rest).map(|r| println!("{}", r.schema().header_line())).map_err(Into::into),
                "\\explain" => session.explain(rest).map(|t| print!("{t}")).map_err(Into::into),
                "\\help" => {
                    println!("statements end with ';'. meta-commands: \\schema <query>, \\explain <query>, \\timing, \\q");
                    Ok(())
                }
                other => {
                    let near = META.iter().max_by(|a, b| {
                        strsim::jaro_winkler(other, a).total_cmp(&strsim::jaro_winkler(other, b))
                    });
                    Err(UsageError(format!("unknown command {other}; did you mean {}?", near.unwrap())).into())
                }
            };
            if let Err(e) = r {
                report(&e);
            }
            prompt(&pending);
            continue;
        }
        pending.push_str(&line);
        pending.push('\n');
        if !trimmed.ends_with(';') {
            prompt(&pending);
            continue;
        }
        let stmt = std::mem::take(&mut pending);
        let stmt = stmt.trim().trim_end_matches(';');
        let start = Instant::now();
        let keyword = stmt.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
        let r: Result<(), Failure> = if keyword == "def" || keyword == "create" {
            session.set_creates(stmt).map_err(Into::into)
        } else {
            session.relation(stmt).map_err(Into::into).and_then(|rel: Relation| {
                let mut w = stdout.lock();
                print_stream(rel.stream()?.as_mut(), !cli.no_header, &mut w).map(|n| {
                    if timing {
                        eprintln!("{n} rows");
                    }
                })
            })
        };
        match r {
            Ok(()) if timing => eprintln!("time: {:.3} s", start.elapsed().as_secs_f64()),
            Ok(()) => {}
            Err(e) => report(&e),
        }
        prompt(&pending);
    }
    Ok(())
}

fn cache(cli: &Cli, action: &CacheAction) -> Result<(), Failure> {
    let env = environment(cli)?;
    match action {
        CacheAction::Ls => {
            for e in env.cache.entries()? {
                println!("{}\t{}\t{}", e.digest, e.get("name").unwrap_or("-"), e.artifact().display());
            }
        }
        CacheAction::Explain { digest } => {
            let found = env.cache.find(digest)?;
            if found.is_empty() {
                return Err(UsageError(format!("no cache entry matches '{digest}'")).into());
            }
            for e in found {
                println!("digest\t{}", e.digest);
                for (k, v) in &e.meta {
                    println!("{k}\t{v}");
                }
            }
        }
        CacheAction::Clear => println!("removed {} entries", env.cache.clear()?),
    }
    Ok(())
}

fn report(f: &Failure) {
    match f {
        Failure::Usage(UsageError(m)) => eprintln!("error:Usage: {m}"),
        Failure::Query(e) => eprintln!("error:{}: {e}", e.kind()),
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { script, out, partition_by } => run(cli, script, out.as_deref(), partition_by.as_deref()),
        Command::Shell => shell(cli),
        Command::Gen { out, seed, variants, genes, samples, buckets, genotype_variants } => {
            if *variants == 0 {
                return Err(UsageError("--variants must be positive".into()).into());
            }
            let spec = GenSpec {
                seed: *seed,
                variants: *variants,
                genes: *genes,
                samples: *samples,
                buckets: *buckets,
                genotype_variants: *genotype_variants,
                ..GenSpec::default()
            };
            for (name, rows) in fixtures::generate(out, &spec)?.files {
                println!("{name}\t{rows}");
            }
            Ok(())
        }
        Command::Cache { action } => cache(cli, action),
        Command::Verify { path } => {
            let env = environment(cli)?;
            let rows = gorge::storage::verify_path(path, env.ctx.build.clone())?;
            println!("ok\t{rows} rows");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("error:Usage: {}", msg.lines().next().unwrap_or("").trim_start_matches("error: "));
            eprint!("{}", msg.split_once('\n').map(|(_, r)| r).unwrap_or(""));
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::from(if matches!(f, Failure::Usage(_)) { 2 } else { 1 })
        }
    }
}
