//! End-to-end acceptance checks, one PASS/FAIL line per criterion. Arguments
//! that do not start with `-` restrict the run to criteria whose name
//! contains one of them.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gorge::engine::varnorm::normalize_left;
use gorge::engine::{bind_steps, EngineCtx, RefSeq, Resolver, DEFAULT_SEEK_THRESHOLD};
use gorge::fixtures::GenSpec;
use gorge::model::{
    collect_rows, load_config, BoxStream, ContigOrder, Row, RowStream, Schema, Table, TableStream, VecStream,
};
use gorge::parser::{parse_script, parse_tail, RelRef};
use gorge::planner::{Cache, Environment};
use gorge::session::Session;
use gorge::storage::{gorz, rgc, GorzFile, GorzWriter, IoStats, RgcFile};
use gorge::{Error, Result};

use common::corpus;

type Check = fn() -> String;

const CRITERIA: [(&str, Check); 12] = [
    ("golden corpus", golden_corpus),
    ("ex5 equals ex6", ex5_equals_ex6),
    ("parallel equals serial", parallel_equals_serial),
    ("join oracles", join_oracles),
    ("storage round trips", storage_round_trips),
    ("cache behaviour", cache_behaviour),
    ("varnorm canonical forms", varnorm_canonical),
    ("csvsel oracle", csvsel_oracle),
    ("seghist bounds and tiling", seghist_tiling),
    ("gorz range and scan speed", gorz_speed),
    ("rgc like-prefix push-down", rgc_pushdown),
    ("parser fuzz and fixpoint", parser_fuzz),
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(p) => {
                failed += 1;
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {:>2} {name}: FAIL ({})", i + 1, msg.lines().next().unwrap_or(""));
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_build() -> Arc<ContigOrder> {
    Arc::new(ContigOrder::new([("chr1".to_string(), 1_000_000), ("chr2".to_string(), 500_000)]).unwrap())
}

fn mk_table(names: &[&str], ordered: bool, rows: Vec<Vec<String>>) -> Table {
    Table::new(Schema::from_names(names, ordered).unwrap(), rows.into_iter().map(Row::from_cells).collect()).unwrap()
}

fn open_table(t: &Table, build: &ContigOrder) -> BoxStream {
    if t.schema.is_ordered() {
        Box::new(TableStream::ordered(Arc::new(t.clone()), build).unwrap())
    } else {
        Box::new(VecStream::new(t.schema.clone(), t.rows.clone()))
    }
}

/// Resolves `[#name#]` against in-memory tables.
struct Tables {
    build: Arc<ContigOrder>,
    tables: HashMap<String, Table>,
}

impl Resolver for Tables {
    fn open(&self, rel: &RelRef, _ordered: bool) -> Result<BoxStream> {
        let RelRef::Virtual(name) = rel else { return Err(Error::Usage(format!("unexpected source {rel}"))) };
        let t = self.tables.get(name).ok_or_else(|| Error::UnresolvedRelation(name.clone()))?;
        Ok(open_table(t, &self.build))
    }
}

fn run_tail(input: &Table, tail: &str, tables: &Tables, ctx: &EngineCtx) -> Result<Vec<Vec<String>>> {
    let steps = parse_tail(tail, &[])?;
    let mut s = bind_steps(open_table(input, &tables.build), &steps, ctx, tables)?;
    Ok(collect_rows(s.as_mut())?.iter().map(|r| r.to_vec()).collect())
}

/// A directory holding a build file and a config pointing at it.
fn config_dir(contigs: &[(&str, u64)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let build: String = contigs.iter().map(|(c, l)| format!("{c}\t{l}\n")).collect();
    std::fs::write(dir.path().join("build.tsv"), build).unwrap();
    std::fs::write(dir.path().join("gorconfig.txt"), "buildpath\tbuild.tsv\ncachedir\tgorcache\n").unwrap();
    dir
}

/// Rows produced on demand, for tables too large to hold in memory.
struct Synth<F> {
    schema: Schema,
    next: u64,
    n: u64,
    row: F,
}

impl<F: FnMut(u64) -> Row + Send> RowStream for Synth<F> {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if self.next == self.n {
            return Ok(None);
        }
        self.next += 1;
        Ok(Some((self.row)(self.next - 1)))
    }
}

// ----------------------------------------------------------- 1. golden

fn golden_corpus() -> String {
    for n in corpus::EXAMPLES {
        let dir = common::fixture_dir(&common::golden_spec());
        let got = corpus::run(n, dir.path()).unwrap_or_else(|e| panic!("example {n}: error:{}: {e}", e.kind()));
        common::check_golden(&format!("ex{n:02}.tsv"), &got);
    }
    format!("{} examples byte-exact", corpus::EXAMPLES.len())
}

// ------------------------------------------------------- 2. ex5 == ex6

fn ex5_equals_ex6() -> String {
    let (mut subjects, mut rows) = (0, 0);
    for seed in 0..100u64 {
        let spec = GenSpec {
            seed,
            variants: 300,
            genes: 4,
            samples: 30,
            buckets: 2,
            genotype_variants: 300,
            ..GenSpec::default()
        };
        let dir = common::fixture_dir(&spec);
        let outputs: Vec<_> = [5, 6]
            .iter()
            .map(|&n| {
                let text = corpus::script(n);
                let mut s = common::session(dir.path());
                let mut run = |q: &str| common::sorted(common::cells(&s.script(q).unwrap().collect().unwrap()));
                let head = &text[..text.rfind(';').unwrap() + 1];
                (run(&format!("{head}\nnor [#mySubjects#]")), run(&text))
            })
            .collect();
        assert_eq!(outputs[0], outputs[1], "seed {seed}");
        subjects += outputs[0].0.len();
        rows += outputs[0].1.len();
    }
    assert!(subjects > 0 && rows > 0, "degenerate fixtures: {subjects} subjects, {rows} rows");
    format!("100 seeds, {subjects} subject rows, {rows} result rows")
}

// ------------------------------------------------- 3. pgor == serial

fn random_pipeline(r: &mut ChaCha8Rng) -> (String, Vec<String>) {
    let source = ["dbsnp.gorz", "vep.gorz", "variants.gord"].choose(r).unwrap().to_string();
    let mut steps = Vec::new();
    for k in 0..r.gen_range(1..5) {
        let f = [0, 1, 20, 500].choose(r).unwrap();
        let step = match r.gen_range(0..9) {
            0 => format!("where pos > {}", r.gen_range(0..60_000)),
            1 => "where len(ref) = 1".to_string(),
            2 => format!("calc c{k} pos + {}", r.gen_range(0..100)),
            3 => format!("calc t{k} if(len(ref)=len(alt),'snp','indel')"),
            4 => "varjoin -i vep.gorz".to_string(),
            5 => format!("varjoin -l -e NA -r <(gor vep.gorz | rename consequence v{k})"),
            6 => format!("join -snpseg -i -f {f} genes.gorz"),
            7 => format!(
                "join -snpseg -f {f} <(gor genes.gorz | rename gene_start s{k} | rename gene_end e{k} | rename gene_symbol g{k})"
            ),
            _ => "where alt != 'A'".to_string(),
        };
        steps.push(step);
    }
    match r.gen_range(0..4) {
        0 => steps.push(format!("group {} -count", [100, 1000, 5000].choose(r).unwrap())),
        1 => steps.push("group 1000 -gc ref -count".to_string()),
        2 => steps.push("select 1-4".to_string()),
        _ => {}
    }
    (source, steps)
}

fn parallel_equals_serial() -> String {
    let dir = common::fixture_dir(&GenSpec { variants: 3000, genes: 20, ..GenSpec::default() });
    let mut s = common::session(dir.path());
    let segs = "create #segs# = gor LDpruned_variants.gorz | group 5000 -count | seghist 20;\n";
    let mut r = rng(3);
    let mut total = 0;
    for i in 0..50 {
        let (source, steps) = random_pipeline(&mut r);
        let tail = steps.iter().map(|st| format!(" | {st}")).collect::<String>();
        let serial = common::tsv(&s.script(&format!("gor {source}{tail}")).unwrap().collect().unwrap());
        for plan in ["", "-split 7 ", "-split [#segs#] "] {
            let text = format!("{segs}pgor {plan}{source}{tail}");
            let got = s.script(&text).unwrap_or_else(|e| panic!("pipeline {i}: {text}: {e}")).collect().unwrap();
            assert_eq!(common::tsv(&got), serial, "pipeline {i}: {text}");
        }
        total += serial.lines().count() - 1;
    }
    format!("50 pipelines x 3 plans, {total} serial rows")
}

// ------------------------------------------------------- 4. join oracles

#[derive(Clone, Copy, PartialEq)]
enum Geom {
    Var,
    SegSnp,
    SnpSeg,
    SegSeg,
}

struct Side {
    table: Table,
    /// (contig, start, end) per row; end == start for points.
    spans: Vec<(String, i64, i64)>,
}

fn gen_side(r: &mut ChaCha8Rng, n: usize, seg: bool, var: bool, p: &str, span: u64, seg_len: u64) -> Side {
    let mut raw: Vec<(u8, u64, u64, usize, usize)> = (0..n)
        .map(|_| (r.gen_range(1..=2), r.gen_range(1..=span), r.gen_range(0..=seg_len), r.gen_range(0..3), r.gen_range(0..3)))
        .collect();
    raw.sort_by_key(|x| (x.0, x.1));
    let names: Vec<String> = if var {
        vec!["chrom".into(), "pos".into(), "ref".into(), "alt".into(), format!("{p}v")]
    } else if seg {
        vec!["chrom".into(), format!("{p}start"), format!("{p}stop"), format!("{p}v")]
    } else {
        vec!["chrom".into(), format!("{p}pos"), format!("{p}v")]
    };
    let mut rows = Vec::new();
    let mut spans = Vec::new();
    for (i, &(c, pos, len, a, b)) in raw.iter().enumerate() {
        let contig = format!("chr{c}");
        let mut cells = vec![contig.clone(), pos.to_string()];
        let end = if seg { pos + len } else { pos };
        if var {
            cells.push(["A", "C", "AT"][a].to_string());
            cells.push(["G", "T", "GA"][b].to_string());
        } else if seg {
            cells.push(end.to_string());
        }
        cells.push(format!("{p}{i}"));
        rows.push(cells);
        spans.push((contig, pos as i64, end as i64));
    }
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    Side { table: mk_table(&names, true, rows), spans }
}

/// Nested-loop join over all pairs.
fn join_oracle(l: &Side, r: &Side, g: Geom, kind: usize, drop: bool, fuzz: i64) -> Vec<Vec<String>> {
    let hit = |i: usize, j: usize| {
        let (lc, ls, le) = &l.spans[i];
        let (rc, rs, re) = &r.spans[j];
        if lc != rc {
            return false;
        }
        match g {
            Geom::Var => {
                let (a, b) = (&l.table.rows[i], &r.table.rows[j]);
                ls == rs && a.cell(2) == b.cell(2) && a.cell(3) == b.cell(3)
            }
            // point vs segment and segment vs segment are all interval overlap
            // with the fuzz widening the left side
            _ => *rs <= le + fuzz && *re >= ls - fuzz,
        }
    };
    let width = r.table.schema.len();
    let payload: Vec<usize> = (1..width)
        .filter(|&k| match g {
            Geom::Var => k != 1 && !(drop && (k == 2 || k == 3)),
            Geom::SnpSeg | Geom::SegSeg => !(drop && (k == 1 || k == 2)),
            Geom::SegSnp => !(drop && k == 1),
        })
        .collect();
    let mut out = Vec::new();
    if kind == 3 {
        for j in 0..r.table.rows.len() {
            if (0..l.table.rows.len()).any(|i| hit(i, j)) {
                out.push(r.table.rows[j].to_vec());
            }
        }
        return out;
    }
    for i in 0..l.table.rows.len() {
        let m: Vec<usize> = (0..r.table.rows.len()).filter(|&j| hit(i, j)).collect();
        let left = l.table.rows[i].to_vec();
        match kind {
            2 if !m.is_empty() => out.push(left),
            1 if m.is_empty() => {
                let mut v = left;
                v.extend(payload.iter().map(|_| "NA".to_string()));
                out.push(v);
            }
            0 | 1 => {
                for j in m {
                    let mut v = left.clone();
                    v.extend(payload.iter().map(|&k| r.table.rows[j].cell(k).to_string()));
                    out.push(v);
                }
            }
            _ => {}
        }
    }
    out
}

fn join_oracles() -> String {
    let mut r = rng(4);
    let build = small_build();
    let (mut rows, mut nonempty) = (0, 0);
    for i in 0..1000usize {
        let g = [Geom::Var, Geom::SegSnp, Geom::SnpSeg, Geom::SegSeg][i % 4];
        let kind = (i / 4) % 4;
        let drop = (i / 16) % 2 == 1;
        let fuzz = if g == Geom::Var { 0 } else { [0, 1, 20][(i / 32) % 3] };
        let span = *[300u64, 3000, 100_000].choose(&mut r).unwrap();
        let seg_len = *[0u64, 30, 2000].choose(&mut r).unwrap();
        let (nl, nr) = (r.gen_range(0..=500), r.gen_range(0..=500));
        let (lseg, rseg) = match g {
            Geom::Var | Geom::SnpSeg => (false, g == Geom::SnpSeg),
            Geom::SegSnp => (true, false),
            Geom::SegSeg => (true, true),
        };
        let var = g == Geom::Var;
        let left = gen_side(&mut r, nl, lseg, var, "l", span, seg_len);
        let right = gen_side(&mut r, nr, rseg, var, "r", span, seg_len);
        let flags = ["", " -l -e NA", " -i", " -ir"][kind];
        let drop_flag = if drop { " -r" } else { "" };
        let step = match g {
            Geom::Var => format!("varjoin{flags}{drop_flag} [#R#]"),
            _ => {
                let geom = ["", "segsnp", "snpseg", "segseg"][i % 4];
                format!("join -{geom}{flags}{drop_flag} -f {fuzz} [#R#]")
            }
        };
        let want = join_oracle(&left, &right, g, kind, drop, fuzz);
        let tables = Tables { build: build.clone(), tables: HashMap::from([("R".to_string(), right.table.clone())]) };
        for t in [0, DEFAULT_SEEK_THRESHOLD, usize::MAX] {
            let mut ctx = EngineCtx::new(Some(build.clone()), ".");
            ctx.seek_threshold = t;
            let got = run_tail(&left.table, &step, &tables, &ctx).unwrap_or_else(|e| panic!("{step}: {e}"));
            assert!(got == want, "instance {i}: {step} threshold {t}: {} rows, oracle {}", got.len(), want.len());
        }
        rows += want.len();
        nonempty += usize::from(!want.is_empty());
    }
    assert!(nonempty > 500, "only {nonempty} instances produced rows");
    format!("1000 instances x 3 thresholds, {rows} oracle rows")
}

// -------------------------------------------------------- 5. storage

#[derive(Debug)]
enum Pred {
    Pos(&'static str, u64),
    Eq(usize, String),
    Like(usize, String),
    Chrom(String),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

impl Pred {
    fn random(r: &mut ChaCha8Rng, extra: usize, depth: u32) -> Pred {
        let word = |r: &mut ChaCha8Rng| -> String { (0..r.gen_range(0..3)).map(|_| *b"abcd".choose(r).unwrap() as char).collect() };
        match r.gen_range(0..if depth > 0 { 6 } else { 4 }) {
            0 => Pred::Pos(["<", "<=", ">", ">=", "="].choose(r).unwrap(), r.gen_range(0..100_000)),
            1 => Pred::Eq(r.gen_range(0..extra), word(r)),
            2 => Pred::Like(r.gen_range(0..extra), word(r)),
            3 => Pred::Chrom(format!("chr{}", r.gen_range(1..=3))),
            4 => Pred::And(Box::new(Pred::random(r, extra, depth - 1)), Box::new(Pred::random(r, extra, depth - 1))),
            _ => Pred::Or(Box::new(Pred::random(r, extra, depth - 1)), Box::new(Pred::random(r, extra, depth - 1))),
        }
    }

    fn sql(&self) -> String {
        match self {
            Pred::Pos(op, v) => format!("pos {op} {v}"),
            Pred::Eq(c, w) => format!("c{c} = '{w}'"),
            Pred::Like(c, w) => format!("c{c} like '{w}%'"),
            Pred::Chrom(c) => format!("chrom = '{c}'"),
            Pred::And(a, b) => format!("({} and {})", a.sql(), b.sql()),
            Pred::Or(a, b) => format!("({} or {})", a.sql(), b.sql()),
        }
    }

    fn eval(&self, row: &[String]) -> bool {
        match self {
            Pred::Pos(op, v) => {
                let p: u64 = row[1].parse().unwrap();
                match *op {
                    "<" => p < *v,
                    "<=" => p <= *v,
                    ">" => p > *v,
                    ">=" => p >= *v,
                    _ => p == *v,
                }
            }
            Pred::Eq(c, w) => row[2 + c] == *w,
            Pred::Like(c, w) => row[2 + c].starts_with(w.as_str()),
            Pred::Chrom(c) => row[0] == *c,
            Pred::And(a, b) => a.eval(row) && b.eval(row),
            Pred::Or(a, b) => a.eval(row) || b.eval(row),
        }
    }
}

fn storage_round_trips() -> String {
    let dir = config_dir(&[("chr1", 100_000), ("chr2", 100_000), ("chr3", 100_000)]);
    let cfg = load_config(dir.path().join("gorconfig.txt")).unwrap();
    let build = cfg.build.clone();
    let s = Session::from_config(&cfg);
    let stats = Arc::new(IoStats::default());
    let mut r = rng(5);
    let (mut rows_total, mut hits) = (0, 0);
    for i in 0..10_000 {
        let extra = r.gen_range(1..=4);
        let mut names = vec!["chrom".to_string(), "pos".to_string()];
        names.extend((0..extra).map(|c| format!("c{c}")));
        let n = r.gen_range(0..150);
        let mut raw: Vec<(u32, u64, Vec<String>)> = (0..n)
            .map(|_| {
                let cells = (0..extra)
                    .map(|_| (0..r.gen_range(0..4)).map(|_| *b"abcd".choose(&mut r).unwrap() as char).collect())
                    .collect();
                (r.gen_range(1..=3), r.gen_range(1..=100_000), cells)
            })
            .collect();
        raw.sort_by_key(|x| (x.0, x.1));
        let rows: Vec<Vec<String>> = raw
            .into_iter()
            .map(|(c, p, cells)| {
                let mut v = vec![format!("chr{c}"), p.to_string()];
                v.extend(cells);
                v
            })
            .collect();
        rows_total += rows.len();
        let names_ref: Vec<&str> = names.iter().map(String::as_str).collect();
        let t = mk_table(&names_ref, true, rows.clone());

        let gz = dir.path().join(format!("t{i}.gorz"));
        gorz::write_gorz(open_table(&t, &build).as_mut(), &gz, build.clone(), r.gen_range(1..=16)).unwrap();
        let f = Arc::new(GorzFile::open(&gz, build.clone()).unwrap());
        let mut back = f.clone().stream(None, stats.clone()).unwrap();
        assert_eq!(back.schema().header_line(), t.schema.header_line(), "table {i}");
        let back: Vec<Vec<String>> = collect_rows(&mut back).unwrap().iter().map(|r| r.to_vec()).collect();
        assert_eq!(back, rows, "gorz table {i}");

        let c = r.gen_range(1..=3u32);
        let a = r.gen_range(1..=100_000u64);
        let b = (a + r.gen_range(0..30_000)).min(100_000);
        let range = common::cells(&s.relation(&format!("gor -p chr{c}:{a}-{b} t{i}.gorz")).unwrap().collect().unwrap());
        let oracle: Vec<Vec<String>> = rows
            .iter()
            .filter(|v| v[0] == format!("chr{c}") && (a..=b).contains(&v[1].parse::<u64>().unwrap()))
            .cloned()
            .collect();
        assert_eq!(range, oracle, "gorz table {i} range chr{c}:{a}-{b}");

        let rg = dir.path().join(format!("t{i}.rgc"));
        rgc::write_rgc(open_table(&t, &build).as_mut(), &rg, r.gen_range(1..=16), Some(&build)).unwrap();
        let f = Arc::new(RgcFile::open(&rg).unwrap());
        let mut back = f.scan(None, None, stats.clone()).unwrap();
        assert_eq!(back.schema().header_line(), t.schema.header_line(), "table {i}");
        let back: Vec<Vec<String>> = collect_rows(&mut back).unwrap().iter().map(|r| r.to_vec()).collect();
        assert_eq!(back, rows, "rgc table {i}");

        let pred = Pred::random(&mut r, extra, 2);
        let q = format!("select * from t{i}.rgc where {}", pred.sql());
        let got = common::cells(&s.relation(&q).unwrap_or_else(|e| panic!("{q}: {e}")).collect().unwrap());
        let oracle: Vec<Vec<String>> = rows.iter().filter(|v| pred.eval(v)).cloned().collect();
        assert_eq!(got, oracle, "table {i}: {q}");
        hits += oracle.len();
        std::fs::remove_file(&gz).unwrap();
        std::fs::remove_file(&rg).unwrap();
    }

    // balanced contigs: a single-contig range touches about a third of the blocks
    let per = 20_000u64;
    let t = mk_table(
        &["chrom", "pos", "v"],
        true,
        (0..3 * per).map(|k| vec![format!("chr{}", k / per + 1), (k % per * 5 + 1).to_string(), format!("v{k}")]).collect(),
    );
    let big = dir.path().join("balanced.gorz");
    let (_, blocks) = gorz::write_gorz(open_table(&t, &build).as_mut(), &big, build.clone(), 256).unwrap();
    let s = Session::from_config(&cfg);
    let n = s.relation("gor -p chr2 balanced.gorz").unwrap().count().unwrap();
    assert_eq!(n, per);
    let read = s.env().stats.snapshot().blocks_read;
    let frac = read as f64 / blocks as f64;
    assert!(frac < 0.4, "read {read} of {blocks} blocks");
    format!("10000 tables ({rows_total} rows), {hits} predicate hits, chr2 read {read}/{blocks} blocks")
}

// ---------------------------------------------------------- 6. cache

const CACHE_SCRIPT: &str = "create #a# = gor dbsnp.gorz | where len(ref) = 1;
create #b# = nor varbuckets.tsv | where bucket = 'b1';
create #c# = gor [#a#] | join -snpseg -r genes.gorz;
create #d# = nor [#b#] | select sample_id;
gor [#c#] | calc sid 'S0001' | inset -c sid [#d#]";

fn evaluated_after(dir: &Path) -> (BTreeSet<String>, String) {
    let mut s = common::session(dir);
    let out = common::tsv(&s.script(CACHE_SCRIPT).unwrap().collect().unwrap());
    (s.env().counters.evaluated().into_iter().collect(), out)
}

fn names(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn cache_behaviour() -> String {
    let dir = common::fixture_dir(&GenSpec { variants: 2000, genes: 10, samples: 20, ..GenSpec::default() });
    let (first, baseline) = evaluated_after(dir.path());
    assert_eq!(first, names(&["a", "b", "c", "d"]));
    let (second, out) = evaluated_after(dir.path());
    assert!(second.is_empty(), "second run evaluated {second:?}");
    assert_eq!(out, baseline);

    let mut clock = SystemTime::now() + Duration::from_secs(10);
    for (file, want) in [
        ("dbsnp.gorz", &["a", "c"][..]),
        ("genes.gorz", &["c"][..]),
        ("varbuckets.tsv", &["b", "d"][..]),
    ] {
        File::options().write(true).open(dir.path().join(file)).unwrap().set_modified(clock).unwrap();
        clock += Duration::from_secs(10);
        let (got, out) = evaluated_after(dir.path());
        assert_eq!(got, names(want), "after touching {file}");
        assert_eq!(out, baseline);
        let (again, _) = evaluated_after(dir.path());
        assert!(again.is_empty(), "rerun after touching {file} evaluated {again:?}");
    }

    let cfg = load_config(dir.path().join("gorconfig.txt")).unwrap();
    let crash_dir = dir.path().join("crashcache");
    let mut env = Environment::from_config(&cfg);
    env.cache = Cache::new(&crash_dir);
    env.cache.crash_hook = Some(Arc::new(|_: &Path| Err(Error::Usage("injected crash".into()))));
    let mut s = Session::new(env);
    let e = s.script(CACHE_SCRIPT).and_then(|r| r.collect()).unwrap_err();
    assert!(e.to_string().contains("injected crash"), "{e}");
    let cache = Cache::new(&crash_dir);
    assert!(cache.entries().unwrap().is_empty(), "a crashed evaluation left a readable entry");
    let mut env = Environment::from_config(&cfg);
    env.cache = Cache::new(&crash_dir);
    let mut s = Session::new(env);
    assert_eq!(common::tsv(&s.script(CACHE_SCRIPT).unwrap().collect().unwrap()), baseline);
    assert_eq!(cache.entries().unwrap().len(), 4);
    "0 re-evaluations, 3 touch scopes exact, crash left no entry".to_string()
}

// --------------------------------------------------------- 7. varnorm

/// A reference with tandem repeats of short units.
fn repeat_reference(r: &mut ChaCha8Rng, len: usize) -> String {
    let mut s = String::new();
    while s.len() < len {
        if r.gen_bool(0.5) {
            let unit: String = (0..r.gen_range(1..=4)).map(|_| *b"ACGT".choose(r).unwrap() as char).collect();
            for _ in 0..r.gen_range(2..=8) {
                s.push_str(&unit);
            }
        } else {
            s.extend((0..r.gen_range(1..=6)).map(|_| *b"ACGT".choose(r).unwrap() as char));
        }
    }
    s.truncate(len);
    s
}

/// Leftmost shortest representation of the change from `reference` to
/// `hap`, as (1-based pos, ref, alt).
fn canonical(reference: &[u8], hap: &[u8]) -> (u64, String, String) {
    let lcp = reference.iter().zip(hap).take_while(|(a, b)| a == b).count();
    let lcs = reference.iter().rev().zip(hap.iter().rev()).take_while(|(a, b)| a == b).count();
    let (nr, delta) = (reference.len() as i64, hap.len() as i64 - reference.len() as i64);
    let mut best: Option<(i64, i64)> = None;
    for s in 0..=(lcp as i64).min(nr - 1) {
        let l = 1.max(1 - delta).max(nr - lcs as i64 - s);
        if s + l > nr || best.is_some_and(|(bl, _)| bl <= l) {
            continue;
        }
        best = Some((l, s));
    }
    let (l, s) = best.unwrap();
    let text = |b: &[u8]| String::from_utf8(b.to_vec()).unwrap();
    ((s + 1) as u64, text(&reference[s as usize..(s + l) as usize]), text(&hap[s as usize..(s + l + delta) as usize]))
}

fn varnorm_canonical() -> String {
    let mut r = rng(7);
    let reference = repeat_reference(&mut r, 600);
    let refseq = RefSeq::from_sequences([("chr1", reference.as_str())]);
    let rb = reference.as_bytes();
    let mut moved = 0;
    for case in 0..10_000 {
        let q = r.gen_range(0..rb.len() - 20);
        let (hap, edit_end, delta): (Vec<u8>, usize, i64) = if r.gen_bool(0.5) {
            let d = r.gen_range(1..=6);
            ([&rb[..q], &rb[q + d..]].concat(), q + d, -(d as i64))
        } else {
            let ins: Vec<u8> = if r.gen_bool(0.5) {
                rb[q..q + r.gen_range(1..=4)].to_vec()
            } else {
                (0..r.gen_range(1..=5)).map(|_| *b"ACGT".choose(&mut r).unwrap()).collect()
            };
            let n = ins.len() as i64;
            ([&rb[..q], &ins[..], &rb[q..]].concat(), q, n)
        };
        let want = canonical(rb, &hap);
        let mut reps = 0;
        while reps < 3 {
            let s = q.saturating_sub(r.gen_range(0..=5));
            let e = (edit_end + r.gen_range(0..=5)).min(rb.len());
            let alt_end = e as i64 + delta;
            if e <= s || alt_end <= s as i64 {
                continue;
            }
            reps += 1;
            let (rf, al) = (&reference[s..e], std::str::from_utf8(&hap[s..alt_end as usize]).unwrap());
            let got = normalize_left(&refseq, "chr1", s as u64 + 1, rf, al).unwrap();
            assert_eq!(got, want, "case {case}: {}:{rf}>{al}", s + 1);
            let again = normalize_left(&refseq, "chr1", got.0, &got.1, &got.2).unwrap();
            assert_eq!(again, got, "case {case}: not a fixed point");
            moved += usize::from(got.0 != s as u64 + 1);
        }
    }
    format!("10000 cases x 3 representations, {moved} moved")
}

// ---------------------------------------------------------- 8. csvsel

fn csvsel_oracle() -> String {
    let mut r = rng(8);
    let build = small_build();
    let ctx = EngineCtx::new(Some(build.clone()), ".");
    let mut out_rows = 0;
    for case in 0..500 {
        let nb = r.gen_range(1..=5);
        let ns = r.gen_range(1..=50);
        let width = r.gen_range(1..=2);
        let fill = *["3", "9", "x"].choose(&mut r).unwrap();
        let samples: Vec<String> = (0..ns).map(|i| format!("s{i}")).collect();
        let layout: Vec<(String, String)> =
            samples.iter().map(|s| (s.clone(), format!("b{}", r.gen_range(0..nb)))).collect();
        let mut picks: Vec<String> = samples.iter().filter(|_| r.gen_bool(0.5)).cloned().collect();
        if picks.is_empty() {
            picks.push(samples[0].clone());
        }
        picks.shuffle(&mut r);

        let mut keys: Vec<(u64, usize)> = (0..r.gen_range(1..=200)).map(|_| (r.gen_range(1..400), r.gen_range(0..2))).collect();
        keys.sort();
        keys.dedup();
        let mut truth: HashMap<(u64, usize, &str), String> = HashMap::new();
        let mut rows = Vec::new();
        for &(pos, alt) in &keys {
            for b in 0..nb {
                let bucket = format!("b{b}");
                if r.gen_bool(0.2) {
                    continue;
                }
                let mut values = String::new();
                for (s, _) in layout.iter().filter(|(_, x)| *x == bucket) {
                    let v: String = (0..width).map(|_| char::from(b'0' + r.gen_range(0..3u8))).collect();
                    truth.insert((pos, alt, s.as_str()), v.clone());
                    values.push_str(&v);
                }
                rows.push(vec!["chr1".into(), pos.to_string(), "A".into(), ["C", "G"][alt].into(), bucket, values]);
            }
        }
        let input = mk_table(&["chrom", "pos", "ref", "alt", "bucket", "values"], true, rows);
        let tables = Tables {
            build: build.clone(),
            tables: HashMap::from([
                (
                    "buckets".to_string(),
                    mk_table(&["sample_id", "bucket"], false, layout.iter().map(|(s, b)| vec![s.clone(), b.clone()]).collect()),
                ),
                ("samples".to_string(), mk_table(&["sample_id"], false, picks.iter().map(|s| vec![s.clone()]).collect())),
            ]),
        };
        let step = format!("csvsel -u {fill} -gc ref,alt -vs {width} [#buckets#] [#samples#]");
        let got = run_tail(&input, &step, &tables, &ctx).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let mut want = Vec::new();
        for &(pos, alt) in &keys {
            if !input.rows.iter().any(|row| row.cell(1) == pos.to_string() && row.cell(3) == ["C", "G"][alt]) {
                continue;
            }
            let values: String = picks
                .iter()
                .map(|s| truth.get(&(pos, alt, s.as_str())).cloned().unwrap_or_else(|| fill.repeat(width)))
                .collect();
            want.push(vec!["chr1".to_string(), pos.to_string(), "A".into(), ["C", "G"][alt].into(), values]);
        }
        assert_eq!(got, want, "case {case}");
        out_rows += got.len();
    }
    format!("500 layouts, {out_rows} variant rows")
}

// --------------------------------------------------------- 9. seghist

fn seghist_tiling() -> String {
    let mut r = rng(9);
    let build = small_build();
    let ctx = EngineCtx::new(Some(build.clone()), ".");
    let tables = Tables { build, tables: HashMap::new() };
    let mut segments = 0;
    for case in 0..2000 {
        let n = r.gen_range(1..200u64);
        let mut bins: Vec<(String, u64, u64, u64)> = Vec::new();
        for c in 1..=2 {
            let w = r.gen_range(10..1000u64);
            let mut start = 1 + w * r.gen_range(0..5);
            for _ in 0..r.gen_range(0..60) {
                let count = if r.gen_bool(0.05) { n + r.gen_range(1..100) } else { r.gen_range(0..50) };
                bins.push((format!("chr{c}"), start, start + w - 1, count));
                start += w * r.gen_range(1..3);
            }
        }
        let input = mk_table(
            &["chrom", "bpStart", "bpStop", "count"],
            true,
            bins.iter().map(|b| vec![b.0.clone(), b.1.to_string(), b.2.to_string(), b.3.to_string()]).collect(),
        );
        let got = run_tail(&input, &format!("seghist {n}"), &tables, &ctx).unwrap();
        let mut i = 0;
        for seg in &got {
            let (c, s, e): (&str, u64, u64) = (&seg[0], seg[1].parse().unwrap(), seg[2].parse().unwrap());
            assert!(i < bins.len(), "case {case}: segment past the last bin");
            assert_eq!((bins[i].0.as_str(), bins[i].1), (c, s), "case {case}: segment does not start on a bin");
            let first = i;
            let mut total = 0;
            while i < bins.len() && bins[i].0 == c && bins[i].2 <= e {
                total += bins[i].3;
                i += 1;
            }
            assert_eq!(bins[i - 1].2, e, "case {case}: segment does not end on a bin");
            assert!(total <= n || i - first == 1, "case {case}: {total} > {n} over {} bins", i - first);
        }
        assert_eq!(i, bins.len(), "case {case}: bins left uncovered");
        segments += got.len();
    }
    format!("2000 cases, {segments} segments")
}

// ---------------------------------------------------- 10. gorz speed

const BIG_ROWS: u64 = 10_000_000;

fn gorz_speed() -> String {
    let per = BIG_ROWS / 3 + 1;
    let len = per * 10 + 100;
    let dir = config_dir(&[("chr1", len), ("chr2", len), ("chr3", len)]);
    let cfg = load_config(dir.path().join("gorconfig.txt")).unwrap();
    let path = dir.path().join("big.gorz");
    let schema = Schema::from_names(&["chrom", "pos", "ref", "alt", "id"], true).unwrap();
    let mut w = GorzWriter::new(
        BufWriter::new(File::create(&path).unwrap()),
        &path,
        &schema,
        cfg.build.clone(),
        gorz::DEFAULT_BLOCK_ROWS,
    )
    .unwrap();
    let bases = ["A", "C", "G", "T"];
    for i in 0..BIG_ROWS {
        let (c, k) = (i / per, i % per);
        let row = Row::from_cells([
            format!("chr{}", c + 1),
            (k * 10 + 1).to_string(),
            bases[(i % 4) as usize].to_string(),
            bases[(i * 7 % 4) as usize].to_string(),
            format!("v{i}"),
        ]);
        w.push(&row).unwrap();
    }
    w.finish().unwrap();

    let t = Instant::now();
    let s = Session::from_config(&cfg);
    let start = 1_000_001;
    let n = s.relation(&format!("gor -p chr2:{start}-{} big.gorz", start + 9_999)).unwrap().count().unwrap();
    let range = t.elapsed();
    assert_eq!(n, 1000);
    assert!(range < Duration::from_millis(250), "range query took {range:?}");

    let t = Instant::now();
    let s = Session::from_config(&cfg);
    let n = s.relation("gor big.gorz").unwrap().count().unwrap();
    let scan = t.elapsed();
    assert_eq!(n, BIG_ROWS);
    let rate = n as f64 / scan.as_secs_f64();
    assert!(rate > 1e6, "scan streamed {rate:.0} rows/s");
    format!("1000-row range in {:.2} ms, scan {:.1}M rows/s", range.as_secs_f64() * 1e3, rate / 1e6)
}

// ----------------------------------------------------- 11. rgc push-down

fn rgc_pushdown() -> String {
    let per = BIG_ROWS / 3 + 1;
    let len = per * 10 + 100;
    let dir = config_dir(&[("chr1", len), ("chr2", len), ("chr3", len)]);
    let cfg = load_config(dir.path().join("gorconfig.txt")).unwrap();
    let names = ["chrom", "pos", "ref", "alt", "rsID"];
    let locus = |i: u64| (format!("chr{}", i / per + 1), (i % per * 10 + 1).to_string());

    // ids rs10000000..rs19999999 have one width, so byte order is numeric order
    let mut by_id = Synth {
        schema: Schema::from_names(&names, false).unwrap(),
        next: 0,
        n: BIG_ROWS,
        row: |i: u64| {
            let (c, p) = locus(i * 7_654_321 % BIG_ROWS);
            Row::from_cells([c, p, "A".into(), "C".into(), format!("rs{}", 10_000_000 + i)])
        },
    };
    rgc::write_rgc(&mut by_id, &dir.path().join("byid.rgc"), rgc::DEFAULT_GROUP_ROWS, None).unwrap();
    let mut by_pos = Synth {
        schema: Schema::from_names(&names, true).unwrap(),
        next: 0,
        n: BIG_ROWS,
        row: |i: u64| {
            let (c, p) = locus(i);
            Row::from_cells([c, p, "A".into(), "C".into(), format!("rs{}", 10_000_000 + (i * 7_654_321 + 12_345) % BIG_ROWS)])
        },
    };
    rgc::write_rgc(&mut by_pos, &dir.path().join("bypos.rgc"), rgc::DEFAULT_GROUP_ROWS, Some(&cfg.build)).unwrap();

    let lookup = |file: &str| {
        let t = Instant::now();
        let s = Session::from_config(&cfg);
        let n = s.relation(&format!("select * from {file} where rsID like 'rs12345%'")).unwrap().count().unwrap();
        let took = t.elapsed();
        assert_eq!(n, 1000, "{file}");
        let io = s.env().stats.snapshot();
        (io.groups_read as f64 / (io.groups_read + io.groups_skipped) as f64, took)
    };
    let (sorted_frac, took) = lookup("byid.rgc");
    assert!(sorted_frac < 0.05, "rsID-sorted lookup read {:.1}% of groups", sorted_frac * 100.0);
    assert!(took < Duration::from_secs(1), "rsID-sorted lookup took {took:?}");
    let (genome_frac, _) = lookup("bypos.rgc");
    assert!(genome_frac >= 0.5, "genome-ordered lookup read only {:.1}% of groups", genome_frac * 100.0);
    format!(
        "sorted copy read {:.2}% of groups in {} ms, genome-ordered copy {:.0}%",
        sorted_frac * 100.0,
        took.as_millis(),
        genome_frac * 100.0
    )
}

// ---------------------------------------------------------- 12. parser

const FUZZ_SNIPPETS: [&str; 4] = [
    "pgor -split [#regionsplit#] variants.gord -nf -ff [#samples#] | varjoin -i step1_variants.gorz \
     | csvsel -u 3 -gc ref,alt -vs 1 varbuckets.tsv [#samples#] | rename Chrom contigName",
    "parallel -parts [#RegionSampleBlocks#] <(gor variants.gord -nf -p #{col:chrom}:#{col:bpStart}-#{col:bpStop} \
     -f #{col:lis_sample_id} | calc header_block '#{col:header_block}')",
    "def #VEP# = vep.gorz; select * from myVars order by chrom, pos | varnorm -left ref alt \
     | group 1 -gc ref,alt,type -set -sc rsID | varjoin -r -l -e 'NA' <(gor #VEP# | select 1-alt,consequence)",
    "nor [#BlockRegionSplit#] | replace #2 #2+1 /* -p is one-based */ | calc header_block #1+'_'+#2+'_'+#3 \
     | multimap -cartesian [#SampleBlocks#]",
];

const FUZZ_TOKENS: [&str; 24] = [
    "(", ")", "<(", "|", ";", "'", "\"", "[#", "#]", "#", "/*", "*/", "create ", "def ", "=", " -p ", "gor ",
    "nor ", "select ", " ", "\n", "é", "#{col:", "}",
];

fn mutate(r: &mut ChaCha8Rng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..r.gen_range(1..=4) {
        let at = r.gen_range(0..=chars.len());
        match r.gen_range(0..4) {
            0 => {
                let end = (at + r.gen_range(1..20)).min(chars.len());
                chars.drain(at..end);
            }
            1 => {
                let tok = FUZZ_TOKENS.choose(r).unwrap();
                chars.splice(at..at, tok.chars());
            }
            2 => chars.insert(at, char::from(r.gen_range(0x20u8..0x7f))),
            _ => {
                let from = r.gen_range(0..=chars.len());
                let end = (from + r.gen_range(1..30)).min(chars.len());
                let piece: Vec<char> = chars[from..end].to_vec();
                chars.splice(at..at, piece);
            }
        }
    }
    chars.into_iter().collect()
}

fn parser_fuzz() -> String {
    let mut bases: Vec<String> = (1..=6).map(corpus::script).collect();
    bases.extend(FUZZ_SNIPPETS.iter().map(|s| s.to_string()));
    let mut r = rng(12);
    let (mut errors, mut panics) = (0, 0);
    let mut missing = Vec::new();
    for _ in 0..100_000 {
        let base = bases.choose(&mut r).unwrap();
        let text = mutate(&mut r, base);
        match catch_unwind(|| parse_script(&text)) {
            Err(_) => panics += 1,
            Ok(Ok(_)) => {}
            Ok(Err(e)) => {
                errors += 1;
                if !e.offset().is_some_and(|o| o <= text.len()) && missing.len() < 3 {
                    missing.push(format!("{}: {e} in {text:?}", e.kind()));
                }
            }
        }
    }
    assert_eq!(panics, 0, "parser panicked on {panics} inputs");
    assert!(missing.is_empty(), "errors without a position: {missing:?}");
    for n in 1..=6 {
        let s = parse_script(&corpus::script(n)).unwrap();
        let printed = s.to_string();
        let again = parse_script(&printed).unwrap_or_else(|e| panic!("ex{n} reprint: {e}\n{printed}"));
        assert_eq!(s, again, "ex{n}");
        assert_eq!(printed, again.to_string(), "ex{n}");
    }
    format!("100000 cases, {errors} errors all positioned, 6 scripts reprint to a fixpoint")
}
