//! GROUP, DISTINCT and SEGHIST.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use crate::engine::EngineCtx;
use crate::error::{Error, Result};
use crate::model::{BoxStream, ContigOrder, Row, RowStream, Schema};
use crate::parser::Step;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binning {
    /// NOR context: keys are the grouping columns only.
    None,
    /// One bin covering the whole genome.
    Genome,
    Width(u64),
}

#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub binning: Binning,
    pub keys: Vec<usize>,
    pub count: bool,
    pub lis: bool,
    pub set: bool,
    pub values: Vec<usize>,
}

impl GroupSpec {
    pub fn from_step(step: &Step, schema: &Schema) -> Result<(GroupSpec, Schema)> {
        let arg = step.args.first().and_then(|a| a.word());
        let binning = match (schema.is_ordered(), arg) {
            (true, Some("genome")) => Binning::Genome,
            (true, Some(w)) => match w.parse::<u64>() {
                Ok(b) if b > 0 => Binning::Width(b),
                _ => return Err(Error::Usage(format!("group bin size must be a positive integer or 'genome', got '{w}'"))),
            },
            (true, None) => return Err(Error::Usage("group in a genome-ordered context needs a bin size or 'genome'".into())),
            (false, Some(w)) => {
                return Err(Error::Usage(format!("group bin size '{w}' is only valid on genome-ordered input")))
            }
            (false, None) => Binning::None,
        };
        let cols = |flag: &str| -> Result<Vec<usize>> {
            match step.value(flag) {
                Some(v) => crate::parser::scan::comma_list(v)?.iter().map(|c| schema.index_of(c)).collect(),
                None => Ok(Vec::new()),
            }
        };
        let keys = cols("gc")?;
        let values = cols("sc")?;
        let (lis, set) = (step.has("lis"), step.has("set"));
        if (lis || set) && values.is_empty() {
            return Err(Error::Usage("group -lis/-set needs -sc <columns>".into()));
        }
        if !(lis || set) && !values.is_empty() {
            return Err(Error::Usage("group -sc needs -lis or -set".into()));
        }
        let count = step.has("count") || !(lis || set);
        let spec = GroupSpec { binning, keys, count, lis, set, values };
        let out = spec.output_schema(schema)?;
        Ok((spec, out))
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        let mut names: Vec<String> = Vec::new();
        let ordered = self.binning != Binning::None;
        if ordered {
            names.extend([input.name(0).to_string(), "bpStart".into(), "bpStop".into()]);
        }
        names.extend(self.keys.iter().map(|&k| input.name(k).to_string()));
        if self.count {
            names.push("allCount".into());
        }
        if self.lis {
            names.extend(self.values.iter().map(|&v| format!("lis_{}", input.name(v))));
        }
        if self.set {
            names.extend(self.values.iter().map(|&v| format!("set_{}", input.name(v))));
        }
        Schema::from_names(&names, ordered)
    }
}

#[derive(Default)]
struct Acc {
    count: u64,
    lis: Vec<Vec<String>>,
    set: Vec<(Vec<String>, HashSet<String>)>,
}

impl Acc {
    fn add(&mut self, spec: &GroupSpec, row: &Row) -> Result<()> {
        self.count += 1;
        if self.lis.is_empty() && spec.lis {
            self.lis = vec![Vec::new(); spec.values.len()];
        }
        if self.set.is_empty() && spec.set {
            self.set = vec![Default::default(); spec.values.len()];
        }
        for (i, &c) in spec.values.iter().enumerate() {
            let v = row.cell(c);
            if v.contains(',') {
                return Err(Error::ListDelimiterError(v.to_string()));
            }
            if spec.lis {
                self.lis[i].push(v.to_string());
            }
            if spec.set && self.set[i].1.insert(v.to_string()) {
                self.set[i].0.push(v.to_string());
            }
        }
        Ok(())
    }

    fn finish(self, spec: &GroupSpec, prefix: Vec<String>) -> Row {
        let mut cells = prefix;
        if spec.count {
            cells.push(self.count.to_string());
        }
        cells.extend(self.lis.into_iter().map(|l| l.join(",")));
        cells.extend(self.set.into_iter().map(|(l, _)| l.join(",")));
        Row::from_cells(cells)
    }
}

/// Streaming GROUP. Binned groups flush as soon as the input moves past the
/// bin; NOR and whole-genome groups hold every key until the input ends.
pub struct Group {
    input: BoxStream,
    schema: Schema,
    spec: GroupSpec,
    build: Option<Arc<ContigOrder>>,
    bin: Option<(u32, u64)>,
    groups: BTreeMap<Vec<String>, Acc>,
    out: VecDeque<Row>,
    done: bool,
}

impl Group {
    pub fn new(input: BoxStream, spec: GroupSpec, schema: Schema, build: Option<Arc<ContigOrder>>) -> Self {
        Group { input, schema, spec, build, bin: None, groups: BTreeMap::new(), out: VecDeque::new(), done: false }
    }

    fn flush(&mut self) {
        let prefix = match (&self.spec.binning, self.bin) {
            (Binning::Width(b), Some((c, start))) => {
                let build = self.build.as_ref().unwrap();
                vec![build.name(c).to_string(), start.to_string(), (start + b - 1).to_string()]
            }
            (Binning::Genome, _) => {
                let build = self.build.as_ref().unwrap();
                vec![build.name(0).to_string(), "1".into(), build.genome_length().to_string()]
            }
            _ => Vec::new(),
        };
        for (key, acc) in std::mem::take(&mut self.groups) {
            let mut p = prefix.clone();
            p.extend(key);
            self.out.push_back(acc.finish(&self.spec, p));
        }
    }
}

impl RowStream for Group {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.out.pop_front() {
                return Ok(Some(r));
            }
            if self.done {
                return Ok(None);
            }
            let Some(row) = self.input.next_row()? else {
                self.done = true;
                self.flush();
                continue;
            };
            if let Binning::Width(b) = self.spec.binning {
                let l = self.build.as_ref().unwrap().row_locus(&row)?;
                let bin = (l.contig, (l.pos.max(1) - 1) / b * b + 1);
                if let Some(cur) = self.bin {
                    if bin < cur {
                        let build = self.build.as_ref().unwrap();
                        return Err(Error::OrderViolation {
                            previous: format!("{}:{}", build.name(cur.0), cur.1),
                            current: build.display(l),
                        });
                    }
                    if bin != cur {
                        self.flush();
                    }
                }
                self.bin = Some(bin);
            }
            let key: Vec<String> = self.spec.keys.iter().map(|&k| row.cell(k).to_string()).collect();
            self.groups.entry(key).or_default().add(&self.spec, &row)?;
        }
    }
}

/// Drops repeated rows, keeping the first occurrence.
struct Distinct {
    input: BoxStream,
    seen: HashSet<String>,
}

impl RowStream for Distinct {
    fn schema(&self) -> &Schema {
        self.input.schema()
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        while let Some(r) = self.input.next_row()? {
            if self.seen.insert(r.line().to_string()) {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }
}

/// Merges consecutive bins `(contig, start, stop, count)` into segments whose
/// total count stays within `n`. A bin that alone exceeds `n` is its own
/// segment. Accumulation restarts at each contig.
pub fn seghist_segments(bins: &[(&str, u64, u64, u64)], n: u64) -> Vec<(String, u64, u64)> {
    let mut acc = SegAcc::default();
    let mut out: Vec<_> = bins.iter().filter_map(|&(c, s, e, k)| acc.push(c, s, e, k, n)).collect();
    out.extend(acc.take());
    out
}

#[derive(Default)]
struct SegAcc {
    cur: Option<(String, u64, u64)>,
    total: u64,
}

impl SegAcc {
    /// Adds a bin, returning the segment it closed, if any.
    fn push(&mut self, contig: &str, start: u64, stop: u64, count: u64, n: u64) -> Option<(String, u64, u64)> {
        let closes = match &self.cur {
            Some((c, _, _)) => c != contig || self.total + count > n,
            None => false,
        };
        let closed = if closes { self.take() } else { None };
        match &mut self.cur {
            Some(seg) => {
                seg.2 = stop;
                self.total += count;
            }
            None => {
                self.cur = Some((contig.to_string(), start, stop));
                self.total = count;
            }
        }
        closed
    }

    fn take(&mut self) -> Option<(String, u64, u64)> {
        self.total = 0;
        self.cur.take()
    }
}

struct Seghist {
    input: BoxStream,
    schema: Schema,
    n: u64,
    acc: SegAcc,
    done: bool,
}

impl RowStream for Seghist {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        let seg = |s: (String, u64, u64)| Row::from_cells([s.0, s.1.to_string(), s.2.to_string()]);
        while !self.done {
            let Some(r) = self.input.next_row()? else {
                self.done = true;
                return Ok(self.acc.take().map(seg));
            };
            let num = |i: usize| {
                r.cell(i).parse::<u64>().map_err(|_| {
                    Error::TypeMismatch(format!("seghist expects (contig, start, stop, count) rows, got {:?}", r.line()))
                })
            };
            let (start, stop, count) = (num(1)?, num(2)?, num(3)?);
            if let Some(s) = self.acc.push(r.cell(0), start, stop, count, self.n) {
                return Ok(Some(seg(s)));
            }
        }
        Ok(None)
    }
}

pub(crate) fn bind(input: BoxStream, step: &Step, ctx: &EngineCtx) -> Result<BoxStream> {
    let schema = input.schema().clone();
    match step.command.as_str() {
        "group" => {
            let (spec, out) = GroupSpec::from_step(step, &schema)?;
            let build = match spec.binning {
                Binning::None => None,
                _ => Some(ctx.build("group over genome bins")?),
            };
            Ok(Box::new(Group::new(input, spec, out, build)))
        }
        "distinct" => Ok(Box::new(Distinct { input, seen: HashSet::new() })),
        "seghist" => {
            let w = step.args.first().and_then(|a| a.word()).unwrap_or_default();
            let n = w.parse::<u64>().map_err(|_| Error::Usage(format!("seghist expects a count, got '{w}'")))?;
            if schema.len() < 4 {
                return Err(Error::TypeMismatch(format!(
                    "seghist expects (contig, start, stop, count) columns, input has {}",
                    schema.len()
                )));
            }
            let out = Schema::from_names(&["chrom", "bpStart", "bpStop"], true)?;
            Ok(Box::new(Seghist { input, schema: out, n, acc: SegAcc::default(), done: false }))
        }
        c => unreachable!("group does not handle {c}"),
    }
}
