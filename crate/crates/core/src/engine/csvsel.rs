//! CSVSEL: turns per-bucket horizontal genotype rows into one row per variant
//! holding the selected samples' values.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use crate::engine::{require_ordered, EngineCtx, Lookup, Resolver};
use crate::error::{Error, Result};
use crate::model::{BoxStream, ContigOrder, Locus, Row, RowStream, Schema};
use crate::parser::Step;

pub const DEFAULT_UNKNOWN: &str = "3";

/// Where each sample's values live: its bucket and offset within it.
#[derive(Debug, Clone, Default)]
pub struct BucketLayout {
    samples: HashMap<String, (String, usize)>,
    sizes: HashMap<String, usize>,
}

impl BucketLayout {
    /// From `(sample, bucket)` pairs; offsets follow the input order within
    /// each bucket.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut l = BucketLayout::default();
        for (s, b) in pairs {
            let (s, b) = (s.into(), b.into());
            let size = l.sizes.entry(b.clone()).or_insert(0);
            if l.samples.insert(s.clone(), (b, *size)).is_some() {
                return Err(Error::DuplicateKey(s));
            }
            *size += 1;
        }
        Ok(l)
    }

    pub fn locate(&self, sample: &str) -> Option<(&str, usize)> {
        self.samples.get(sample).map(|(b, o)| (b.as_str(), *o))
    }

    pub fn bucket_size(&self, bucket: &str) -> Option<usize> {
        self.sizes.get(bucket).copied()
    }
}

/// Selected samples resolved against a layout.
struct Selection {
    layout: BucketLayout,
    picks: Vec<(String, usize)>,
}

pub struct CsvSel {
    input: BoxStream,
    schema: Schema,
    build: Arc<ContigOrder>,
    buckets: Lookup,
    samples: Lookup,
    selection: Option<Selection>,
    gc: Vec<usize>,
    bucket_col: usize,
    values_col: usize,
    width: usize,
    unknown: String,
    group: Vec<Row>,
    group_locus: Locus,
    out: VecDeque<Row>,
    done: bool,
}

impl CsvSel {
    fn selection(&mut self) -> Result<&Selection> {
        if self.selection.is_none() {
            let layout = BucketLayout::from_pairs(
                self.buckets.rows()?.iter().map(|r| (r.cell(0).to_string(), r.cell(1).to_string())),
            )?;
            let mut picks = Vec::new();
            for r in self.samples.rows()? {
                let s = r.cell(0);
                let (b, o) = layout.locate(s).ok_or_else(|| Error::MissingSample(s.to_string()))?;
                picks.push((b.to_string(), o));
            }
            self.selection = Some(Selection { layout, picks });
        }
        Ok(self.selection.as_ref().unwrap())
    }

    fn flush(&mut self) -> Result<()> {
        if self.group.is_empty() {
            return Ok(());
        }
        let group = std::mem::take(&mut self.group);
        let (w, gc, bcol, vcol) = (self.width, self.gc.clone(), self.bucket_col, self.values_col);
        let fill = self.unknown.repeat(w);
        let sel = self.selection()?;
        let mut keys: BTreeMap<Vec<&str>, HashMap<&str, &str>> = BTreeMap::new();
        for r in &group {
            let key: Vec<&str> = gc.iter().map(|&i| r.cell(i)).collect();
            let bucket = r.cell(bcol);
            let values = r.cell(vcol);
            let key_text = || format!("{}:{}:{}", r.cell(0), r.cell(1), key.join(":"));
            if let Some(size) = sel.layout.bucket_size(bucket) {
                if values.len() != size * w || !values.is_ascii() {
                    return Err(Error::ValueSizeMismatch {
                        bucket: bucket.to_string(),
                        key: key_text(),
                        expected: size * w,
                        found: values.chars().count(),
                    });
                }
            }
            if keys.entry(key.clone()).or_default().insert(bucket, values).is_some() {
                return Err(Error::DuplicateKey(format!("bucket {bucket} at {}", key_text())));
            }
        }
        let mut rows = Vec::with_capacity(keys.len());
        for (key, by_bucket) in &keys {
            let mut values = String::with_capacity(sel.picks.len() * w);
            for (b, o) in &sel.picks {
                match by_bucket.get(b.as_str()) {
                    Some(v) => values.push_str(&v[o * w..(o + 1) * w]),
                    None => values.push_str(&fill),
                }
            }
            let first = &group[0];
            let mut cells: Vec<&str> = vec![first.cell(0), first.cell(1)];
            cells.extend(key.iter().copied());
            cells.push(&values);
            rows.push(Row::from_cells(cells));
        }
        self.out.extend(rows);
        Ok(())
    }
}

impl RowStream for CsvSel {
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
            match self.input.next_row()? {
                Some(r) => {
                    let l = self.build.row_locus(&r)?;
                    if l < self.group_locus {
                        return Err(Error::OrderViolation {
                            previous: self.build.display(self.group_locus),
                            current: self.build.display(l),
                        });
                    }
                    if l != self.group_locus {
                        self.flush()?;
                        self.group_locus = l;
                    }
                    self.group.push(r);
                }
                None => {
                    self.done = true;
                    self.flush()?;
                }
            }
        }
    }
}

pub(crate) fn bind(input: BoxStream, step: &Step, ctx: &EngineCtx, res: &dyn Resolver) -> Result<BoxStream> {
    require_ordered(input.as_ref(), "csvsel")?;
    let schema = input.schema().clone();
    let gc: Vec<usize> = match step.value("gc") {
        Some(v) => crate::parser::scan::comma_list(v)?.iter().map(|c| schema.index_of(c)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let bucket_col = schema.index_of("bucket")?;
    let values_col = schema.index_of("values")?;
    let width = match step.value("vs") {
        Some(v) => v.parse::<usize>().ok().filter(|w| *w > 0).ok_or_else(|| Error::Usage(format!("csvsel -vs expects a positive width, got '{v}'")))?,
        None => 1,
    };
    let unknown = step.value("u").unwrap_or(DEFAULT_UNKNOWN).to_string();
    if unknown.chars().count() != 1 {
        return Err(Error::Usage(format!("csvsel -u expects one character, got '{unknown}'")));
    }
    let rel = |i: usize| step.rel(i).ok_or_else(|| Error::Usage("csvsel needs a buckets relation and a samples relation".into()));
    let buckets = Lookup::new(res.open(rel(0)?, false)?);
    if buckets.schema.len() < 2 {
        return Err(Error::SchemaError("csvsel buckets relation needs (sample, bucket) columns".into()));
    }
    let samples = Lookup::new(res.open(rel(1)?, false)?);
    let mut names: Vec<&str> = vec![schema.name(0), schema.name(1)];
    names.extend(gc.iter().map(|&i| schema.name(i)));
    names.push("values");
    let out = Schema::from_names(&names, true)?;
    Ok(Box::new(CsvSel {
        input,
        schema: out,
        build: ctx.build("csvsel")?,
        buckets,
        samples,
        selection: None,
        gc,
        bucket_col,
        values_col,
        width,
        unknown,
        group: Vec::new(),
        group_locus: Locus::MIN,
        out: VecDeque::new(),
        done: false,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::testutil::*;
    use crate::model::Table;
    use proptest::prelude::*;

    fn tables(layout: &[(&str, &str)], picks: &[&str]) -> Tables {
        let mut t = Tables::default();
        let rows: Vec<Vec<&str>> = layout.iter().map(|(s, b)| vec![*s, *b]).collect();
        let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
        t.0.insert("buckets".into(), table(&["sample_id", "bucket"], false, &rows));
        let rows: Vec<Vec<&str>> = picks.iter().map(|s| vec![*s]).collect();
        let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
        t.0.insert("samples".into(), table(&["sample_id"], false, &rows));
        t
    }

    const CMD: &str = "csvsel -u 3 -gc ref,alt -vs 1 [#buckets#] [#samples#]";

    #[test]
    fn two_buckets_and_fill() {
        let t = tables(&[("a", "b1"), ("b", "b1"), ("c", "b2"), ("d", "b2")], &["d", "a", "c", "b"]);
        let input = table(
            &["chrom", "pos", "ref", "alt", "bucket", "values"],
            true,
            &[
                &["chr1", "10", "A", "C", "b1", "01"],
                &["chr1", "10", "A", "C", "b2", "21"],
                &["chr1", "12", "G", "T", "b1", "11"],
            ],
        );
        let (s, rows) = run(&input, CMD, &t).unwrap();
        assert_eq!(s.header_line(), "chrom\tpos\tref\talt\tvalues");
        assert_eq!(rows[0][4], "1021");
        assert_eq!(rows[1][4], "3131");

        let bad = tables(&[("a", "b1")], &["zz"]);
        assert!(matches!(run(&input, CMD, &bad), Err(Error::MissingSample(_))));
        let short = table(&["chrom", "pos", "ref", "alt", "bucket", "values"], true, &[&["chr1", "10", "A", "C", "b1", "0"]]);
        let e = run(&short, CMD, &t).unwrap_err();
        assert!(matches!(e, Error::ValueSizeMismatch { ref bucket, expected: 2, found: 1, .. } if bucket == "b1"), "{e}");
    }

    proptest! {
        #[test]
        fn matches_scalar_oracle(
            nbuckets in 1usize..5,
            nsamples in 1usize..20,
            variants in prop::collection::vec((1u64..50, 0u8..2, any::<u64>()), 1..30),
            pick_seed in any::<u64>(),
            width in 1usize..3,
        ) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(pick_seed);
            let samples: Vec<String> = (0..nsamples).map(|i| format!("s{i}")).collect();
            let layout: Vec<(String, String)> =
                samples.iter().map(|s| (s.clone(), format!("b{}", rng.gen_range(0..nbuckets)))).collect();
            let mut picks: Vec<String> = samples.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
            picks.shuffle(&mut rng);

            // per-sample scalar truth; absent bucket rows read as unknown
            let mut truth: HashMap<(u64, String, String), String> = HashMap::new();
            let mut rows = Vec::new();
            let mut vars: Vec<(u64, u8, u64)> = variants;
            vars.sort();
            vars.dedup_by_key(|v| (v.0, v.1));
            for (pos, alt, seed) in &vars {
                let mut vr = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let alt = ["C", "G"][*alt as usize].to_string();
                for b in 0..nbuckets {
                    let bucket = format!("b{b}");
                    if vr.gen_bool(0.2) {
                        continue;
                    }
                    let members: Vec<&String> = layout.iter().filter(|(_, x)| *x == bucket).map(|(s, _)| s).collect();
                    let mut values = String::new();
                    for m in members {
                        let v: String = (0..width).map(|_| char::from(b'0' + vr.gen_range(0..3u8))).collect();
                        truth.insert((*pos, alt.clone(), m.clone()), v.clone());
                        values.push_str(&v);
                    }
                    rows.push(Row::from_cells(["chr1".to_string(), pos.to_string(), "A".into(), alt.clone(), bucket, values]));
                }
            }
            let input = Table::new(Schema::from_names(&["chrom", "pos", "ref", "alt", "bucket", "values"], true).unwrap(), rows).unwrap();
            let lay: Vec<(&str, &str)> = layout.iter().map(|(s, b)| (s.as_str(), b.as_str())).collect();
            let p: Vec<&str> = picks.iter().map(String::as_str).collect();
            let t = tables(&lay, &p);
            let (_, out) = run(&input, &format!("csvsel -u 9 -gc ref,alt -vs {width} [#buckets#] [#samples#]"), &t).unwrap();
            for r in &out {
                let pos: u64 = r[1].parse().unwrap();
                let want: String = picks
                    .iter()
                    .map(|s| truth.get(&(pos, r[3].clone(), s.clone())).cloned().unwrap_or_else(|| "9".repeat(width)))
                    .collect();
                prop_assert_eq!(&r[4], &want);
            }
            let keys: std::collections::HashSet<(u64, String)> =
                input.rows.iter().map(|r| (r.cell(1).parse().unwrap(), r.cell(3).to_string())).collect();
            prop_assert_eq!(out.len(), keys.len());
        }
    }
}
