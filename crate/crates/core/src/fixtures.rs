//! Seeded synthetic fixtures shaped like the data the example queries
//! expect: a small reference build and sequence, dbsnp-like variants,
//! genes and exons, PheWas hits, phenotypes with an HPO-like ontology, and
//! bucketized horizontal genotypes.
//!
//! Output is a pure function of [`GenSpec`]; two runs with the same spec
//! produce byte-identical files.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ContigOrder, Row, Schema, VecStream};
use crate::storage::gord::{self, ManifestEntry};
use crate::storage::{gorz, rgc, tsv, GorzWriter};

pub const CONTIGS: [&str; 3] = ["chr1", "chr2", "chr3"];
/// The ontology term the phenotype examples filter on.
pub const HPO_TERM: &str = "HP:0001507";

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub seed: u64,
    /// dbsnp rows.
    pub variants: usize,
    pub genes: usize,
    pub samples: usize,
    pub buckets: usize,
    /// Variants carried in the bucketized genotype dictionary.
    pub genotype_variants: usize,
    pub hpo_terms: usize,
    pub traits: usize,
    /// Row-group size of the RGC files.
    pub group_rows: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 7,
            variants: 3000,
            genes: 40,
            samples: 40,
            buckets: 4,
            genotype_variants: 400,
            hpo_terms: 60,
            traits: 3,
            group_rows: 256,
        }
    }
}

/// Row counts of what was written, for reporting.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub files: Vec<(String, u64)>,
}

struct Variant {
    contig: usize,
    pos: u64,
    reference: String,
    alt: String,
    rs: Vec<u64>,
}

struct Gen {
    dir: PathBuf,
    rng: ChaCha8Rng,
    build: Arc<ContigOrder>,
    seqs: Vec<Vec<u8>>,
    summary: GenSummary,
}

const BASES: &[u8; 4] = b"ACGT";
const CONSEQUENCES: [&str; 5] =
    ["missense_variant", "synonymous_variant", "intron_variant", "stop_gained", "splice_region_variant"];

fn schema(names: &[&str], ordered: bool) -> Result<Schema> {
    Schema::from_names(names, ordered)
}

fn rows(cells: Vec<Vec<String>>) -> Vec<Row> {
    cells.into_iter().map(Row::from_cells).collect()
}

impl Gen {
    fn record(&mut self, name: &str, n: u64) {
        self.summary.files.push((name.to_string(), n));
    }

    fn contig(&self, c: usize) -> &str {
        CONTIGS[c]
    }

    fn bases(&self, c: usize, pos: u64, len: usize) -> String {
        let s = &self.seqs[c][pos as usize - 1..pos as usize - 1 + len];
        String::from_utf8_lossy(s).into_owned()
    }

    fn write_gorz(&mut self, name: &str, names: &[&str], cells: Vec<Vec<String>>) -> Result<()> {
        let mut s = VecStream::new(schema(names, true)?, rows(cells));
        let (n, _) = gorz::write_gorz(&mut s, &self.dir.join(name), self.build.clone(), 128)?;
        self.record(name, n);
        Ok(())
    }

    fn write_rgc(&mut self, name: &str, names: &[&str], ordered: bool, cells: Vec<Vec<String>>, group_rows: usize) -> Result<()> {
        let mut s = VecStream::new(schema(names, ordered)?, rows(cells));
        let n = rgc::write_rgc(&mut s, &self.dir.join(name), group_rows, Some(&self.build))?;
        self.record(name, n);
        Ok(())
    }

    fn write_tsv(&mut self, name: &str, names: &[&str], cells: Vec<Vec<String>>) -> Result<()> {
        let mut s = VecStream::new(schema(names, false)?, rows(cells));
        let n = tsv::write_tsv(&mut s, &self.dir.join(name), true, true)?;
        self.record(name, n);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn reference(&mut self, length: u64) -> Result<()> {
        let mut build = String::new();
        let mut fasta = String::new();
        for c in CONTIGS {
            writeln!(build, "{c}\t{length}").unwrap();
            let seq: Vec<u8> = (0..length).map(|_| BASES[self.rng.gen_range(0..4)]).collect();
            writeln!(fasta, ">{c}").unwrap();
            for line in seq.chunks(60) {
                fasta.push_str(std::str::from_utf8(line).unwrap());
                fasta.push('\n');
            }
            self.seqs.push(seq);
        }
        self.write_text("build.tsv", &build)?;
        self.write_text("ref.fa", &fasta)?;
        self.write_text("gorconfig.txt", "buildpath\tbuild.tsv\nrefseqpath\tref.fa\ncachedir\tgorcache\n")
    }

    fn variants(&mut self, spec: &GenSpec, length: u64) -> Vec<Variant> {
        let per = spec.variants.div_ceil(CONTIGS.len());
        let id_space = (spec.variants as u64 * 10).max(1_000_000);
        let mut used = HashSet::new();
        let mut out = Vec::with_capacity(spec.variants);
        for c in 0..CONTIGS.len() {
            let n = per.min(spec.variants - out.len());
            let mut positions = BTreeSet::new();
            while positions.len() < n {
                positions.insert(self.rng.gen_range(2..length - 40));
            }
            for pos in positions {
                let kind: f64 = self.rng.gen();
                let base = self.bases(c, pos, 1);
                let (reference, alt) = if kind < 0.85 {
                    let alts: Vec<u8> = BASES.iter().copied().filter(|b| *b != base.as_bytes()[0]).collect();
                    (base, (*alts.choose(&mut self.rng).unwrap() as char).to_string())
                } else if kind < 0.93 {
                    let k = self.rng.gen_range(2..5);
                    (self.bases(c, pos, k), base)
                } else if kind < 0.97 {
                    // A duplication of the following bases; shifts under
                    // normalization.
                    let k = self.rng.gen_range(1..3);
                    let next = self.bases(c, pos + 1, k);
                    (base.clone(), base + &next)
                } else {
                    let k = self.rng.gen_range(1..4);
                    let ins: String = (0..k).map(|_| BASES[self.rng.gen_range(0..4)] as char).collect();
                    (base.clone(), base + &ins)
                };
                let ids = match self.rng.gen_range(0..100) {
                    0..=1 => 3,
                    2..=11 => 2,
                    _ => 1,
                };
                let mut rs = Vec::new();
                while rs.len() < ids {
                    let id = self.rng.gen_range(1..id_space);
                    if used.insert(id) {
                        rs.push(id);
                    }
                }
                out.push(Variant { contig: c, pos, reference, alt, rs });
            }
        }
        out
    }

    fn dbsnp(&mut self, spec: &GenSpec, vars: &[Variant]) -> Result<()> {
        let cells: Vec<Vec<String>> = vars
            .iter()
            .map(|v| {
                let ids: Vec<String> = v.rs.iter().map(|i| format!("rs{i}")).collect();
                vec![self.contig(v.contig).into(), v.pos.to_string(), v.reference.clone(), v.alt.clone(), ids.join(",")]
            })
            .collect();
        let names = ["chrom", "pos", "ref", "alt", "rsIDs"];
        self.write_gorz("dbsnp.gorz", &names, cells.clone())?;
        let mut split: Vec<Vec<String>> = cells
            .iter()
            .flat_map(|r| r[4].split(',').map(|id| vec![r[0].clone(), r[1].clone(), r[2].clone(), r[3].clone(), id.to_string()]))
            .collect();
        self.write_rgc("dbsnp.parquet", &["chrom", "pos", "ref", "alt", "rsID"], true, split.clone(), spec.group_rows)?;
        split.sort_by(|a, b| a[4].cmp(&b[4]));
        self.write_rgc("dbsnp.rsOrd.parquet", &["chrom", "pos", "ref", "alt", "rsID"], false, split, spec.group_rows)?;
        let mut vep = Vec::new();
        for r in &cells {
            if self.rng.gen_bool(0.5) {
                let mut r = r[..4].to_vec();
                r.push(CONSEQUENCES.choose(&mut self.rng).unwrap().to_string());
                vep.push(r);
            }
        }
        self.write_gorz("vep.gorz", &["chrom", "pos", "ref", "alt", "consequence"], vep)
    }

    fn genes(&mut self, spec: &GenSpec, length: u64) -> Result<()> {
        let span = (length / (spec.genes as u64).max(1) * 2).clamp(500, 40_000);
        let mut genes = Vec::new();
        for i in 0..spec.genes {
            let c = i % CONTIGS.len();
            let len = self.rng.gen_range(span / 4..span);
            let start = self.rng.gen_range(1..length - len);
            let name = match i {
                0 => "BRCA1".to_string(),
                1 => "BRCA2".to_string(),
                _ => format!("GENE{i:04}"),
            };
            genes.push((c, start, start + len, name));
        }
        genes.sort();
        let mut exons = Vec::new();
        for (c, start, stop, name) in &genes {
            let k = self.rng.gen_range(2..6u64);
            let step = (stop - start) / k;
            for e in 0..k {
                let a = start + e * step + self.rng.gen_range(0..step / 3 + 1);
                let b = (a + self.rng.gen_range(step / 4..step / 2 + 2)).min(*stop);
                exons.push((*c, a, b, name.clone()));
            }
        }
        exons.sort();
        let row = |(c, a, b, n): (usize, u64, u64, String)| vec![CONTIGS[c].to_string(), a.to_string(), b.to_string(), n];
        self.write_gorz("genes.gorz", &["chrom", "gene_start", "gene_end", "gene_symbol"], genes.into_iter().map(row).collect())?;
        self.write_gorz("exons.gorz", &["chrom", "exon_start", "exon_end", "gene_symbol"], exons.into_iter().map(row).collect())
    }

    fn phewas(&mut self, spec: &GenSpec, vars: &[Variant]) -> Result<()> {
        let dir = self.dir.join("PheWas.gord");
        let names = ["chrom", "pos", "ref", "alt", "pheno", "pval"];
        let mut parts = Vec::new();
        let mut total = 0;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for t in 0..spec.traits.max(1) {
            let trait_name = format!("PC_{}", 250 + t * 31);
            let file = format!("{trait_name}.gorz");
            let path = dir.join(&file);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = GorzWriter::new(BufWriter::new(f), &path, &schema(&names, true)?, self.build.clone(), 128)?;
            let (mut first, mut last) = (None, None);
            for v in vars {
                let hit = v.rs.iter().any(|i| i.to_string().starts_with("222"));
                if !self.rng.gen_bool(if hit { 0.8 } else { 0.3 }) {
                    continue;
                }
                let pval = format!("{:.3e}", self.rng.gen::<f64>().powi(4));
                w.push(&Row::from_cells([
                    self.contig(v.contig).to_string(),
                    v.pos.to_string(),
                    v.reference.clone(),
                    v.alt.clone(),
                    trait_name.clone(),
                    pval,
                ]))?;
                first.get_or_insert((v.contig, v.pos));
                last = Some((v.contig, v.pos));
            }
            let (rows, _, _) = w.finish()?;
            total += rows;
            let (a, z) = (first.unwrap_or((0, 1)), last.unwrap_or((0, 1)));
            parts.push(ManifestEntry {
                file,
                tags: vec![trait_name],
                start: (CONTIGS[a.0].to_string(), a.1),
                stop: (CONTIGS[z.0].to_string(), z.1),
            });
        }
        gord::write_manifest(&dir, &parts)?;
        self.record("PheWas.gord", total);
        Ok(())
    }

    /// Term ids: a root, then `n - 1` terms each with one or two parents
    /// among earlier terms. Term 10 is [`HPO_TERM`].
    fn ontology(&mut self, spec: &GenSpec) -> Result<Vec<String>> {
        let n = spec.hpo_terms.max(12);
        let ids: Vec<String> =
            (0..n).map(|k| if k == 10 { HPO_TERM.to_string() } else { format!("HP:{:07}", 1 + 37 * k as u64 + 2000 * (k > 0) as u64) }).collect();
        let mut edges = Vec::new();
        for k in 1..n {
            let p = self.rng.gen_range(0..k);
            edges.push(vec![ids[p].clone(), ids[k].clone()]);
            if k > 2 && self.rng.gen_bool(0.3) {
                let q = self.rng.gen_range(0..k);
                if q != p {
                    edges.push(vec![ids[q].clone(), ids[k].clone()]);
                }
            }
        }
        self.write_tsv("hpo_parent_child.tsv", &["parent", "child"], edges)?;
        Ok(ids)
    }

    fn samples(&self, spec: &GenSpec) -> Vec<String> {
        (1..=spec.samples.max(1)).map(|i| format!("S{i:04}")).collect()
    }

    fn phenotypes(&mut self, spec: &GenSpec, terms: &[String]) -> Result<()> {
        let mut cells = Vec::new();
        for s in self.samples(spec) {
            if !self.rng.gen_bool(0.85) {
                continue;
            }
            for _ in 0..self.rng.gen_range(1..5) {
                let code = terms.choose(&mut self.rng).unwrap().clone();
                let date = format!("{}-{:02}-{:02}", self.rng.gen_range(1990..2021), self.rng.gen_range(1..13), self.rng.gen_range(1..29));
                cells.push(vec![s.clone(), code, date]);
            }
        }
        self.write_rgc("phenotypes.parquet", &["PID", "hpo_code", "date"], false, cells, spec.group_rows)?;

        let mut pheno = Vec::new();
        let extra = (1..=spec.samples / 10 + 1).map(|i| format!("X{i:04}"));
        for s in self.samples(spec).into_iter().chain(extra) {
            if self.rng.gen_bool(0.9) {
                pheno.push(vec![s, format!("{:.4}", self.rng.gen::<f64>() * 2.0 - 1.0), self.rng.gen_range(0..2).to_string()]);
            }
        }
        self.write_tsv("pheno.tsv", &["sample_id", "height", "diabetes"], pheno)
    }

    fn genotypes(&mut self, spec: &GenSpec, vars: &[Variant]) -> Result<()> {
        let samples = self.samples(spec);
        let nb = spec.buckets.clamp(1, samples.len());
        let per = samples.len().div_ceil(nb);
        let buckets: Vec<(String, Vec<String>)> =
            samples.chunks(per).enumerate().map(|(i, c)| (format!("b{}", i + 1), c.to_vec())).collect();
        let layout: Vec<Vec<String>> =
            buckets.iter().flat_map(|(b, ss)| ss.iter().map(move |s| vec![s.clone(), b.clone()])).collect();
        self.write_tsv("varbuckets.tsv", &["sample_id", "bucket"], layout)?;

        let snps: Vec<&Variant> = vars.iter().filter(|v| v.reference.len() == 1 && v.alt.len() == 1).collect();
        let p = (spec.genotype_variants as f64 / snps.len().max(1) as f64).min(1.0);
        let chosen: Vec<&Variant> = snps.into_iter().filter(|_| self.rng.gen_bool(p)).collect();

        let dir = self.dir.join("variants.gord");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let names = ["chrom", "pos", "ref", "alt", "bucket", "values"];
        let mut parts = Vec::new();
        let mut total = 0;
        for (b, ss) in &buckets {
            let file = format!("bucket_{b}.gorz");
            let path = dir.join(&file);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = GorzWriter::new(BufWriter::new(f), &path, &schema(&names, true)?, self.build.clone(), 128)?;
            for v in &chosen {
                let values: String = (0..ss.len())
                    .map(|_| match self.rng.gen_range(0..100) {
                        0..=69 => '0',
                        70..=89 => '1',
                        90..=97 => '2',
                        _ => '3',
                    })
                    .collect();
                w.push(&Row::from_cells([
                    self.contig(v.contig).to_string(),
                    v.pos.to_string(),
                    v.reference.clone(),
                    v.alt.clone(),
                    b.clone(),
                    values,
                ]))?;
            }
            let (rows, _, _) = w.finish()?;
            total += rows;
            let first = chosen.first().map(|v| (v.contig, v.pos)).unwrap_or((0, 1));
            let last = chosen.last().map(|v| (v.contig, v.pos)).unwrap_or((0, 1));
            parts.push(ManifestEntry {
                file,
                tags: ss.clone(),
                start: (CONTIGS[first.0].to_string(), first.1),
                stop: (CONTIGS[last.0].to_string(), last.1),
            });
        }
        gord::write_manifest(&dir, &parts)?;
        self.record("variants.gord", total);

        let site = |v: &&Variant| vec![CONTIGS[v.contig].to_string(), v.pos.to_string(), v.reference.clone(), v.alt.clone()];
        let pruned: Vec<Vec<String>> = chosen.iter().filter(|_| self.rng.gen_bool(0.5)).map(site).collect();
        let step1: Vec<Vec<String>> = chosen.iter().filter(|_| self.rng.gen_bool(0.6)).map(site).collect();
        self.write_gorz("LDpruned_variants.gorz", &["chrom", "pos", "ref", "alt"], pruned)?;
        self.write_gorz("step1_variants.gorz", &["chrom", "pos", "ref", "alt"], step1)?;

        let mut gwas = Vec::new();
        for label in ["height", "diabetes"] {
            for v in &chosen {
                if self.rng.gen_bool(0.7) {
                    let beta = format!("{:.4}", self.rng.gen::<f64>() - 0.5);
                    let pval = format!("{:.3e}", self.rng.gen::<f64>().powi(3));
                    gwas.push(vec![CONTIGS[v.contig].to_string(), v.pos.to_string(), label.to_string(), beta, pval]);
                }
            }
        }
        gwas.shuffle(&mut self.rng);
        self.write_tsv("wgrgwas.tsv", &["chrom", "pos", "label", "beta", "pval"], gwas)
    }
}

/// Writes the full fixture set into `dir`, creating it if needed.
pub fn generate(dir: impl AsRef<Path>, spec: &GenSpec) -> Result<GenSummary> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let length = (spec.variants as u64 * 20 / CONTIGS.len() as u64).max(50_000);
    let build = ContigOrder::new(CONTIGS.iter().map(|c| (c.to_string(), length)))?;
    let mut g = Gen {
        dir: dir.to_path_buf(),
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        build: Arc::new(build),
        seqs: Vec::new(),
        summary: GenSummary::default(),
    };
    g.reference(length)?;
    let vars = g.variants(spec, length);
    g.dbsnp(spec, &vars)?;
    g.genes(spec, length)?;
    g.phewas(spec, &vars)?;
    let terms = g.ontology(spec)?;
    g.phenotypes(spec, &terms)?;
    g.genotypes(spec, &vars)?;
    Ok(g.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenSpec {
        GenSpec { variants: 300, genes: 8, samples: 12, genotype_variants: 50, ..GenSpec::default() }
    }

    fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate(a.path(), &small()).unwrap();
        generate(b.path(), &small()).unwrap();
        assert_eq!(snapshot(a.path()), snapshot(b.path()));
        let c = tempfile::tempdir().unwrap();
        generate(c.path(), &GenSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(snapshot(a.path()), snapshot(c.path()));
    }

    #[test]
    fn outputs_verify() {
        let d = tempfile::tempdir().unwrap();
        let summary = generate(d.path(), &small()).unwrap();
        let cfg = crate::model::load_config(d.path().join("gorconfig.txt")).unwrap();
        for (name, rows) in &summary.files {
            let n = crate::storage::verify_path(&d.path().join(name), Some(cfg.build.clone())).unwrap();
            assert_eq!(n, *rows, "{name}");
        }
        assert!(summary.files.iter().any(|(n, r)| n == "dbsnp.gorz" && *r == 300));
    }
}
