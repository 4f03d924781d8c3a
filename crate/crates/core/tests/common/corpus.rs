//! The example corpus: script examples run from `tests/golden/exNN.gor`,
//! SDK examples written against the session API.

use std::collections::BTreeMap;
use std::path::Path;

use gorge::session::{Relation, Session, WriteFormat};
use gorge::Result;

use super::{golden_dir, session, table, tsv};

pub const EXAMPLES: [u32; 13] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13];

pub const VARIANTS_PER_BLOCK: usize = 20;
pub const SAMPLE_BLOCK_COUNT: usize = 10;

pub fn script(n: u32) -> String {
    std::fs::read_to_string(golden_dir().join(format!("ex{n:02}.gor"))).unwrap()
}

fn out(rel: &Relation) -> Result<String> {
    Ok(tsv(&rel.collect()?))
}

/// Output of example `n` against the fixtures in `dir`.
pub fn run(n: u32, dir: &Path) -> Result<String> {
    let mut s = session(dir);
    match n {
        1..=6 => out(&s.script(&script(n))?),
        7 => {
            let rel = ex7(&mut s)?;
            let t = rel.collect()?;
            let mut text = tsv(&t);
            text.push_str("# snpCount\n");
            for (gene, n) in snp_count(&t) {
                text.push_str(&format!("{gene}\t{n}\n"));
            }
            Ok(text)
        }
        8 => {
            ex7(&mut s)?;
            out(&ex8(&s)?)
        }
        9 => out(&ex9(&mut s)?),
        10 => ex10(&mut s, dir),
        11 => ex11(&mut s),
        12 => {
            ex11_setup(&mut s)?;
            out(&ex12(&mut s)?)
        }
        13 => ex13(&mut s, dir),
        _ => panic!("no example {n}"),
    }
}

pub fn ex7(s: &mut Session) -> Result<Relation> {
    s.register_table("myGenes", table(&["gene"], &[&["BRCA1"], &["BRCA2"]]))?;
    s.set_creates(
        "create #mygenes# = select gene
from myGenes;
def #exons# = exons.gorz;
def #dbsnp# = dbsnp.gorz;
def #genes# = genes.gorz",
    )?;
    s.set_create(
        "#myexons#",
        "gor #exons#
| inset -c gene_symbol [#mygenes#]",
    )?;
    s.relation(
        "pgor [#myexons#]
| join -segsnp -ir #dbsnp#
| join -snpseg -r #genes#",
    )
}

/// `exonSnps.groupby("gene_symbol").count()`, computed outside the engine.
pub fn snp_count(t: &gorge::model::Table) -> BTreeMap<String, usize> {
    let col = t.schema.index_of("gene_symbol").unwrap();
    let mut counts = BTreeMap::new();
    for r in &t.rows {
        *counts.entry(r.cell(col).to_string()).or_insert(0) += 1;
    }
    counts
}

pub fn ex8(s: &Session) -> Result<Relation> {
    s.relation(
        "
select count(*) from <(pgor [#myexons#]
| join -segsnp -ir #dbsnp#
| join -snpseg -r #genes#) group by gene_symbol",
    )
}

pub fn ex9(s: &mut Session) -> Result<Relation> {
    let dbsnp_df = s.relation("nor dbsnp.parquet")?;
    let my_vars = dbsnp_df.gor(
        "calc type
  = if(len(ref)=len(alt),'Snp','InDel')",
    )?;
    s.register_table("myVars", my_vars.collect()?)?;
    s.set_def("#VEP#", "vep.gorz");
    s.relation(
        "
  select * from myVars
  order by chrom, pos",
    )?
    .gor(
        "varnorm -left ref alt
| group 1 -gc ref,alt,type -set -sc rsID
| rename set_rsID rsIDs
| varjoin -r -l -e 'NA' <(gor #VEP#
| select 1-alt,consequence)",
    )
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

pub fn ex10(s: &mut Session, dir: &Path) -> Result<String> {
    let anno = ex9(s)?;
    anno.write(dir.join("myVars.parquet"), WriteFormat::Rgc, None)?;
    anno.write(dir.join("myVars.gord"), WriteFormat::Gorz, Some("chrom"))?;
    let mut text = String::from("# myVars.parquet\n");
    text.push_str(&out(&s.relation("nor myVars.parquet")?)?);
    text.push_str("# myVars.gord\n");
    for f in listing(&dir.join("myVars.gord")) {
        text.push_str(&format!("{f}\n"));
    }
    text.push_str(&std::fs::read_to_string(dir.join("myVars.gord").join("manifest.gord")).unwrap());
    text.push_str(&out(&s.relation("gor myVars.gord")?)?);
    Ok(text)
}

pub fn ex11_setup(s: &mut Session) -> Result<()> {
    s.register_file("pheno", "pheno.tsv")?;
    s.set_creates(
        "
  create #pheno# = select * from pheno;
  create #samples# = nor [#pheno#]
  | inset -c sample_id varbuckets.tsv
  | select sample_id;
  create #regionsplit# = gor LDpruned_variants.gorz
  | group 1000 -count | seghist 100",
    )
}

pub fn ex11_dsl(s: &Session) -> Result<Relation> {
    s.relation(
        "pgor -split [#regionsplit#]
  variants.gord -nf -ff [#samples#]
  | varjoin -i step1_variants.gorz
  | csvsel -u 3 -gc ref,alt -vs 1
  varbuckets.tsv [#samples#]
  | rename Chrom contigName
  | rename pos start
  | rename ref referenceAllele
  | rename alt alternateAlleles",
    )
}

/// The stand-in for `chartodoublearray`: one number per genotype character.
pub fn char_to_double_array(values: &str) -> Vec<f64> {
    values.chars().map(|c| c.to_digit(10).map(f64::from).unwrap_or(f64::NAN)).collect()
}

/// The regression stub: consumes the prepared variant relation and the
/// sample list, and checks the block input has the expected shape.
pub fn ex11(s: &mut Session) -> Result<String> {
    ex11_setup(s)?;
    let dsl = ex11_dsl(s)?.collect()?;
    let sample_ids = s.relation("nor [#samples#]")?.collect()?;
    let names: Vec<&str> = dsl.schema.columns().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(&names[..4], ["contigName", "start", "referenceAllele", "alternateAlleles"]);
    let values = dsl.schema.index_of("values")?;
    let mut text = String::from("# variants\n");
    text.push_str(&tsv(&dsl));
    for r in &dsl.rows {
        let v = char_to_double_array(r.cell(values));
        assert_eq!(v.len(), sample_ids.rows.len(), "values per variant must equal the sample count");
        assert!(v.iter().all(|x| (0.0..=3.0).contains(x)));
    }
    text.push_str("# sample_ids\n");
    text.push_str(&tsv(&sample_ids));
    Ok(text)
}

pub fn ex12(s: &mut Session) -> Result<Relation> {
    s.set_create(
        "#samples#",
        "nor [#pheno#]
  | map -c sample_id varbuckets.tsv
  | sort -c bucket,sample_id
  | select sample_id",
    )?;
    s.set_create(
        "#BlockRegionSplit#",
        &format!(
            "gor LDpruned_variants.gorz
  | group 1000 -count | seghist {}",
            VARIANTS_PER_BLOCK
        ),
    )?;
    s.set_create(
        "#SampleBlocks#",
        &format!(
            "nor [#samples#]
  | rownum
  | calc sample_block div(rownum,{})
  | replace sample_id quote(sample_id)
  | group -gc sample_block -lis -sc sample_id
  | calc size listsize(lis_sample_id)",
            SAMPLE_BLOCK_COUNT
        ),
    )?;
    s.set_create(
        "#RegionSampleBlocks#",
        "nor [#BlockRegionSplit#]
  | replace #2 #2+1 /* -p is one-based */
  | calc header_block #1+'_'+#2+'_'+#3
  | multimap -cartesian [#SampleBlocks#]",
    )?;
    s.relation(
        "
  parallel -parts [#RegionSampleBlocks#]
  <(gor variants.gord -nf
  -p #{col:chrom}:#{col:bpStart}-#{col:bpStop}
  -f #{col:lis_sample_id}
  | varjoin -i step1_variants.gorz
  | csvsel -u 3 -gc ref,alt -vs 1
  varbuckets.tsv <(nor [#samples#]
  | where sample_id in (#{col:lis_sample_id}))
  | calc header_block '#{col:header_block}'
  | calc sample_block #{col:sample_block}
  | calc size #{col:size}
  | rename Chrom contigName
  | rename pos start
  | rename ref referenceAllele
  | rename alt alternateAlleles)",
    )
}

pub fn ex13(s: &mut Session, dir: &Path) -> Result<String> {
    s.register_file("wgrgwas", "wgrgwas.tsv")?;
    s.relation(
        "select * from wgrgwas
          order by label, chrom, pos",
    )?
    .write(dir.join("wgr_gwas.parquet"), WriteFormat::Rgc, Some("label"))?;
    s.relation("select * from wgrgwas")?
        .gor("sort genome")?
        .write(dir.join("wgr_gwas.gorz"), WriteFormat::Gorz, Some("label"))?;
    let mut text = String::from("# wgr_gwas.parquet\n");
    for f in listing(&dir.join("wgr_gwas.parquet")) {
        text.push_str(&format!("{f}\n"));
    }
    text.push_str(&out(&s.relation("nor wgr_gwas.parquet")?)?);
    text.push_str("# wgr_gwas.gorz\n");
    text.push_str(&std::fs::read_to_string(dir.join("wgr_gwas.gorz").join("manifest.gord")).unwrap());
    text.push_str(&out(&s.relation("gor wgr_gwas.gorz")?)?);
    Ok(text)
}
