//! The programmatic session: registration, incremental creates, lazy
//! relations, tails and writes.

mod common;

use gorge::fixtures::GenSpec;
use gorge::session::{Session, WriteFormat};
use gorge::Error;

fn small() -> GenSpec {
    GenSpec { variants: 800, genes: 10, samples: 16, genotype_variants: 100, ..GenSpec::default() }
}

fn genes() -> gorge::model::Table {
    common::table(&["gene"], &[&["BRCA1"], &["BRCA2"]])
}

fn no_data_read(s: &Session) -> bool {
    let io = s.env().stats.snapshot();
    io.rows_read == 0 && io.blocks_read == 0 && io.groups_read == 0
}

#[test]
fn registered_table_is_visible_to_pipe_and_sql() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.register_table("myGenes", genes()).unwrap();
    let t = s.relation("nor [#myGenes#]").unwrap().collect().unwrap();
    assert_eq!(common::cells(&t), [["BRCA1"], ["BRCA2"]]);
    let t = s.relation("select gene from mygenes where gene like '%2'").unwrap().collect().unwrap();
    assert_eq!(common::cells(&t), [["BRCA2"]]);
}

#[test]
fn reregistering_replaces_rows() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.register_table("g", genes()).unwrap();
    s.register_table("g", common::table(&["gene"], &[&["TP53"]])).unwrap();
    let t = s.relation("nor [#g#]").unwrap().collect().unwrap();
    assert_eq!(common::cells(&t), [["TP53"]]);
}

#[test]
fn registration_colliding_with_a_create_is_rejected() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.set_creates("create #x# = nor varbuckets.tsv").unwrap();
    let e = s.register_table("x", genes()).unwrap_err();
    assert!(matches!(e, Error::NameCollision(n) if n == "x"));
}

#[test]
fn defs_expand_in_later_relations() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.set_creates("def #exons# = exons.gorz").unwrap();
    let via_def = s.relation("gor #exons# | where exon_start < 20000").unwrap().collect().unwrap();
    let direct = s.relation("gor exons.gorz | where exon_start < 20000").unwrap().collect().unwrap();
    assert_eq!(common::tsv(&via_def), common::tsv(&direct));
}

#[test]
fn unconsumed_creates_are_never_evaluated() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.set_creates("create #a# = gor dbsnp.gorz | where len(ref) > 1; create #b# = gor [#a#] | where pos < 5000").unwrap();
    let rel = s.relation("gor [#b#]").unwrap();
    assert_eq!(rel.schema().header_line(), "chrom\tpos\tref\talt\trsIDs");
    assert_eq!(s.env().counters.evaluations(), 0);
    assert!(no_data_read(&s), "{:?}", s.env().stats.snapshot());
}

#[test]
fn incremental_creates_evaluate_in_dependency_order() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.register_table("myGenes", genes()).unwrap();
    s.set_creates("create #mygenes# = select gene from myGenes; def #exons# = exons.gorz").unwrap();
    s.set_create("#myexons#", "gor #exons# | inset -c gene_symbol [#mygenes#]").unwrap();
    let rel = s.relation("nor [#myexons#] | select gene_symbol | distinct").unwrap();
    assert_eq!(s.env().counters.evaluations(), 0);
    let t = rel.collect().unwrap();
    assert_eq!(common::cells(&t), [["BRCA1"], ["BRCA2"]]);
    assert_eq!(s.env().counters.evaluated(), ["mygenes", "myexons"]);
    rel.collect().unwrap();
    assert_eq!(s.env().counters.evaluations(), 2, "second consumption replays the cache");
}

#[test]
fn cycle_across_old_and_new_creates_leaves_session_unchanged() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.set_creates("create #a# = nor [#b#]; create #b# = nor varbuckets.tsv").unwrap();
    let e = s.set_create("#b#", "nor [#a#]").unwrap_err();
    assert!(matches!(e, Error::CreateCycle { .. }), "{e}");
    assert_eq!(s.relation("nor [#a#]").unwrap().count().unwrap(), 16);
}

#[test]
fn set_creates_rejects_a_query() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    assert!(s.set_creates("create #a# = nor varbuckets.tsv; nor [#a#]").is_err());
    assert!(s.creates().is_empty());
}

#[test]
fn empty_source_keeps_schema() {
    let dir = common::fixture_dir(&small());
    let s = common::session(dir.path());
    let rel = s.relation("gor dbsnp.gorz | where pos < 0").unwrap();
    let t = rel.collect().unwrap();
    assert!(t.rows.is_empty());
    assert_eq!(t.schema.header_line(), "chrom\tpos\tref\talt\trsIDs");
}

#[test]
fn definition_errors_are_eager() {
    let dir = common::fixture_dir(&small());
    let s = common::session(dir.path());
    assert!(matches!(s.relation("gor dbsnp.gorz | where nosuch = 1").unwrap_err(), Error::UnknownColumn(_)));
    assert!(matches!(s.relation("nor [#nothere#]").unwrap_err(), Error::UnresolvedRelation(_)));
    assert!(s.relation("gor dbsnp.gorz | bogus").is_err());
}

#[test]
fn sort_genome_tail_orders_rows() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.register_file("gwas", "wgrgwas.tsv").unwrap();
    let unordered = s.relation("select * from gwas").unwrap();
    assert!(!unordered.schema().is_ordered());
    let ordered = unordered.gor("sort genome").unwrap();
    assert!(ordered.schema().is_ordered());
    let t = ordered.collect().unwrap();
    let cfg = gorge::model::load_config(dir.path().join("gorconfig.txt")).unwrap();
    let loci: Vec<_> = t.rows.iter().map(|r| cfg.build.row_locus(r).unwrap()).collect();
    assert!(loci.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(t.rows.len(), unordered.count().unwrap() as usize);
}

#[test]
fn empty_tail_is_identity() {
    let dir = common::fixture_dir(&small());
    let s = common::session(dir.path());
    let rel = s.relation("gor genes.gorz").unwrap();
    assert_eq!(common::tsv(&rel.gor("").unwrap().collect().unwrap()), common::tsv(&rel.collect().unwrap()));
}

#[test]
fn build_dependent_steps_need_a_build() {
    let dir = common::fixture_dir(&small());
    let mut s = Session::without_build(dir.path(), dir.path().join("cache"));
    s.register_table("v", common::table(&["chrom", "pos", "ref", "alt"], &[&["chr1", "10", "A", "C"]])).unwrap();
    let e = s.relation("nor [#v#] | sort genome | varnorm -left ref alt").and_then(|r| r.collect()).unwrap_err();
    assert!(matches!(e.root_cause(), Error::BuildRequired(_)), "{e}");
}

#[test]
fn tsv_write_round_trips() {
    let dir = common::fixture_dir(&small());
    let s = common::session(dir.path());
    let rel = s.relation("gor dbsnp.gorz").unwrap();
    let out = dir.path().join("copy.tsv");
    rel.write(&out, WriteFormat::Tsv, None).unwrap();
    let back = s.relation("nor copy.tsv").unwrap().collect().unwrap();
    assert_eq!(common::cells(&back), common::cells(&rel.collect().unwrap()));
}

#[test]
fn unordered_gorz_write_names_the_remedy() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.register_file("gwas", "wgrgwas.tsv").unwrap();
    let e = s.relation("select * from gwas").unwrap().write(dir.path().join("x.gorz"), WriteFormat::Gorz, None).unwrap_err();
    let root = e.root_cause();
    assert!(matches!(root, Error::OrderViolation { .. }), "{e}");
    assert!(root.to_string().contains("sort genome"));
    assert!(!dir.path().join("x.gorz").exists());
}

#[test]
fn partitioned_gorz_write_tags_parts() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.register_file("gwas", "wgrgwas.tsv").unwrap();
    let rel = s.relation("select * from gwas order by label, chrom, pos").unwrap();
    rel.write(dir.path().join("gw.gord"), WriteFormat::Gorz, Some("label")).unwrap();
    let dict = gorge::storage::GordDictionary::open(&dir.path().join("gw.gord")).unwrap();
    let mut tags: Vec<&str> = dict.tags().into_iter().collect();
    tags.sort();
    assert_eq!(tags, ["diabetes", "height"]);
    let back = s.relation("gor gw.gord").unwrap().collect().unwrap();
    assert_eq!(common::sorted(common::cells(&back)), common::sorted(common::cells(&rel.collect().unwrap())));
}

#[test]
fn rgc_write_then_predicate_scan_matches_filter() {
    let dir = common::fixture_dir(&small());
    let s = common::session(dir.path());
    let rel = s.relation("gor dbsnp.gorz | split rsIDs").unwrap();
    rel.write(dir.path().join("d.rgc"), WriteFormat::Rgc, None).unwrap();
    let all = rel.collect().unwrap();
    let pushed = s.relation("select * from d.rgc where rsIDs like 'rs1%' and pos > 1000").unwrap().collect().unwrap();
    let oracle: Vec<Vec<String>> = common::cells(&all)
        .into_iter()
        .filter(|r| r[4].starts_with("rs1") && r[1].parse::<u64>().unwrap() > 1000)
        .collect();
    assert!(!oracle.is_empty());
    assert_eq!(common::cells(&pushed), oracle);
}

#[test]
fn identical_call_sequences_give_identical_bytes() {
    let run = || {
        let dir = common::fixture_dir(&small());
        let mut s = common::session(dir.path());
        s.register_table("myGenes", genes()).unwrap();
        s.set_creates("create #g# = select gene from myGenes; create #e# = pgor exons.gorz | inset -c gene_symbol [#g#]")
            .unwrap();
        let rel = s.relation("pgor [#e#] | join -segsnp -ir dbsnp.gorz").unwrap();
        rel.write(dir.path().join("o.gorz"), WriteFormat::Gorz, None).unwrap();
        std::fs::read(dir.path().join("o.gorz")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn explain_lists_creates_and_cache_state() {
    let dir = common::fixture_dir(&small());
    let mut s = common::session(dir.path());
    s.set_creates("create #a# = nor varbuckets.tsv; create #b# = nor [#a#] | where bucket = 'b1'").unwrap();
    let before = s.explain("nor [#b#]").unwrap();
    assert!(before.contains("create\ta\t") && before.contains("pending"), "{before}");
    s.relation("nor [#b#]").unwrap().collect().unwrap();
    let after = s.explain("nor [#b#]").unwrap();
    assert!(after.lines().filter(|l| l.starts_with("create")).all(|l| l.ends_with("cached")), "{after}");
}
