//! Steps that may emit several rows per input row.

use std::collections::HashMap;
use std::sync::Arc;

use crate::engine::rowops::{RowFn, Xform};
use crate::engine::{append_names, extend_schema, EngineCtx, Lookup, Resolver};
use crate::error::{Error, Result};
use crate::expr::DagRelation;
use crate::model::{BoxStream, Row};
use crate::parser::Step;

fn key_column(step: &Step, schema: &crate::model::Schema) -> Result<usize> {
    let c = step.value("c").ok_or_else(|| Error::Usage(format!("{} needs -c <column>", step.command)))?;
    schema.index_of(c)
}

pub(crate) fn bind(input: BoxStream, step: &Step, _ctx: &EngineCtx, res: &dyn Resolver) -> Result<BoxStream> {
    let schema = input.schema().clone();
    let ordered = schema.is_ordered();
    match step.command.as_str() {
        "split" => {
            let col = schema.index_of(step.args[0].word().unwrap_or_default())?;
            let f: RowFn = Box::new(move |r, out| {
                let cell = r.cell(col);
                if !cell.contains(',') {
                    out.push_back(r);
                    return Ok(());
                }
                for item in cell.split(',') {
                    out.push_back(r.with_cell(col, item));
                }
                Ok(())
            });
            let keep = col >= 3;
            let x = Xform::new(input, schema, f);
            Ok(Box::new(if keep { x.keeps_span() } else { x }))
        }
        "map" | "multimap" => {
            let rel = step.rel(0).ok_or_else(|| Error::Usage(format!("{} needs a relation", step.command)))?;
            let mut lookup = Lookup::new(res.open(rel, false)?);
            let cartesian = step.has("cartesian");
            let key = if cartesian { None } else { Some(key_column(step, &schema)?) };
            // the key column itself is not appended
            let skip = usize::from(key.is_some());
            let extra = append_names(&schema, lookup.schema.names().skip(skip).map(str::to_string));
            let out_schema = extend_schema(&schema, &extra, ordered)?;
            let unique = step.command == "map";
            let mut table: Option<HashMap<String, Vec<Row>>> = None;
            let f: RowFn = Box::new(move |r, out| {
                if table.is_none() {
                    let mut m: HashMap<String, Vec<Row>> = HashMap::new();
                    for row in lookup.rows()? {
                        let k = if key.is_some() { row.cell(0).to_string() } else { String::new() };
                        let tail: Vec<&str> = row.cells().skip(skip).collect();
                        let entry = m.entry(k.clone()).or_default();
                        if unique && !entry.is_empty() {
                            return Err(Error::DuplicateKey(k));
                        }
                        entry.push(Row::from_cells(tail));
                    }
                    table = Some(m);
                }
                let m = table.as_ref().unwrap();
                let k = key.map(|c| r.cell(c)).unwrap_or("");
                if let Some(matches) = m.get(k) {
                    for t in matches {
                        let extra: Vec<&str> = t.cells().collect();
                        out.push_back(r.appended(&extra));
                    }
                }
                Ok(())
            });
            Ok(Box::new(Xform::new(input, out_schema, f).keeps_span()))
        }
        "dagmap" => {
            let col = key_column(step, &schema)?;
            let rel = step.rel(0).ok_or_else(|| Error::Usage("dagmap needs a relation".into()))?;
            let mut lookup = Lookup::new(res.open(rel, false)?);
            if lookup.schema.len() < 2 {
                return Err(Error::SchemaError("dagmap relation needs parent and child columns".into()));
            }
            let extra = append_names(&schema, ["dag_node".to_string()]);
            let out_schema = extend_schema(&schema, &extra, ordered)?;
            let mut dag: Option<Arc<DagRelation>> = None;
            let f: RowFn = Box::new(move |r, out| {
                if dag.is_none() {
                    let edges: Vec<(String, String)> =
                        lookup.rows()?.iter().map(|e| (e.cell(0).to_string(), e.cell(1).to_string())).collect();
                    dag = Some(Arc::new(DagRelation::from_edges(edges)?));
                }
                for node in dag.as_ref().unwrap().descendants(r.cell(col)) {
                    out.push_back(r.appended(&[node]));
                }
                Ok(())
            });
            Ok(Box::new(Xform::new(input, out_schema, f).keeps_span()))
        }
        c => unreachable!("expand does not handle {c}"),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{HashSet, VecDeque};

    use crate::engine::testutil::*;
    use crate::error::Error;

    #[test]
    fn split_items() {
        let t = table(&["chrom", "pos", "rsIDs"], true, &[&["chr1", "5", "rs1,rs2"], &["chr1", "6", ""]]);
        let (_, rows) = run(&t, "split rsIDs", &Tables::default()).unwrap();
        let ids: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
        assert_eq!(ids, ["rs1", "rs2", ""]);
    }

    #[test]
    fn map_and_multimap() {
        let input = table(&["sample_id", "v"], false, &[&["s1", "a"], &["s2", "b"], &["s9", "c"]]);
        let mut rel = Tables::default();
        rel.0.insert("b".into(), table(&["sample_id", "bucket", "v"], false, &[&["s1", "b1", "x"], &["s2", "b2", "y"]]));
        let (s, rows) = run(&input, "map -c sample_id [#b#]", &rel).unwrap();
        assert_eq!(s.header_line(), "sample_id\tv\tbucket\txv");
        assert_eq!(rows, vec![vec!["s1", "a", "b1", "x"], vec!["s2", "b", "b2", "y"]]);

        let (_, rows) = run(&input, "multimap -cartesian [#b#]", &rel).unwrap();
        assert_eq!(rows.len(), 6);

        rel.0.insert("d".into(), table(&["k", "w"], false, &[&["s1", "1"], &["s1", "2"]]));
        assert!(matches!(run(&input, "map -c sample_id [#d#]", &rel), Err(Error::DuplicateKey(_))));
        let (_, rows) = run(&input, "multimap -c sample_id [#d#]", &rel).unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn dagmap_descendants() {
        let input = table(&["child"], false, &[&["A"], &["Z"]]);
        let mut rel = Tables::default();
        let edges = [("A", "B"), ("A", "C"), ("C", "D"), ("X", "A")];
        let e: Vec<[&str; 2]> = edges.iter().map(|(a, b)| [*a, *b]).collect();
        let e: Vec<&[&str]> = e.iter().map(|r| &r[..]).collect();
        rel.0.insert("dag".into(), table(&["parent", "child"], false, &e));
        let (s, rows) = run(&input, "dagmap -c child [#dag#]", &rel).unwrap();
        assert_eq!(s.name(1), "dag_node");

        // BFS oracle over the edge list
        let mut want: HashSet<String> = HashSet::new();
        let mut q = VecDeque::from(["A".to_string()]);
        while let Some(n) = q.pop_front() {
            if want.insert(n.clone()) {
                q.extend(edges.iter().filter(|(p, _)| *p == n).map(|(_, c)| c.to_string()));
            }
        }
        let got: HashSet<String> = rows.iter().filter(|r| r[0] == "A").map(|r| r[1].clone()).collect();
        assert_eq!(got, want);
        assert_eq!(rows.iter().filter(|r| r[0] == "Z").count(), 1);
    }
}
