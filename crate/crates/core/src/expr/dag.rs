//! Parent/child relations (ontologies such as HPO) and descendant closure.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::SystemTime;

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct DagRelation {
    children: HashMap<String, Vec<String>>,
    nodes: HashSet<String>,
}

impl DagRelation {
    /// Builds from `(parent, child)` edges, rejecting cycles.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut dag = DagRelation::default();
        for (p, c) in edges {
            let (p, c) = (p.into(), c.into());
            dag.nodes.insert(p.clone());
            dag.nodes.insert(c.clone());
            let kids = dag.children.entry(p).or_default();
            if !kids.contains(&c) {
                kids.push(c);
            }
        }
        dag.check_acyclic()?;
        Ok(dag)
    }

    /// Parses headered TSV; the first two columns are parent and child.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for line in text.lines().skip(1) {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split('\t');
            match (cells.next(), cells.next()) {
                (Some(p), Some(c)) => edges.push((p.to_string(), c.to_string())),
                _ => return Err(Error::SchemaError(format!("DAG row {line:?} has fewer than 2 columns"))),
            }
        }
        Self::from_edges(edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    fn check_acyclic(&self) -> Result<()> {
        // 1 = on stack, 2 = done
        let mut state: HashMap<&str, u8> = HashMap::new();
        let mut roots: Vec<&String> = self.children.keys().collect();
        roots.sort();
        for root in roots {
            if state.contains_key(root.as_str()) {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
            state.insert(root, 1);
            while let Some((node, i)) = stack.last_mut() {
                let kids = self.children.get(*node).map(Vec::as_slice).unwrap_or(&[]);
                if let Some(k) = kids.get(*i) {
                    *i += 1;
                    match state.get(k.as_str()) {
                        Some(1) => return Err(Error::CyclicDag(k.clone())),
                        Some(_) => {}
                        None => {
                            state.insert(k, 1);
                            stack.push((k, 0));
                        }
                    }
                } else {
                    state.insert(node, 2);
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    /// `term` and everything reachable from it, in BFS order.
    pub fn descendants(&self, term: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut queue = VecDeque::from([term.to_string()]);
        seen.insert(term.to_string());
        while let Some(n) = queue.pop_front() {
            if let Some(kids) = self.children.get(&n) {
                for k in kids {
                    if seen.insert(k.clone()) {
                        queue.push_back(k.clone());
                    }
                }
            }
            out.push(n);
        }
        out
    }

    pub fn descendant_set(&self, term: &str) -> HashSet<String> {
        self.descendants(term).into_iter().collect()
    }

    pub fn in_dag(&self, term: &str, value: &str) -> bool {
        value == term || self.descendants(term).iter().any(|d| d == value)
    }

    /// Union of descendant sets, one entry per distinct node, in first-seen order.
    pub fn descendants_of_all<S: AsRef<str>>(&self, terms: &[S]) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in terms {
            for d in self.descendants(t.as_ref()) {
                if seen.insert(d.clone()) {
                    out.push(d);
                }
            }
        }
        out
    }
}

type CacheKey = (PathBuf, Option<SystemTime>, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<DagRelation>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<DagRelation>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Loads a DAG file, reusing the parsed form while the file's mtime and size
/// are unchanged.
pub fn load_dag_cached(path: &Path) -> Result<Arc<DagRelation>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let key = (path.to_path_buf(), meta.modified().ok(), meta.len());
    if let Some(d) = cache().lock().unwrap().get(&key) {
        return Ok(d.clone());
    }
    let dag = Arc::new(DagRelation::load(path)?);
    let mut c = cache().lock().unwrap();
    c.retain(|k, _| k.0 != key.0);
    c.insert(key, dag.clone());
    Ok(dag)
}

/// Logs a warning the first time a term missing from a DAG is used.
pub fn warn_absent_term(path: &Path, term: &str) {
    static SEEN: OnceLock<Mutex<HashSet<(PathBuf, String)>>> = OnceLock::new();
    let seen = SEEN.get_or_init(Default::default);
    if seen.lock().unwrap().insert((path.to_path_buf(), term.to_string())) {
        log::warn!("term '{term}' not found in {}; matching it literally", path.display());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_basics() {
        let empty = DagRelation::from_edges(Vec::<(String, String)>::new()).unwrap();
        assert!(empty.in_dag("A", "A"));
        let d = DagRelation::from_edges([("A", "B"), ("B", "C")]).unwrap();
        assert!(d.in_dag("A", "C"));
        assert!(!d.in_dag("B", "A"));
        let d = DagRelation::from_edges([("A", "B"), ("A", "C")]).unwrap();
        assert_eq!(d.descendant_set("A"), ["A", "B", "C"].map(String::from).into());
        let d = DagRelation::from_edges([("A", "B")]).unwrap();
        assert_eq!(d.descendants("B"), vec!["B"]);
    }

    #[test]
    fn cycles_rejected() {
        let err = DagRelation::from_edges([("A", "B"), ("B", "C"), ("C", "A")]).unwrap_err();
        assert!(matches!(err, Error::CyclicDag(_)));
        assert!(DagRelation::from_edges([("A", "A")]).is_err());
        // diamonds are fine
        assert!(DagRelation::from_edges([("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]).is_ok());
    }

    #[test]
    fn tsv_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dag.tsv");
        fs::write(&p, "parent\tchild\nA\tB\nB\tC\n").unwrap();
        let a = load_dag_cached(&p).unwrap();
        let b = load_dag_cached(&p).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(a.in_dag("A", "C"));
        fs::write(&p, "parent\tchild\nA\tB\nB\tC\nC\tD\n").unwrap();
        let c = load_dag_cached(&p).unwrap();
        assert!(c.in_dag("A", "D"));
    }
}
