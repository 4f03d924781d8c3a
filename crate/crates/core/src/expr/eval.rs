//! Binding expressions to a schema and evaluating them per row.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::dag::{load_dag_cached, warn_absent_term, DagRelation};
use crate::expr::pattern::{glob_match, like_match};
use crate::expr::value::{Num, Value};
use crate::expr::{BinOp, Expr};
use crate::model::{Row, Schema};

/// Context needed while binding: where relative file arguments resolve.
#[derive(Debug, Clone, Default)]
pub struct ExprEnv {
    pub base_dir: PathBuf,
}

impl ExprEnv {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        ExprEnv { base_dir: base_dir.into() }
    }

    pub fn resolve(&self, file: &str) -> PathBuf {
        let p = Path::new(file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub const AGGREGATES: &[&str] = &["count", "collect_list", "concat_ws", "sum", "min", "max", "avg"];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    If,
    Len,
    Div,
    Mod,
    ListSize,
    Quote,
    Upper,
    Lower,
    Contains,
    Year,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "if" => (Func::If, 3),
            "len" => (Func::Len, 1),
            "div" => (Func::Div, 2),
            "mod" => (Func::Mod, 2),
            "listsize" => (Func::ListSize, 1),
            "quote" => (Func::Quote, 1),
            "upper" => (Func::Upper, 1),
            "lower" => (Func::Lower, 1),
            "contains" => (Func::Contains, 2),
            "year" => (Func::Year, 1),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
enum Node {
    Lit(Value),
    Col(usize),
    Neg(Box<Node>),
    Not(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    In { expr: Box<Node>, list: Vec<Node>, negated: bool },
    Like { expr: Box<Node>, pattern: Box<Node>, negated: bool },
    InDag { expr: Box<Node>, dag: Arc<DagRelation>, path: PathBuf, term: Box<Node>, fixed: Option<Arc<HashSet<String>>> },
}

/// An expression whose column references are resolved to indices.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    root: Node,
}

fn bind_node(e: &Expr, schema: &Schema, env: &ExprEnv) -> Result<Node> {
    let b = |x: &Expr| bind_node(x, schema, env).map(Box::new);
    Ok(match e {
        Expr::Lit(v) => Node::Lit(v.clone()),
        Expr::Col(c) => Node::Col(schema.index_of(c)?),
        Expr::Star => return Err(Error::TypeMismatch("'*' is only valid in count(*)".into())),
        Expr::Neg(x) => Node::Neg(b(x)?),
        Expr::Not(x) => Node::Not(b(x)?),
        Expr::Binary(op, l, r) => Node::Binary(*op, b(l)?, b(r)?),
        Expr::Call(name, args) => {
            let Some((f, arity)) = Func::lookup(name) else {
                if AGGREGATES.contains(&name.as_str()) {
                    return Err(Error::TypeMismatch(format!(
                        "aggregate '{name}' is only valid in a SQL select list"
                    )));
                }
                return Err(Error::UnknownFunction(name.clone()));
            };
            if args.len() != arity {
                return Err(Error::TypeMismatch(format!(
                    "{name} takes {arity} argument(s), got {}",
                    args.len()
                )));
            }
            Node::Call(f, args.iter().map(|a| bind_node(a, schema, env)).collect::<Result<_>>()?)
        }
        Expr::In { expr, list, negated } => Node::In {
            expr: b(expr)?,
            list: list.iter().map(|a| bind_node(a, schema, env)).collect::<Result<_>>()?,
            negated: *negated,
        },
        Expr::Like { expr, pattern, negated } => {
            Node::Like { expr: b(expr)?, pattern: b(pattern)?, negated: *negated }
        }
        Expr::InDag { expr, file, term } => {
            let path = env.resolve(file);
            let dag = load_dag_cached(&path)?;
            let term = b(term)?;
            let fixed = match term.as_ref() {
                Node::Lit(v) => {
                    let t = v.to_text();
                    if !dag.contains(&t) {
                        warn_absent_term(&path, &t);
                    }
                    Some(Arc::new(dag.descendant_set(&t)))
                }
                _ => None,
            };
            Node::InDag { expr: b(expr)?, dag, path, term, fixed }
        }
    })
}

fn checked(op: BinOp, a: Num, b: Num) -> Result<Value> {
    if let (Num::Int(x), Num::Int(y)) = (a, b) {
        let r = match op {
            BinOp::Add => x.checked_add(y),
            BinOp::Sub => x.checked_sub(y),
            BinOp::Mul => x.checked_mul(y),
            BinOp::Div => {
                if y == 0 {
                    return Err(Error::DivisionByZero);
                }
                x.checked_div(y).map(|_| floor_div(x, y))
            }
            _ => unreachable!(),
        };
        if let Some(r) = r {
            return Ok(Value::Int(r));
        }
    }
    let (x, y) = (a.as_f64(), b.as_f64());
    let r = match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err(Error::DivisionByZero);
            }
            x / y
        }
        _ => unreachable!(),
    };
    Ok(Value::Float(r))
}

fn floor_div(x: i64, y: i64) -> i64 {
    let q = x.wrapping_div(y);
    if (x % y != 0) && ((x < 0) != (y < 0)) {
        q - 1
    } else {
        q
    }
}

/// An operand counts as text for `+` when it is a literal string, a list, or a
/// cell that does not parse as a number.
fn concatenates(v: &Value) -> bool {
    v.is_texty() || matches!(v, Value::Cell(_)) && v.as_num().is_none()
}

fn parse_year(s: &str) -> Result<i64> {
    let b = s.as_bytes();
    let ok = b.len() >= 10
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..7].iter().all(u8::is_ascii_digit)
        && b[7] == b'-'
        && b[8..10].iter().all(u8::is_ascii_digit);
    if !ok {
        return Err(Error::TypeMismatch(format!("'{s}' is not an ISO date (YYYY-MM-DD)")));
    }
    Ok(s[..4].parse().unwrap())
}

impl Node {
    fn eval(&self, row: &Row) -> Result<Value> {
        match self {
            Node::Lit(v) => Ok(v.clone()),
            Node::Col(i) => Ok(Value::Cell(row.cell(*i).to_string())),
            Node::Neg(x) => match x.eval(row)?.require_num()? {
                Num::Int(i) => Ok(i.checked_neg().map(Value::Int).unwrap_or(Value::Float(-(i as f64)))),
                Num::Float(f) => Ok(Value::Float(-f)),
            },
            Node::Not(x) => Ok(Value::Bool(!x.eval(row)?.as_bool()?)),
            Node::Binary(op, l, r) => match op {
                BinOp::And => Ok(Value::Bool(l.eval(row)?.as_bool()? && r.eval(row)?.as_bool()?)),
                BinOp::Or => Ok(Value::Bool(l.eval(row)?.as_bool()? || r.eval(row)?.as_bool()?)),
                BinOp::Wild => Ok(Value::Bool(glob_match(&l.eval(row)?.to_text(), &r.eval(row)?.to_text()))),
                BinOp::Add => {
                    let (a, b) = (l.eval(row)?, r.eval(row)?);
                    if concatenates(&a) || concatenates(&b) {
                        let mut s = a.to_text();
                        s.push_str(&b.to_text());
                        Ok(Value::Text(s))
                    } else {
                        checked(*op, a.require_num()?, b.require_num()?)
                    }
                }
                BinOp::Sub | BinOp::Mul | BinOp::Div => {
                    let (a, b) = (l.eval(row)?, r.eval(row)?);
                    checked(*op, a.require_num()?, b.require_num()?)
                }
                cmp => {
                    let o = l.eval(row)?.compare(&r.eval(row)?);
                    use std::cmp::Ordering::*;
                    Ok(Value::Bool(match cmp {
                        BinOp::Eq => o == Equal,
                        BinOp::Ne => o != Equal,
                        BinOp::Lt => o == Less,
                        BinOp::Le => o != Greater,
                        BinOp::Gt => o == Greater,
                        BinOp::Ge => o != Less,
                        _ => unreachable!(),
                    }))
                }
            },
            Node::Call(f, args) => eval_call(*f, args, row),
            Node::In { expr, list, negated } => {
                let v = expr.eval(row)?;
                let mut found = false;
                for item in list {
                    if v.compare(&item.eval(row)?) == std::cmp::Ordering::Equal {
                        found = true;
                        break;
                    }
                }
                Ok(Value::Bool(found != *negated))
            }
            Node::Like { expr, pattern, negated } => {
                let m = like_match(&expr.eval(row)?.to_text(), &pattern.eval(row)?.to_text());
                Ok(Value::Bool(m != *negated))
            }
            Node::InDag { expr, dag, path, term, fixed } => {
                let v = expr.eval(row)?.to_text();
                let hit = match fixed {
                    Some(set) => set.contains(&v),
                    None => {
                        let t = term.eval(row)?.to_text();
                        if !dag.contains(&t) {
                            warn_absent_term(path, &t);
                        }
                        dag.in_dag(&t, &v)
                    }
                };
                Ok(Value::Bool(hit))
            }
        }
    }
}

fn eval_call(f: Func, args: &[Node], row: &Row) -> Result<Value> {
    let arg = |i: usize| args[i].eval(row);
    Ok(match f {
        Func::If => {
            if arg(0)?.as_bool()? {
                arg(1)?
            } else {
                arg(2)?
            }
        }
        Func::Len => Value::Int(arg(0)?.to_text().chars().count() as i64),
        Func::Div | Func::Mod => {
            let (a, b) = (arg(0)?.require_num()?, arg(1)?.require_num()?);
            match (a, b) {
                (Num::Int(_), Num::Int(0)) => return Err(Error::DivisionByZero),
                (Num::Int(x), Num::Int(y)) if f == Func::Div => Value::Int(floor_div(x, y)),
                (Num::Int(x), Num::Int(y)) => Value::Int(x.wrapping_rem(y).wrapping_add(y).wrapping_rem(y)),
                (a, b) => {
                    let (x, y) = (a.as_f64(), b.as_f64());
                    if y == 0.0 {
                        return Err(Error::DivisionByZero);
                    }
                    if f == Func::Div {
                        Value::Float((x / y).floor())
                    } else {
                        Value::Float(x - y * (x / y).floor())
                    }
                }
            }
        }
        Func::ListSize => {
            let s = arg(0)?.to_text();
            Value::Int(if s.is_empty() { 0 } else { s.split(',').count() as i64 })
        }
        Func::Quote => Value::Text(format!("'{}'", arg(0)?.to_text().replace('\'', "''"))),
        Func::Upper => Value::Text(arg(0)?.to_text().to_uppercase()),
        Func::Lower => Value::Text(arg(0)?.to_text().to_lowercase()),
        Func::Contains => Value::Bool(arg(0)?.to_text().contains(&arg(1)?.to_text())),
        Func::Year => Value::Int(parse_year(&arg(0)?.to_text())?),
    })
}

impl BoundExpr {
    pub fn bind(expr: &Expr, schema: &Schema, env: &ExprEnv) -> Result<Self> {
        Ok(BoundExpr { root: bind_node(expr, schema, env)? })
    }

    pub fn eval(&self, row: &Row) -> Result<Value> {
        self.root.eval(row)
    }

    pub fn eval_bool(&self, row: &Row) -> Result<bool> {
        self.root.eval(row)?.as_bool()
    }

    pub fn eval_text(&self, row: &Row) -> Result<String> {
        Ok(self.root.eval(row)?.to_text())
    }
}

/// Evaluates a column-free expression.
pub fn eval_const(expr: &Expr) -> Result<Value> {
    let schema = Schema::from_names::<&str>(&[], false)?;
    BoundExpr::bind(expr, &schema, &ExprEnv::default())?.eval(&Row::from_cells(Vec::<&str>::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn ev(s: &str) -> Result<Value> {
        eval_const(&parse_expr(s).unwrap())
    }

    fn row_eval(s: &str, names: &[&str], cells: &[&str]) -> Result<Value> {
        let schema = Schema::from_names(names, false).unwrap();
        let e = BoundExpr::bind(&parse_expr(s).unwrap(), &schema, &ExprEnv::default())?;
        e.eval(&Row::from_cells(cells.iter().copied()))
    }

    #[test]
    fn functions() {
        assert_eq!(ev("if(len('AC')=len('A'),'Snp','InDel')").unwrap().to_text(), "InDel");
        assert_eq!(ev("div(7,3)").unwrap(), Value::Int(2));
        assert_eq!(ev("div(-7,3)").unwrap(), Value::Int(-3));
        assert_eq!(ev("mod(-7,3)").unwrap(), Value::Int(2));
        assert_eq!(ev("listsize('')").unwrap(), Value::Int(0));
        assert_eq!(ev("listsize('a,b,c')").unwrap(), Value::Int(3));
        assert_eq!(ev("quote('it''s')").unwrap().to_text(), "'it''s'");
        assert_eq!(ev("upper('ab') + lower('CD')").unwrap().to_text(), "ABcd");
        assert_eq!(ev("contains('BRCA2','CA')").unwrap(), Value::Bool(true));
        assert_eq!(ev("year('2004-02-29')").unwrap(), Value::Int(2004));
        assert!(matches!(ev("year('04/02/29')"), Err(Error::TypeMismatch(_))));
        assert!(matches!(ev("nosuch(1)"), Err(Error::UnknownFunction(_))));
    }

    #[test]
    fn arithmetic_and_concat() {
        assert_eq!(ev("1 + 2").unwrap(), Value::Int(3));
        assert_eq!(ev("1 + 2.5").unwrap(), Value::Float(3.5));
        assert_eq!(ev("'a' + 1").unwrap().to_text(), "a1");
        assert!(matches!(ev("1 / 0"), Err(Error::DivisionByZero)));
        assert!(matches!(ev("div(1,0)"), Err(Error::DivisionByZero)));
        assert_eq!(ev("9223372036854775807 + 1").unwrap().to_text(), format!("{}", 9.223372036854776e18));
        assert_eq!(row_eval("#2+1", &["chrom", "pos", "x"], &["chr1", "0", "x"]).unwrap().to_text(), "1");
        assert_eq!(
            row_eval("#1+'_'+#2+'_'+#3", &["chrom", "bpStart", "bpStop"], &["chr1", "1", "5000"])
                .unwrap()
                .to_text(),
            "chr1_1_5000"
        );
        let err = row_eval("a * 2", &["a"], &["abc"]).unwrap_err();
        assert!(err.to_string().contains("abc"), "{err}");
    }

    #[test]
    fn predicates() {
        assert_eq!(ev("'rs2220' ~ 'rs222*'").unwrap(), Value::Bool(true));
        assert_eq!(ev("'rs122' ~ 'rs222*'").unwrap(), Value::Bool(false));
        assert_eq!(ev("'x' in ('a','x')").unwrap(), Value::Bool(true));
        assert_eq!(ev("3 not in (1,2)").unwrap(), Value::Bool(true));
        assert_eq!(ev("'rs2221' like 'rs222%'").unwrap(), Value::Bool(true));
        assert_eq!(row_eval("p < 10", &["p"], &["9"]).unwrap(), Value::Bool(true));
        assert_eq!(row_eval("p < '10'", &["p"], &["9"]).unwrap(), Value::Bool(false));
        assert!(matches!(ev("1 and true"), Err(Error::TypeMismatch(_))));
        assert!(matches!(row_eval("q = 1", &["p"], &["9"]), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn indag_predicate() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.tsv"), "parent\tchild\nA\tB\nB\tC\nX\tY\n").unwrap();
        let schema = Schema::from_names(&["code"], false).unwrap();
        let env = ExprEnv::new(dir.path());
        let e = BoundExpr::bind(&parse_expr("code indag(d.tsv,'A')").unwrap(), &schema, &env).unwrap();
        let hits: Vec<_> = ["A", "B", "C", "X", "Y"]
            .iter()
            .filter(|c| e.eval_bool(&Row::from_cells([**c])).unwrap())
            .collect();
        assert_eq!(hits, [&"A", &"B", &"C"]);
        let e = BoundExpr::bind(&parse_expr("code indag(d.tsv,'Q')").unwrap(), &schema, &env).unwrap();
        assert!(e.eval_bool(&Row::from_cells(["Q"])).unwrap());
        assert!(!e.eval_bool(&Row::from_cells(["A"])).unwrap());
    }
}
