use std::fmt;

use crate::expr::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    /// Anchored wildcard match, `*` and `?`.
    Wild,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Wild => "~",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    /// Column by name (possibly `alias.name`) or `#N`.
    Col(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Function call; name is lower-cased.
    Call(String, Vec<Expr>),
    /// `*` argument, only valid inside `count(*)`.
    Star,
    In { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    Like { expr: Box<Expr>, pattern: Box<Expr>, negated: bool },
    /// `expr indag(file, term)`.
    InDag { expr: Box<Expr>, file: String, term: Box<Expr> },
}

impl Expr {
    pub fn col(name: impl Into<String>) -> Self {
        Expr::Col(name.into())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Visits every node depth-first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Lit(_) | Expr::Col(_) | Expr::Star => {}
            Expr::Neg(e) | Expr::Not(e) => e.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            Expr::In { expr, list, .. } => {
                expr.walk(f);
                list.iter().for_each(|a| a.walk(f));
            }
            Expr::Like { expr, pattern, .. } => {
                expr.walk(f);
                pattern.walk(f);
            }
            Expr::InDag { expr, term, .. } => {
                expr.walk(f);
                term.walk(f);
            }
        }
    }

    pub fn map_cols(&self, f: &mut dyn FnMut(&str) -> Expr) -> Expr {
        let b = |e: &Expr, f: &mut dyn FnMut(&str) -> Expr| Box::new(e.map_cols(f));
        match self {
            Expr::Col(c) => f(c),
            Expr::Lit(_) | Expr::Star => self.clone(),
            Expr::Neg(e) => Expr::Neg(b(e, f)),
            Expr::Not(e) => Expr::Not(b(e, f)),
            Expr::Binary(op, l, r) => Expr::Binary(*op, b(l, f), b(r, f)),
            Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(|a| a.map_cols(f)).collect()),
            Expr::In { expr, list, negated } => Expr::In {
                expr: b(expr, f),
                list: list.iter().map(|a| a.map_cols(f)).collect(),
                negated: *negated,
            },
            Expr::Like { expr, pattern, negated } => {
                Expr::Like { expr: b(expr, f), pattern: b(pattern, f), negated: *negated }
            }
            Expr::InDag { expr, file, term } => {
                Expr::InDag { expr: b(expr, f), file: file.clone(), term: b(term, f) }
            }
        }
    }

    /// Column names referenced anywhere in the expression.
    pub fn columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Col(c) = e {
                out.push(c.clone());
            }
        });
        out
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Text(s)) | Expr::Lit(Value::Cell(s)) => f.write_str(&quote(s)),
            Expr::Lit(Value::Float(x)) => {
                let s = format!("{x:?}");
                f.write_str(&s)
            }
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Col(c) => f.write_str(c),
            Expr::Star => f.write_str("*"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Not(e) => write!(f, "(not {e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(n, args) => {
                write!(f, "{n}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::In { expr, list, negated } => {
                write!(f, "({expr} {}in (", if *negated { "not " } else { "" })?;
                for (i, a) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str("))")
            }
            Expr::Like { expr, pattern, negated } => {
                write!(f, "({expr} {}like {pattern})", if *negated { "not " } else { "" })
            }
            Expr::InDag { expr, file, term } => write!(f, "({expr} indag({file},{term}))"),
        }
    }
}
