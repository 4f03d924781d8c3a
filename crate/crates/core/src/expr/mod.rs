//! Row expressions: parsing, binding to a schema, and evaluation.

mod ast;
pub mod dag;
mod eval;
mod parse;
pub mod pattern;
mod value;

pub use ast::{BinOp, Expr};
pub use dag::DagRelation;
pub use eval::{eval_const, BoundExpr, ExprEnv, AGGREGATES};
pub use parse::{parse_expr, parse_expr_at};
pub use value::{format_float, natural_cmp, parse_number, Num, Value};
