//! Lexer and precedence-climbing parser for row expressions.

use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr, Value};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    base: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.base + at, msg)
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out = Vec::new();
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            let c = bytes[self.pos];
            let start = self.pos;
            if c.is_ascii_whitespace() {
                self.pos += 1;
                continue;
            }
            if c == b'/' && bytes.get(self.pos + 1) == Some(&b'*') {
                match self.src[self.pos + 2..].find("*/") {
                    Some(end) => self.pos += end + 4,
                    None => return Err(self.err(start, "unterminated comment")),
                }
                continue;
            }
            if c == b'\'' {
                let mut s = String::new();
                let mut i = self.pos + 1;
                loop {
                    let Some(ch) = self.src[i..].chars().next() else {
                        return Err(self.err(start, "unterminated string literal"));
                    };
                    i += ch.len_utf8();
                    if ch == '\'' {
                        if bytes.get(i) == Some(&b'\'') {
                            s.push('\'');
                            i += 1;
                            continue;
                        }
                        break;
                    }
                    s.push(ch);
                }
                self.pos = i;
                out.push((start, Tok::Str(s)));
                continue;
            }
            if c.is_ascii_digit() || (c == b'.' && bytes.get(self.pos + 1).is_some_and(u8::is_ascii_digit)) {
                let mut i = self.pos;
                let mut float = false;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                    float = true;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        float = true;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                    return Err(self.err(start, "malformed number"));
                }
                let text = &self.src[self.pos..i];
                let tok = if float {
                    Tok::Float(text.parse().map_err(|_| self.err(start, "malformed number"))?)
                } else {
                    match text.parse::<i64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => Tok::Float(text.parse().map_err(|_| self.err(start, "malformed number"))?),
                    }
                };
                self.pos = i;
                out.push((start, tok));
                continue;
            }
            if c == b'#' {
                let mut i = self.pos + 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == self.pos + 1 {
                    return Err(self.err(start, "expected column number after '#'"));
                }
                out.push((start, Tok::Ident(self.src[self.pos..i].to_string())));
                self.pos = i;
                continue;
            }
            if c.is_ascii_alphabetic() || c == b'_' {
                let mut i = self.pos + 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric()
                        || bytes[i] == b'_'
                        || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_alphabetic() || *b == b'_')))
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(self.src[self.pos..i].to_string())));
                self.pos = i;
                continue;
            }
            let two = self.src.get(self.pos..self.pos + 2).unwrap_or("");
            let sym: Option<&'static str> = match two {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "!=" => Some("!="),
                "<>" => Some("!="),
                "==" => Some("="),
                _ => None,
            };
            if let Some(s) = sym {
                out.push((start, Tok::Sym(s)));
                self.pos += 2;
                continue;
            }
            let one: &'static str = match c {
                b'+' => "+",
                b'-' => "-",
                b'*' => "*",
                b'/' => "/",
                b'=' => "=",
                b'<' => "<",
                b'>' => ">",
                b'~' => "~",
                b'(' => "(",
                b')' => ")",
                b',' => ",",
                _ => {
                    let ch = self.src[self.pos..].chars().next().unwrap_or('?');
                    return Err(self.err(start, format!("unexpected character '{ch}'")));
                }
            };
            out.push((start, Tok::Sym(one)));
            self.pos += 1;
        }
        Ok(out)
    }
}

struct Parser<'a> {
    src: &'a str,
    base: usize,
    toks: Vec<(usize, Tok)>,
    i: usize,
}

fn is_kw(t: &Tok, kw: &str) -> bool {
    matches!(t, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(_, t)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.i + k).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.base + self.toks.get(self.i).map(|(o, _)| *o).unwrap_or(self.src.len())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.offset(), msg)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_some_and(|t| is_kw(t, kw)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{s}'")))
        }
    }

    fn or(&mut self) -> Result<Expr> {
        let mut l = self.and()?;
        while self.eat_kw("or") {
            let r = self.and()?;
            l = Expr::binary(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut l = self.not()?;
        while self.eat_kw("and") {
            let r = self.not()?;
            l = Expr::binary(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<Expr> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr> {
        let l = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) => Some(BinOp::Eq),
            Some(Tok::Sym("!=")) => Some(BinOp::Ne),
            Some(Tok::Sym("<")) => Some(BinOp::Lt),
            Some(Tok::Sym("<=")) => Some(BinOp::Le),
            Some(Tok::Sym(">")) => Some(BinOp::Gt),
            Some(Tok::Sym(">=")) => Some(BinOp::Ge),
            Some(Tok::Sym("~")) => Some(BinOp::Wild),
            _ => None,
        };
        if let Some(op) = op {
            self.i += 1;
            let r = self.additive()?;
            return Ok(Expr::binary(op, l, r));
        }
        let negated = if self.peek().is_some_and(|t| is_kw(t, "not"))
            && self.peek_at(1).is_some_and(|t| is_kw(t, "in") || is_kw(t, "like"))
        {
            self.i += 1;
            true
        } else {
            false
        };
        if self.eat_kw("in") {
            self.expect_sym("(")?;
            let mut list = Vec::new();
            if !self.eat_sym(")") {
                loop {
                    list.push(self.additive()?);
                    if self.eat_sym(")") {
                        break;
                    }
                    self.expect_sym(",")?;
                }
            }
            return Ok(Expr::In { expr: Box::new(l), list, negated });
        }
        if self.eat_kw("like") {
            let pattern = self.additive()?;
            return Ok(Expr::Like { expr: Box::new(l), pattern: Box::new(pattern), negated });
        }
        if negated {
            return Err(self.err("expected 'in' or 'like' after 'not'"));
        }
        if self.peek().is_some_and(|t| is_kw(t, "indag")) {
            return self.indag(l);
        }
        Ok(l)
    }

    /// `indag(<file>, <term>)`: the file is raw text up to the comma.
    fn indag(&mut self, l: Expr) -> Result<Expr> {
        let kw_at = self.i;
        self.i += 1;
        let open = self.toks.get(self.i).map(|(o, _)| *o);
        if !self.eat_sym("(") {
            return Err(self.err("expected '(' after indag"));
        }
        let open = open.unwrap();
        let mut j = open + 1;
        let bytes = self.src.as_bytes();
        while j < bytes.len() && bytes[j] != b',' && bytes[j] != b')' {
            j += 1;
        }
        if j >= bytes.len() || bytes[j] != b',' {
            self.i = kw_at;
            return Err(self.err("indag expects (file, term)"));
        }
        let file = self.src[open + 1..j].trim().trim_matches('\'').to_string();
        if file.is_empty() {
            return Err(Error::parse(self.base + open, "indag file argument is empty"));
        }
        while self.toks.get(self.i).is_some_and(|(o, _)| *o <= j) {
            self.i += 1;
        }
        let term = self.or()?;
        self.expect_sym(")")?;
        Ok(Expr::InDag { expr: Box::new(l), file, term: Box::new(term) })
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut l = self.multiplicative()?;
        loop {
            let op = if self.eat_sym("+") {
                BinOp::Add
            } else if self.eat_sym("-") {
                BinOp::Sub
            } else {
                break;
            };
            let r = self.multiplicative()?;
            l = Expr::binary(op, l, r);
        }
        Ok(l)
    }

    fn multiplicative(&mut self) -> Result<Expr> {
        let mut l = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_sym("/") {
                BinOp::Div
            } else {
                break;
            };
            let r = self.unary()?;
            l = Expr::binary(op, l, r);
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_sym("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.err("unexpected end of expression"));
        };
        match tok {
            Tok::Int(v) => {
                self.i += 1;
                Ok(Expr::Lit(Value::Int(v)))
            }
            Tok::Float(v) => {
                self.i += 1;
                Ok(Expr::Lit(Value::Float(v)))
            }
            Tok::Str(s) => {
                self.i += 1;
                Ok(Expr::Lit(Value::Text(s)))
            }
            Tok::Sym("(") => {
                self.i += 1;
                let e = self.or()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("*") => {
                self.i += 1;
                Ok(Expr::Star)
            }
            Tok::Ident(name) => {
                self.i += 1;
                if name.eq_ignore_ascii_case("true") {
                    return Ok(Expr::Lit(Value::Bool(true)));
                }
                if name.eq_ignore_ascii_case("false") {
                    return Ok(Expr::Lit(Value::Bool(false)));
                }
                if matches!(
                    name.to_ascii_lowercase().as_str(),
                    "and" | "or" | "not" | "in" | "like" | "indag"
                ) {
                    self.i -= 1;
                    return Err(self.err(format!("unexpected keyword '{name}'")));
                }
                if self.eat_sym("(") {
                    let mut args = Vec::new();
                    if !self.eat_sym(")") {
                        loop {
                            args.push(self.or()?);
                            if self.eat_sym(")") {
                                break;
                            }
                            self.expect_sym(",")?;
                        }
                    }
                    return Ok(Expr::Call(name.to_ascii_lowercase(), args));
                }
                Ok(Expr::Col(name))
            }
            Tok::Sym(s) => Err(self.err(format!("unexpected '{s}'"))),
        }
    }
}

/// Parses a complete expression. `base` is added to error offsets so errors
/// point into the enclosing query text.
pub fn parse_expr_at(text: &str, base: usize) -> Result<Expr> {
    let toks = Lexer { src: text, pos: 0, base }.tokens()?;
    let mut p = Parser { src: text, base, toks, i: 0 };
    let e = p.or()?;
    if p.i < p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

pub fn parse_expr(text: &str) -> Result<Expr> {
    parse_expr_at(text, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2 * 3 = 7 and not x ~ 'a*'").unwrap();
        assert_eq!(e.to_string(), "(((1 + (2 * 3)) = 7) and (not (x ~ 'a*')))");
    }

    #[test]
    fn example_forms() {
        for s in [
            "if(len(ref)=len(alt),'Snp','InDel')",
            "rsID ~ 'rs222*'",
            "hpo_code indag(hpo_parent_child.tsv,'HP:0001507')",
            "div(rownum,10)",
            "#2+1",
            "#1+'_'+#2+'_'+#3",
            "child in ('HP:0001507')",
            "sample_id in ('s1','s2')",
            "year(date) > 2000",
            "pheno.hpo_code = hpo.code",
            "rsID like 'rs222%'",
            "x not in (1,2) or y not like 'a_'",
            "it's" .replace("it's", "'it''s'").as_str(),
        ] {
            let e = parse_expr(s).unwrap_or_else(|err| panic!("{s}: {err}"));
            let again = parse_expr(&e.to_string()).unwrap();
            assert_eq!(e, again, "{s}");
        }
    }

    #[test]
    fn indag_shape() {
        let e = parse_expr("hpo_code indag(hpo_parent_child.tsv,'HP:0001507')").unwrap();
        match e {
            Expr::InDag { file, .. } => assert_eq!(file, "hpo_parent_child.tsv"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_offsets() {
        let err = parse_expr("a = 'open").unwrap_err();
        assert_eq!(err.offset(), Some(4));
        let err = parse_expr_at("a = = b", 10).unwrap_err();
        assert_eq!(err.offset(), Some(14));
        assert!(parse_expr("f(1,").is_err());
        assert!(parse_expr("").is_err());
        assert!(parse_expr("a b").is_err());
    }
}
