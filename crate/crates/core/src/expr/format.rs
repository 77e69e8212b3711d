//! Canonical infix text form.
//!
//! Formatting is minimal-parenthesis with left associativity, so parsing the
//! output reproduces the original tree exactly. Negative constants are always
//! wrapped, e.g. `C_A*(-3)`. Parameter slots print as `p1, p2, ...`.

use std::fmt::Write;

use thiserror::Error;

use super::{Expr, ExprGrammar, Operator};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("operator {0:?} is not part of the grammar")]
    OperatorNotAllowed(&'static str),
    #[error("malformed number {0:?}")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(Operator::Add | Operator::Sub, ..) => 1,
        Expr::Binary(..) => 2,
        _ => 3,
    }
}

/// Formats `expr` using `variables` as the names of `Var` slots.
pub fn format<S: AsRef<str>>(expr: &Expr, variables: &[S]) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr, variables);
    out
}

fn write_number(out: &mut String, c: f64) {
    if c.is_nan() {
        out.push_str("NaN");
    } else if c.is_infinite() {
        out.push_str(if c > 0.0 { "inf" } else { "(-inf)" });
    } else if c.is_sign_negative() {
        let _ = write!(out, "(-{})", -c);
    } else {
        let _ = write!(out, "{c}");
    }
}

fn write_expr<S: AsRef<str>>(out: &mut String, e: &Expr, vars: &[S]) {
    match e {
        Expr::Const(c) => write_number(out, *c),
        Expr::Var(i) => match vars.get(*i) {
            Some(name) => out.push_str(name.as_ref()),
            None => {
                let _ = write!(out, "x{i}");
            }
        },
        Expr::Param(i) => {
            let _ = write!(out, "p{}", i + 1);
        }
        Expr::Unary(op, a) => {
            out.push_str(op.symbol());
            out.push('(');
            write_expr(out, a, vars);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            let wrap_left = precedence(a) < p;
            let wrap_right = precedence(b) <= p;
            write_wrapped(out, a, vars, wrap_left);
            out.push_str(op.symbol());
            write_wrapped(out, b, vars, wrap_right);
        }
    }
}

fn write_wrapped<S: AsRef<str>>(out: &mut String, e: &Expr, vars: &[S], wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, e, vars);
        out.push(')');
    } else {
        write_expr(out, e, vars);
    }
}

/// Parses canonical infix text against a grammar's variables and operators.
pub fn parse(text: &str, grammar: &ExprGrammar) -> Result<Expr, ParseError> {
    Parser::new(text, &grammar.variables, Some(&grammar.operators)).parse()
}

/// Parses with only a variable list; every operator is accepted.
pub fn parse_with_variables<S: AsRef<str>>(text: &str, variables: &[S]) -> Result<Expr, ParseError> {
    let names: Vec<String> = variables.iter().map(|s| s.as_ref().to_string()).collect();
    Parser::new(text, &names, None).parse()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Tok)>,
    vars: &'a [String],
    ops: Option<&'a [Operator]>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, vars: &'a [String], ops: Option<&'a [Operator]>) -> Self {
        Self { src, pos: 0, peeked: None, vars, ops }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        match self.next()? {
            (_, Tok::End) => Ok(e),
            (at, tok) => Err(self.unexpected(at, tok)),
        }
    }

    fn err(&self, offset: usize, kind: ParseErrorKind) -> ParseError {
        ParseError { offset, kind }
    }

    fn unexpected(&self, at: usize, tok: Tok) -> ParseError {
        let kind = match tok {
            Tok::End => ParseErrorKind::UnexpectedEnd,
            Tok::Num(n) => ParseErrorKind::UnexpectedToken(n.to_string()),
            Tok::Ident(s) => ParseErrorKind::UnexpectedToken(s),
            Tok::Sym(c) => ParseErrorKind::UnexpectedToken(c.to_string()),
        };
        self.err(at, kind)
    }

    fn lex(&mut self) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(start) else {
            return Ok((start, Tok::End));
        };
        if b.is_ascii_digit() || b == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            self.pos = end;
            return text
                .parse::<f64>()
                .map(|v| (start, Tok::Num(v)))
                .map_err(|_| self.err(start, ParseErrorKind::BadNumber(text.to_string())));
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((start, Tok::Ident(self.src[start..end].to_string())));
        }
        if matches!(b, b'+' | b'-' | b'*' | b'/' | b'(' | b')') {
            self.pos += 1;
            return Ok((start, Tok::Sym(b as char)));
        }
        let c = self.src[start..].chars().next().unwrap();
        Err(self.err(start, ParseErrorKind::UnexpectedChar(c)))
    }

    fn peek(&mut self) -> Result<&(usize, Tok), ParseError> {
        if self.peeked.is_none() {
            let t = self.lex()?;
            self.peeked = Some(t);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex(),
        }
    }

    fn check_op(&self, op: Operator, at: usize) -> Result<(), ParseError> {
        match self.ops {
            Some(ops) if !ops.contains(&op) => {
                Err(self.err(at, ParseErrorKind::OperatorNotAllowed(op.symbol())))
            }
            _ => Ok(()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let (at, op) = match self.peek()? {
                (at, Tok::Sym('+')) => (*at, Operator::Add),
                (at, Tok::Sym('-')) => (*at, Operator::Sub),
                _ => return Ok(lhs),
            };
            self.check_op(op, at)?;
            self.next()?;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let (at, op) = match self.peek()? {
                (at, Tok::Sym('*')) => (*at, Operator::Mul),
                (at, Tok::Sym('/')) => (*at, Operator::Div),
                _ => return Ok(lhs),
            };
            self.check_op(op, at)?;
            self.next()?;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let (at, Tok::Sym('-')) = self.peek()? {
            let at = *at;
            self.next()?;
            return match self.unary()? {
                Expr::Const(c) => Ok(Expr::Const(-c)),
                other => {
                    self.check_op(Operator::Mul, at)?;
                    Ok(Expr::mul(Expr::Const(-1.0), other))
                }
            };
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (at, tok) = self.next()?;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect_close()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                match name.as_str() {
                    "exp" => {
                        self.check_op(Operator::Exp, at)?;
                        match self.next()? {
                            (_, Tok::Sym('(')) => {}
                            (at, tok) => return Err(self.unexpected(at, tok)),
                        }
                        let e = self.expr()?;
                        self.expect_close()?;
                        Ok(Expr::exp(e))
                    }
                    "NaN" => Ok(Expr::Const(f64::NAN)),
                    "inf" => Ok(Expr::Const(f64::INFINITY)),
                    _ => match parse_slot(&name) {
                        Some(i) => Ok(Expr::Param(i)),
                        None => Err(self.err(at, ParseErrorKind::UnknownIdentifier(name))),
                    },
                }
            }
            other => Err(self.unexpected(at, other)),
        }
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.next()? {
            (_, Tok::Sym(')')) => Ok(()),
            (at, tok) => Err(self.unexpected(at, tok)),
        }
    }
}

/// `p1` -> slot 0.
fn parse_slot(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('p')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    k.checked_sub(1)
}
