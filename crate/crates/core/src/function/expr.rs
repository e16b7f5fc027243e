//! Expression language for node functions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := or
//! or      := and ("or" and)*
//! and     := not ("and" not)*
//! not     := "not" not | cmp
//! cmp     := add (("<" | "<=" | "==" | "!=" | ">=" | ">") add)?
//! add     := mul (("+" | "-") mul)*
//! mul     := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := number | string | ident | ident "(" args ")" | "(" expr ")"
//! ```
//!
//! Booleans are reals: comparisons and logical operators yield `1.0` or
//! `0.0`, and any nonzero operand counts as true. Strings only appear as
//! the other side of `==`/`!=` against a categorical variable.

use std::fmt;

use super::{EvalError, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Ne | BinOp::Ge | BinOp::Gt => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Ge => ">=",
            BinOp::Gt => ">",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Min,
    Max,
    Abs,
    Exp,
    Log,
    If,
}

impl Builtin {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "abs" => Builtin::Abs,
            "exp" => Builtin::Exp,
            "log" => Builtin::Log,
            "if" => Builtin::If,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Abs => "abs",
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::If => "if",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Builtin::Min | Builtin::Max => n >= 1,
            Builtin::Abs | Builtin::Exp | Builtin::Log => n == 1,
            Builtin::If => n == 3,
        }
    }
}

/// Expression tree. Variables are positional indices into the bound
/// variable list.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Var(usize),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

const PREC_NOT: u8 = 3;
const PREC_NEG: u8 = 7;
const PREC_ATOM: u8 = 8;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => PREC_NEG,
            Expr::Num(_) | Expr::Str(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Not(_) => PREC_NOT,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Indices of variables referenced anywhere in the tree.
    pub fn variables(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Var(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Expr::Num(_) | Expr::Str(_) => {}
            Expr::Neg(e) | Expr::Not(e) => e.variables(out),
            Expr::Binary(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.variables(out)),
        }
    }

    /// Replaces every `Var(i)` with `subst[i]`.
    pub fn substitute(&self, subst: &[Expr]) -> Expr {
        match self {
            Expr::Var(i) => subst[*i].clone(),
            Expr::Num(_) | Expr::Str(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(subst))),
            Expr::Not(e) => Expr::Not(Box::new(e.substitute(subst))),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(subst), b.substitute(subst)),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.substitute(subst)).collect()),
        }
    }

    pub fn eval(&self, args: &[Value]) -> Result<Value, EvalError> {
        match self {
            Expr::Num(v) => Ok(Value::Real(*v)),
            Expr::Str(s) => Ok(Value::Cat(s.clone())),
            Expr::Var(i) => Ok(args[*i].clone()),
            Expr::Neg(e) => Ok(Value::Real(-e.eval_real(args)?)),
            Expr::Not(e) => Ok(truth(!e.eval_bool(args)?)),
            Expr::Binary(op, a, b) => self.eval_binary(*op, a, b, args),
            Expr::Call(f, call_args) => eval_call(*f, call_args, args),
        }
    }

    fn eval_real(&self, args: &[Value]) -> Result<f64, EvalError> {
        match self.eval(args)? {
            Value::Real(v) => Ok(v),
            Value::Cat(c) => Err(EvalError::Domain(format!(
                "categorical value {c:?} used in arithmetic"
            ))),
        }
    }

    fn eval_bool(&self, args: &[Value]) -> Result<bool, EvalError> {
        Ok(self.eval_real(args)? != 0.0)
    }

    fn eval_binary(&self, op: BinOp, a: &Expr, b: &Expr, args: &[Value]) -> Result<Value, EvalError> {
        match op {
            BinOp::Or => Ok(truth(a.eval_bool(args)? || b.eval_bool(args)?)),
            BinOp::And => Ok(truth(a.eval_bool(args)? && b.eval_bool(args)?)),
            BinOp::Eq | BinOp::Ne => {
                let equal = match (a.eval(args)?, b.eval(args)?) {
                    (Value::Real(x), Value::Real(y)) => x == y,
                    (Value::Cat(x), Value::Cat(y)) => x == y,
                    (x, y) => {
                        return Err(EvalError::Domain(format!(
                            "cannot compare {x} with {y}"
                        )))
                    }
                };
                Ok(truth(if op == BinOp::Eq { equal } else { !equal }))
            }
            _ => {
                let x = a.eval_real(args)?;
                let y = b.eval_real(args)?;
                let out = match op {
                    BinOp::Lt => bool_real(x < y),
                    BinOp::Le => bool_real(x <= y),
                    BinOp::Ge => bool_real(x >= y),
                    BinOp::Gt => bool_real(x > y),
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::Numeric("division by zero".into()));
                        }
                        x / y
                    }
                    _ => unreachable!(),
                };
                finite(out)
            }
        }
    }

    /// Writes the expression with variable names and minimal parentheses.
    pub fn write(&self, names: &[String], f: &mut impl fmt::Write) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if self.precedence() == PREC_NEG {
                    write!(f, "-{}", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Str(s) => write!(f, "{}", quote(s)),
            Expr::Var(i) => f.write_str(&names[*i]),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(e, PREC_NEG, names, f)
            }
            Expr::Not(e) => {
                f.write_str("not ")?;
                write_child(e, PREC_NOT, names, f)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let left_min = if op.is_comparison() { p + 1 } else { p };
                write_child(a, left_min, names, f)?;
                write!(f, " {} ", op.symbol())?;
                write_child(b, p + 1, names, f)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.write(names, f)?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_child(e: &Expr, min_prec: u8, names: &[String], f: &mut impl fmt::Write) -> fmt::Result {
    if e.precedence() < min_prec {
        f.write_str("(")?;
        e.write(names, f)?;
        f.write_str(")")
    } else {
        e.write(names, f)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn truth(b: bool) -> Value {
    Value::Real(bool_real(b))
}

fn bool_real(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn finite(v: f64) -> Result<Value, EvalError> {
    if v.is_finite() {
        Ok(Value::Real(v))
    } else {
        Err(EvalError::Numeric(format!("non-finite result {v}")))
    }
}

fn eval_call(f: Builtin, call_args: &[Expr], args: &[Value]) -> Result<Value, EvalError> {
    match f {
        Builtin::If => {
            if call_args[0].eval_bool(args)? {
                call_args[1].eval(args)
            } else {
                call_args[2].eval(args)
            }
        }
        Builtin::Min | Builtin::Max => {
            let mut acc = call_args[0].eval_real(args)?;
            for a in &call_args[1..] {
                let v = a.eval_real(args)?;
                acc = if f == Builtin::Min { acc.min(v) } else { acc.max(v) };
            }
            Ok(Value::Real(acc))
        }
        Builtin::Abs => Ok(Value::Real(call_args[0].eval_real(args)?.abs())),
        Builtin::Exp => finite(call_args[0].eval_real(args)?.exp()),
        Builtin::Log => {
            let x = call_args[0].eval_real(args)?;
            if x <= 0.0 {
                return Err(EvalError::Domain(format!("log of non-positive value {x}")));
            }
            Ok(Value::Real(x.ln()))
        }
    }
}

/// Error raised while parsing an expression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn syntax(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { offset, message: message.into() }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        loop {
            let rest = &self.src[self.pos..];
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            let start = self.pos;
            let Some(c) = trimmed.chars().next() else {
                out.push((start, Tok::End));
                return Ok(out);
            };
            let tok = if c.is_ascii_digit() || c == '.' {
                self.number()?
            } else if c.is_ascii_alphabetic() || c == '_' {
                let len = trimmed
                    .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                    .unwrap_or(trimmed.len());
                self.pos += len;
                Tok::Ident(trimmed[..len].to_string())
            } else if c == '"' {
                self.string()?
            } else {
                let two = trimmed.get(..2).unwrap_or("");
                let op = match two {
                    "<=" | ">=" | "==" | "!=" => Some(two),
                    _ => None,
                };
                if let Some(op) = op {
                    self.pos += 2;
                    Tok::Op(match op {
                        "<=" => "<=",
                        ">=" => ">=",
                        "==" => "==",
                        _ => "!=",
                    })
                } else {
                    self.pos += 1;
                    match c {
                        '+' => Tok::Op("+"),
                        '-' => Tok::Op("-"),
                        '*' => Tok::Op("*"),
                        '/' => Tok::Op("/"),
                        '<' => Tok::Op("<"),
                        '>' => Tok::Op(">"),
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ',' => Tok::Comma,
                        other => return Err(self.syntax(start, format!("unexpected character {other:?}"))),
                    }
                }
            };
            out.push((start, tok));
        }
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = start;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        self.pos = i;
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| self.syntax(start, format!("malformed number {text:?}")))
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let mut out = String::new();
        let mut chars = self.src[start + 1..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos = start + 1 + i + 1;
                    return Ok(Tok::Str(out));
                }
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(self.syntax(start, "unterminated string literal"))
    }
}

struct Parser<'v> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    vars: &'v [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn offset(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset: self.offset(), message: message.into() })
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and()?;
        while self.is_keyword("or") {
            self.bump();
            lhs = Expr::binary(BinOp::Or, lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not()?;
        while self.is_keyword("and") {
            self.bump();
            lhs = Expr::binary(BinOp::And, lhs, self.not()?);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if self.is_keyword("not") {
            self.bump();
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::Op("<") => BinOp::Lt,
            Tok::Op("<=") => BinOp::Le,
            Tok::Op("==") => BinOp::Eq,
            Tok::Op("!=") => BinOp::Ne,
            Tok::Op(">=") => BinOp::Ge,
            Tok::Op(">") => BinOp::Gt,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add()?;
        if matches!(self.peek(), Tok::Op("<" | "<=" | "==" | "!=" | ">=" | ">")) {
            return self.err("chained comparison needs parentheses");
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.mul()?);
        }
    }

    fn mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op("-") {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if matches!(name.as_str(), "and" | "or" | "not") => {
                self.err(format!("unexpected keyword `{name}`"))
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.bump();
                if *self.peek() == Tok::LParen {
                    let Some(func) = Builtin::from_name(&name) else {
                        return Err(ParseError::Syntax {
                            offset: at,
                            message: format!("unknown function `{name}`"),
                        });
                    };
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)` or `,`")?;
                    if !func.arity_ok(args.len()) {
                        return Err(ParseError::Syntax {
                            offset: at,
                            message: format!("wrong argument count {} for `{name}`", args.len()),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(ParseError::UnboundVariable(name)),
                }
            }
            Tok::End => self.err("unexpected end of input"),
            other => self.err(format!("unexpected token {other:?}")),
        }
    }
}

/// A parsed expression together with the names its variables bind to.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    pub ast: Expr,
    pub vars: Vec<String>,
}

impl Expression {
    pub fn parse(text: &str, vars: &[String]) -> Result<Self, ParseError> {
        let toks = Lexer { src: text, pos: 0 }.tokens()?;
        let mut p = Parser { toks, at: 0, vars };
        let ast = p.expr()?;
        if *p.peek() != Tok::End {
            return p.err("unexpected trailing input");
        }
        Ok(Expression { ast, vars: vars.to_vec() })
    }

    pub fn eval(&self, args: &[Value]) -> Result<Value, EvalError> {
        self.ast.eval(args)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.write(&self.vars, f)
    }
}
