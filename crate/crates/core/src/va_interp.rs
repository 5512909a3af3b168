//! Parser and evaluator for the VerilogA subset produced by
//! [`crate::veriloga::emit_veriloga`].
//!
//! Accepted: `//` comments, the standard disciplines include, one module
//! with `inout`/`electrical`/`real` declarations, and an `analog begin ... end`
//! block of `name = expr;` assignments plus a single `I(a, b) <+ expr;`.
//! Expressions use literals, identifiers, `+ - * /`, unary minus, parentheses,
//! `V(a, b)` and the functions `pow exp ln tanh max abs`.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const DISCIPLINES_HEADER: &str = "disciplines.vams";

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
    Include(String),
    Eof,
}

const SYMBOLS: [&str; 10] = ["<+", "(", ")", ",", ";", "=", "+", "-", "*", "/"];

fn perr(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse { pos, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if text[i..].starts_with("//") {
            i += text[i..].find('\n').unwrap_or(text.len() - i);
            continue;
        }
        if c == b'`' {
            let rest = &text[i..];
            let line = &rest[..rest.find('\n').unwrap_or(rest.len())];
            let file = line
                .strip_prefix("`include")
                .map(str::trim)
                .and_then(|f| f.strip_prefix('"'))
                .and_then(|f| f.strip_suffix('"'))
                .ok_or_else(|| perr(i, "only `include \"file\" directives are supported"))?;
            out.push((Tok::Include(file.to_string()), i));
            i += line.len();
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s = &text[start..i];
            let v = s.parse().map_err(|_| perr(start, format!("malformed number `{s}`")))?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
            continue;
        }
        for s in SYMBOLS {
            if text[i..].starts_with(s) {
                out.push((Tok::Sym(s), i));
                i += s.len();
                continue 'outer;
            }
        }
        let ch = text[i..].chars().next().unwrap_or('?');
        return Err(perr(i, format!("unexpected character `{ch}`")));
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Pow,
    Exp,
    Ln,
    Tanh,
    Max,
    Abs,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "pow" => Func::Pow,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "tanh" => Func::Tanh,
            "max" => Func::Max,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    /// `V(p, n)`: potential of `p` relative to `n`.
    Voltage(String, String),
}

/// Values for node potentials and assigned variables.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub nodes: HashMap<String, f64>,
    pub vars: HashMap<String, f64>,
}

impl Expr {
    pub fn eval(&self, env: &Bindings) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => *env
                .vars
                .get(name)
                .ok_or_else(|| Error::Eval(format!("unbound identifier `{name}`")))?,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env)?, b.eval(env)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env)?;
                match f {
                    Func::Pow => a.powf(args[1].eval(env)?),
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln(),
                    Func::Tanh => a.tanh(),
                    Func::Max => a.max(args[1].eval(env)?),
                    Func::Abs => a.abs(),
                }
            }
            Expr::Voltage(p, n) => {
                let node = |k: &String| {
                    env.nodes
                        .get(k)
                        .copied()
                        .ok_or_else(|| Error::Eval(format!("no potential bound for node `{k}`")))
                };
                node(p)? - node(n)?
            }
        })
    }

    /// Calls `f` on every numeric literal, left to right.
    pub fn visit_literals(&self, f: &mut impl FnMut(f64)) {
        match self {
            Expr::Num(v) => f(*v),
            Expr::Var(_) | Expr::Voltage(..) => {}
            Expr::Neg(e) => e.visit_literals(f),
            Expr::Bin(_, a, b) => {
                a.visit_literals(f);
                b.visit_literals(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_literals(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Assign { target: String, value: Expr },
    Contribute { p: String, n: String, value: Expr },
}

/// A parsed module.
#[derive(Debug, Clone, PartialEq)]
pub struct VaProgram {
    pub name: String,
    pub ports: Vec<String>,
    pub reals: Vec<String>,
    pub body: Vec<Statement>,
}

impl VaProgram {
    /// Runs the analog block with the given node potentials and returns the
    /// contributed branch current with its `(p, n)` nodes.
    pub fn eval(&self, nodes: &[(&str, f64)]) -> Result<(String, String, f64)> {
        let mut env = Bindings {
            nodes: nodes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            vars: HashMap::with_capacity(self.reals.len()),
        };
        let mut out = None;
        for st in &self.body {
            match st {
                Statement::Assign { target, value } => {
                    let v = value.eval(&env)?;
                    env.vars.insert(target.clone(), v);
                }
                Statement::Contribute { p, n, value } => out = Some((p.clone(), n.clone(), value.eval(&env)?)),
            }
        }
        out.ok_or_else(|| Error::Eval("module has no contribution statement".into()))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Include(f) => format!("include of \"{f}\""),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect_sym(&mut self, s: &'static str) -> Result<()> {
        let (t, pos) = self.next();
        if t == Tok::Sym(s) {
            Ok(())
        } else {
            Err(perr(pos, format!("expected `{s}`, found {}", Self::describe(&t))))
        }
    }

    fn ident(&mut self) -> Result<(String, usize)> {
        match self.next() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (t, pos) => Err(perr(pos, format!("expected identifier, found {}", Self::describe(&t)))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let (s, pos) = self.ident()?;
        if s == kw {
            Ok(())
        } else {
            Err(perr(pos, format!("expected `{kw}`, found `{s}`")))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym("+") {
                BinOp::Add
            } else if self.is_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.next();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                BinOp::Mul
            } else if self.is_sym("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.next();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.is_sym("-") {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let (t, pos) = self.next();
        match t {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) if self.is_sym("(") => {
                self.next();
                if name == "V" {
                    let (p, _) = self.ident()?;
                    self.expect_sym(",")?;
                    let (n, _) = self.ident()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::Voltage(p, n));
                }
                let f = Func::lookup(&name).ok_or_else(|| perr(pos, format!("unsupported function `{name}`")))?;
                let mut args = vec![self.expr()?];
                while self.is_sym(",") {
                    self.next();
                    args.push(self.expr()?);
                }
                self.expect_sym(")")?;
                if args.len() != f.arity() {
                    return Err(perr(
                        pos,
                        format!("`{name}` takes {} argument(s), got {}", f.arity(), args.len()),
                    ));
                }
                Ok(Expr::Call(f, args))
            }
            Tok::Ident(name) => Ok(Expr::Var(name)),
            t => Err(perr(pos, format!("expected an operand, found {}", Self::describe(&t)))),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>> {
        let mut v = vec![self.ident()?.0];
        while self.is_sym(",") {
            self.next();
            v.push(self.ident()?.0);
        }
        Ok(v)
    }

    fn module(&mut self) -> Result<VaProgram> {
        while let Tok::Include(f) = self.peek().clone() {
            if f != DISCIPLINES_HEADER {
                return Err(perr(self.pos(), format!("unsupported include \"{f}\"")));
            }
            self.next();
        }
        self.keyword("module")?;
        let (name, _) = self.ident()?;
        self.expect_sym("(")?;
        let ports = self.ident_list()?;
        self.expect_sym(")")?;
        self.expect_sym(";")?;

        let mut reals = Vec::new();
        let mut electrical = Vec::new();
        loop {
            let pos = self.pos();
            let kw = match self.peek() {
                Tok::Ident(s) if matches!(s.as_str(), "inout" | "electrical" | "real") => s.clone(),
                _ => break,
            };
            self.next();
            let names = self.ident_list()?;
            self.expect_sym(";")?;
            match kw.as_str() {
                "real" => reals.extend(names),
                "electrical" => electrical.extend(names),
                _ => {
                    if let Some(bad) = names.iter().find(|n| !ports.contains(n)) {
                        return Err(perr(pos, format!("`{bad}` is not a port")));
                    }
                }
            }
        }
        if let Some(p) = ports.iter().find(|p| !electrical.contains(p)) {
            return Err(perr(self.pos(), format!("port `{p}` has no discipline")));
        }

        self.keyword("analog")?;
        self.keyword("begin")?;
        let mut body = Vec::new();
        loop {
            let (name, pos) = self.ident()?;
            if name == "end" {
                break;
            }
            if name == "I" && self.is_sym("(") {
                self.next();
                let (p, pp) = self.ident()?;
                self.expect_sym(",")?;
                let (n, pn) = self.ident()?;
                self.expect_sym(")")?;
                for (node, at) in [(&p, pp), (&n, pn)] {
                    if !electrical.contains(node) {
                        return Err(perr(at, format!("unknown node `{node}`")));
                    }
                }
                self.expect_sym("<+")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                body.push(Statement::Contribute { p, n, value });
                continue;
            }
            if !reals.contains(&name) {
                return Err(perr(pos, format!("assignment to undeclared variable `{name}`")));
            }
            self.expect_sym("=")?;
            let value = self.expr()?;
            self.expect_sym(";")?;
            body.push(Statement::Assign { target: name, value });
        }
        self.keyword("endmodule")?;
        match self.next() {
            (Tok::Eof, _) => {}
            (t, pos) => return Err(perr(pos, format!("trailing {}", Self::describe(&t)))),
        }
        if body
            .iter()
            .filter(|s| matches!(s, Statement::Contribute { .. }))
            .count()
            != 1
        {
            return Err(perr(0, "expected exactly one contribution statement"));
        }
        Ok(VaProgram {
            name,
            ports,
            reals,
            body,
        })
    }
}

/// Parses a single expression.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser { toks: lex(text)?, i: 0 };
    let e = p.expr()?;
    match p.next() {
        (Tok::Eof, _) => Ok(e),
        (t, pos) => Err(perr(pos, format!("unexpected {}", Parser::describe(&t)))),
    }
}

pub fn eval_expr(expr: &Expr, env: &Bindings) -> Result<f64> {
    expr.eval(env)
}

/// Parses a whole module.
pub fn parse_module(text: &str) -> Result<VaProgram> {
    Parser { toks: lex(text)?, i: 0 }.module()
}
