use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::lexer::{tokenize, Pos, Tok, Token};
use super::{
    ident, Annotation, Comparison, Expr, FunDef, GlobalVar, Ident, Item, Op, Program, ProgramError, Signature, Stmt,
};
use crate::assertions::{Assertion, ValueTerm};
use crate::values::{BlockId, Chunk, Int32, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

const KEYWORDS: &[&str] = &[
    "global", "fn", "locals", "stack", "loop", "invariant", "block", "exits", "exit", "if", "else", "skip", "call",
    "return", "assert", "requires", "ensures", "aux", "gamma", "store", "emp", "true", "false", "exists", "defined",
    "prop", "undef", "ptr", "nan", "inf", "i8s", "i8u", "i16s", "i16u", "i32", "f32", "f64",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Operators written in function-call form, by mnemonic.
fn call_op(name: &str) -> Option<Op> {
    use Op::*;
    let cmp = |s: &str| Comparison::ALL.into_iter().find(|c| c.mnemonic() == s);
    if let Some(rest) = name.strip_prefix("cmpu_") {
        return cmp(rest).map(Cmpu);
    }
    if let Some(rest) = name.strip_prefix("cmpf_") {
        return cmp(rest).map(Cmpf);
    }
    if let Some(rest) = name.strip_prefix("cmp_") {
        return cmp(rest).map(Cmp);
    }
    Some(match name {
        "add" => Add,
        "sub" => Sub,
        "mul" => Mul,
        "divs" => Divs,
        "divu" => Divu,
        "mods" => Mods,
        "modu" => Modu,
        "and" => And,
        "or" => Or,
        "xor" => Xor,
        "shl" => Shl,
        "shrs" => Shrs,
        "shru" => Shru,
        "neg" => Neg,
        "notint" => NotInt,
        "negf" => NegF,
        "addf" => AddF,
        "subf" => SubF,
        "mulf" => MulF,
        "divf" => DivF,
        "intoffloat" => IntOfFloat,
        "floatofint" => FloatOfInt,
        "floatofintu" => FloatOfIntU,
        "cast8s" => Cast8s,
        "cast8u" => Cast8u,
        "cast16s" => Cast16s,
        "cast16u" => Cast16u,
        _ => return None,
    })
}

/// Infix operators by binding strength, weakest first.
const INFIX: &[&[(&str, Op)]] = &[
    &[("|", Op::Or)],
    &[("^", Op::Xor)],
    &[("&", Op::And)],
    &[("==", Op::Cmp(Comparison::Eq)), ("!=", Op::Cmp(Comparison::Ne))],
    &[
        ("<", Op::Cmp(Comparison::Lt)),
        ("<=", Op::Cmp(Comparison::Le)),
        (">", Op::Cmp(Comparison::Gt)),
        (">=", Op::Cmp(Comparison::Ge)),
    ],
    &[("<<", Op::Shl), (">>", Op::Shrs)],
    &[("+", Op::Add), ("-", Op::Sub)],
    &[("*", Op::Mul), ("/", Op::Divs), ("%", Op::Mods)],
];

pub(super) fn infix_level(op: &Op) -> Option<(usize, &'static str)> {
    INFIX.iter().enumerate().find_map(|(lvl, ops)| ops.iter().find(|(_, o)| o == op).map(|(s, _)| (lvl, *s)))
}

pub(super) const INFIX_LEVELS: usize = INFIX.len();

struct Parser {
    toks: Vec<Token>,
    i: usize,
    /// While set, `*` ends an expression (it is the separating conjunction).
    no_star: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Parser> {
        let toks = tokenize(src).map_err(|(pos, message)| ParseError { pos, message })?;
        Ok(Parser { toks, i: 0, no_star: false })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { pos: self.pos(), message: message.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.err(format!("expected {wanted}, found {}", self.peek()))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.unexpected(&format!("`{p}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.unexpected(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let id = ident(s);
                self.bump();
                Ok(id)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn nat(&mut self, what: &str) -> PResult<u64> {
        match self.peek() {
            Tok::Int(n) => {
                let n = *n;
                self.bump();
                Ok(n)
            }
            _ => self.err(format!("{what} must be a natural number literal, found {}", self.peek())),
        }
    }

    fn nat_u32(&mut self, what: &str) -> PResult<u32> {
        let pos = self.pos();
        let n = self.nat(what)?;
        u32::try_from(n).map_err(|_| ParseError { pos, message: format!("{what} too large") })
    }

    fn chunk(&mut self) -> PResult<Chunk> {
        match self.peek() {
            Tok::Ident(s) => match s.parse::<Chunk>() {
                Ok(ch) => {
                    self.bump();
                    Ok(ch)
                }
                Err(()) => self.unexpected("a chunk (i8s, i8u, i16s, i16u, i32, f32, f64)"),
            },
            _ => self.unexpected("a chunk"),
        }
    }

    fn ident_list(&mut self, close: &str) -> PResult<Vec<Ident>> {
        let mut out = Vec::new();
        if self.is_punct(close) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if !self.eat_punct(",") {
                return Ok(out);
            }
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(0)
    }

    fn expr_list(&mut self) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        if self.is_punct(")") {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if !self.eat_punct(",") {
                return Ok(out);
            }
        }
    }

    /// Parse with `*` allowed again, as inside brackets and parentheses.
    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let saved = std::mem::replace(&mut self.no_star, false);
        let r = f(self);
        self.no_star = saved;
        r
    }

    fn binary(&mut self, level: usize) -> PResult<Expr> {
        if level == INFIX.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let found = match self.peek() {
                Tok::Punct(p) => INFIX[level].iter().find(|(s, _)| s == p).map(|(_, op)| op.clone()),
                _ => None,
            };
            let Some(op) = found else {
                return Ok(lhs);
            };
            if op == Op::Mul && self.no_star {
                return Ok(lhs);
            }
            self.bump();
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Op(op, vec![lhs, rhs]);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            return match self.peek().clone() {
                Tok::Int(n) => {
                    self.bump();
                    self.signed_int(n, true).map(|i| Expr::Val(Value::Int(i)))
                }
                Tok::Float(x) => {
                    self.bump();
                    Ok(Expr::Val(Value::Float(-x)))
                }
                Tok::Ident(s) if s == "inf" => {
                    self.bump();
                    Ok(Expr::Val(Value::Float(f64::NEG_INFINITY)))
                }
                _ => Ok(Expr::Op(Op::Neg, vec![self.unary()?])),
            };
        }
        if self.eat_punct("~") {
            return Ok(Expr::Op(Op::NotInt, vec![self.unary()?]));
        }
        self.atom()
    }

    fn signed_int(&self, n: u64, negative: bool) -> PResult<Int32> {
        if negative {
            if n > 1 << 31 {
                return self.err("integer literal out of 32-bit range");
            }
            Ok(Int32::new(0u32.wrapping_sub(n as u32)))
        } else {
            if n > u32::MAX as u64 {
                return self.err("integer literal out of 32-bit range");
            }
            Ok(Int32::new(n as u32))
        }
    }

    fn signed_literal_int(&mut self) -> PResult<Int32> {
        let neg = self.eat_punct("-");
        match self.peek().clone() {
            Tok::Int(n) => {
                let i = self.signed_int(n, neg)?;
                self.bump();
                Ok(i)
            }
            _ => self.unexpected("an integer literal"),
        }
    }

    fn float_literal(&mut self) -> PResult<f64> {
        let neg = self.eat_punct("-");
        let x = match self.peek().clone() {
            Tok::Float(x) => x,
            Tok::Int(n) => n as f64,
            Tok::Ident(s) if s == "nan" => f64::NAN,
            Tok::Ident(s) if s == "inf" => f64::INFINITY,
            _ => return self.unexpected("a float literal"),
        };
        self.bump();
        Ok(if neg { -x } else { x })
    }

    /// `ptr(b, i)` after the keyword.
    fn ptr_literal(&mut self) -> PResult<Value> {
        self.expect_punct("(")?;
        let b = self.nat_u32("block number")?;
        self.expect_punct(",")?;
        let o = self.signed_literal_int()?;
        self.expect_punct(")")?;
        Ok(Value::Ptr(BlockId(b), o))
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                let i = self.signed_int(n, false)?;
                self.bump();
                Ok(Expr::Val(Value::Int(i)))
            }
            Tok::Float(x) => {
                self.bump();
                Ok(Expr::Val(Value::Float(x)))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.nested(|p| p.expr())?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("&") => {
                self.bump();
                let name = self.ident()?;
                Ok(Expr::Op(Op::AddrSymbol(name), Vec::new()))
            }
            Tok::Ident(s) => {
                if let Ok(ch) = s.parse::<Chunk>() {
                    self.bump();
                    self.expect_punct("[")?;
                    let a = self.nested(|p| p.expr())?;
                    self.expect_punct("]")?;
                    return Ok(Expr::Load(ch, Box::new(a)));
                }
                match s.as_str() {
                    "undef" => {
                        self.bump();
                        return Ok(Expr::Val(Value::Undef));
                    }
                    "nan" => {
                        self.bump();
                        return Ok(Expr::Val(Value::Float(f64::NAN)));
                    }
                    "inf" => {
                        self.bump();
                        return Ok(Expr::Val(Value::Float(f64::INFINITY)));
                    }
                    "ptr" => {
                        self.bump();
                        return self.ptr_literal().map(Expr::Val);
                    }
                    "stack" => {
                        self.bump();
                        self.expect_punct("(")?;
                        let i = self.signed_literal_int()?;
                        self.expect_punct(")")?;
                        return Ok(Expr::Op(Op::AddrStack(i), Vec::new()));
                    }
                    _ => {}
                }
                if *self.peek_at(1) == Tok::Punct("(") {
                    return self.op_call(&s);
                }
                self.ident().map(Expr::Var)
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn op_call(&mut self, name: &str) -> PResult<Expr> {
        let pos = self.pos();
        self.bump();
        self.expect_punct("(")?;
        let op = match name {
            "intconst" => {
                let i = self.signed_literal_int()?;
                self.expect_punct(")")?;
                return Ok(Expr::Op(Op::IntConst(i), Vec::new()));
            }
            "floatconst" => {
                let x = self.float_literal()?;
                self.expect_punct(")")?;
                return Ok(Expr::Op(Op::FloatConst(x), Vec::new()));
            }
            _ => match call_op(name) {
                Some(op) => op,
                None => return Err(ParseError { pos, message: format!("unknown operator `{name}`") }),
            },
        };
        let args = self.nested(|p| p.expr_list())?;
        self.expect_punct(")")?;
        if args.len() != op.arity() {
            return Err(ParseError {
                pos,
                message: format!("operator `{name}` takes {} arguments, got {}", op.arity(), args.len()),
            });
        }
        Ok(Expr::Op(op, args))
    }

    /// Callee of a call: an address, variable, literal or parenthesized
    /// expression, so that the argument list is not mistaken for an
    /// operator application.
    fn callee(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Punct("&") | Tok::Punct("(") | Tok::Int(_) => self.atom(),
            Tok::Ident(s) if s == "ptr" || s == "undef" => self.atom(),
            _ => self.ident().map(Expr::Var),
        }
    }

    // ---- assertions ----

    fn pure_expr(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let e = self.expr()?;
        if !e.is_pure() {
            return Err(ParseError { pos, message: "impure expression in assertion (loads are not allowed)".into() });
        }
        Ok(e)
    }

    fn assertion(&mut self) -> PResult<Assertion> {
        if self.eat_kw("exists") {
            let x = self.ident()?;
            self.expect_punct(".")?;
            let body = self.assertion()?;
            return Ok(Assertion::Exists(x, Box::new(body)));
        }
        let lhs = self.a_or()?;
        if self.eat_punct("=>") {
            let rhs = self.assertion()?;
            return Ok(Assertion::imp(lhs, rhs));
        }
        Ok(lhs)
    }

    fn a_or(&mut self) -> PResult<Assertion> {
        let mut lhs = self.a_and()?;
        while self.eat_punct("||") {
            lhs = Assertion::or(lhs, self.a_and()?);
        }
        Ok(lhs)
    }

    fn a_and(&mut self) -> PResult<Assertion> {
        let mut lhs = self.a_star()?;
        while self.eat_punct("&&") {
            lhs = Assertion::and(lhs, self.a_star()?);
        }
        Ok(lhs)
    }

    fn a_star(&mut self) -> PResult<Assertion> {
        let mut lhs = self.a_unary()?;
        while self.eat_punct("*") {
            lhs = Assertion::star(lhs, self.a_unary()?);
        }
        Ok(lhs)
    }

    fn a_unary(&mut self) -> PResult<Assertion> {
        if self.eat_punct("!") {
            return Ok(Assertion::not(self.a_unary()?));
        }
        self.a_atom()
    }

    fn a_atom(&mut self) -> PResult<Assertion> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "emp" => {
                self.bump();
                Ok(Assertion::Emp)
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Assertion::tt())
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Assertion::ff())
            }
            Tok::Ident(s) if s == "exists" => {
                let pos = self.pos();
                let a = self.assertion()?;
                if matches!(a, Assertion::Exists(..)) {
                    Ok(a)
                } else {
                    Err(ParseError { pos, message: "malformed exists".into() })
                }
            }
            Tok::Ident(s) if (s == "defined" || s == "prop") && *self.peek_at(1) == Tok::Punct("(") => {
                self.bump();
                self.bump();
                let e = self.nested(|p| p.pure_expr())?;
                self.expect_punct(")")?;
                Ok(if s == "defined" { Assertion::Defined(e) } else { Assertion::Prop(e) })
            }
            Tok::Punct("[") => {
                self.bump();
                let e = self.nested(|p| p.pure_expr())?;
                self.expect_punct("]")?;
                Ok(Assertion::Expr(e))
            }
            Tok::Punct("(") => {
                let save = self.i;
                self.bump();
                let attempt = self.nested(|p| {
                    let a = p.assertion()?;
                    p.expect_punct(")")?;
                    Ok(a)
                });
                match attempt {
                    Ok(a) if !self.is_punct("|->") && !self.is_punct("==>") => Ok(a),
                    Ok(_) | Err(_) => {
                        self.i = save;
                        self.a_expr_atom()
                    }
                }
            }
            _ => self.a_expr_atom(),
        }
    }

    /// `e |->[ch] e2` or `e ==> v`.
    fn a_expr_atom(&mut self) -> PResult<Assertion> {
        let saved = std::mem::replace(&mut self.no_star, true);
        let r = self.a_expr_atom_inner();
        self.no_star = saved;
        r
    }

    fn a_expr_atom_inner(&mut self) -> PResult<Assertion> {
        let lhs = self.pure_expr()?;
        if self.eat_punct("|->") {
            self.expect_punct("[")?;
            let ch = self.chunk()?;
            self.expect_punct("]")?;
            let rhs = self.pure_expr()?;
            return Ok(Assertion::MapsTo(lhs, ch, rhs));
        }
        if self.eat_punct("==>") {
            let v = self.value_term()?;
            return Ok(Assertion::Eval(lhs, v));
        }
        self.unexpected("`|->` or `==>` after an expression in an assertion")
    }

    fn value_term(&mut self) -> PResult<ValueTerm> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "undef" => {
                self.bump();
                Ok(ValueTerm::Lit(Value::Undef))
            }
            Tok::Ident(s) if s == "ptr" => {
                self.bump();
                self.ptr_literal().map(ValueTerm::Lit)
            }
            Tok::Ident(s) if s == "nan" || s == "inf" => self.float_literal().map(|x| ValueTerm::Lit(Value::Float(x))),
            Tok::Ident(_) => self.ident().map(ValueTerm::Logic),
            Tok::Float(_) => self.float_literal().map(|x| ValueTerm::Lit(Value::Float(x))),
            Tok::Punct("-") if matches!(self.peek_at(1), Tok::Float(_)) || *self.peek_at(1) == Tok::Ident("inf".into()) => {
                self.float_literal().map(|x| ValueTerm::Lit(Value::Float(x)))
            }
            Tok::Int(_) | Tok::Punct("-") => self.signed_literal_int().map(|i| ValueTerm::Lit(Value::Int(i))),
            _ => self.unexpected("a value or logic variable"),
        }
    }

    // ---- statements ----

    fn stmts_until_brace(&mut self) -> PResult<Stmt> {
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.unexpected("`}`");
            }
            out.push(self.stmt()?);
        }
        Ok(Stmt::seq_all(out))
    }

    fn braced(&mut self) -> PResult<Stmt> {
        self.expect_punct("{")?;
        let s = self.stmts_until_brace()?;
        self.expect_punct("}")?;
        Ok(s)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        match self.peek().clone() {
            Tok::Punct("{") => self.braced(),
            Tok::Punct("(") => {
                self.bump();
                let dests = self.ident_list(")")?;
                self.expect_punct(")")?;
                self.expect_punct("=")?;
                self.call_rest(dests)
            }
            Tok::Ident(k) => match k.as_str() {
                "skip" => {
                    self.bump();
                    self.expect_punct(";")?;
                    Ok(Stmt::Skip)
                }
                "store" => {
                    self.bump();
                    let ch = self.chunk()?;
                    self.expect_punct("[")?;
                    let a = self.expr()?;
                    self.expect_punct("]")?;
                    self.expect_punct("=")?;
                    let v = self.expr()?;
                    self.expect_punct(";")?;
                    Ok(Stmt::Store(ch, a, v))
                }
                "loop" => {
                    self.bump();
                    let mut invs = Vec::new();
                    while self.eat_kw("invariant") {
                        invs.push(self.assertion()?);
                    }
                    let body = self.braced()?;
                    Ok(wrap(invs.into_iter().map(Annotation::Invariant), Stmt::loop_(body)))
                }
                "block" => {
                    self.bump();
                    let mut exits = Vec::new();
                    while self.eat_kw("exits") {
                        exits.push(self.assertion()?);
                    }
                    let body = self.braced()?;
                    Ok(wrap(exits.into_iter().map(Annotation::BlockExit), Stmt::block(body)))
                }
                "exit" => {
                    self.bump();
                    let n = self.nat_u32("exit level")?;
                    self.expect_punct(";")?;
                    Ok(Stmt::Exit(n))
                }
                "if" => {
                    self.bump();
                    self.expect_punct("(")?;
                    let c = self.expr()?;
                    self.expect_punct(")")?;
                    let a = self.braced()?;
                    let b = if self.eat_kw("else") { self.braced()? } else { Stmt::Skip };
                    Ok(Stmt::if_(c, a, b))
                }
                "return" => {
                    self.bump();
                    let mut es = Vec::new();
                    if !self.is_punct(";") {
                        loop {
                            es.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(";")?;
                    Ok(Stmt::Return(es))
                }
                "assert" => {
                    self.bump();
                    let a = self.assertion()?;
                    self.expect_punct(";")?;
                    Ok(Stmt::annot(Annotation::Assert(a), Stmt::Skip))
                }
                "call" => self.call_rest(Vec::new()),
                _ => {
                    let x = self.ident()?;
                    self.expect_punct("=")?;
                    if self.is_kw("call") {
                        return self.call_rest(vec![x]);
                    }
                    let e = self.expr()?;
                    self.expect_punct(";")?;
                    Ok(Stmt::Assign(x, e))
                }
            },
            _ => self.unexpected("a statement"),
        }
    }

    fn call_rest(&mut self, dests: Vec<Ident>) -> PResult<Stmt> {
        self.expect_kw("call")?;
        let callee = self.callee()?;
        self.expect_punct("(")?;
        let args = self.expr_list()?;
        self.expect_punct(")")?;
        self.expect_punct(";")?;
        let sig = Signature { args: args.len(), results: dests.len() };
        Ok(Stmt::Call(dests, sig, callee, args))
    }

    // ---- top level ----

    fn fundef(&mut self) -> PResult<FunDef> {
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        let params = self.ident_list(")")?;
        self.expect_punct(")")?;
        self.expect_punct(":")?;
        let results = self.nat_u32("result count")? as usize;
        let mut aux = Vec::new();
        if self.eat_kw("aux") {
            aux = self.ident_list("{")?;
        }
        let requires = if self.eat_kw("requires") { Some(self.assertion()?) } else { None };
        let ensures = if self.eat_kw("ensures") { Some(self.assertion()?) } else { None };
        self.expect_punct("{")?;
        let mut locals = Vec::new();
        if self.eat_kw("locals") {
            locals = self.ident_list(";")?;
            self.expect_punct(";")?;
        }
        let mut stackspace = 0;
        if self.eat_kw("stack") {
            stackspace = self.nat_u32("stack size")?;
            self.expect_punct(";")?;
        }
        let body = self.stmts_until_brace()?;
        self.expect_punct("}")?;
        Ok(FunDef { name, params, locals, results, stackspace, body: Arc::new(body), aux, requires, ensures })
    }

    fn program(&mut self) -> PResult<Program> {
        let mut items = Vec::new();
        let mut headers: Vec<(Ident, Pos)> = Vec::new();
        let mut gamma = None;
        let mut gamma_pos = Pos::default();
        loop {
            let pos = self.pos();
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(s) if s == "global" => {
                    self.bump();
                    let name = self.ident()?;
                    self.expect_punct("[")?;
                    let size = self.nat_u32("global size")?;
                    self.expect_punct("]")?;
                    self.expect_punct(";")?;
                    headers.push((name.clone(), pos));
                    items.push(Item::Global(GlobalVar { name, size }));
                }
                Tok::Ident(s) if s == "fn" => {
                    let f = self.fundef()?;
                    headers.push((f.name.clone(), pos));
                    items.push(Item::Function(f));
                }
                Tok::Ident(s) if s == "gamma" => {
                    if gamma.is_some() {
                        return self.err("duplicate gamma declaration");
                    }
                    self.bump();
                    gamma_pos = pos;
                    gamma = Some(self.assertion()?);
                    self.expect_punct(";")?;
                }
                _ => return self.unexpected("`global`, `fn` or `gamma`"),
            }
        }
        Program::new(items, gamma).map_err(|e| {
            let pos = match &e {
                ProgramError::DuplicateName(n) | ProgramError::GlobalTooLarge(n) => {
                    headers.iter().filter(|(h, _)| h == n).map(|(_, p)| *p).next_back()
                }
                other => other.function().and_then(|f| headers.iter().find(|(h, _)| h == f).map(|(_, p)| *p)),
            };
            ParseError { pos: pos.unwrap_or(gamma_pos), message: e.to_string() }
        })
    }

    fn finish(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.unexpected("end of input")
        }
    }
}

fn wrap(annots: impl DoubleEndedIterator<Item = Annotation>, s: Stmt) -> Stmt {
    annots.rev().fold(s, |acc, a| Stmt::annot(a, acc))
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    p.program()
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

pub fn parse_assertion(src: &str) -> Result<Assertion, ParseError> {
    let mut p = Parser::new(src)?;
    let a = p.assertion()?;
    p.finish()?;
    Ok(a)
}
