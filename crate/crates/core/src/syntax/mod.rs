//! Abstract syntax of Cminor expressions, statements and programs, plus the
//! textual front end (`parse_program`, `pretty_print`).

mod lexer;
mod parser;
mod printer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::assertions::{Assertion, ValueTerm};
use crate::memory::Memory;
use crate::values::{BlockId, Chunk, Int32, Value};

pub use lexer::Pos;
pub use parser::{parse_assertion, parse_expr, parse_program, ParseError};
pub use printer::{print_assertion, print_expr, print_stmt, pretty_print};

pub type Ident = Arc<str>;

pub fn ident(s: &str) -> Ident {
    Arc::from(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparison {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    pub const ALL: [Comparison; 6] =
        [Comparison::Eq, Comparison::Ne, Comparison::Lt, Comparison::Le, Comparison::Gt, Comparison::Ge];

    pub fn holds<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            Comparison::Eq => a == b,
            Comparison::Ne => a != b,
            Comparison::Lt => a < b,
            Comparison::Le => a <= b,
            Comparison::Gt => a > b,
            Comparison::Ge => a >= b,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Comparison::Eq => "eq",
            Comparison::Ne => "ne",
            Comparison::Lt => "lt",
            Comparison::Le => "le",
            Comparison::Gt => "gt",
            Comparison::Ge => "ge",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Eq => "==",
            Comparison::Ne => "!=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        }
    }
}

/// Primitive operators. The first four are nullary; the address forms read
/// the global environment and the current stack pointer.
#[derive(Clone, Debug)]
pub enum Op {
    IntConst(Int32),
    FloatConst(f64),
    AddrSymbol(Ident),
    AddrStack(Int32),
    Add,
    Sub,
    Mul,
    Divs,
    Divu,
    Mods,
    Modu,
    And,
    Or,
    Xor,
    Shl,
    Shrs,
    Shru,
    Neg,
    NotInt,
    Cmp(Comparison),
    Cmpu(Comparison),
    Cmpf(Comparison),
    NegF,
    AddF,
    SubF,
    MulF,
    DivF,
    IntOfFloat,
    FloatOfInt,
    FloatOfIntU,
    Cast8s,
    Cast8u,
    Cast16s,
    Cast16u,
}

impl Op {
    pub fn arity(&self) -> usize {
        use Op::*;
        match self {
            IntConst(_) | FloatConst(_) | AddrSymbol(_) | AddrStack(_) => 0,
            Neg | NotInt | NegF | IntOfFloat | FloatOfInt | FloatOfIntU | Cast8s | Cast8u | Cast16s
            | Cast16u => 1,
            Add | Sub | Mul | Divs | Divu | Mods | Modu | And | Or | Xor | Shl | Shrs | Shru | Cmp(_)
            | Cmpu(_) | Cmpf(_) | AddF | SubF | MulF | DivF => 2,
        }
    }
}

impl PartialEq for Op {
    fn eq(&self, other: &Self) -> bool {
        use Op::*;
        match (self, other) {
            (IntConst(a), IntConst(b)) => a == b,
            (FloatConst(a), FloatConst(b)) => a.to_bits() == b.to_bits(),
            (AddrSymbol(a), AddrSymbol(b)) => a == b,
            (AddrStack(a), AddrStack(b)) => a == b,
            (Cmp(a), Cmp(b)) | (Cmpu(a), Cmpu(b)) | (Cmpf(a), Cmpf(b)) => a == b,
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl Eq for Op {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Val(Value),
    Var(Ident),
    Op(Op, Vec<Expr>),
    Load(Chunk, Box<Expr>),
}

impl Expr {
    pub fn int(i: i32) -> Expr {
        Expr::Val(Value::int(i))
    }

    pub fn var(x: &str) -> Expr {
        Expr::Var(ident(x))
    }

    pub fn binop(op: Op, a: Expr, b: Expr) -> Expr {
        Expr::Op(op, vec![a, b])
    }

    pub fn unop(op: Op, a: Expr) -> Expr {
        Expr::Op(op, vec![a])
    }

    pub fn addr_of(name: &str) -> Expr {
        Expr::Op(Op::AddrSymbol(ident(name)), Vec::new())
    }

    pub fn load(ch: Chunk, addr: Expr) -> Expr {
        Expr::Load(ch, Box::new(addr))
    }

    /// Contains no load anywhere.
    pub fn is_pure(&self) -> bool {
        match self {
            Expr::Val(_) | Expr::Var(_) => true,
            Expr::Op(_, args) => args.iter().all(Expr::is_pure),
            Expr::Load(..) => false,
        }
    }

    /// Visit every variable occurrence.
    pub fn for_each_var(&self, f: &mut impl FnMut(&Ident)) {
        match self {
            Expr::Val(_) => {}
            Expr::Var(x) => f(x),
            Expr::Op(_, args) => args.iter().for_each(|a| a.for_each_var(f)),
            Expr::Load(_, a) => a.for_each_var(f),
        }
    }

    pub fn for_each_symbol(&self, f: &mut impl FnMut(&Ident)) {
        match self {
            Expr::Val(_) | Expr::Var(_) => {}
            Expr::Op(op, args) => {
                if let Op::AddrSymbol(s) = op {
                    f(s);
                }
                args.iter().for_each(|a| a.for_each_symbol(f));
            }
            Expr::Load(_, a) => a.for_each_symbol(f),
        }
    }

    pub fn for_each_literal(&self, f: &mut impl FnMut(Value)) {
        match self {
            Expr::Val(v) => f(*v),
            Expr::Var(_) => {}
            Expr::Op(op, args) => {
                match op {
                    Op::IntConst(i) => f(Value::Int(*i)),
                    Op::FloatConst(x) => f(Value::Float(*x)),
                    _ => {}
                }
                args.iter().for_each(|a| a.for_each_literal(f));
            }
            Expr::Load(_, a) => a.for_each_literal(f),
        }
    }
}

/// Purity: the expression contains no `Load`.
pub fn pure(e: &Expr) -> bool {
    e.is_pure()
}

/// Argument and result counts carried by a call site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub args: usize,
    pub results: usize,
}

/// Checker-only annotations. In concrete syntax each kind wraps one
/// statement shape: `loop invariant A {..}`, `block exits A {..}` and
/// `assert A;` (wrapping `skip`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Annotation {
    Invariant(Assertion),
    BlockExit(Assertion),
    Assert(Assertion),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Skip,
    Assign(Ident, Expr),
    Store(Chunk, Expr, Expr),
    Seq(Arc<Stmt>, Arc<Stmt>),
    If(Expr, Arc<Stmt>, Arc<Stmt>),
    Loop(Arc<Stmt>),
    Block(Arc<Stmt>),
    Exit(u32),
    Call(Vec<Ident>, Signature, Expr, Vec<Expr>),
    Return(Vec<Expr>),
    Annot(Annotation, Arc<Stmt>),
}

impl Stmt {
    pub fn assign(x: &str, e: Expr) -> Stmt {
        Stmt::Assign(ident(x), e)
    }

    pub fn seq(a: Stmt, b: Stmt) -> Stmt {
        Stmt::Seq(Arc::new(a), Arc::new(b))
    }

    /// Right-nested sequence; empty means `skip`.
    pub fn seq_all(stmts: impl IntoIterator<Item = Stmt>) -> Stmt {
        let mut v: Vec<Stmt> = stmts.into_iter().collect();
        let Some(mut acc) = v.pop() else {
            return Stmt::Skip;
        };
        while let Some(s) = v.pop() {
            acc = Stmt::seq(s, acc);
        }
        acc
    }

    pub fn if_(c: Expr, a: Stmt, b: Stmt) -> Stmt {
        Stmt::If(c, Arc::new(a), Arc::new(b))
    }

    pub fn loop_(body: Stmt) -> Stmt {
        Stmt::Loop(Arc::new(body))
    }

    pub fn block(body: Stmt) -> Stmt {
        Stmt::Block(Arc::new(body))
    }

    pub fn call(dests: &[&str], callee: Expr, args: Vec<Expr>) -> Stmt {
        let sig = Signature { args: args.len(), results: dests.len() };
        Stmt::Call(dests.iter().map(|d| ident(d)).collect(), sig, callee, args)
    }

    pub fn annot(a: Annotation, s: Stmt) -> Stmt {
        Stmt::Annot(a, Arc::new(s))
    }

    /// Strip annotation wrappers at the root.
    pub fn peel(&self) -> &Stmt {
        let mut s = self;
        while let Stmt::Annot(_, inner) = s {
            s = inner;
        }
        s
    }

    /// The annotations wrapped around the root, outermost first.
    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        let mut s = self;
        std::iter::from_fn(move || match s {
            Stmt::Annot(a, inner) => {
                s = inner;
                Some(a)
            }
            _ => None,
        })
    }

    /// Flatten a right-nested sequence into its statements.
    pub fn flatten_seq(self: &Arc<Stmt>) -> Vec<Arc<Stmt>> {
        let mut out = Vec::new();
        let mut cur = self.clone();
        loop {
            match &*cur {
                Stmt::Seq(a, b) => {
                    out.push(a.clone());
                    let next = b.clone();
                    cur = next;
                }
                _ => {
                    out.push(cur);
                    return out;
                }
            }
        }
    }

    /// Remove every annotation wrapper (`assert` becomes `skip`).
    pub fn erase_annotations(&self) -> Stmt {
        match self {
            Stmt::Annot(_, s) => s.erase_annotations(),
            Stmt::Seq(a, b) => Stmt::seq(a.erase_annotations(), b.erase_annotations()),
            Stmt::If(c, a, b) => Stmt::if_(c.clone(), a.erase_annotations(), b.erase_annotations()),
            Stmt::Loop(b) => Stmt::loop_(b.erase_annotations()),
            Stmt::Block(b) => Stmt::block(b.erase_annotations()),
            s => s.clone(),
        }
    }

    pub fn for_each_expr(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Stmt::Skip | Stmt::Exit(_) => {}
            Stmt::Assign(_, e) => f(e),
            Stmt::Store(_, a, v) => {
                f(a);
                f(v);
            }
            Stmt::Seq(a, b) => {
                a.for_each_expr(f);
                b.for_each_expr(f);
            }
            Stmt::If(c, a, b) => {
                f(c);
                a.for_each_expr(f);
                b.for_each_expr(f);
            }
            Stmt::Loop(b) | Stmt::Block(b) | Stmt::Annot(_, b) => b.for_each_expr(f),
            Stmt::Call(_, _, callee, args) => {
                f(callee);
                args.iter().for_each(&mut *f);
            }
            Stmt::Return(es) => es.iter().for_each(&mut *f),
        }
    }

    pub fn for_each_stmt(&self, f: &mut impl FnMut(&Stmt)) {
        f(self);
        match self {
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                a.for_each_stmt(f);
                b.for_each_stmt(f);
            }
            Stmt::Loop(b) | Stmt::Block(b) | Stmt::Annot(_, b) => b.for_each_stmt(f),
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunDef {
    pub name: Ident,
    pub params: Vec<Ident>,
    pub locals: Vec<Ident>,
    /// Number of values every return must deliver.
    pub results: usize,
    pub stackspace: u32,
    pub body: Arc<Stmt>,
    /// Logic variables shared by `requires`, `ensures` and the body's
    /// annotations, bound once at entry.
    pub aux: Vec<Ident>,
    pub requires: Option<Assertion>,
    pub ensures: Option<Assertion>,
}

impl FunDef {
    pub fn new(name: &str, params: &[&str], locals: &[&str], results: usize, stackspace: u32, body: Stmt) -> Self {
        FunDef {
            name: ident(name),
            params: params.iter().map(|p| ident(p)).collect(),
            locals: locals.iter().map(|p| ident(p)).collect(),
            results,
            stackspace,
            body: Arc::new(body),
            aux: Vec::new(),
            requires: None,
            ensures: None,
        }
    }

    pub fn is_annotated(&self) -> bool {
        let mut annotated = self.requires.is_some() || self.ensures.is_some();
        self.body.for_each_stmt(&mut |s| annotated |= matches!(s, Stmt::Annot(..)));
        annotated
    }

    pub fn is_variable(&self, x: &str) -> bool {
        self.params.iter().chain(&self.locals).any(|p| &**p == x)
    }

    /// Name of the logic variable that receives the `i`-th returned value
    /// in the postcondition.
    pub fn result_name(i: usize) -> Ident {
        ident(&format!("ret{i}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalVar {
    pub name: Ident,
    pub size: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Global(GlobalVar),
    Function(FunDef),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgramError {
    #[error("duplicate global name `{0}`")]
    DuplicateName(Ident),
    #[error("in `{function}`: duplicate variable `{name}`")]
    DuplicateVariable { function: Ident, name: Ident },
    #[error("in `{function}`: unknown identifier `{name}`")]
    UnknownIdent { function: Ident, name: Ident },
    #[error("unknown symbol `&{name}` in `{function}`")]
    UnknownSymbol { function: Ident, name: Ident },
    #[error("in `{function}`: logic variable `{name}` shadows a program variable")]
    LogicShadowsVariable { function: Ident, name: Ident },
    #[error("in `{function}`: program variable `{name}` inside prop(..)")]
    ProgramVarInProp { function: Ident, name: Ident },
    #[error("in `{function}`: call site has {dests} result variables but signature says {sig}")]
    BadSignature { function: Ident, dests: usize, sig: usize },
    #[error("in `{function}`: operator applied to {got} arguments, expected {expected}")]
    BadArity { function: Ident, expected: usize, got: usize },
    #[error("in `{function}`: assertion contains a load")]
    ImpureAssertion { function: Ident },
    #[error("global `{0}` too large")]
    GlobalTooLarge(Ident),
}

impl ProgramError {
    pub fn function(&self) -> Option<&Ident> {
        match self {
            ProgramError::DuplicateName(_) | ProgramError::GlobalTooLarge(_) => None,
            ProgramError::DuplicateVariable { function, .. }
            | ProgramError::UnknownIdent { function, .. }
            | ProgramError::UnknownSymbol { function, .. }
            | ProgramError::LogicShadowsVariable { function, .. }
            | ProgramError::ProgramVarInProp { function, .. }
            | ProgramError::BadSignature { function, .. }
            | ProgramError::BadArity { function, .. }
            | ProgramError::ImpureAssertion { function } => Some(function),
        }
    }
}

/// A whole program: the global environment threaded through every
/// judgment. Names map to blocks; function blocks map to definitions; data
/// globals are blocks of their declared size, allocated uninitialized in
/// declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    symbols: BTreeMap<Ident, BlockId>,
    functions: BTreeMap<BlockId, Arc<FunDef>>,
    data: BTreeMap<BlockId, GlobalVar>,
    gamma: Option<Assertion>,
    init_mem: Memory,
}

impl Program {
    pub fn new(items: Vec<Item>, gamma: Option<Assertion>) -> Result<Program, ProgramError> {
        let mut symbols = BTreeMap::new();
        let mut functions = BTreeMap::new();
        let mut data = BTreeMap::new();
        let mut mem = Memory::new();
        for item in items {
            let name = match &item {
                Item::Global(g) => g.name.clone(),
                Item::Function(f) => f.name.clone(),
            };
            if symbols.contains_key(&name) {
                return Err(ProgramError::DuplicateName(name));
            }
            let size = match &item {
                Item::Global(g) => g.size as i64,
                Item::Function(_) => 0,
            };
            let b = mem.alloc(0, size).map_err(|_| ProgramError::GlobalTooLarge(name.clone()))?;
            symbols.insert(name, b);
            match item {
                Item::Global(g) => {
                    data.insert(b, g);
                }
                Item::Function(f) => {
                    functions.insert(b, Arc::new(f));
                }
            }
        }
        let prog = Program { symbols, functions, data, gamma, init_mem: mem };
        prog.validate()?;
        Ok(prog)
    }

    pub fn empty() -> Program {
        Program::new(Vec::new(), None).expect("empty program is valid")
    }

    pub fn symbol(&self, name: &str) -> Option<BlockId> {
        self.symbols.get(name).copied()
    }

    pub fn function_at(&self, b: BlockId) -> Option<&Arc<FunDef>> {
        self.functions.get(&b)
    }

    pub fn function(&self, name: &str) -> Option<&Arc<FunDef>> {
        self.symbol(name).and_then(|b| self.functions.get(&b))
    }

    pub fn functions(&self) -> impl Iterator<Item = &Arc<FunDef>> {
        self.functions.values()
    }

    pub fn data_blocks(&self) -> impl Iterator<Item = (BlockId, &GlobalVar)> {
        self.data.iter().map(|(b, g)| (*b, g))
    }

    /// Items in declaration order.
    pub fn items(&self) -> Vec<Item> {
        let mut out: Vec<(BlockId, Item)> = self
            .data
            .iter()
            .map(|(b, g)| (*b, Item::Global(g.clone())))
            .chain(self.functions.iter().map(|(b, f)| (*b, Item::Function((**f).clone()))))
            .collect();
        out.sort_by_key(|(b, _)| *b);
        out.into_iter().map(|(_, i)| i).collect()
    }

    pub fn gamma(&self) -> Option<&Assertion> {
        self.gamma.as_ref()
    }

    /// The function named `main`, if any.
    pub fn entry(&self) -> Option<&Arc<FunDef>> {
        self.function("main")
    }

    /// Memory holding the global blocks, before any function runs.
    pub fn initial_memory(&self) -> &Memory {
        &self.init_mem
    }

    /// Every literal occurring in function bodies and annotations.
    pub fn literals(&self) -> BTreeSet<LiteralKey> {
        let mut out = BTreeSet::new();
        let mut add = |v: Value| {
            out.insert(LiteralKey(v));
        };
        for f in self.functions.values() {
            f.body.for_each_expr(&mut |e| e.for_each_literal(&mut add));
            let mut visit = |a: &Assertion| a.for_each_literal(&mut add);
            f.requires.iter().for_each(&mut visit);
            f.ensures.iter().for_each(&mut visit);
            f.body.for_each_stmt(&mut |s| {
                if let Stmt::Annot(a, _) = s {
                    match a {
                        Annotation::Invariant(x) | Annotation::BlockExit(x) | Annotation::Assert(x) => {
                            x.for_each_literal(&mut add)
                        }
                    }
                }
            });
        }
        if let Some(g) = &self.gamma {
            g.for_each_literal(&mut add);
        }
        out
    }

    fn validate(&self) -> Result<(), ProgramError> {
        for f in self.functions.values() {
            self.validate_function(f)?;
        }
        if let Some(g) = &self.gamma {
            let scope = Scope { prog: self, func: None, function: ident("<gamma>") };
            scope.assertion(g, &mut Vec::new())?;
        }
        Ok(())
    }

    fn validate_function(&self, f: &FunDef) -> Result<(), ProgramError> {
        let mut seen = BTreeSet::new();
        for x in f.params.iter().chain(&f.locals) {
            if !seen.insert(x.clone()) {
                return Err(ProgramError::DuplicateVariable { function: f.name.clone(), name: x.clone() });
            }
        }
        let scope = Scope { prog: self, func: Some(f), function: f.name.clone() };
        let mut logic: Vec<Ident> = f.aux.clone();
        for a in &f.aux {
            scope.logic_name(a)?;
        }
        if let Some(p) = &f.requires {
            scope.assertion(p, &mut logic)?;
        }
        if let Some(q) = &f.ensures {
            let mut with_results = logic.clone();
            for i in 0..f.results {
                let r = FunDef::result_name(i);
                scope.logic_name(&r)?;
                with_results.push(r);
            }
            scope.assertion(q, &mut with_results)?;
        }
        scope.stmt(&f.body, &mut logic)
    }
}

/// Values ordered by their bit pattern, for literal sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LiteralKey(pub Value);

impl LiteralKey {
    fn key(&self) -> (u8, u64, u64) {
        match self.0 {
            Value::Undef => (0, 0, 0),
            Value::Int(i) => (1, i.unsigned() as u64, 0),
            Value::Ptr(b, o) => (2, b.0 as u64, o.unsigned() as u64),
            Value::Float(x) => (3, x.to_bits(), 0),
        }
    }
}

impl PartialOrd for LiteralKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LiteralKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

struct Scope<'a> {
    prog: &'a Program,
    func: Option<&'a FunDef>,
    function: Ident,
}

impl Scope<'_> {
    fn is_var(&self, x: &str) -> bool {
        self.func.is_some_and(|f| f.is_variable(x))
    }

    fn unknown(&self, name: &Ident) -> ProgramError {
        ProgramError::UnknownIdent { function: self.function.clone(), name: name.clone() }
    }

    fn logic_name(&self, x: &Ident) -> Result<(), ProgramError> {
        if self.is_var(x) {
            return Err(ProgramError::LogicShadowsVariable { function: self.function.clone(), name: x.clone() });
        }
        Ok(())
    }

    fn expr(&self, e: &Expr, logic: &[Ident]) -> Result<(), ProgramError> {
        match e {
            Expr::Val(_) => Ok(()),
            Expr::Var(x) => {
                if self.is_var(x) || logic.contains(x) {
                    Ok(())
                } else {
                    Err(self.unknown(x))
                }
            }
            Expr::Op(op, args) => {
                if op.arity() != args.len() {
                    return Err(ProgramError::BadArity {
                        function: self.function.clone(),
                        expected: op.arity(),
                        got: args.len(),
                    });
                }
                if let Op::AddrSymbol(s) = op {
                    if self.prog.symbol(s).is_none() {
                        return Err(ProgramError::UnknownSymbol { function: self.function.clone(), name: s.clone() });
                    }
                }
                args.iter().try_for_each(|a| self.expr(a, logic))
            }
            Expr::Load(_, a) => self.expr(a, logic),
        }
    }

    fn target(&self, x: &Ident) -> Result<(), ProgramError> {
        if self.is_var(x) {
            Ok(())
        } else {
            Err(self.unknown(x))
        }
    }

    fn stmt(&self, s: &Stmt, logic: &mut Vec<Ident>) -> Result<(), ProgramError> {
        match s {
            Stmt::Skip | Stmt::Exit(_) => Ok(()),
            Stmt::Assign(x, e) => {
                self.target(x)?;
                self.expr(e, &[])
            }
            Stmt::Store(_, a, v) => {
                self.expr(a, &[])?;
                self.expr(v, &[])
            }
            Stmt::Seq(a, b) => {
                self.stmt(a, logic)?;
                self.stmt(b, logic)
            }
            Stmt::If(c, a, b) => {
                self.expr(c, &[])?;
                self.stmt(a, logic)?;
                self.stmt(b, logic)
            }
            Stmt::Loop(b) | Stmt::Block(b) => self.stmt(b, logic),
            Stmt::Call(dests, sig, callee, args) => {
                if sig.results != dests.len() {
                    return Err(ProgramError::BadSignature {
                        function: self.function.clone(),
                        dests: dests.len(),
                        sig: sig.results,
                    });
                }
                dests.iter().try_for_each(|d| self.target(d))?;
                self.expr(callee, &[])?;
                args.iter().try_for_each(|a| self.expr(a, &[]))
            }
            Stmt::Return(es) => es.iter().try_for_each(|e| self.expr(e, &[])),
            Stmt::Annot(a, inner) => {
                match a {
                    Annotation::Invariant(x) | Annotation::BlockExit(x) | Annotation::Assert(x) => {
                        self.assertion(x, logic)?
                    }
                }
                self.stmt(inner, logic)
            }
        }
    }

    fn assertion(&self, a: &Assertion, logic: &mut Vec<Ident>) -> Result<(), ProgramError> {
        if !a.is_pure() {
            return Err(ProgramError::ImpureAssertion { function: self.function.clone() });
        }
        match a {
            Assertion::Emp => Ok(()),
            Assertion::Star(p, q) | Assertion::And(p, q) | Assertion::Or(p, q) | Assertion::Imp(p, q) => {
                self.assertion(p, logic)?;
                self.assertion(q, logic)
            }
            Assertion::Not(p) => self.assertion(p, logic),
            Assertion::Exists(x, p) => {
                self.logic_name(x)?;
                logic.push(x.clone());
                let r = self.assertion(p, logic);
                logic.pop();
                r
            }
            Assertion::Prop(e) => {
                let mut err = None;
                e.for_each_var(&mut |x| {
                    if err.is_none() && !logic.contains(x) {
                        err = Some(if self.is_var(x) {
                            ProgramError::ProgramVarInProp { function: self.function.clone(), name: x.clone() }
                        } else {
                            self.unknown(x)
                        });
                    }
                });
                match err {
                    Some(e) => Err(e),
                    None => self.expr(e, logic),
                }
            }
            Assertion::Eval(e, v) => {
                self.expr(e, logic)?;
                match v {
                    ValueTerm::Logic(x) if !logic.contains(x) => Err(self.unknown(x)),
                    _ => Ok(()),
                }
            }
            Assertion::Expr(e) | Assertion::Defined(e) => self.expr(e, logic),
            Assertion::MapsTo(a, _, v) => {
                self.expr(a, logic)?;
                self.expr(v, logic)
            }
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn purity() {
        assert!(pure(&Expr::int(1)));
        assert!(!pure(&Expr::load(Chunk::Int32, Expr::var("x"))));
        assert!(!pure(&Expr::binop(Op::Add, Expr::var("x"), Expr::load(Chunk::Int32, Expr::var("p")))));
        assert!(pure(&Expr::binop(Op::Add, Expr::var("x"), Expr::addr_of("g"))));
    }

    #[test]
    fn block_ids_follow_declaration_order() {
        let prog = Program::new(
            vec![
                Item::Global(GlobalVar { name: ident("g"), size: 8 }),
                Item::Function(FunDef::new("main", &[], &[], 0, 0, Stmt::Return(vec![]))),
            ],
            None,
        )
        .unwrap();
        assert_eq!(prog.symbol("g"), Some(BlockId(0)));
        assert_eq!(prog.symbol("main"), Some(BlockId(1)));
        assert_eq!(prog.initial_memory().block(BlockId(0)).unwrap().hi(), 8);
        assert!(prog.entry().is_some());
    }

    #[test]
    fn rejects_bad_programs() {
        let f = |body| Item::Function(FunDef::new("main", &["a"], &["a"], 0, 0, body));
        assert!(matches!(Program::new(vec![f(Stmt::Skip)], None), Err(ProgramError::DuplicateVariable { .. })));
        let g = |body| Item::Function(FunDef::new("main", &["a"], &[], 0, 0, body));
        assert!(matches!(
            Program::new(vec![g(Stmt::assign("b", Expr::int(1)))], None),
            Err(ProgramError::UnknownIdent { .. })
        ));
        assert!(matches!(
            Program::new(vec![g(Stmt::assign("a", Expr::addr_of("nope")))], None),
            Err(ProgramError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            Program::new(vec![g(Stmt::Skip), g(Stmt::Skip)], None),
            Err(ProgramError::DuplicateName(_))
        ));
    }

    #[test]
    fn flatten_and_seq_all() {
        let s = Arc::new(Stmt::seq_all([Stmt::Skip, Stmt::Exit(0), Stmt::Exit(1)]));
        let parts = s.flatten_seq();
        assert_eq!(parts.len(), 3);
        assert_eq!(*parts[2], Stmt::Exit(1));
        assert_eq!(Stmt::seq_all([]), Stmt::Skip);
    }
}
