//! Separation-logic assertions, checked on concrete states.
//!
//! Satisfaction is three-valued. `Unknown` comes only from existential
//! witness search running out of candidates or from a separating
//! conjunction over more held addresses than the split bound allows.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::eval::{Env, EvalError, Evaluator, Layered};
use crate::footprint::Footprint;
use crate::syntax::{print_assertion, Comparison, Expr, Ident, LiteralKey, Op, Program};
use crate::values::{BlockId, Chunk, Int32, Value};

/// Largest number of held addresses a separating conjunction will split.
pub const SPLIT_BOUND: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValueTerm {
    Lit(Value),
    Logic(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assertion {
    Emp,
    Star(Box<Assertion>, Box<Assertion>),
    And(Box<Assertion>, Box<Assertion>),
    Or(Box<Assertion>, Box<Assertion>),
    Imp(Box<Assertion>, Box<Assertion>),
    Not(Box<Assertion>),
    Exists(Ident, Box<Assertion>),
    /// Pure fact over logic variables and literals; says nothing about the
    /// footprint.
    Prop(Expr),
    /// `e ==> v`: empty footprint and `e` evaluates to `v`.
    Eval(Expr, ValueTerm),
    /// `[e]`: empty footprint and `e` evaluates to a true value.
    Expr(Expr),
    Defined(Expr),
    /// Exactly the full share over the chunk's range at the address, which
    /// holds the given value.
    MapsTo(Expr, Chunk, Expr),
}

impl Assertion {
    pub fn tt() -> Assertion {
        Assertion::Prop(Expr::int(1))
    }

    pub fn ff() -> Assertion {
        Assertion::Prop(Expr::int(0))
    }

    pub fn star(a: Assertion, b: Assertion) -> Assertion {
        Assertion::Star(Box::new(a), Box::new(b))
    }

    pub fn and(a: Assertion, b: Assertion) -> Assertion {
        Assertion::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Assertion, b: Assertion) -> Assertion {
        Assertion::Or(Box::new(a), Box::new(b))
    }

    pub fn imp(a: Assertion, b: Assertion) -> Assertion {
        Assertion::Imp(Box::new(a), Box::new(b))
    }

    pub fn not(a: Assertion) -> Assertion {
        Assertion::Not(Box::new(a))
    }

    pub fn exists(x: &str, a: Assertion) -> Assertion {
        Assertion::Exists(crate::syntax::ident(x), Box::new(a))
    }

    pub fn maps_to(addr: Expr, ch: Chunk, v: Expr) -> Assertion {
        Assertion::MapsTo(addr, ch, v)
    }

    /// Star-fold; empty gives `emp`.
    pub fn star_all(parts: impl IntoIterator<Item = Assertion>) -> Assertion {
        parts.into_iter().reduce(Assertion::star).unwrap_or(Assertion::Emp)
    }

    pub fn or_all(parts: impl IntoIterator<Item = Assertion>) -> Assertion {
        parts.into_iter().reduce(Assertion::or).unwrap_or_else(Assertion::ff)
    }

    pub fn depth(&self) -> usize {
        match self {
            Assertion::Star(a, b) | Assertion::And(a, b) | Assertion::Or(a, b) | Assertion::Imp(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Assertion::Not(a) | Assertion::Exists(_, a) => 1 + a.depth(),
            _ => 1,
        }
    }

    pub fn for_each_expr(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Assertion::Emp => {}
            Assertion::Star(a, b) | Assertion::And(a, b) | Assertion::Or(a, b) | Assertion::Imp(a, b) => {
                a.for_each_expr(f);
                b.for_each_expr(f);
            }
            Assertion::Not(a) | Assertion::Exists(_, a) => a.for_each_expr(f),
            Assertion::Prop(e) | Assertion::Eval(e, _) | Assertion::Expr(e) | Assertion::Defined(e) => f(e),
            Assertion::MapsTo(a, _, v) => {
                f(a);
                f(v);
            }
        }
    }

    pub fn for_each_literal(&self, f: &mut impl FnMut(Value)) {
        self.for_each_expr(&mut |e| e.for_each_literal(f));
        self.for_each_term(&mut |t| {
            if let ValueTerm::Lit(v) = t {
                f(*v)
            }
        });
    }

    fn for_each_term(&self, f: &mut impl FnMut(&ValueTerm)) {
        match self {
            Assertion::Star(a, b) | Assertion::And(a, b) | Assertion::Or(a, b) | Assertion::Imp(a, b) => {
                a.for_each_term(f);
                b.for_each_term(f);
            }
            Assertion::Not(a) | Assertion::Exists(_, a) => a.for_each_term(f),
            Assertion::Eval(_, t) => f(t),
            _ => {}
        }
    }

    /// Every embedded expression is load-free.
    pub fn is_pure(&self) -> bool {
        let mut ok = true;
        self.for_each_expr(&mut |e| ok &= e.is_pure());
        ok
    }

    /// Variables occurring in embedded expressions, minus those bound by an
    /// enclosing `exists`.
    pub fn free_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Ident>, out: &mut BTreeSet<Ident>) {
        let mut add = |e: &Expr, bound: &Vec<Ident>| {
            e.for_each_var(&mut |x| {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            })
        };
        match self {
            Assertion::Emp => {}
            Assertion::Star(a, b) | Assertion::And(a, b) | Assertion::Or(a, b) | Assertion::Imp(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Assertion::Not(a) => a.collect_free(bound, out),
            Assertion::Exists(x, a) => {
                bound.push(x.clone());
                a.collect_free(bound, out);
                bound.pop();
            }
            Assertion::Prop(e) | Assertion::Eval(e, _) | Assertion::Expr(e) | Assertion::Defined(e) => add(e, bound),
            Assertion::MapsTo(a, _, v) => {
                add(a, bound);
                add(v, bound);
            }
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_assertion(self))
    }
}

pub fn assertion_free_vars(a: &Assertion) -> BTreeSet<Ident> {
    a.free_vars()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", content = "reason", rename_all = "lowercase")]
pub enum CheckResult {
    Holds,
    Fails(Cow<'static, str>),
    Unknown(Cow<'static, str>),
}

impl CheckResult {
    pub fn is_holds(&self) -> bool {
        matches!(self, CheckResult::Holds)
    }

    pub fn is_fails(&self) -> bool {
        matches!(self, CheckResult::Fails(_))
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, CheckResult::Unknown(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            CheckResult::Holds => "holds",
            CheckResult::Fails(_) => "fails",
            CheckResult::Unknown(_) => "unknown",
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            CheckResult::Holds => None,
            CheckResult::Fails(r) | CheckResult::Unknown(r) => Some(r),
        }
    }

    fn from_bool(b: bool, why: &'static str) -> CheckResult {
        if b {
            CheckResult::Holds
        } else {
            CheckResult::Fails(Cow::Borrowed(why))
        }
    }

    pub fn and(self, other: impl FnOnce() -> CheckResult) -> CheckResult {
        match self {
            CheckResult::Fails(_) => self,
            CheckResult::Holds => other(),
            CheckResult::Unknown(_) => match other() {
                f @ CheckResult::Fails(_) => f,
                _ => self,
            },
        }
    }

    pub fn or(self, other: impl FnOnce() -> CheckResult) -> CheckResult {
        match self {
            CheckResult::Holds => self,
            CheckResult::Fails(_) => other(),
            CheckResult::Unknown(_) => match other() {
                CheckResult::Holds => CheckResult::Holds,
                _ => self,
            },
        }
    }

    pub fn negate(self) -> CheckResult {
        match self {
            CheckResult::Holds => CheckResult::Fails(Cow::Borrowed("negated assertion holds")),
            CheckResult::Fails(_) => CheckResult::Holds,
            u => u,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reason() {
            None => f.write_str(self.label()),
            Some(r) => write!(f, "{} ({r})", self.label()),
        }
    }
}

/// The parts of a state an assertion is checked against. The footprint
/// varies as separating conjunctions split it; the rest is fixed.
pub struct Checker<'a> {
    prog: &'a Program,
    sp: Option<BlockId>,
    env: &'a Env,
    mem: &'a crate::memory::Memory,
    candidates: Vec<Value>,
}

impl<'a> Checker<'a> {
    pub fn new(prog: &'a Program, st: &'a crate::eval::State, a: &Assertion, logic: &Env) -> Self {
        let candidates = witness_candidates(prog, st, a, logic);
        Checker { prog, sp: st.sp, env: &st.env, mem: &st.mem, candidates }
    }

    pub fn eval(&self, e: &Expr, logic: &Env) -> Result<Value, EvalError> {
        let vars = Layered { locals: self.env, logic };
        Evaluator { prog: self.prog, sp: self.sp, vars: &vars, fp: None, mem: self.mem }.eval(e)
    }

    pub fn check(&self, fp: &Footprint, a: &Assertion, logic: &mut Env) -> CheckResult {
        match a {
            Assertion::Emp => CheckResult::from_bool(fp.is_empty(), "footprint not empty"),
            Assertion::And(p, q) => self.check(fp, p, logic).and(|| self.check(fp, q, logic)),
            Assertion::Or(p, q) => self.check(fp, p, logic).or(|| self.check(fp, q, logic)),
            Assertion::Imp(p, q) => self.check(fp, p, logic).negate().or(|| self.check(fp, q, logic)),
            Assertion::Not(p) => self.check(fp, p, logic).negate(),
            Assertion::Prop(e) => match self.eval(e, logic) {
                Ok(v) => CheckResult::from_bool(v.is_true(), "proposition false"),
                Err(_) => CheckResult::Fails(Cow::Borrowed("proposition does not evaluate")),
            },
            Assertion::Eval(e, t) => {
                if !fp.is_empty() {
                    return CheckResult::Fails(Cow::Borrowed("footprint not empty"));
                }
                let want = match t {
                    ValueTerm::Lit(v) => *v,
                    ValueTerm::Logic(x) => match logic.get(x) {
                        Some(v) => *v,
                        None => return CheckResult::Fails(Cow::Borrowed("unbound logic variable")),
                    },
                };
                match self.eval(e, logic) {
                    Ok(v) => CheckResult::from_bool(v == want, "expression has a different value"),
                    Err(_) => CheckResult::Fails(Cow::Borrowed("expression does not evaluate")),
                }
            }
            Assertion::Expr(e) => {
                if !fp.is_empty() {
                    return CheckResult::Fails(Cow::Borrowed("footprint not empty"));
                }
                match self.eval(e, logic) {
                    Ok(v) => CheckResult::from_bool(v.is_true(), "expression not true"),
                    Err(_) => CheckResult::Fails(Cow::Borrowed("expression does not evaluate")),
                }
            }
            Assertion::Defined(e) => {
                if !fp.is_empty() {
                    return CheckResult::Fails(Cow::Borrowed("footprint not empty"));
                }
                match self.eval(e, logic) {
                    Ok(v) => CheckResult::from_bool(is_self_equal(self.prog, v), "expression not defined"),
                    Err(_) => CheckResult::Fails(Cow::Borrowed("expression does not evaluate")),
                }
            }
            Assertion::MapsTo(ea, ch, ev) => self.maps_to(fp, ea, *ch, ev, logic),
            Assertion::Star(p, q) => self.star(fp, p, q, logic),
            Assertion::Exists(x, p) => {
                let saved = logic.get(x).copied();
                let mut found = false;
                for c in &self.candidates {
                    logic.insert(x.clone(), *c);
                    if self.check(fp, p, logic).is_holds() {
                        found = true;
                        break;
                    }
                }
                match saved {
                    Some(v) => logic.insert(x.clone(), v),
                    None => logic.remove(x),
                };
                if found {
                    CheckResult::Holds
                } else {
                    CheckResult::Unknown(Cow::Owned(format!("no witness found for {x}")))
                }
            }
        }
    }

    fn maps_to(&self, fp: &Footprint, ea: &Expr, ch: Chunk, ev: &Expr, logic: &Env) -> CheckResult {
        let (Ok(addr), Ok(v)) = (self.eval(ea, logic), self.eval(ev, logic)) else {
            return CheckResult::Fails(Cow::Borrowed("maps-to operand does not evaluate"));
        };
        if !v.is_defined() {
            return CheckResult::Fails(Cow::Borrowed("maps-to value undefined"));
        }
        match cell_footprint(addr, ch) {
            Some(cell) if cell == *fp => {}
            _ => return CheckResult::Fails(Cow::Borrowed("footprint is not exactly the cell")),
        }
        match self.mem.load(ch, addr) {
            Ok(stored) => CheckResult::from_bool(stored == v, "cell holds a different value"),
            Err(_) => CheckResult::Fails(Cow::Borrowed("cell not loadable")),
        }
    }

    fn star(&self, fp: &Footprint, p: &Assertion, q: &Assertion, logic: &mut Env) -> CheckResult {
        let split_with = |exact: &Footprint, logic: &mut Env, det_left: bool| -> CheckResult {
            let Some(rest) = remainder(fp, exact) else {
                return CheckResult::Fails(Cow::Borrowed("no split gives the required cells"));
            };
            if det_left {
                self.check(exact, p, logic).and(|| self.check(&rest, q, logic))
            } else {
                self.check(&rest, p, logic).and(|| self.check(exact, q, logic))
            }
        };
        match determined_footprint(self, p, logic) {
            Determined::Exact(f) => return split_with(&f, logic, true),
            Determined::Unsat => return CheckResult::Fails(Cow::Borrowed("left conjunct unsatisfiable")),
            Determined::Undetermined => {}
        }
        match determined_footprint(self, q, logic) {
            Determined::Exact(f) => return split_with(&f, logic, false),
            Determined::Unsat => return CheckResult::Fails(Cow::Borrowed("right conjunct unsatisfiable")),
            Determined::Undetermined => {}
        }
        let entries: Vec<_> = fp.iter().collect();
        if entries.len() > SPLIT_BOUND {
            return CheckResult::Unknown(Cow::Owned(format!(
                "{} addresses exceed the split bound {SPLIT_BOUND}",
                entries.len()
            )));
        }
        let mut acc = CheckResult::Fails(Cow::Borrowed("no split satisfies both sides"));
        for mask in 0u32..(1u32 << entries.len()) {
            let (l, r) = split_by_mask(&entries, mask);
            let here = self.check(&l, p, logic).and(|| self.check(&r, q, logic));
            acc = acc.or(|| here);
            if acc.is_holds() {
                break;
            }
        }
        acc
    }
}

/// The whole-share split of `entries` that sends bit `i` of `mask` left.
pub fn split_by_mask(entries: &[((BlockId, i64), crate::footprint::Share)], mask: u32) -> (Footprint, Footprint) {
    let l = entries.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, e)| *e);
    let r = entries.iter().enumerate().filter(|(i, _)| mask & (1 << i) == 0).map(|(_, e)| *e);
    (Footprint::from_entries(l), Footprint::from_entries(r))
}

fn is_self_equal(prog: &Program, v: Value) -> bool {
    let eq = |op: Op| crate::eval::eval_operation(prog, None, &op, &[v, v]).is_some_and(|r| r.is_true());
    eq(Op::Cmp(Comparison::Eq)) || eq(Op::Cmpf(Comparison::Eq))
}

fn cell_footprint(addr: Value, ch: Chunk) -> Option<Footprint> {
    let Value::Ptr(b, o) = addr else {
        return None;
    };
    Footprint::new().grant(b, o.signed() as i64, o.signed() as i64 + ch.size() as i64, crate::footprint::Share::FULL)
}

/// `fp` minus `part`, provided `part` is a whole-share sub-map of `fp`.
fn remainder(fp: &Footprint, part: &Footprint) -> Option<Footprint> {
    if part.iter().any(|(a, s)| fp.share(a) != s) {
        return None;
    }
    Some(fp.restrict(|a| part.share(*a).is_zero()))
}

enum Determined {
    /// Any footprint on which the assertion does not fail equals this one.
    Exact(Footprint),
    /// Fails on every footprint.
    Unsat,
    Undetermined,
}

fn determined_footprint(ck: &Checker<'_>, a: &Assertion, logic: &Env) -> Determined {
    match a {
        Assertion::Emp | Assertion::Eval(..) | Assertion::Expr(_) | Assertion::Defined(_) => {
            Determined::Exact(Footprint::new())
        }
        Assertion::MapsTo(ea, ch, _) => match ck.eval(ea, logic).ok().and_then(|v| cell_footprint(v, *ch)) {
            Some(f) => Determined::Exact(f),
            None => Determined::Unsat,
        },
        Assertion::Star(p, q) => match (determined_footprint(ck, p, logic), determined_footprint(ck, q, logic)) {
            (Determined::Unsat, _) | (_, Determined::Unsat) => Determined::Unsat,
            (Determined::Exact(f), Determined::Exact(g)) => match disjoint_union(&f, &g) {
                Some(u) => Determined::Exact(u),
                None => Determined::Unsat,
            },
            _ => Determined::Undetermined,
        },
        Assertion::And(p, q) => match (determined_footprint(ck, p, logic), determined_footprint(ck, q, logic)) {
            (Determined::Unsat, _) | (_, Determined::Unsat) => Determined::Unsat,
            (Determined::Exact(f), Determined::Exact(g)) if f != g => Determined::Unsat,
            (Determined::Exact(f), _) | (_, Determined::Exact(f)) => Determined::Exact(f),
            _ => Determined::Undetermined,
        },
        _ => Determined::Undetermined,
    }
}

/// Union of two footprints with no common address. Whole-share splits
/// never divide an address, so overlapping parts cannot both be carved out.
fn disjoint_union(f: &Footprint, g: &Footprint) -> Option<Footprint> {
    if f.iter().any(|(a, _)| !g.share(a).is_zero()) {
        return None;
    }
    f.join(g)
}

/// Candidate witnesses for existentials: the local environment's values,
/// aligned 32-bit and 64-bit loads inside the footprint, literals of the
/// program and assertion, the logic environment's values, and
/// `undef`, `0`, `1`.
pub fn witness_candidates(prog: &Program, st: &crate::eval::State, a: &Assertion, logic: &Env) -> Vec<Value> {
    let mut set: BTreeSet<LiteralKey> = BTreeSet::new();
    for v in [Value::Undef, Value::Int(Int32::ZERO), Value::Int(Int32::ONE)] {
        set.insert(LiteralKey(v));
    }
    set.extend(st.env.values().chain(logic.values()).map(|v| LiteralKey(*v)));
    for ((b, k), _) in st.fp.iter() {
        for ch in [Chunk::Int32, Chunk::Float64] {
            if k.rem_euclid(ch.size() as i64) == 0 {
                if let Ok(v) = st.mem.load(ch, Value::Ptr(b, Int32::from_signed(k as i32))) {
                    set.insert(LiteralKey(v));
                }
            }
        }
    }
    set.extend(prog.literals());
    a.for_each_literal(&mut |v| {
        set.insert(LiteralKey(v));
    });
    set.into_iter().map(|k| k.0).collect()
}

/// Check `a` on the whole state with the given logic-variable bindings.
pub fn satisfies(prog: &Program, st: &crate::eval::State, a: &Assertion, logic: &Env) -> CheckResult {
    let checker = Checker::new(prog, st, a, logic);
    let mut logic = logic.clone();
    checker.check(&st.fp, a, &mut logic)
}
