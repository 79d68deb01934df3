//! Expression evaluation against a state, with and without footprint
//! checks, and the operator semantics.

use std::collections::BTreeMap;
use std::fmt;

use crate::footprint::{Access, Footprint};
use crate::memory::{AccessError, Memory};
use crate::syntax::{Comparison, Expr, Ident, Op, Program};
use crate::values::{BlockId, Chunk, Int32, Value};

pub type Env = BTreeMap<Ident, Value>;

/// Stack block, local environment, footprint and memory.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct State {
    pub sp: Option<BlockId>,
    pub env: Env,
    pub fp: Footprint,
    pub mem: Memory,
}

impl State {
    pub fn new(mem: Memory) -> Self {
        State { sp: None, env: Env::new(), fp: Footprint::new(), mem }
    }

    /// Same stack pointer and the same bindings, regardless of how the
    /// environment is represented.
    pub fn equivalent(&self, other: &State) -> bool {
        self.sp == other.sp && self.env == other.env && self.fp == other.fp && self.mem == other.mem
    }
}

/// Why an expression failed to evaluate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalError {
    Unbound(Ident),
    Operator { op: String, reason: &'static str },
    LoadPermission { chunk: Chunk, addr: Value },
    BadAddress { chunk: Chunk, addr: Value, cause: AccessError },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Unbound(x) => write!(f, "unbound variable {x}"),
            EvalError::Operator { op, reason } => write!(f, "operator {op} stuck: {reason}"),
            EvalError::LoadPermission { chunk, addr } => {
                write!(f, "load permission required for {chunk} at {addr}")
            }
            EvalError::BadAddress { chunk, addr, cause } => write!(f, "bad address {addr} for {chunk}: {cause}"),
        }
    }
}

/// Variable lookup used during evaluation. Assertions layer logic
/// variables over the local environment.
pub trait Lookup {
    fn lookup(&self, x: &str) -> Option<Value>;
}

impl Lookup for Env {
    fn lookup(&self, x: &str) -> Option<Value> {
        self.get(x).copied()
    }
}

/// Program environment first, then logic variables.
pub struct Layered<'a> {
    pub locals: &'a Env,
    pub logic: &'a Env,
}

impl Lookup for Layered<'_> {
    fn lookup(&self, x: &str) -> Option<Value> {
        self.locals.get(x).or_else(|| self.logic.get(x)).copied()
    }
}

/// Evaluation context. `fp == None` selects erased evaluation.
pub struct Evaluator<'a> {
    pub prog: &'a Program,
    pub sp: Option<BlockId>,
    pub vars: &'a dyn Lookup,
    pub fp: Option<&'a Footprint>,
    pub mem: &'a Memory,
}

impl Evaluator<'_> {
    pub fn eval(&self, e: &Expr) -> Result<Value, EvalError> {
        match e {
            Expr::Val(v) => Ok(*v),
            Expr::Var(x) => self.vars.lookup(x).ok_or_else(|| EvalError::Unbound(x.clone())),
            Expr::Op(op, args) => {
                let vl = self.eval_list(args)?;
                operate(self.prog, self.sp, op, &vl).map_err(|reason| EvalError::Operator { op: op_name(op), reason })
            }
            Expr::Load(ch, a) => {
                let addr = self.eval(a)?;
                if let Some(fp) = self.fp {
                    if matches!(addr, Value::Ptr(..)) && !fp.allows(addr, *ch, Access::Load) {
                        return Err(EvalError::LoadPermission { chunk: *ch, addr });
                    }
                }
                self.mem.load(*ch, addr).map_err(|cause| EvalError::BadAddress { chunk: *ch, addr, cause })
            }
        }
    }

    pub fn eval_list(&self, es: &[Expr]) -> Result<Vec<Value>, EvalError> {
        es.iter().map(|e| self.eval(e)).collect()
    }
}

pub fn eval_operation(prog: &Program, sp: Option<BlockId>, op: &Op, vl: &[Value]) -> Option<Value> {
    operate(prog, sp, op, vl).ok()
}

pub fn eval_expr(prog: &Program, st: &State, e: &Expr) -> Option<Value> {
    eval_expr_reason(prog, st, e).ok()
}

pub fn eval_expr_reason(prog: &Program, st: &State, e: &Expr) -> Result<Value, EvalError> {
    Evaluator { prog, sp: st.sp, vars: &st.env, fp: Some(&st.fp), mem: &st.mem }.eval(e)
}

pub fn eval_exprlist(prog: &Program, st: &State, es: &[Expr]) -> Option<Vec<Value>> {
    Evaluator { prog, sp: st.sp, vars: &st.env, fp: Some(&st.fp), mem: &st.mem }.eval_list(es).ok()
}

/// Evaluation that ignores the footprint.
pub fn eval_expr_erased(prog: &Program, sp: Option<BlockId>, env: &Env, mem: &Memory, e: &Expr) -> Option<Value> {
    Evaluator { prog, sp, vars: env, fp: None, mem }.eval(e).ok()
}

pub fn op_name(op: &Op) -> String {
    use Op::*;
    match op {
        IntConst(i) => format!("intconst({i})"),
        FloatConst(x) => format!("floatconst({})", crate::values::format_float(*x)),
        AddrSymbol(s) => format!("&{s}"),
        AddrStack(i) => format!("stack({i})"),
        Cmp(c) => format!("cmp_{}", c.mnemonic()),
        Cmpu(c) => format!("cmpu_{}", c.mnemonic()),
        Cmpf(c) => format!("cmpf_{}", c.mnemonic()),
        other => op_mnemonic(other).to_string(),
    }
}

/// Function-call spelling of the operators that take arguments.
pub(crate) fn op_mnemonic(op: &Op) -> &'static str {
    use Op::*;
    match op {
        Add => "add",
        Sub => "sub",
        Mul => "mul",
        Divs => "divs",
        Divu => "divu",
        Mods => "mods",
        Modu => "modu",
        And => "and",
        Or => "or",
        Xor => "xor",
        Shl => "shl",
        Shrs => "shrs",
        Shru => "shru",
        Neg => "neg",
        NotInt => "notint",
        NegF => "negf",
        AddF => "addf",
        SubF => "subf",
        MulF => "mulf",
        DivF => "divf",
        IntOfFloat => "intoffloat",
        FloatOfInt => "floatofint",
        FloatOfIntU => "floatofintu",
        Cast8s => "cast8s",
        Cast8u => "cast8u",
        Cast16s => "cast16s",
        Cast16u => "cast16u",
        IntConst(_) => "intconst",
        FloatConst(_) => "floatconst",
        AddrSymbol(_) => "addrsymbol",
        AddrStack(_) => "stack",
        Cmp(_) => "cmp",
        Cmpu(_) => "cmpu",
        Cmpf(_) => "cmpf",
    }
}

fn bool_val(b: bool) -> Value {
    Value::Int(if b { Int32::ONE } else { Int32::ZERO })
}

type OpResult = Result<Value, &'static str>;

fn operate(prog: &Program, sp: Option<BlockId>, op: &Op, vl: &[Value]) -> OpResult {
    use Op::*;
    use Value::{Float, Int, Ptr};
    if vl.len() != op.arity() {
        return Err("arity mismatch");
    }
    if vl.contains(&Value::Undef) {
        return Err("undefined operand");
    }
    let int2 = |f: fn(Int32, Int32) -> Int32| match (vl[0], vl[1]) {
        (Int(a), Int(b)) => Ok(Int(f(a, b))),
        _ => Err("integer operands required"),
    };
    let partial2 = |f: fn(Int32, Int32) -> Option<Int32>, why: &'static str| match (vl[0], vl[1]) {
        (Int(a), Int(b)) => f(a, b).map(Int).ok_or(why),
        _ => Err("integer operands required"),
    };
    let int1 = |f: fn(Int32) -> Int32| match vl[0] {
        Int(a) => Ok(Int(f(a))),
        _ => Err("integer operand required"),
    };
    let float2 = |f: fn(f64, f64) -> f64| match (vl[0], vl[1]) {
        (Float(a), Float(b)) => Ok(Float(f(a, b))),
        _ => Err("float operands required"),
    };
    match op {
        IntConst(i) => Ok(Int(*i)),
        FloatConst(x) => Ok(Float(*x)),
        AddrSymbol(s) => prog.symbol(s).map(|b| Ptr(b, Int32::ZERO)).ok_or("unknown global"),
        AddrStack(i) => sp.map(|b| Ptr(b, *i)).ok_or("no stack block"),
        Add => match (vl[0], vl[1]) {
            (Int(a), Int(b)) => Ok(Int(a.add(b))),
            (Ptr(b, o), Int(i)) | (Int(i), Ptr(b, o)) => Ok(Ptr(b, o.add(i))),
            _ => Err("bad operand kinds"),
        },
        Sub => match (vl[0], vl[1]) {
            (Int(a), Int(b)) => Ok(Int(a.sub(b))),
            (Ptr(b, o), Int(i)) => Ok(Ptr(b, o.sub(i))),
            (Ptr(b1, o1), Ptr(b2, o2)) => Ok(if b1 == b2 { Int(o1.sub(o2)) } else { Value::Undef }),
            _ => Err("bad operand kinds"),
        },
        Mul => int2(Int32::mul),
        Divs => partial2(Int32::divs, "division by zero or overflow"),
        Divu => partial2(Int32::divu, "division by zero"),
        Mods => partial2(Int32::mods, "modulo by zero or overflow"),
        Modu => partial2(Int32::modu, "modulo by zero"),
        And => int2(Int32::and),
        Or => int2(Int32::or),
        Xor => int2(Int32::xor),
        Shl => partial2(Int32::shl, "shift amount out of range"),
        Shrs => partial2(Int32::shrs, "shift amount out of range"),
        Shru => partial2(Int32::shru, "shift amount out of range"),
        Neg => int1(Int32::neg),
        NotInt => int1(Int32::not),
        Cmp(c) => compare(*c, vl[0], vl[1], false),
        Cmpu(c) => compare(*c, vl[0], vl[1], true),
        Cmpf(c) => match (vl[0], vl[1]) {
            (Float(a), Float(b)) => Ok(bool_val(c.holds(a, b))),
            _ => Err("float operands required"),
        },
        NegF => match vl[0] {
            Float(a) => Ok(Float(-a)),
            _ => Err("float operand required"),
        },
        AddF => float2(|a, b| a + b),
        SubF => float2(|a, b| a - b),
        MulF => float2(|a, b| a * b),
        DivF => float2(|a, b| a / b),
        IntOfFloat => match vl[0] {
            Float(a) => {
                let t = a.trunc();
                if t.is_nan() || t < i32::MIN as f64 || t > i32::MAX as f64 {
                    Err("float out of integer range")
                } else {
                    Ok(Value::int(t as i32))
                }
            }
            _ => Err("float operand required"),
        },
        FloatOfInt => match vl[0] {
            Int(a) => Ok(Float(a.signed() as f64)),
            _ => Err("integer operand required"),
        },
        FloatOfIntU => match vl[0] {
            Int(a) => Ok(Float(a.unsigned() as f64)),
            _ => Err("integer operand required"),
        },
        Cast8s => int1(|a| a.sign_ext(8)),
        Cast8u => int1(|a| a.zero_ext(8)),
        Cast16s => int1(|a| a.sign_ext(16)),
        Cast16u => int1(|a| a.zero_ext(16)),
    }
}

fn compare(c: Comparison, a: Value, b: Value, unsigned: bool) -> OpResult {
    use Value::{Int, Ptr};
    let ordering_ok = matches!(c, Comparison::Eq | Comparison::Ne);
    match (a, b) {
        (Int(x), Int(y)) => Ok(bool_val(if unsigned {
            c.holds(x.unsigned(), y.unsigned())
        } else {
            c.holds(x.signed(), y.signed())
        })),
        (Ptr(b1, o1), Ptr(b2, o2)) if b1 == b2 => Ok(bool_val(if unsigned {
            c.holds(o1.unsigned(), o2.unsigned())
        } else {
            c.holds(o1.signed(), o2.signed())
        })),
        (Ptr(..), Ptr(..)) if ordering_ok => Ok(bool_val(c == Comparison::Ne)),
        (Ptr(..), Ptr(..)) => Err("ordering pointers of different blocks"),
        (Int(i), Ptr(..)) | (Ptr(..), Int(i)) if i.is_zero() && ordering_ok => Ok(bool_val(c == Comparison::Ne)),
        (Int(i), Ptr(..)) | (Ptr(..), Int(i)) if i.is_zero() => Err("ordering a pointer against null"),
        (Int(_), Ptr(..)) | (Ptr(..), Int(_)) => Err("comparing a nonzero integer to a pointer"),
        _ => Err("integer or pointer operands required"),
    }
}
