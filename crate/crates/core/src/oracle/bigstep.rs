//! Big-step statement semantics, written as plain structural recursion
//! with no control stack. Used as an independent reference for the
//! small-step machine on terminating programs.

use crate::eval::{Env, EvalError, Evaluator, State};
use crate::footprint::{Access, Share};
use crate::smallstep::{initial_continuation, result_slot, Control, RunError, Semantics};
use crate::syntax::{Expr, FunDef, Ident, Program, Signature, Stmt};
use crate::values::Value;

/// Nested calls beyond this depth are reported as running out of fuel.
pub const MAX_CALL_DEPTH: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub enum BigOutcome {
    Normal(State),
    ExitOut(u32, State),
    ReturnOut(Vec<Value>, State),
    OutOfFuel,
    BigStuck(String),
}

impl BigOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            BigOutcome::Normal(_) => "normal",
            BigOutcome::ExitOut(..) => "exit",
            BigOutcome::ReturnOut(..) => "return",
            BigOutcome::OutOfFuel => "out-of-fuel",
            BigOutcome::BigStuck(_) => "stuck",
        }
    }
}

struct Interp<'p> {
    prog: &'p Program,
    erased: bool,
    fuel: u64,
    depth: usize,
}

fn stuck(what: &str, e: EvalError) -> BigOutcome {
    BigOutcome::BigStuck(format!("{what}: {e}"))
}

impl Interp<'_> {
    fn eval(&self, st: &State, e: &Expr) -> Result<Value, EvalError> {
        let fp = if self.erased { None } else { Some(&st.fp) };
        Evaluator { prog: self.prog, sp: st.sp, vars: &st.env, fp, mem: &st.mem }.eval(e)
    }

    fn exec(&mut self, st: State, s: &Stmt) -> BigOutcome {
        if self.fuel == 0 {
            return BigOutcome::OutOfFuel;
        }
        self.fuel -= 1;
        match s {
            Stmt::Annot(_, inner) => self.exec(st, inner),
            Stmt::Skip => BigOutcome::Normal(st),
            Stmt::Assign(x, e) => match self.eval(&st, e) {
                Ok(v) => {
                    let mut st = st;
                    st.env.insert(x.clone(), v);
                    BigOutcome::Normal(st)
                }
                Err(e) => stuck("assignment", e),
            },
            Stmt::Store(ch, ea, ev) => {
                let addr = match self.eval(&st, ea) {
                    Ok(a) => a,
                    Err(e) => return stuck("store address", e),
                };
                let v = match self.eval(&st, ev) {
                    Ok(v) => v,
                    Err(e) => return stuck("stored value", e),
                };
                if !self.erased && !st.fp.allows(addr, *ch, Access::Store) {
                    return BigOutcome::BigStuck(format!("no store permission at {addr}"));
                }
                let mut st = st;
                match st.mem.store(*ch, addr, v) {
                    Ok(()) => BigOutcome::Normal(st),
                    Err(e) => BigOutcome::BigStuck(format!("store at {addr}: {e}")),
                }
            }
            Stmt::Seq(a, b) => match self.exec(st, a) {
                BigOutcome::Normal(st) => self.exec(st, b),
                other => other,
            },
            Stmt::If(c, a, b) => match self.eval(&st, c) {
                Ok(v) if v.is_true() => self.exec(st, a),
                Ok(v) if v.is_false() => self.exec(st, b),
                Ok(v) => BigOutcome::BigStuck(format!("undefined branch condition {v}")),
                Err(e) => stuck("branch condition", e),
            },
            Stmt::Loop(body) => {
                let mut st = st;
                loop {
                    match self.exec(st, body) {
                        BigOutcome::Normal(next) => {
                            if self.fuel == 0 {
                                return BigOutcome::OutOfFuel;
                            }
                            self.fuel -= 1;
                            st = next;
                        }
                        other => return other,
                    }
                }
            }
            Stmt::Block(body) => match self.exec(st, body) {
                BigOutcome::ExitOut(0, st) => BigOutcome::Normal(st),
                BigOutcome::ExitOut(n, st) => BigOutcome::ExitOut(n - 1, st),
                BigOutcome::Normal(_) => BigOutcome::BigStuck("block body completed without exit".into()),
                other => other,
            },
            Stmt::Exit(n) => BigOutcome::ExitOut(*n, st),
            Stmt::Return(es) => {
                let mut vl = Vec::with_capacity(es.len());
                for e in es {
                    match self.eval(&st, e) {
                        Ok(v) => vl.push(v),
                        Err(e) => return stuck("return value", e),
                    }
                }
                BigOutcome::ReturnOut(vl, st)
            }
            Stmt::Call(dests, sig, callee, args) => self.call(st, dests, sig, callee, args),
        }
    }

    fn call(&mut self, st: State, dests: &[Ident], sig: &Signature, callee: &Expr, args: &[Expr]) -> BigOutcome {
        let target = match self.eval(&st, callee) {
            Ok(v) => v,
            Err(e) => return stuck("call target", e),
        };
        let mut vl = Vec::with_capacity(args.len());
        for a in args {
            match self.eval(&st, a) {
                Ok(v) => vl.push(v),
                Err(e) => return stuck("call argument", e),
            }
        }
        let f = match target {
            Value::Ptr(b, o) if o.is_zero() => self.prog.function_at(b).cloned(),
            _ => None,
        };
        let Some(f) = f else {
            return BigOutcome::BigStuck(format!("call target {target} is not a function"));
        };
        if vl.len() != f.params.len() || sig.args != args.len() || dests.len() != sig.results || f.results != sig.results {
            return BigOutcome::BigStuck(format!("arity mismatch calling {}", f.name));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return BigOutcome::OutOfFuel;
        }
        let mut callee_st = State { sp: None, env: Env::new(), fp: st.fp.clone(), mem: st.mem.clone() };
        let b = match callee_st.mem.alloc(0, f.stackspace as i64) {
            Ok(b) => b,
            Err(e) => return BigOutcome::BigStuck(e.to_string()),
        };
        if !self.erased {
            match callee_st.fp.grant(b, 0, f.stackspace as i64, Share::FULL) {
                Some(fp) => callee_st.fp = fp,
                None => return BigOutcome::BigStuck("fresh stack block already owned".into()),
            }
        }
        callee_st.sp = Some(b);
        callee_st.env = bind_params(&f, &vl);
        self.depth += 1;
        let done = self.run_body(&f, callee_st);
        self.depth -= 1;
        match done {
            Ok((results, callee_st)) => {
                if results.len() != dests.len() {
                    return BigOutcome::BigStuck("arity mismatch on return".into());
                }
                let mut st = State { sp: st.sp, env: st.env, fp: callee_st.fp, mem: callee_st.mem };
                for (x, v) in dests.iter().zip(results) {
                    st.env.insert(x.clone(), v);
                }
                BigOutcome::Normal(st)
            }
            Err(other) => other,
        }
    }

    /// Run a function body and release its stack block. On success returns
    /// the results and the callee's final state with the block freed.
    fn run_body(&mut self, f: &FunDef, st: State) -> Result<(Vec<Value>, State), BigOutcome> {
        let (vl, mut st) = match self.exec(st, &f.body) {
            BigOutcome::ReturnOut(vl, st) => (vl, st),
            BigOutcome::Normal(st) if f.results == 0 => (Vec::new(), st),
            BigOutcome::Normal(_) => {
                return Err(BigOutcome::BigStuck(format!("function {} ended without returning {} values", f.name, f.results)))
            }
            BigOutcome::ExitOut(..) => return Err(BigOutcome::BigStuck("exit past outermost block".into())),
            other => return Err(other),
        };
        if vl.len() != f.results {
            return Err(BigOutcome::BigStuck("arity mismatch on return".into()));
        }
        if let Some(b) = st.sp {
            let (lo, hi) = match st.mem.block(b) {
                Some(blk) if blk.is_live() => (blk.lo(), blk.hi()),
                _ => return Err(BigOutcome::BigStuck(format!("stack block {b} is not live"))),
            };
            if !self.erased {
                st.fp = st.fp.revoke(b, lo, hi).map_err(|e| BigOutcome::BigStuck(e.to_string()))?;
            }
            st.mem.free(b).map_err(|e| BigOutcome::BigStuck(e.to_string()))?;
        }
        Ok((vl, st))
    }
}

fn bind_params(f: &FunDef, vl: &[Value]) -> Env {
    let mut env = Env::new();
    for (p, v) in f.params.iter().zip(vl) {
        env.insert(p.clone(), *v);
    }
    for l in &f.locals {
        env.insert(l.clone(), Value::Undef);
    }
    env
}

/// Execute `s` from `st`. `fuel` bounds the number of rule applications.
pub fn bigstep_exec(prog: &Program, st: &State, s: &Stmt, fuel: u64) -> BigOutcome {
    Interp { prog, erased: false, fuel, depth: 0 }.exec(st.clone(), s)
}

/// Top-level result of running a function to completion.
#[derive(Clone, Debug, PartialEq)]
pub enum BigCall {
    Finished { results: Vec<Value>, state: State, entry_env: Env },
    Stuck(String),
    OutOfFuel,
}

impl BigCall {
    pub fn kind(&self) -> &'static str {
        match self {
            BigCall::Finished { .. } => "finished",
            BigCall::Stuck(_) => "stuck",
            BigCall::OutOfFuel => "out-of-fuel",
        }
    }
}

/// Call `entry` on `args` from the same initial state the small-step
/// runner uses and report what the caller would observe.
pub fn bigstep_call(prog: &Program, entry: &str, args: &[Value], fuel: u64, erased: bool) -> Result<BigCall, RunError> {
    let sem = if erased { Semantics::ERASED } else { Semantics::FOOTPRINT };
    let k = initial_continuation(prog, entry, args, sem)?;
    let f = prog.function(entry).cloned().ok_or_else(|| RunError::UnknownEntry(entry.to_string()))?;
    debug_assert!(matches!(&*k.control, Control::Seq(..)));
    let mut it = Interp { prog, erased, fuel, depth: 0 };
    Ok(match it.run_body(&f, k.state) {
        Ok((results, st)) => {
            let mut env = Env::new();
            for (i, v) in results.iter().enumerate() {
                env.insert(result_slot(i), *v);
            }
            let entry_env = st.env;
            BigCall::Finished { results, state: State { sp: None, env, fp: st.fp, mem: st.mem }, entry_env }
        }
        Err(BigOutcome::OutOfFuel) => BigCall::OutOfFuel,
        Err(BigOutcome::BigStuck(r)) => BigCall::Stuck(r),
        Err(other) => BigCall::Stuck(format!("unexpected {} outcome", other.kind())),
    })
}
