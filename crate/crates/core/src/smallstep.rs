//! Continuation-based small-step semantics for statements, with function
//! call and return, a fuel-bounded runner, and absorption measurement.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::eval::{Env, EvalError, Evaluator, State};
use crate::footprint::{Access, Footprint, Share};
use crate::syntax::{ident, print_stmt, Ident, Program, Stmt};
use crate::values::{BlockId, Int32, Value};

/// The control stack: pending statements, entered blocks and activation
/// records. `Opaque` is a placeholder tail that no rule may look into.
#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    Stop,
    Seq(Arc<Stmt>, Kont),
    Block(Kont),
    Call(Arc<CallFrame>, Kont),
    Opaque(u32),
}

pub type Kont = Arc<Control>;

/// Activation record pushed by a call: where results go, the called
/// function, and the caller's stack block and environment to restore.
#[derive(Clone, Debug, PartialEq)]
pub struct CallFrame {
    pub dests: Vec<Ident>,
    pub func: Ident,
    pub sp: Option<BlockId>,
    pub env: Env,
}

impl Control {
    pub fn stop() -> Kont {
        Arc::new(Control::Stop)
    }

    pub fn seq(s: impl Into<Arc<Stmt>>, k: Kont) -> Kont {
        Arc::new(Control::Seq(s.into(), k))
    }

    pub fn block(k: Kont) -> Kont {
        Arc::new(Control::Block(k))
    }

    pub fn call(frame: CallFrame, k: Kont) -> Kont {
        Arc::new(Control::Call(Arc::new(frame), k))
    }

    pub fn tail(&self) -> Option<&Kont> {
        match self {
            Control::Seq(_, k) | Control::Block(k) | Control::Call(_, k) => Some(k),
            Control::Stop | Control::Opaque(_) => None,
        }
    }

    /// Number of frames above the bottom.
    pub fn height(&self) -> usize {
        let mut n = 0;
        let mut cur = self;
        while let Some(k) = cur.tail() {
            n += 1;
            cur = k;
        }
        n
    }

    pub fn head_summary(&self) -> String {
        match self {
            Control::Stop => "Kstop".into(),
            Control::Block(_) => "Kblock".into(),
            Control::Call(f, _) => format!("Kcall {}", f.func),
            Control::Opaque(i) => format!("Opaque {i}"),
            Control::Seq(s, _) => {
                let text = print_stmt(s);
                let first = text.lines().next().unwrap_or("").trim();
                let mut out: String = first.chars().take(48).collect();
                if first.chars().count() > 48 || text.lines().nth(1).is_some() {
                    out.push_str(" ...");
                }
                out
            }
        }
    }
}

/// Concatenate a control prefix (ending in `Stop`) onto `k`.
pub fn cat(prefix: &Kont, k: &Kont) -> Kont {
    match &**prefix {
        Control::Stop => k.clone(),
        Control::Opaque(_) => prefix.clone(),
        Control::Seq(s, rest) => Arc::new(Control::Seq(s.clone(), cat(rest, k))),
        Control::Block(rest) => Arc::new(Control::Block(cat(rest, k))),
        Control::Call(f, rest) => Arc::new(Control::Call(f.clone(), cat(rest, k))),
    }
}

/// If `k` ends in `tail`, the prefix in front of it.
pub fn strip_tail(k: &Kont, tail: &Kont) -> Option<Kont> {
    if k == tail {
        return Some(Control::stop());
    }
    match &**k {
        Control::Stop | Control::Opaque(_) => None,
        Control::Seq(s, rest) => strip_tail(rest, tail).map(|p| Control::seq(s.clone(), p)),
        Control::Block(rest) => strip_tail(rest, tail).map(Control::block),
        Control::Call(f, rest) => strip_tail(rest, tail).map(|p| Arc::new(Control::Call(f.clone(), p))),
    }
}

/// `s; s; ...; loop { skip }` with `n` copies of `s`.
pub fn unfold_loop(s: &Stmt, n: usize) -> Stmt {
    let mut acc = Stmt::loop_(Stmt::Skip);
    for _ in 0..n {
        acc = Stmt::seq(s.clone(), acc);
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct Continuation {
    pub state: State,
    pub control: Kont,
}

impl Continuation {
    pub fn new(state: State, control: Kont) -> Self {
        Continuation { state, control }
    }
}

/// Deliberate semantic faults, used to confirm the differential tests can
/// see a broken rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    /// `exit n+1` counts down without leaving the innermost block.
    ExitKeepsBlock,
    /// A loop runs its body once and then falls through.
    LoopRunsOnce,
    /// Store permission is checked one chunk past the written address.
    StorePermissionOffByOneChunk,
    /// Return leaves the caller's destination variables unassigned.
    ReturnDropsResults,
    /// Entering a block does not push the block marker.
    BlockNotPushed,
    /// Calls do not grant permission on the new stack block.
    SkipStackGrant,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::ExitKeepsBlock,
        Mutation::LoopRunsOnce,
        Mutation::StorePermissionOffByOneChunk,
        Mutation::ReturnDropsResults,
        Mutation::BlockNotPushed,
        Mutation::SkipStackGrant,
    ];
}

/// Which semantics to run: with footprints or erased, optionally mutated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Semantics {
    pub erased: bool,
    pub mutation: Option<Mutation>,
}

impl Semantics {
    pub const FOOTPRINT: Semantics = Semantics { erased: false, mutation: None };
    pub const ERASED: Semantics = Semantics { erased: true, mutation: None };

    pub fn mutated(m: Mutation) -> Semantics {
        Semantics { erased: false, mutation: Some(m) }
    }

    fn has(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Seq,
    Assign,
    Store,
    IfTrue,
    IfFalse,
    Skip,
    Loop,
    Block,
    ExitZero,
    ExitSucc,
    Call,
    Return,
    /// The body ran off its end into the activation record.
    Fallthrough,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Seq => "seq",
            Rule::Assign => "assign",
            Rule::Store => "store",
            Rule::IfTrue => "if_true",
            Rule::IfFalse => "if_false",
            Rule::Skip => "skip",
            Rule::Loop => "loop",
            Rule::Block => "block",
            Rule::ExitZero => "exit_0",
            Rule::ExitSucc => "exit_succ",
            Rule::Call => "call",
            Rule::Return => "return",
            Rule::Fallthrough => "fallthrough",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a successful step did, beyond the new continuation.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub rule: Rule,
    pub mem_event: Option<String>,
    /// Environment of the activation that just returned.
    pub returned_env: Option<Env>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("control is empty")]
    Halted,
    #[error("step needs to inspect the opaque control tail")]
    OpaqueTail,
    #[error("{0}")]
    Stuck(String),
}

fn stuck<T>(reason: impl Into<String>) -> Result<T, StepError> {
    Err(StepError::Stuck(reason.into()))
}

fn eval_err(what: &str, e: EvalError) -> StepError {
    StepError::Stuck(format!("{what}: {e}"))
}

pub struct Machine<'p> {
    pub prog: &'p Program,
    pub sem: Semantics,
}

enum Walk<T> {
    Found(T),
    Hit,
    Opaque,
}

impl<'p> Machine<'p> {
    pub fn new(prog: &'p Program, sem: Semantics) -> Self {
        Machine { prog, sem }
    }

    fn evaluator<'a>(&'a self, st: &'a State) -> Evaluator<'a> {
        Evaluator {
            prog: self.prog,
            sp: st.sp,
            vars: &st.env,
            fp: if self.sem.erased { None } else { Some(&st.fp) },
            mem: &st.mem,
        }
    }

    /// Take one step in place. On error `k` is unchanged.
    pub fn step(&self, k: &mut Continuation) -> Result<StepInfo, StepError> {
        let control = k.control.clone();
        let info = |rule| StepInfo { rule, mem_event: None, returned_env: None };
        match &*control {
            Control::Stop => Err(StepError::Halted),
            Control::Opaque(_) => Err(StepError::OpaqueTail),
            Control::Block(_) => stuck("block body completed without exit"),
            Control::Call(frame, rest) => {
                if !frame.dests.is_empty() {
                    return stuck(format!("function {} ended without returning {} values", frame.func, frame.dests.len()));
                }
                self.finish_return(k, frame, rest.clone(), Vec::new(), Rule::Fallthrough)
            }
            Control::Seq(s, rest) => {
                let rest = rest.clone();
                match s.peel() {
                    Stmt::Seq(a, b) => {
                        k.control = Control::seq(a.clone(), Control::seq(b.clone(), rest));
                        Ok(info(Rule::Seq))
                    }
                    Stmt::Skip => {
                        k.control = rest;
                        Ok(info(Rule::Skip))
                    }
                    Stmt::Assign(x, e) => {
                        let v = self.evaluator(&k.state).eval(e).map_err(|e| eval_err("assignment", e))?;
                        k.state.env.insert(x.clone(), v);
                        k.control = rest;
                        Ok(info(Rule::Assign))
                    }
                    Stmt::Store(ch, ea, ev) => {
                        let ev_ = self.evaluator(&k.state);
                        let addr = ev_.eval(ea).map_err(|e| eval_err("store address", e))?;
                        let v = ev_.eval(ev).map_err(|e| eval_err("stored value", e))?;
                        if !self.sem.erased {
                            let checked = if self.sem.has(Mutation::StorePermissionOffByOneChunk) {
                                match addr {
                                    Value::Ptr(b, o) => Value::Ptr(b, o.add(Int32::new(ch.size()))),
                                    other => other,
                                }
                            } else {
                                addr
                            };
                            if !k.state.fp.allows(checked, *ch, Access::Store) {
                                return stuck(format!("store permission required for {ch} at {addr}"));
                            }
                        }
                        let mut mem = k.state.mem.clone();
                        mem.store(*ch, addr, v).map_err(|e| StepError::Stuck(format!("bad store address {addr}: {e}")))?;
                        k.state.mem = mem;
                        k.control = rest;
                        let stored = ch.normalize(v);
                        Ok(StepInfo { rule: Rule::Store, mem_event: Some(format!("{addr}:{ch}={stored}")), returned_env: None })
                    }
                    Stmt::If(c, a, b) => {
                        let v = self.evaluator(&k.state).eval(c).map_err(|e| eval_err("branch condition", e))?;
                        if v.is_true() {
                            k.control = Control::seq(a.clone(), rest);
                            Ok(info(Rule::IfTrue))
                        } else if v.is_false() {
                            k.control = Control::seq(b.clone(), rest);
                            Ok(info(Rule::IfFalse))
                        } else {
                            stuck(format!("undefined branch condition {v}"))
                        }
                    }
                    Stmt::Loop(body) => {
                        k.control = if self.sem.has(Mutation::LoopRunsOnce) {
                            Control::seq(body.clone(), rest)
                        } else {
                            Control::seq(body.clone(), Control::seq(s.clone(), rest))
                        };
                        Ok(info(Rule::Loop))
                    }
                    Stmt::Block(body) => {
                        k.control = if self.sem.has(Mutation::BlockNotPushed) {
                            Control::seq(body.clone(), rest)
                        } else {
                            Control::seq(body.clone(), Control::block(rest))
                        };
                        Ok(info(Rule::Block))
                    }
                    Stmt::Exit(n) => {
                        let (outer, inner_block) = match walk_to_block(&rest) {
                            Walk::Found(k) => k,
                            Walk::Opaque => return Err(StepError::OpaqueTail),
                            Walk::Hit => return stuck("exit past outermost block"),
                        };
                        if *n == 0 {
                            k.control = outer;
                            Ok(info(Rule::ExitZero))
                        } else {
                            let target = if self.sem.has(Mutation::ExitKeepsBlock) { inner_block } else { outer };
                            k.control = Control::seq(Stmt::Exit(n - 1), target);
                            Ok(info(Rule::ExitSucc))
                        }
                    }
                    Stmt::Return(es) => {
                        let vl = self.evaluator(&k.state).eval_list(es).map_err(|e| eval_err("return value", e))?;
                        let (frame, after) = match walk_to_call(&rest) {
                            Walk::Found(pair) => pair,
                            Walk::Opaque => return Err(StepError::OpaqueTail),
                            Walk::Hit => return stuck("return outside any function"),
                        };
                        self.finish_return(k, &frame, after, vl, Rule::Return)
                    }
                    Stmt::Call(dests, sig, callee, args) => self.call(k, dests, sig, callee, args, rest),
                    Stmt::Annot(..) => unreachable!("peeled"),
                }
            }
        }
    }

    fn call(
        &self,
        k: &mut Continuation,
        dests: &[Ident],
        sig: &crate::syntax::Signature,
        callee: &crate::syntax::Expr,
        args: &[crate::syntax::Expr],
        rest: Kont,
    ) -> Result<StepInfo, StepError> {
        let ev = self.evaluator(&k.state);
        let target = ev.eval(callee).map_err(|e| eval_err("call target", e))?;
        let vl = ev.eval_list(args).map_err(|e| eval_err("call argument", e))?;
        let g = match target {
            Value::Ptr(b, o) if o.is_zero() => match self.prog.function_at(b) {
                Some(g) => g.clone(),
                None => return stuck(format!("call target {target} is not a function")),
            },
            _ => return stuck(format!("call target {target} is not a function")),
        };
        if vl.len() != g.params.len() || sig.args != args.len() {
            return stuck(format!("arity mismatch: {} takes {} arguments, got {}", g.name, g.params.len(), vl.len()));
        }
        if dests.len() != sig.results || g.results != sig.results {
            return stuck(format!(
                "arity mismatch: {} returns {} values, call site expects {}",
                g.name,
                g.results,
                dests.len()
            ));
        }
        let mut mem = k.state.mem.clone();
        let b = mem.alloc(0, g.stackspace as i64).map_err(|e| StepError::Stuck(e.to_string()))?;
        let fp = if self.sem.erased || self.sem.has(Mutation::SkipStackGrant) {
            k.state.fp.clone()
        } else {
            match k.state.fp.grant(b, 0, g.stackspace as i64, Share::FULL) {
                Some(fp) => fp,
                None => return stuck("fresh stack block already owned"),
            }
        };
        let mut env = Env::new();
        for (p, v) in g.params.iter().zip(&vl) {
            env.insert(p.clone(), *v);
        }
        for l in &g.locals {
            env.insert(l.clone(), Value::Undef);
        }
        let frame = CallFrame {
            dests: dests.to_vec(),
            func: g.name.clone(),
            sp: k.state.sp,
            env: std::mem::take(&mut k.state.env),
        };
        k.state.env = env;
        k.state.sp = Some(b);
        k.state.fp = fp;
        k.state.mem = mem;
        k.control = Control::seq(g.body.clone(), Control::call(frame, rest));
        Ok(StepInfo {
            rule: Rule::Call,
            mem_event: Some(format!("alloc {b}[0,{})", g.stackspace)),
            returned_env: None,
        })
    }

    fn finish_return(
        &self,
        k: &mut Continuation,
        frame: &CallFrame,
        after: Kont,
        vl: Vec<Value>,
        rule: Rule,
    ) -> Result<StepInfo, StepError> {
        if vl.len() != frame.dests.len() {
            return stuck(format!(
                "arity mismatch: returned {} values, caller expects {}",
                vl.len(),
                frame.dests.len()
            ));
        }
        let mut mem = k.state.mem.clone();
        let mut fp = k.state.fp.clone();
        let mut event = None;
        if let Some(b) = k.state.sp {
            let (lo, hi) = match mem.block(b) {
                Some(blk) if blk.is_live() => (blk.lo(), blk.hi()),
                _ => return stuck(format!("stack block {b} is not live")),
            };
            if !self.sem.erased {
                fp = fp.revoke(b, lo, hi).map_err(|e| StepError::Stuck(e.to_string()))?;
            }
            mem.free(b).map_err(|e| StepError::Stuck(e.to_string()))?;
            event = Some(format!("free {b}"));
        }
        let mut env = frame.env.clone();
        if !self.sem.has(Mutation::ReturnDropsResults) {
            for (x, v) in frame.dests.iter().zip(vl) {
                env.insert(x.clone(), v);
            }
        }
        let returned = std::mem::replace(&mut k.state.env, env);
        k.state.sp = frame.sp;
        k.state.fp = fp;
        k.state.mem = mem;
        k.control = after;
        Ok(StepInfo { rule, mem_event: event, returned_env: Some(returned) })
    }
}

/// Skip pending statements up to the innermost block marker. Returns the
/// control below the marker and the control starting at it.
fn walk_to_block(k: &Kont) -> Walk<(Kont, Kont)> {
    let mut cur = k;
    loop {
        match &**cur {
            Control::Seq(_, rest) => cur = rest,
            Control::Block(rest) => return Walk::Found((rest.clone(), cur.clone())),
            Control::Opaque(_) => return Walk::Opaque,
            Control::Call(..) => return Walk::Hit,
            Control::Stop => return Walk::Hit,
        }
    }
}

fn walk_to_call(k: &Kont) -> Walk<(CallFrame, Kont)> {
    let mut cur = k;
    loop {
        match &**cur {
            Control::Seq(_, rest) | Control::Block(rest) => cur = rest,
            Control::Call(f, rest) => return Walk::Found(((**f).clone(), rest.clone())),
            Control::Opaque(_) => return Walk::Opaque,
            Control::Stop => return Walk::Hit,
        }
    }
}

/// One step on a copy; `None` when no rule applies.
pub fn step(prog: &Program, k: &Continuation) -> Option<Continuation> {
    let mut next = k.clone();
    Machine::new(prog, Semantics::FOOTPRINT).step(&mut next).ok().map(|_| next)
}

/// The reason `k` is stuck, or `None` when it can step or has halted.
pub fn is_stuck(prog: &Program, k: &Continuation) -> Option<String> {
    let mut next = k.clone();
    match Machine::new(prog, Semantics::FOOTPRINT).step(&mut next) {
        Err(StepError::Stuck(r)) => Some(r),
        Err(StepError::OpaqueTail) => Some("opaque control".into()),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Finished {
        results: Vec<Value>,
        state: State,
        /// Environment of the entry function when it returned.
        entry_env: Env,
    },
    Stuck {
        at: Continuation,
        reason: String,
    },
    OutOfFuel {
        at: Continuation,
    },
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Finished { .. } => "finished",
            Outcome::Stuck { .. } => "stuck",
            Outcome::OutOfFuel { .. } => "out-of-fuel",
        }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self, Outcome::Finished { .. })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Finished { results, .. } => {
                let vs: Vec<String> = results.iter().map(|v| v.to_string()).collect();
                write!(f, "Finished [{}]", vs.join(", "))
            }
            Outcome::Stuck { at, reason } => write!(f, "Stuck at `{}`: {reason}", at.control.head_summary()),
            Outcome::OutOfFuel { at } => write!(f, "OutOfFuel at `{}`", at.control.head_summary()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("no function named `{0}`")]
    UnknownEntry(String),
    #[error("`{name}` takes {expected} arguments, got {got}")]
    ArityMismatch { name: String, expected: usize, got: usize },
    #[error("cannot set up the initial state: {0}")]
    Setup(String),
}

/// Notified around every step of a run.
pub trait Observer {
    fn before_step(&mut self, _index: u64, _k: &Continuation) {}
    fn after_step(&mut self, _index: u64, _info: &StepInfo, _before: &Continuation, _after: &Continuation) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Records one line per step.
#[derive(Default)]
pub struct Tracer {
    pub lines: Vec<String>,
}

impl Observer for Tracer {
    fn after_step(&mut self, index: u64, info: &StepInfo, before: &Continuation, after: &Continuation) {
        self.lines.push(trace_line(index, info, before, after));
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub outcome: Outcome,
    pub steps: u64,
}

/// Name of the `i`-th result slot in the runner's outermost frame.
pub fn result_slot(i: usize) -> Ident {
    ident(&format!("${i}"))
}

/// Initial continuation for calling `entry` on `args`: globals held in
/// full, a fresh stack block, and a final activation record that collects
/// the results.
pub fn initial_continuation(
    prog: &Program,
    entry: &str,
    args: &[Value],
    sem: Semantics,
) -> Result<Continuation, RunError> {
    let f = prog.function(entry).ok_or_else(|| RunError::UnknownEntry(entry.to_string()))?;
    if args.len() != f.params.len() {
        return Err(RunError::ArityMismatch { name: entry.to_string(), expected: f.params.len(), got: args.len() });
    }
    let mut mem = prog.initial_memory().clone();
    let mut fp = Footprint::new();
    if !sem.erased {
        for (b, g) in prog.data_blocks() {
            fp = fp.grant(b, 0, g.size as i64, Share::FULL).ok_or_else(|| RunError::Setup("global overlap".into()))?;
        }
    }
    let sp = mem.alloc(0, f.stackspace as i64).map_err(|e| RunError::Setup(e.to_string()))?;
    if !sem.erased && !sem.has(Mutation::SkipStackGrant) {
        fp = fp.grant(sp, 0, f.stackspace as i64, Share::FULL).ok_or_else(|| RunError::Setup("stack overlap".into()))?;
    }
    let mut env = Env::new();
    for (p, v) in f.params.iter().zip(args) {
        env.insert(p.clone(), *v);
    }
    for l in &f.locals {
        env.insert(l.clone(), Value::Undef);
    }
    let sentinel = CallFrame { dests: (0..f.results).map(result_slot).collect(), func: f.name.clone(), sp: None, env: Env::new() };
    let control = Control::seq(f.body.clone(), Control::call(sentinel, Control::stop()));
    Ok(Continuation { state: State { sp: Some(sp), env, fp, mem }, control })
}

pub fn run(prog: &Program, entry: &str, args: &[Value], fuel: u64) -> Result<RunResult, RunError> {
    run_with(prog, entry, args, fuel, Semantics::FOOTPRINT, &mut NoObserver)
}

pub fn run_with(
    prog: &Program,
    entry: &str,
    args: &[Value],
    fuel: u64,
    sem: Semantics,
    obs: &mut dyn Observer,
) -> Result<RunResult, RunError> {
    let k = initial_continuation(prog, entry, args, sem)?;
    let results = prog.function(entry).map(|f| f.results).unwrap_or(0);
    Ok(run_from(prog, k, results, fuel, sem, obs))
}

/// Drive `k` until it halts, gets stuck or exhausts `fuel` steps.
pub fn run_from(
    prog: &Program,
    mut k: Continuation,
    results: usize,
    fuel: u64,
    sem: Semantics,
    obs: &mut dyn Observer,
) -> RunResult {
    let m = Machine::new(prog, sem);
    let mut entry_env = None;
    let mut steps = 0u64;
    loop {
        if *k.control == Control::Stop {
            let vals = (0..results).map(|i| k.state.env.get(&result_slot(i)).copied().unwrap_or(Value::Undef)).collect();
            let outcome = Outcome::Finished { results: vals, entry_env: entry_env.unwrap_or_default(), state: k.state };
            return RunResult { outcome, steps };
        }
        if steps >= fuel {
            return RunResult { outcome: Outcome::OutOfFuel { at: k }, steps };
        }
        obs.before_step(steps, &k);
        let before = k.clone();
        match m.step(&mut k) {
            Ok(info) => {
                if *k.control == Control::Stop {
                    entry_env = info.returned_env.clone();
                }
                obs.after_step(steps, &info, &before, &k);
                steps += 1;
            }
            Err(e) => {
                return RunResult { outcome: Outcome::Stuck { at: k, reason: e.to_string() }, steps };
            }
        }
    }
}

/// `step=N rule=R head="..." rho=[..] phi=[..] mem=[..]`; the last three
/// list only what the step changed.
pub fn trace_line(index: u64, info: &StepInfo, before: &Continuation, after: &Continuation) -> String {
    let head = before.control.head_summary().replace('"', "'");
    let rho = env_delta(&before.state.env, &after.state.env);
    let phi = fp_delta(&before.state.fp, &after.state.fp);
    let mem = info.mem_event.clone().unwrap_or_default();
    format!("step={index} rule={} head=\"{head}\" rho=[{rho}] phi=[{phi}] mem=[{mem}]", info.rule)
}

fn env_delta(a: &Env, b: &Env) -> String {
    if !a.is_empty() && !b.is_empty() && !a.keys().eq(b.keys()) && !a.keys().any(|k| b.contains_key(k)) {
        return format!("frame {}", b.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(","));
    }
    let mut out = Vec::new();
    for (k, v) in b {
        if a.get(k) != Some(v) {
            out.push(format!("{k}={v}"));
        }
    }
    for k in a.keys() {
        if !b.contains_key(k) {
            out.push(format!("-{k}"));
        }
    }
    out.join(",")
}

fn fp_delta(a: &Footprint, b: &Footprint) -> String {
    if a == b {
        return String::new();
    }
    let mut changed: BTreeMap<BlockId, Vec<(i64, Share)>> = BTreeMap::new();
    let keys: std::collections::BTreeSet<_> = a.iter().map(|(k, _)| k).chain(b.iter().map(|(k, _)| k)).collect();
    for (blk, ofs) in keys {
        let s = b.share((blk, ofs));
        if a.share((blk, ofs)) != s {
            changed.entry(blk).or_default().push((ofs, s));
        }
    }
    let mut out = Vec::new();
    for (blk, cells) in changed {
        let mut i = 0;
        while i < cells.len() {
            let (start, s) = cells[i];
            let mut end = start + 1;
            let mut j = i + 1;
            while j < cells.len() && cells[j].0 == end && cells[j].1 == s {
                end += 1;
                j += 1;
            }
            out.push(format!("{blk}[{start},{end})={s}"));
            i = j;
        }
    }
    out.join(",")
}

/// How many steps a statement runs before it needs its surroundings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Absorption {
    Exactly(u64),
    AtLeastBound(u64),
}

/// Whether `s` absorbs `n` steps from `st`: its first `n` steps never look
/// at the control it runs in front of.
pub fn absorbs(prog: &Program, n: u64, s: &Stmt, st: &State) -> bool {
    match max_absorb(prog, s, st, n) {
        Absorption::Exactly(i) => i >= n,
        Absorption::AtLeastBound(_) => true,
    }
}

pub fn max_absorb(prog: &Program, s: &Stmt, st: &State, bound: u64) -> Absorption {
    max_absorb_with(prog, Semantics::FOOTPRINT, s, st, bound)
}

pub fn max_absorb_with(prog: &Program, sem: Semantics, s: &Stmt, st: &State, bound: u64) -> Absorption {
    let m = Machine::new(prog, sem);
    let mut k = Continuation { state: st.clone(), control: Control::seq(s.clone(), Arc::new(Control::Opaque(0))) };
    for j in 0..bound {
        if m.step(&mut k).is_err() {
            return Absorption::Exactly(j);
        }
    }
    Absorption::AtLeastBound(bound)
}
