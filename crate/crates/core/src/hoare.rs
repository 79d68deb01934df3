//! Runtime checking of annotations along one concrete execution.
//!
//! Preconditions are checked on entry to each annotated function, loop
//! invariants on every arrival at the loop head, block-exit assertions when
//! an `exit` leaves the annotated block, postconditions at each return and
//! inline assertions where they stand. Getting stuck fails the implicit
//! safety obligation.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::assertions::{satisfies, witness_candidates, Assertion, CheckResult};
use crate::eval::{Env, Evaluator, State};
use crate::footprint::Footprint;
use crate::smallstep::{
    initial_continuation, run_from, Continuation, Control, Kont, Observer, Outcome, Rule, RunError, Semantics,
    StepInfo,
};
use crate::syntax::{Annotation, FunDef, Ident, Program, Stmt};
use crate::values::Value;

/// Variables a statement may assign: assignment targets and call
/// destinations, through both branches of every conditional.
pub fn modified_vars(s: &Stmt) -> BTreeSet<Ident> {
    let mut out = BTreeSet::new();
    s.for_each_stmt(&mut |t| match t {
        Stmt::Assign(x, _) => {
            out.insert(x.clone());
        }
        Stmt::Call(xs, ..) => out.extend(xs.iter().cloned()),
        _ => {}
    });
    out
}

/// The frame rule's side condition: `s` modifies no variable free in `a`.
pub fn check_frame_side_condition(s: &Stmt, a: &Assertion) -> bool {
    modified_vars(s).is_disjoint(&a.free_vars())
}

/// Global facts are checked before the entry function runs, with no
/// footprint, no local variables and no stack block.
pub fn check_gamma(prog: &Program, gamma: &Assertion) -> CheckResult {
    let st = State::new(prog.initial_memory().clone());
    satisfies(prog, &st, gamma, &Env::new())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Gamma,
    Requires,
    Ensures,
    Invariant,
    BlockExit,
    Assert,
    Safety,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Gamma => "gamma",
            CheckKind::Requires => "requires",
            CheckKind::Ensures => "ensures",
            CheckKind::Invariant => "invariant",
            CheckKind::BlockExit => "block-exit",
            CheckKind::Assert => "assert",
            CheckKind::Safety => "safety",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckEntry {
    pub kind: CheckKind,
    pub function: String,
    pub assertion: String,
    /// Steps taken before the check.
    pub step: u64,
    /// How many times this annotation has been reached in its activation,
    /// counting from 1. For loop invariants this is the iteration number
    /// plus one.
    pub visit: u64,
    pub result: CheckResult,
    pub state: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: &'static str,
    pub function: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub function: String,
    pub strict: bool,
    pub outcome: String,
    pub steps: u64,
    pub checks: Vec<CheckEntry>,
    pub findings: Vec<Finding>,
    pub pass: bool,
}

impl CheckReport {
    pub fn count(&self, pred: impl Fn(&CheckResult) -> bool) -> usize {
        self.checks.iter().filter(|c| pred(&c.result)).count()
    }

    pub fn first_failure(&self) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.result.is_fails())
    }

    fn compute_verdict(&mut self) {
        let errors = self.findings.iter().any(|f| f.severity == Severity::Error);
        let fails = self.count(CheckResult::is_fails) > 0;
        let unknown = self.count(CheckResult::is_unknown) > 0;
        self.pass = !errors && !fails && !(self.strict && unknown);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            let sev = match f.severity {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            let _ = writeln!(out, "finding {sev} {} in {}: {}", f.code, f.function, f.detail);
        }
        for c in &self.checks {
            let _ = write!(
                out,
                "check {} fn={} step={} visit={} result={}",
                c.kind.name(),
                c.function,
                c.step,
                c.visit,
                c.result.label()
            );
            if let Some(r) = c.result.reason() {
                let _ = write!(out, " reason=\"{r}\"");
            }
            let _ = writeln!(out, " assertion=\"{}\"", c.assertion);
            if !c.result.is_holds() {
                let _ = writeln!(out, "  state {}", c.state);
            }
        }
        let _ = writeln!(out, "outcome {} steps={}", self.outcome, self.steps);
        let _ = writeln!(
            out,
            "verdict {} holds={} fails={} unknown={} mode={}",
            if self.pass { "pass" } else { "fail" },
            self.count(CheckResult::is_holds),
            self.count(CheckResult::is_fails),
            self.count(CheckResult::is_unknown),
            if self.strict { "strict" } else { "permissive" }
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub fuel: u64,
    /// Unknown results fail the verdict.
    pub strict: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { fuel: 1_000_000, strict: true }
    }
}

/// Findings that need no execution: exits that leave more blocks than
/// enclose them, and loads in store operands or branch conditions.
pub fn static_findings(prog: &Program) -> Vec<Finding> {
    let mut out = Vec::new();
    for f in prog.functions() {
        scan(&f.body, 0, f, &mut out);
    }
    out
}

fn scan(s: &Stmt, depth: u32, f: &FunDef, out: &mut Vec<Finding>) {
    let mut push = |severity, code, detail: String| {
        out.push(Finding { severity, code, function: f.name.to_string(), detail })
    };
    match s {
        Stmt::Exit(n) if *n >= depth => push(
            Severity::Error,
            "exit-depth",
            format!("exit {n} has only {depth} enclosing blocks"),
        ),
        Stmt::Store(ch, a, v) if !a.is_pure() || !v.is_pure() => push(
            Severity::Warning,
            "impure-store",
            format!("store {ch}[{}] reads memory in its operands", crate::syntax::print_expr(a)),
        ),
        Stmt::If(c, ..) if !c.is_pure() => push(
            Severity::Warning,
            "impure-condition",
            format!("condition {} reads memory", crate::syntax::print_expr(c)),
        ),
        _ => {}
    }
    match s {
        Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
            scan(a, depth, f, out);
            scan(b, depth, f, out);
        }
        Stmt::Loop(b) | Stmt::Annot(_, b) => scan(b, depth, f, out),
        Stmt::Block(b) => scan(b, depth + 1, f, out),
        _ => {}
    }
}

struct Activation {
    func: Arc<FunDef>,
    logic: Env,
    visits: HashMap<usize, u64>,
}

struct HoareObserver<'p> {
    prog: &'p Program,
    stack: Vec<Activation>,
    entries: Vec<CheckEntry>,
    /// Block markers pushed by annotated blocks. Holding the node keeps
    /// its address from being reused while it is tracked.
    exits: Vec<(Kont, Assertion)>,
    exit_in_progress: bool,
}

fn summarize(st: &State) -> String {
    let rho: Vec<String> = st.env.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let sp = st.sp.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
    format!("sp={sp} rho=[{}] phi={} addresses", rho.join(", "), st.fp.len())
}

impl<'p> HoareObserver<'p> {
    fn record(&mut self, kind: CheckKind, func: &str, a: &Assertion, step: u64, visit: u64, result: CheckResult, st: &State) {
        self.entries.push(CheckEntry {
            kind,
            function: func.to_string(),
            assertion: a.to_string(),
            step,
            visit,
            result,
            state: summarize(st),
        });
    }

    fn check(&self, st: &State, a: &Assertion, extra: &[(Ident, Value)]) -> CheckResult {
        let mut logic = self.stack.last().map(|act| act.logic.clone()).unwrap_or_default();
        for (x, v) in extra {
            logic.insert(x.clone(), *v);
        }
        satisfies(self.prog, st, a, &logic)
    }

    /// Enter `f`: bind its auxiliary variables by searching for values that
    /// make the precondition hold, and record the check.
    fn enter(&mut self, f: Arc<FunDef>, st: &State, step: u64) {
        let mut logic = Env::new();
        if let Some(pre) = f.requires.clone() {
            let result = if f.aux.is_empty() {
                satisfies(self.prog, st, &pre, &logic)
            } else {
                match self.bind_aux(&f, &pre, st) {
                    Some(binding) => {
                        logic = binding;
                        CheckResult::Holds
                    }
                    None => CheckResult::Unknown(format!("no binding of {} satisfies the precondition", join(&f.aux)).into()),
                }
            };
            self.record(CheckKind::Requires, &f.name, &pre, step, 1, result, st);
        }
        self.stack.push(Activation { func: f, logic, visits: HashMap::new() });
    }

    fn bind_aux(&self, f: &FunDef, pre: &Assertion, st: &State) -> Option<Env> {
        let candidates = witness_candidates(self.prog, st, pre, &Env::new());
        let mut logic = Env::new();
        fn go(
            prog: &Program,
            st: &State,
            pre: &Assertion,
            aux: &[Ident],
            cands: &[Value],
            logic: &mut Env,
        ) -> bool {
            let Some((x, rest)) = aux.split_first() else {
                return satisfies(prog, st, pre, logic).is_holds();
            };
            for c in cands {
                logic.insert(x.clone(), *c);
                if go(prog, st, pre, rest, cands, logic) {
                    return true;
                }
            }
            logic.remove(x);
            false
        }
        go(self.prog, st, pre, &f.aux, &candidates, &mut logic).then_some(logic)
    }

    fn check_return(&mut self, k: &Continuation, vl: Vec<Value>, step: u64) {
        let Some(act) = self.stack.last() else {
            return;
        };
        let Some(post) = act.func.ensures.clone() else {
            return;
        };
        let name = act.func.name.clone();
        let extra: Vec<(Ident, Value)> = vl.iter().enumerate().map(|(i, v)| (FunDef::result_name(i), *v)).collect();
        let result = self.check(&k.state, &post, &extra);
        self.record(CheckKind::Ensures, &name, &post, step, 1, result, &k.state);
    }

    fn check_exit(&mut self, k: &Continuation, n: u32, rest: &Kont, step: u64) {
        // the (n+1)-th block marker below the exit
        let mut cur = rest;
        let mut seen = 0;
        let target = loop {
            match &**cur {
                Control::Seq(_, r) => cur = r,
                Control::Block(r) => {
                    if seen == n {
                        break Some(cur.clone());
                    }
                    seen += 1;
                    cur = r;
                }
                _ => break None,
            }
        };
        let Some(target) = target else {
            return;
        };
        let Some(a) = self.exits.iter().find(|(node, _)| Arc::ptr_eq(node, &target)).map(|(_, a)| a.clone()) else {
            return;
        };
        let name = self.stack.last().map(|a| a.func.name.to_string()).unwrap_or_default();
        let result = self.check(&k.state, &a, &[]);
        self.record(CheckKind::BlockExit, &name, &a, step, 1, result, &k.state);
    }
}

fn join(xs: &[Ident]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl Observer for HoareObserver<'_> {
    fn before_step(&mut self, step: u64, k: &Continuation) {
        let continuing_exit = std::mem::replace(&mut self.exit_in_progress, false);
        match &*k.control {
            Control::Seq(s, rest) => {
                let func = self.stack.last().map(|a| a.func.name.to_string()).unwrap_or_default();
                for a in s.annotations() {
                    match a {
                        Annotation::Invariant(inv) if matches!(s.peel(), Stmt::Loop(_)) => {
                            let key = Arc::as_ptr(s) as usize;
                            let visit = match self.stack.last_mut() {
                                Some(act) => {
                                    let v = act.visits.entry(key).or_insert(0);
                                    *v += 1;
                                    *v
                                }
                                None => 1,
                            };
                            let result = self.check(&k.state, inv, &[]);
                            self.record(CheckKind::Invariant, &func, inv, step, visit, result, &k.state);
                        }
                        Annotation::Assert(x) => {
                            let key = Arc::as_ptr(s) as usize;
                            let visit = match self.stack.last_mut() {
                                Some(act) => {
                                    let v = act.visits.entry(key).or_insert(0);
                                    *v += 1;
                                    *v
                                }
                                None => 1,
                            };
                            let result = self.check(&k.state, x, &[]);
                            self.record(CheckKind::Assert, &func, x, step, visit, result, &k.state);
                        }
                        _ => {}
                    }
                }
                match s.peel() {
                    Stmt::Exit(n) if !continuing_exit => self.check_exit(k, *n, rest, step),
                    Stmt::Return(es) => {
                        let ev = Evaluator {
                            prog: self.prog,
                            sp: k.state.sp,
                            vars: &k.state.env,
                            fp: Some(&k.state.fp),
                            mem: &k.state.mem,
                        };
                        if let Ok(vl) = ev.eval_list(es) {
                            self.check_return(k, vl, step);
                        }
                    }
                    _ => {}
                }
            }
            Control::Call(frame, _) if frame.dests.is_empty() => self.check_return(k, Vec::new(), step),
            _ => {}
        }
    }

    fn after_step(&mut self, step: u64, info: &StepInfo, before: &Continuation, after: &Continuation) {
        match info.rule {
            Rule::ExitSucc => self.exit_in_progress = true,
            Rule::Block => {
                if let Control::Seq(s, _) = &*before.control {
                    let exits: Vec<Assertion> = s
                        .annotations()
                        .filter_map(|a| match a {
                            Annotation::BlockExit(x) => Some(x.clone()),
                            _ => None,
                        })
                        .collect();
                    if let (Some(a), Control::Seq(_, marker)) = (exits.into_iter().reduce(Assertion::and), &*after.control) {
                        if self.exits.len() >= 64 {
                            self.exits.retain(|(node, _)| Arc::strong_count(node) > 1);
                        }
                        self.exits.push((marker.clone(), a));
                    }
                }
            }
            Rule::Call => {
                if let Control::Call(frame, _) = after.control.tail().map(|t| &**t).unwrap_or(&Control::Stop) {
                    if let Some(f) = self.prog.function(&frame.func).cloned() {
                        self.enter(f, &after.state, step + 1);
                    }
                }
            }
            Rule::Return | Rule::Fallthrough => {
                self.stack.pop();
            }
            _ => {}
        }
    }
}

/// Run `fname` on `args` and check every annotation met along the way.
pub fn check_function(prog: &Program, fname: &str, args: &[Value], cfg: CheckConfig) -> Result<CheckReport, RunError> {
    let k = initial_continuation(prog, fname, args, Semantics::FOOTPRINT)?;
    let f = prog.function(fname).cloned().ok_or_else(|| RunError::UnknownEntry(fname.to_string()))?;
    let findings = static_findings(prog);
    let mut report = CheckReport {
        function: fname.to_string(),
        strict: cfg.strict,
        outcome: "not run".into(),
        steps: 0,
        checks: Vec::new(),
        findings,
        pass: false,
    };
    if report.findings.iter().any(|f| f.severity == Severity::Error) {
        report.compute_verdict();
        return Ok(report);
    }
    let mut obs = HoareObserver { prog, stack: Vec::new(), entries: Vec::new(), exits: Vec::new(), exit_in_progress: false };
    if let Some(g) = prog.gamma() {
        let result = check_gamma(prog, g);
        let st = State::new(prog.initial_memory().clone());
        obs.record(CheckKind::Gamma, "", g, 0, 1, result, &st);
    }
    obs.enter(f.clone(), &k.state, 0);
    let run = run_from(prog, k, f.results, cfg.fuel, Semantics::FOOTPRINT, &mut obs);
    let safety = Assertion::tt();
    match &run.outcome {
        Outcome::Finished { state, .. } => {
            obs.record(CheckKind::Safety, &f.name, &safety, run.steps, 1, CheckResult::Holds, state);
        }
        Outcome::Stuck { at, reason } => {
            let func = obs.stack.last().map(|a| a.func.name.to_string()).unwrap_or_default();
            obs.record(CheckKind::Safety, &func, &safety, run.steps, 1, CheckResult::Fails(reason.clone().into()), &at.state);
        }
        Outcome::OutOfFuel { at } => {
            let func = obs.stack.last().map(|a| a.func.name.to_string()).unwrap_or_default();
            let r = CheckResult::Unknown(format!("fuel exhausted after {} steps", run.steps).into());
            obs.record(CheckKind::Safety, &func, &safety, run.steps, 1, r, &at.state);
        }
    }
    report.outcome = run.outcome.to_string();
    report.steps = run.steps;
    report.checks = obs.entries;
    report.compute_verdict();
    Ok(report)
}

/// A state whose footprint is reduced to the addresses not in `frame`.
pub fn without_frame(st: &State, frame: &Footprint) -> State {
    State { fp: st.fp.restrict(|a| frame.share(*a).is_zero()), ..st.clone() }
}
