//! Acceptance run: one PASS/FAIL line per criterion, each with its time
//! budget. Frozen expectations come from the fixtures in `common`, which
//! are written independently of the library.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use cminor::assertions::{satisfies, witness_candidates, Assertion, CheckResult, ValueTerm};
use cminor::eval::{eval_expr, eval_expr_erased, Env, State};
use cminor::footprint::{Access, Footprint, Share};
use cminor::hoare::{check_function, CheckConfig, CheckKind};
use cminor::memory::Memory;
use cminor::oracle::{difftest_erasure, difftest_mutation, difftest_smallstep_vs_bigstep, GenConfig};
use cminor::smallstep::{
    absorbs, cat, max_absorb, run, strip_tail, Absorption, CallFrame, Continuation, Control, Kont, Machine,
    Mutation, Outcome, Rule, Semantics,
};
use cminor::syntax::{ident, parse_program, Comparison, Expr, Op, Program, Stmt};
use cminor::values::{BlockId, Chunk, Value};

use common::*;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------------------
// 1: one case per small-step rule

fn one_step(prog: &Program, k: &Continuation) -> Result<(Rule, Continuation), String> {
    let mut next = k.clone();
    let info = Machine::new(prog, Semantics::FOOTPRINT).step(&mut next).map_err(|e| e.to_string())?;
    Ok((info.rule, next))
}

fn rule_cases() -> Verdict {
    let prog = parse_program(
        "global g[8];\n\
         fn callee(a) : 1 { locals t; stack 8; t = a + 1; block { return t; } }\n\
         fn main() : 1 { locals x, r; stack 4; return 0; }",
    )
    .map_err(|e| e.to_string())?;
    let g = prog.symbol("g").unwrap();
    let mut mem = prog.initial_memory().clone();
    let sp = mem.alloc(0, 4).unwrap();
    let fp = Footprint::new().grant(g, 0, 8, Share::FULL).unwrap().grant(sp, 0, 4, Share::FULL).unwrap();
    let mut env = Env::new();
    env.insert(ident("x"), Value::int(5));
    env.insert(ident("r"), Value::Undef);
    let st = State { sp: Some(sp), env, fp, mem };
    let tail: Kont = Control::seq(Stmt::assign("x", Expr::int(9)), Control::stop());
    let at = |s: Stmt, k: Kont| Continuation::new(st.clone(), Control::seq(s, k));
    let s1 = Stmt::assign("x", Expr::int(1));
    let s2 = Stmt::assign("x", Expr::int(2));
    let mut passed = 0;

    // seq
    let (rule, k) = one_step(&prog, &at(Stmt::seq(s1.clone(), s2.clone()), tail.clone()))?;
    ensure!(rule == Rule::Seq && k.state == st, "seq: rule {rule}");
    ensure!(*k.control == *Control::seq(s1.clone(), Control::seq(s2.clone(), tail.clone())), "seq: control");
    passed += 1;

    // assign
    let (rule, k) = one_step(&prog, &at(Stmt::assign("x", Expr::binop(Op::Add, Expr::var("x"), Expr::int(2))), tail.clone()))?;
    ensure!(rule == Rule::Assign && k.state.env[&ident("x")] == Value::int(7) && k.control == tail, "assign");
    ensure!(k.state.mem == st.mem && k.state.fp == st.fp, "assign touched memory");
    passed += 1;

    // store, with and without store permission
    let store = Stmt::Store(Chunk::Int32, Expr::binop(Op::Add, Expr::addr_of("g"), Expr::int(4)), Expr::int(77));
    let (rule, k) = one_step(&prog, &at(store.clone(), tail.clone()))?;
    ensure!(rule == Rule::Store && k.control == tail, "store: rule {rule}");
    ensure!(k.state.mem.load(Chunk::Int32, Value::ptr(g, 4)) == Ok(Value::int(77)), "store: memory");
    let mut half = at(store, tail.clone());
    half.state.fp = Footprint::new().grant(g, 0, 8, Share::FULL.half()).unwrap();
    let reason = one_step(&prog, &half).err().unwrap_or_default();
    ensure!(reason.contains("store permission required"), "store on half share: {reason}");
    passed += 1;

    // if, both ways, and stuck on undef
    let (rule, k) = one_step(&prog, &at(Stmt::if_(Expr::var("x"), s1.clone(), s2.clone()), tail.clone()))?;
    ensure!(rule == Rule::IfTrue && *k.control == *Control::seq(s1.clone(), tail.clone()), "if_true");
    passed += 1;
    let (rule, k) = one_step(&prog, &at(Stmt::if_(Expr::int(0), s1.clone(), s2.clone()), tail.clone()))?;
    ensure!(rule == Rule::IfFalse && *k.control == *Control::seq(s2.clone(), tail.clone()), "if_false");
    ensure!(one_step(&prog, &at(Stmt::if_(Expr::var("r"), s1.clone(), s2.clone()), tail.clone())).is_err(), "if on undef steps");
    passed += 1;

    // skip
    let (rule, k) = one_step(&prog, &at(Stmt::Skip, tail.clone()))?;
    ensure!(rule == Rule::Skip && k.control == tail && k.state == st, "skip");
    passed += 1;

    // loop
    let lp = Stmt::loop_(s1.clone());
    let (rule, k) = one_step(&prog, &at(lp.clone(), tail.clone()))?;
    ensure!(rule == Rule::Loop && *k.control == *Control::seq(s1.clone(), Control::seq(lp, tail.clone())), "loop");
    passed += 1;

    // block
    let (rule, k) = one_step(&prog, &at(Stmt::block(s1.clone()), tail.clone()))?;
    ensure!(rule == Rule::Block && *k.control == *Control::seq(s1.clone(), Control::block(tail.clone())), "block");
    passed += 1;

    // exit 0 discards pending statements up to the block
    let pending = Control::seq(s1.clone(), Control::seq(s2.clone(), Control::block(tail.clone())));
    let (rule, k) = one_step(&prog, &at(Stmt::Exit(0), pending.clone()))?;
    ensure!(rule == Rule::ExitZero && k.control == tail && k.state == st, "exit 0");
    let (rule, k) = one_step(&prog, &at(Stmt::Exit(0), Control::block(tail.clone())))?;
    ensure!(rule == Rule::ExitZero && k.control == tail, "exit 0 directly under a block");
    passed += 1;

    // exit n+1 leaves one block and continues with exit n
    let (rule, k) = one_step(&prog, &at(Stmt::Exit(2), pending))?;
    ensure!(rule == Rule::ExitSucc && *k.control == *Control::seq(Stmt::Exit(1), tail.clone()), "exit succ");
    passed += 1;

    // call
    let call = Stmt::call(&["r"], Expr::addr_of("callee"), vec![Expr::var("x")]);
    let (rule, k) = one_step(&prog, &at(call, tail.clone()))?;
    ensure!(rule == Rule::Call, "call: rule {rule}");
    let callee_sp = k.state.sp.ok_or("call: no stack block")?;
    ensure!(callee_sp != sp && k.state.mem.block(callee_sp).is_some_and(|b| b.hi() == 8), "call: stack block");
    ensure!(k.state.fp.allows(Value::ptr(callee_sp, 4), Chunk::Int32, Access::Store), "call: stack permission");
    ensure!(k.state.env.get("a") == Some(&Value::int(5)) && k.state.env.get("t") == Some(&Value::Undef), "call: env");
    let Control::Seq(_, rest) = &*k.control else { return Err("call: control".into()) };
    let Control::Call(frame, after) = &**rest else { return Err("call: no activation record".into()) };
    ensure!(
        **frame == CallFrame { dests: vec![ident("r")], func: ident("callee"), sp: Some(sp), env: st.env.clone() }
            && *after == tail,
        "call: activation record {frame:?}"
    );
    passed += 1;

    // return, through a block, back to the caller
    let mut k = k;
    let mut rules = Vec::new();
    for _ in 0..3 {
        let (r, next) = one_step(&prog, &k)?;
        rules.push(r);
        k = next;
    }
    ensure!(rules == [Rule::Seq, Rule::Assign, Rule::Block], "callee body: {rules:?}");
    let (rule, k) = one_step(&prog, &k)?;
    ensure!(rule == Rule::Return && k.control == tail, "return: rule {rule}");
    ensure!(k.state.sp == Some(sp) && k.state.env[&ident("r")] == Value::int(6), "return: caller state");
    ensure!(!k.state.mem.block(callee_sp).unwrap().is_live() && k.state.fp == st.fp, "return: stack block released");
    passed += 1;

    // exit depth: an exit with no enclosing block is stuck, and `exit 1`
    // in two nested blocks leaves both
    let reason = one_step(&prog, &at(Stmt::Exit(0), tail.clone())).err().unwrap_or_default();
    ensure!(reason == "exit past outermost block", "exit without block: {reason:?}");
    let nested = Stmt::block(Stmt::seq(Stmt::block(Stmt::seq(Stmt::Exit(1), s1.clone())), s2.clone()));
    let mut k = at(nested, tail.clone());
    let mut rules = Vec::new();
    while k.control != tail {
        let (r, next) = one_step(&prog, &k)?;
        rules.push(r);
        k = next;
    }
    ensure!(
        rules == [Rule::Block, Rule::Seq, Rule::Block, Rule::Seq, Rule::ExitSucc, Rule::ExitZero] && k.state == st,
        "exit 1 in nested blocks: {rules:?}"
    );
    passed += 2;

    Ok(format!("{passed} cases"))
}

// ---------------------------------------------------------------------------
// 2: evaluation is a function of the state

fn rebuilt(st: &State) -> State {
    let env: Env = st.env.iter().rev().map(|(k, v)| (ident(k), *v)).collect();
    let mut entries: Vec<_> = st.fp.iter().collect();
    entries.reverse();
    State { sp: st.sp, env, fp: Footprint::from_entries(entries), mem: st.mem.clone() }
}

fn determinism() -> Verdict {
    let prog = fixture_program();
    let mut r = rng(2);
    let mut defined = 0;
    for i in 0..10_000 {
        let st = random_state(&mut r, &prog);
        let e = random_expr(&mut r, 4, &state_blocks(&prog, &st), true);
        let a = eval_expr(&prog, &st, &e);
        let other = rebuilt(&st);
        ensure!(st.equivalent(&other), "case {i}: rebuilt state is not equivalent");
        ensure!(a == eval_expr(&prog, &st, &e), "case {i}: second evaluation differs for {e:?}");
        ensure!(a == eval_expr(&prog, &other, &e), "case {i}: equivalent state differs for {e:?}");
        if let Some(v) = a {
            defined += 1;
            ensure!(
                eval_expr_erased(&prog, st.sp, &st.env, &st.mem, &e) == Some(v),
                "case {i}: erased evaluation disagrees"
            );
        }
    }
    Ok(format!("10000 pairs, {defined} evaluate"))
}

// ---------------------------------------------------------------------------
// 3: literals evaluate to themselves

fn literals() -> Verdict {
    let prog = fixture_program();
    let mut r = rng(3);
    let mut sample = vec![Value::Undef, Value::ptr(BlockId(0), 0), Value::ptr(BlockId(7), -4), Value::Float(f64::NAN)];
    while sample.len() < 1000 {
        let bs = [BlockId(r.gen_range(0..6))];
        sample.push(random_value(&mut r, &bs));
    }
    let undef = sample.iter().filter(|v| matches!(v, Value::Undef)).count();
    let ptrs = sample.iter().filter(|v| matches!(v, Value::Ptr(..))).count();
    for v in &sample {
        let st = random_state(&mut r, &prog);
        ensure!(eval_expr(&prog, &st, &Expr::Val(*v)) == Some(*v), "{v} does not evaluate to itself");
    }
    Ok(format!("{} values ({undef} undef, {ptrs} pointers)", sample.len()))
}

// ---------------------------------------------------------------------------
// 4: replacing an evaluated subexpression by its value changes nothing

fn step_result(prog: &Program, st: &State, s: Stmt) -> Result<Continuation, String> {
    let tail = Control::seq(Stmt::Skip, Control::stop());
    one_step(prog, &Continuation::new(st.clone(), Control::seq(s, tail))).map(|(_, k)| k)
}

fn substitution() -> Verdict {
    let prog = fixture_program();
    let mut r = rng(4);
    let mut counts = [0usize; 3];
    let mut attempts = 0;
    while counts.iter().any(|c| *c < 1000) {
        attempts += 1;
        ensure!(attempts < 200_000, "too few evaluable cases: {counts:?}");
        let st = random_state(&mut r, &prog);
        let bs = state_blocks(&prog, &st);
        let e = random_expr(&mut r, 3, &bs, true);
        let Some(v) = eval_expr(&prog, &st, &e) else { continue };
        let kind = r.gen_range(0..3);
        if counts[kind] >= 1000 {
            continue;
        }
        let (orig, subst) = match kind {
            0 => (Stmt::assign("y", e.clone()), Stmt::assign("y", Expr::Val(v))),
            1 => (Stmt::if_(e.clone(), Stmt::Exit(0), Stmt::Skip), Stmt::if_(Expr::Val(v), Stmt::Exit(0), Stmt::Skip)),
            _ => {
                let ch = *Chunk::ALL.choose(&mut r).unwrap();
                let addr = if r.gen_bool(0.6) {
                    Expr::binop(Op::Add, Expr::addr_of("g"), Expr::int(r.gen_range(0..2) * 8))
                } else {
                    random_expr(&mut r, 2, &bs, true)
                };
                let Some(a) = eval_expr(&prog, &st, &addr) else { continue };
                (Stmt::Store(ch, addr, e.clone()), Stmt::Store(ch, Expr::Val(a), Expr::Val(v)))
            }
        };
        let x = step_result(&prog, &st, orig);
        let y = step_result(&prog, &st, subst);
        ensure!(x == y, "step differs after substitution for {e:?}: {x:?} vs {y:?}");
        counts[kind] += 1;
    }
    Ok(format!("{} assign, {} if, {} store steps", counts[0], counts[1], counts[2]))
}

// ---------------------------------------------------------------------------
// 5 and 6: differential runs on generated programs

fn erasure() -> Verdict {
    let rep = difftest_erasure(&GenConfig::new(0), 500);
    ensure!(rep.passed(), "{}", rep.to_text());
    ensure!(rep.finished > 0, "no program finished");
    Ok(format!("500 programs, {} finished, {} stuck, {} skipped", rep.finished, rep.stuck, rep.skipped))
}

fn bigstep() -> Verdict {
    let cfg = GenConfig::new(0);
    let rep = difftest_smallstep_vs_bigstep(&cfg, 500);
    ensure!(rep.passed(), "{}", rep.to_text());
    ensure!(rep.compared >= 450, "only {} of 500 programs terminated", rep.compared);
    let mut caught = Vec::new();
    for m in [
        Mutation::ExitKeepsBlock,
        Mutation::LoopRunsOnce,
        Mutation::StorePermissionOffByOneChunk,
        Mutation::ReturnDropsResults,
        Mutation::BlockNotPushed,
    ] {
        let rep = difftest_mutation(&cfg, 500, m);
        ensure!(!rep.passed(), "mutation {m:?} not detected");
        caught.push(format!("{m:?}@{}", rep.divergences[0].seed));
    }
    Ok(format!("{} compared, {} skipped; mutations caught: {}", rep.compared, rep.skipped, caught.join(" ")))
}

// ---------------------------------------------------------------------------
// 7: absorption

fn steps_with_tail(prog: &Program, s: &Stmt, st: &State, tail: &Kont, j: u64) -> Option<Continuation> {
    let m = Machine::new(prog, Semantics::FOOTPRINT);
    let mut k = Continuation::new(st.clone(), Control::seq(s.clone(), tail.clone()));
    for _ in 0..j {
        m.step(&mut k).ok()?;
    }
    Some(k)
}

fn absorption() -> Verdict {
    let empty = Program::empty();
    let st0 = State::default();
    ensure!(max_absorb(&empty, &Stmt::Exit(0), &st0, 10) == Absorption::Exactly(0), "exit 0");
    ensure!(max_absorb(&empty, &Stmt::block(Stmt::Exit(0)), &st0, 10) == Absorption::Exactly(2), "block exit 0");
    ensure!(absorbs(&empty, 2, &Stmt::block(Stmt::Exit(0)), &st0), "block exit 0 absorbs 2");
    ensure!(!absorbs(&empty, 1, &Stmt::Exit(0), &st0), "exit 0 absorbs 1");

    let prog = fixture_program();
    let mut r = rng(7);
    let opaque0: Kont = Arc::new(Control::Opaque(0));
    let opaque1: Kont = Arc::new(Control::Opaque(1));
    let concrete: Kont = Control::block(Control::seq(Stmt::assign("x", Expr::int(1)), Control::stop()));
    let mut histogram = [0usize; 22];
    for i in 0..1000 {
        let st = random_state(&mut r, &prog);
        let s = random_stmt(&mut r, 3, &state_blocks(&prog, &st));
        let n: u64 = r.gen_range(0..=20);
        let (an, an1) = (absorbs(&prog, n, &s, &st), absorbs(&prog, n + 1, &s, &st));
        ensure!(!an1 || an, "case {i}: absorbs {} but not {n}", n + 1);
        if !an {
            ensure!(
                matches!(max_absorb(&prog, &s, &st, n), Absorption::Exactly(k) if k < n),
                "case {i}: does not absorb {n} yet the maximum is not below it"
            );
        }
        let max = match max_absorb(&prog, &s, &st, 20) {
            Absorption::Exactly(k) => k,
            Absorption::AtLeastBound(k) => k,
        };
        histogram[max as usize] += 1;
        for j in 0..=max {
            let a = steps_with_tail(&prog, &s, &st, &opaque0, j).ok_or(format!("case {i}: step {j} failed"))?;
            let b = steps_with_tail(&prog, &s, &st, &opaque1, j).ok_or(format!("case {i}: step {j} failed"))?;
            let c = steps_with_tail(&prog, &s, &st, &concrete, j).ok_or(format!("case {i}: step {j} failed"))?;
            let pa = strip_tail(&a.control, &opaque0).ok_or(format!("case {i}: tail lost after {j} steps"))?;
            let pb = strip_tail(&b.control, &opaque1).ok_or(format!("case {i}: tail lost after {j} steps"))?;
            ensure!(pa == pb && a.state == b.state, "case {i}: sentinel tails disagree after {j} steps");
            ensure!(c.state == a.state && c.control == cat(&pa, &concrete), "case {i}: concrete tail disagrees after {j} steps");
        }
    }
    Ok(format!("examples exact; 1000 random cases, absorption counts 0..20: {histogram:?}"))
}

// ---------------------------------------------------------------------------
// 8: footprint algebra

fn random_footprint(r: &mut rand_chacha::ChaCha8Rng) -> Footprint {
    let shares = [Share::new(1, 4), Share::new(1, 3), Share::new(1, 2), Share::new(2, 3), Share::new(3, 4), Some(Share::FULL)];
    let mut fp = Footprint::new();
    for b in 0..2 {
        for k in 0..6 {
            if r.gen_bool(0.4) {
                fp = fp.grant(BlockId(b), k, k + 1, shares.choose(r).unwrap().unwrap()).unwrap();
            }
        }
    }
    fp
}

fn footprints() -> Verdict {
    let mut r = rng(8);
    let mut joined = 0;
    for i in 0..10_000 {
        let (a, b, c) = (random_footprint(&mut r), random_footprint(&mut r), random_footprint(&mut r));
        let ab = a.join(&b);
        ensure!(ab == b.join(&a), "case {i}: join not commutative");
        let left = ab.as_ref().and_then(|ab| ab.join(&c));
        let right = b.join(&c).and_then(|bc| a.join(&bc));
        ensure!(left == right, "case {i}: join not associative");
        let with_empty = a.join(&Footprint::new()).ok_or("join with empty undefined")?;
        ensure!(with_empty == a && with_empty.iter().eq(a.iter()), "case {i}: join with empty not canonical");
        let Some(sum) = ab else { continue };
        joined += 1;
        for _ in 0..4 {
            let v = if r.gen_bool(0.9) {
                Value::ptr(BlockId(r.gen_range(0..2)), r.gen_range(-1..6))
            } else {
                Value::int(r.gen_range(0..4))
            };
            let ch = *Chunk::ALL.choose(&mut r).unwrap();
            for m in [Access::Load, Access::Store] {
                ensure!(!a.allows(v, ch, m) || sum.allows(v, ch, m), "case {i}: access not monotone");
            }
            ensure!(!a.allows(v, ch, Access::Store) || !b.allows(v, ch, Access::Load), "case {i}: store does not exclude load");
        }
    }
    Ok(format!("10000 triples, {joined} with a defined join"))
}

// ---------------------------------------------------------------------------
// 9: memory model against the byte-map reference

fn memory() -> Verdict {
    let mut r = rng(9);
    // round trip and chunk mismatch
    let mut m = Memory::new();
    let b = m.alloc(0, 16).unwrap();
    for _ in 0..1000 {
        let ch = *Chunk::ALL.choose(&mut r).unwrap();
        let v = random_value(&mut r, &[b]);
        let at = Value::ptr(b, 8);
        m.store(ch, at, v).map_err(|e| e.to_string())?;
        ensure!(m.load(ch, at) == Ok(ref_normalize(ch, v)), "round trip of {v} as {ch}");
        ensure!(ch.normalize(v) == ref_normalize(ch, v), "normalization of {v} as {ch}");
    }
    m.store(Chunk::Int32, Value::ptr(b, 0), Value::int(0x0102_0304)).unwrap();
    ensure!(m.load(Chunk::Int8Signed, Value::ptr(b, 0)) == Ok(Value::Undef), "i32 store then i8s load is defined");

    // frame: a store leaves disjoint ranges alone
    for i in 0..10_000 {
        let (c1, c2) = (*Chunk::ALL.choose(&mut r).unwrap(), *Chunk::ALL.choose(&mut r).unwrap());
        let o1 = r.gen_range(0..16 / c1.size() as i32) * c1.size() as i32;
        let o2 = r.gen_range(0..16 / c2.size() as i32) * c2.size() as i32;
        if o1 < o2 + c2.size() as i32 && o2 < o1 + c1.size() as i32 {
            continue;
        }
        let before = m.load(c2, Value::ptr(b, o2));
        m.store(c1, Value::ptr(b, o1), random_value(&mut r, &[b])).unwrap();
        ensure!(m.load(c2, Value::ptr(b, o2)) == before, "frame case {i}: disjoint load changed");
    }

    // random operation sequences
    let mut ops = 0;
    for seq in 0..10_000 {
        let mut lib = Memory::new();
        let mut reference = RefMemory::default();
        let mut blocks = Vec::new();
        for _ in 0..r.gen_range(5..30) {
            ops += 1;
            match r.gen_range(0..10) {
                0 | 1 => {
                    let lo = r.gen_range(-8..=0);
                    let hi = lo + r.gen_range(-1..24);
                    let x = lib.alloc(lo, hi).ok();
                    ensure!(x == reference.alloc(lo, hi), "seq {seq}: alloc [{lo},{hi}) differs");
                    blocks.extend(x);
                }
                2 => {
                    let b = BlockId(r.gen_range(0..blocks.len() as u32 + 1));
                    ensure!(lib.free(b).is_ok() == reference.free(b), "seq {seq}: free {b} differs");
                }
                3..=6 => {
                    let ch = *Chunk::ALL.choose(&mut r).unwrap();
                    let addr = Value::ptr(BlockId(r.gen_range(0..blocks.len() as u32 + 1)), r.gen_range(-10..26));
                    let v = random_value(&mut r, &blocks);
                    ensure!(
                        lib.store(ch, addr, v).is_ok() == reference.store(ch, addr, v),
                        "seq {seq}: store {v} as {ch} at {addr} differs"
                    );
                }
                _ => {
                    let ch = *Chunk::ALL.choose(&mut r).unwrap();
                    let addr = if r.gen_bool(0.95) {
                        Value::ptr(BlockId(r.gen_range(0..blocks.len() as u32 + 1)), r.gen_range(-10..26))
                    } else {
                        Value::int(4)
                    };
                    ensure!(lib.load(ch, addr).ok() == reference.load(ch, addr), "seq {seq}: load {ch} at {addr} differs");
                }
            }
        }
    }
    Ok(format!("round trips, frame property, 10000 sequences ({ops} operations)"))
}

// ---------------------------------------------------------------------------
// 10: separation checker against the exhaustive reference

const SMALL_VALUES: [i32; 5] = [0, 1, 2, -1, 255];

fn small_state(r: &mut rand_chacha::ChaCha8Rng, prog: &Program) -> State {
    let g = prog.symbol("g").unwrap();
    let h = prog.symbol("h").unwrap();
    let mut mem = prog.initial_memory().clone();
    for (b, size) in [(g, 8), (h, 4)] {
        let mut k = 0;
        while k < size {
            let ch = *[Chunk::Int8Signed, Chunk::Int8Unsigned, Chunk::Int16Signed].choose(r).unwrap();
            if k % ch.size() as i32 != 0 || k + ch.size() as i32 > size {
                k += 1;
                continue;
            }
            if r.gen_bool(0.85) {
                mem.store(ch, Value::ptr(b, k), Value::int(*SMALL_VALUES.choose(r).unwrap())).unwrap();
            }
            k += ch.size() as i32;
        }
    }
    let mut cells: Vec<(BlockId, i64)> = (0..8).map(|k| (g, k)).chain((0..4).map(|k| (h, k))).collect();
    cells.shuffle(r);
    let mut fp = Footprint::new();
    for (b, k) in cells.into_iter().take(r.gen_range(0..=6)) {
        let s = if r.gen_bool(0.8) { Share::FULL } else { Share::FULL.half() };
        fp = fp.grant(b, k, k + 1, s).unwrap();
    }
    let mut env = Env::new();
    env.insert(ident("x"), Value::ptr(*[g, h].choose(r).unwrap(), r.gen_range(0..2) * 2));
    env.insert(ident("y"), Value::int(*SMALL_VALUES.choose(r).unwrap()));
    env.insert(ident("z"), Value::Undef);
    State { sp: None, env, fp, mem }
}

fn small_term(r: &mut rand_chacha::ChaCha8Rng, bound: bool) -> Expr {
    match r.gen_range(0..6) {
        0 => Expr::var("y"),
        1 if bound => Expr::var("v"),
        2 => Expr::var("z"),
        _ => Expr::int(*SMALL_VALUES.choose(r).unwrap()),
    }
}

fn small_addr(r: &mut rand_chacha::ChaCha8Rng, bound: bool) -> Expr {
    match r.gen_range(0..5) {
        0 => Expr::var("x"),
        1 if bound => Expr::var("v"),
        _ => {
            let base = Expr::addr_of(["g", "h"].choose(r).unwrap());
            Expr::binop(Op::Add, base, Expr::int(r.gen_range(0..4)))
        }
    }
}

fn small_assertion(r: &mut rand_chacha::ChaCha8Rng, depth: usize, bound: bool) -> Assertion {
    if depth <= 1 || r.gen_bool(0.25) {
        return match r.gen_range(0..9) {
            0 => Assertion::Emp,
            1 => Assertion::tt(),
            2 => Assertion::ff(),
            3 => Assertion::Prop(Expr::binop(Op::Cmp(Comparison::Eq), small_term(r, bound), small_term(r, bound))),
            4 => Assertion::Defined(small_term(r, bound)),
            5 => Assertion::Eval(small_term(r, bound), ValueTerm::Lit(Value::int(*SMALL_VALUES.choose(r).unwrap()))),
            6 => Assertion::Expr(Expr::binop(Op::Cmp(Comparison::Le), small_term(r, bound), Expr::int(1))),
            _ => {
                let ch = *[Chunk::Int8Signed, Chunk::Int8Unsigned, Chunk::Int16Signed].choose(r).unwrap();
                Assertion::maps_to(small_addr(r, bound), ch, small_term(r, bound))
            }
        };
    }
    let d = depth - 1;
    match r.gen_range(0..8) {
        0..=2 => Assertion::star(small_assertion(r, d, bound), small_assertion(r, d, bound)),
        3 => Assertion::and(small_assertion(r, d, bound), small_assertion(r, d, bound)),
        4 => Assertion::or(small_assertion(r, d, bound), small_assertion(r, d, bound)),
        5 => Assertion::imp(small_assertion(r, d, bound), small_assertion(r, d, bound)),
        6 => Assertion::not(small_assertion(r, d, bound)),
        _ => Assertion::exists("v", small_assertion(r, d, true)),
    }
}

fn separation() -> Verdict {
    let prog = parse_program("global g[8]; global h[4];").map_err(|e| e.to_string())?;
    let g = prog.symbol("g").unwrap();
    let h = prog.symbol("h").unwrap();
    let mut r = rng(10);
    let (mut compared, mut unknown, mut holds) = (0, 0, 0);
    for case in 0..6000 {
        let st = small_state(&mut r, &prog);
        let depth = r.gen_range(1..=4);
        let a = small_assertion(&mut r, depth, false);
        ensure!(a.depth() <= 4 && st.fp.len() <= 6, "generator out of range");
        let lib = satisfies(&prog, &st, &a, &Env::new());
        if lib.is_unknown() {
            unknown += 1;
            continue;
        }
        let mut witnesses = witness_candidates(&prog, &st, &a, &Env::new());
        witnesses.extend((-2..=3).chain([255]).map(Value::int));
        witnesses.extend((0..8).map(|k| Value::ptr(g, k)).chain((0..4).map(|k| Value::ptr(h, k))));
        let reference = RefChecker { prog: &prog, st: &st, witnesses }.check(&st.fp, &a, &Env::new());
        let lib_bool = matches!(lib, CheckResult::Holds);
        ensure!(reference == Some(lib_bool), "case {case}: checker says {} but reference {reference:?} for {a:?} on {st:?}", lib.label());
        compared += 1;
        holds += lib_bool as usize;
    }
    ensure!(compared >= 1000, "only {compared} definite cases");
    Ok(format!("{compared} cases agree ({holds} hold), {unknown} unknown skipped"))
}

// ---------------------------------------------------------------------------
// 11: list reversal under runtime annotation checking

fn list_reversal() -> Verdict {
    let mut lines = Vec::new();
    for n in [0, 1, 3, 8] {
        let layout = ListLayout::scrambled(n);
        let prog = parse_program(&layout.program(None)).map_err(|e| format!("n={n}: {e}"))?;
        let report = check_function(&prog, "main", &[], CheckConfig::default()).map_err(|e| e.to_string())?;
        ensure!(report.pass, "n={n}:\n{}", report.to_text());
        ensure!(report.checks.iter().all(|c| c.result.is_holds()), "n={n}: a check did not hold");
        let invariants = report.checks.iter().filter(|c| c.kind == CheckKind::Invariant).count();
        ensure!(invariants == n + 1, "n={n}: {invariants} invariant checks");
        for kind in [CheckKind::Requires, CheckKind::Ensures] {
            ensure!(report.checks.iter().any(|c| c.kind == kind && c.function == "rev"), "n={n}: no {kind:?} check");
        }
        let out = run(&prog, "main", &[], 1_000_000).map_err(|e| e.to_string())?;
        let Outcome::Finished { results, state, .. } = out.outcome else {
            return Err(format!("n={n}: {}", out.outcome));
        };
        let walked = walk_list(&state.mem, results[0], n + 1)?;
        let mut expected = layout.values.clone();
        expected.reverse();
        ensure!(walked == expected, "n={n}: walked {walked:?}");
        lines.push(format!("n={n}:{} checks", report.checks.len()));
    }
    let layout = ListLayout::scrambled(3);
    let prog = parse_program(&layout.program(Some(2))).map_err(|e| e.to_string())?;
    let report = check_function(&prog, "main", &[], CheckConfig::default()).map_err(|e| e.to_string())?;
    let fail = report.first_failure().ok_or("seeded bug not caught")?;
    ensure!(!report.pass && fail.kind == CheckKind::Invariant && fail.visit == 3, "seeded bug caught as {:?} visit {}", fail.kind, fail.visit);
    lines.push(format!("seeded bug caught at visit 3, step {}", fail.step));
    Ok(lines.join(", "))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, u64, fn() -> Verdict); 11] = [
        ("small-step rule conformance", 1, rule_cases),
        ("evaluation determinism", 10, determinism),
        ("literals evaluate to themselves", 5, literals),
        ("substitution of evaluated subexpressions", 10, substitution),
        ("erasure refinement on 500 programs", 60, erasure),
        ("small-step vs big-step on 500 programs and 5 mutations", 120, bigstep),
        ("absorption", 30, absorption),
        ("footprint algebra", 10, footprints),
        ("memory model", 30, memory),
        ("separation checker vs exhaustive reference", 60, separation),
        ("list reversal under annotation checking", 10, list_reversal),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = f();
        let took = t.elapsed();
        let ok = verdict.is_ok() && took < Duration::from_secs(*limit);
        let detail = match &verdict {
            Ok(d) => d.clone(),
            Err(e) => e.clone(),
        };
        println!(
            "{} criterion {:>2} {name} [{:.3}s / {limit}s]: {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
