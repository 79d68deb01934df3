//! Fixtures and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cminor::assertions::{Assertion, ValueTerm};
use cminor::eval::{Env, EvalError, Evaluator, Layered, State};
use cminor::footprint::{Footprint, Share};
use cminor::memory::Memory;
use cminor::syntax::{ident, parse_program, Comparison, Expr, Op, Program, Stmt};
use cminor::values::{BlockId, Chunk, Int32, Value};

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// random states and expressions

pub const VARS: [&str; 4] = ["x", "y", "z", "p"];

/// Two globals `g` (16 bytes) and `h` (8 bytes) and a function `f`.
pub fn fixture_program() -> Program {
    parse_program("global g[16]; global h[8]; fn f() : 0 { return; }").unwrap()
}

pub fn random_int(rng: &mut ChaCha8Rng) -> Value {
    match rng.gen_range(0..4) {
        0 => Value::int(0),
        1 => Value::int(rng.gen_range(-4..8)),
        2 => Value::Int(Int32::new(rng.gen())),
        _ => Value::int(*[1, -1, i32::MIN, i32::MAX, 31, 32].choose(rng).unwrap()),
    }
}

pub fn random_value(rng: &mut ChaCha8Rng, blocks: &[BlockId]) -> Value {
    match rng.gen_range(0..10) {
        0 => Value::Undef,
        1..=4 => random_int(rng),
        5..=7 if !blocks.is_empty() => {
            let b = *blocks.choose(rng).unwrap();
            Value::ptr(b, rng.gen_range(0..5) * 4)
        }
        _ => Value::Float(*[0.0, -0.0, 1.5, -2.25, f64::NAN, f64::INFINITY, 1e300].choose(rng).unwrap()),
    }
}

/// The fixture program's initial memory plus a 16-byte stack block, some
/// random stores, random locals and a random footprint.
pub fn random_state(rng: &mut ChaCha8Rng, prog: &Program) -> State {
    let mut mem = prog.initial_memory().clone();
    let sp = mem.alloc(0, 16).unwrap();
    let g = prog.symbol("g").unwrap();
    let h = prog.symbol("h").unwrap();
    let blocks = [g, h, sp];
    for _ in 0..rng.gen_range(0..8) {
        let ch = *Chunk::ALL.choose(rng).unwrap();
        let b = *blocks.choose(rng).unwrap();
        let ofs = rng.gen_range(0..4) * ch.size() as i32;
        let v = random_value(rng, &blocks);
        let _ = mem.store(ch, Value::ptr(b, ofs), v);
    }
    let mut fp = Footprint::new();
    for (b, size) in [(g, 16), (h, 8), (sp, 16)] {
        let share = match rng.gen_range(0..3) {
            0 => continue,
            1 => Share::FULL.half(),
            _ => Share::FULL,
        };
        fp = fp.grant(b, 0, size, share).unwrap();
    }
    let mut env = Env::new();
    for x in VARS {
        if rng.gen_bool(0.9) {
            env.insert(ident(x), random_value(rng, &blocks));
        }
    }
    State { sp: Some(sp), env, fp, mem }
}

const BINOPS: [Op; 22] = [
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Divs,
    Op::Divu,
    Op::Mods,
    Op::Modu,
    Op::And,
    Op::Or,
    Op::Xor,
    Op::Shl,
    Op::Shrs,
    Op::Shru,
    Op::Cmp(Comparison::Eq),
    Op::Cmp(Comparison::Lt),
    Op::Cmpu(Comparison::Ge),
    Op::Cmpf(Comparison::Le),
    Op::Cmpf(Comparison::Ne),
    Op::AddF,
    Op::SubF,
    Op::MulF,
    Op::DivF,
];

const UNOPS: [Op; 10] =
    [Op::Neg, Op::NotInt, Op::NegF, Op::IntOfFloat, Op::FloatOfInt, Op::FloatOfIntU, Op::Cast8s, Op::Cast8u, Op::Cast16s, Op::Cast16u];

pub fn random_expr(rng: &mut ChaCha8Rng, depth: u32, blocks: &[BlockId], loads: bool) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..6) {
            0 | 1 => Expr::Val(random_value(rng, blocks)),
            2 | 3 => Expr::var(if rng.gen_bool(0.95) { VARS.choose(rng).unwrap() } else { "unbound" }),
            4 => Expr::addr_of(["g", "h", "f"].choose(rng).unwrap()),
            _ => Expr::Op(Op::AddrStack(Int32::new(rng.gen_range(0..4) * 4)), vec![]),
        };
    }
    match rng.gen_range(0..10) {
        0..=5 => {
            let op = BINOPS.choose(rng).unwrap().clone();
            Expr::binop(op, random_expr(rng, depth - 1, blocks, loads), random_expr(rng, depth - 1, blocks, loads))
        }
        6 | 7 => Expr::unop(UNOPS.choose(rng).unwrap().clone(), random_expr(rng, depth - 1, blocks, loads)),
        _ if loads => {
            let ch = *Chunk::ALL.choose(rng).unwrap();
            let base = Expr::addr_of(["g", "h"].choose(rng).unwrap());
            let addr = if rng.gen_bool(0.7) {
                Expr::binop(Op::Add, base, Expr::int(rng.gen_range(0..4) * ch.size() as i32))
            } else {
                random_expr(rng, depth - 1, blocks, loads)
            };
            Expr::load(ch, addr)
        }
        _ => Expr::Val(random_value(rng, blocks)),
    }
}

/// A random statement over the fixture variables. Exits may name blocks
/// that do not enclose them; loops are bounded only by the fuel of whoever
/// runs them.
pub fn random_stmt(rng: &mut ChaCha8Rng, depth: u32, blocks: &[BlockId]) -> Stmt {
    let leaf = |rng: &mut ChaCha8Rng| match rng.gen_range(0..5) {
        0 => Stmt::Skip,
        1 => Stmt::Exit(rng.gen_range(0..3)),
        2 => Stmt::Store(
            *[Chunk::Int32, Chunk::Int8Signed, Chunk::Int16Unsigned].choose(rng).unwrap(),
            Expr::binop(Op::Add, Expr::addr_of(["g", "h"].choose(rng).unwrap()), Expr::int(rng.gen_range(0..2) * 4)),
            random_expr(rng, 1, blocks, false),
        ),
        _ => Stmt::assign(VARS.choose(rng).unwrap(), random_expr(rng, 2, blocks, true)),
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.gen_range(0..7) {
        0 | 1 => Stmt::seq(random_stmt(rng, depth - 1, blocks), random_stmt(rng, depth - 1, blocks)),
        2 => Stmt::if_(
            random_expr(rng, 1, blocks, false),
            random_stmt(rng, depth - 1, blocks),
            random_stmt(rng, depth - 1, blocks),
        ),
        3 => Stmt::block(random_stmt(rng, depth - 1, blocks)),
        4 => Stmt::loop_(random_stmt(rng, depth - 1, blocks)),
        _ => leaf(rng),
    }
}

/// Blocks of the fixture program plus the state's stack block.
pub fn state_blocks(prog: &Program, st: &State) -> Vec<BlockId> {
    let mut v = vec![prog.symbol("g").unwrap(), prog.symbol("h").unwrap()];
    v.extend(st.sp);
    v
}

// ---------------------------------------------------------------------------
// reference memory: a plain map from (block, byte) to what was stored

#[derive(Clone, Copy, Debug, PartialEq)]
struct RefByte {
    value: Value,
    chunk: Chunk,
    index: usize,
}

#[derive(Clone, Debug)]
struct RefBlock {
    lo: i64,
    hi: i64,
    live: bool,
    bytes: HashMap<i64, RefByte>,
}

#[derive(Clone, Debug, Default)]
pub struct RefMemory {
    blocks: Vec<RefBlock>,
}

/// Truncate and re-extend `v` for chunk `ch`, written without the
/// library's helpers.
pub fn ref_normalize(ch: Chunk, v: Value) -> Value {
    match (ch, v) {
        (Chunk::Int8Signed, Value::Int(i)) => Value::int(i.unsigned() as u8 as i8 as i32),
        (Chunk::Int8Unsigned, Value::Int(i)) => Value::int((i.unsigned() & 0xff) as i32),
        (Chunk::Int16Signed, Value::Int(i)) => Value::int(i.unsigned() as u16 as i16 as i32),
        (Chunk::Int16Unsigned, Value::Int(i)) => Value::int((i.unsigned() & 0xffff) as i32),
        (Chunk::Int32, Value::Int(_) | Value::Ptr(..)) => v,
        (Chunk::Float32, Value::Float(x)) => Value::Float((x as f32) as f64),
        (Chunk::Float64, Value::Float(_)) => v,
        _ => Value::Undef,
    }
}

fn chunk_width(ch: Chunk) -> i64 {
    match ch {
        Chunk::Int8Signed | Chunk::Int8Unsigned => 1,
        Chunk::Int16Signed | Chunk::Int16Unsigned => 2,
        Chunk::Int32 | Chunk::Float32 => 4,
        Chunk::Float64 => 8,
    }
}

impl RefMemory {
    pub fn alloc(&mut self, lo: i64, hi: i64) -> Option<BlockId> {
        if lo > hi {
            return None;
        }
        self.blocks.push(RefBlock { lo, hi, live: true, bytes: HashMap::new() });
        Some(BlockId(self.blocks.len() as u32 - 1))
    }

    pub fn free(&mut self, b: BlockId) -> bool {
        match self.blocks.get_mut(b.0 as usize) {
            Some(blk) if blk.live => {
                blk.live = false;
                true
            }
            _ => false,
        }
    }

    fn range(&self, ch: Chunk, addr: Value) -> Option<(usize, i64)> {
        let Value::Ptr(b, o) = addr else { return None };
        let blk = self.blocks.get(b.0 as usize)?;
        let o = o.signed() as i64;
        let w = chunk_width(ch);
        (blk.live && o >= blk.lo && o + w <= blk.hi && o.rem_euclid(w) == 0).then_some((b.0 as usize, o))
    }

    pub fn load(&self, ch: Chunk, addr: Value) -> Option<Value> {
        let (b, o) = self.range(ch, addr)?;
        let blk = &self.blocks[b];
        let first = blk.bytes.get(&o);
        let ok = (0..chunk_width(ch)).all(|k| match (blk.bytes.get(&(o + k)), first) {
            (Some(byte), Some(f)) => byte.chunk == ch && byte.index == k as usize && byte.value == f.value,
            _ => false,
        });
        Some(if ok { first.unwrap().value } else { Value::Undef })
    }

    pub fn store(&mut self, ch: Chunk, addr: Value, v: Value) -> bool {
        let Some((b, o)) = self.range(ch, addr) else { return false };
        let value = ref_normalize(ch, v);
        for k in 0..chunk_width(ch) {
            self.blocks[b].bytes.insert(o + k, RefByte { value, chunk: ch, index: k as usize });
        }
        true
    }
}

// ---------------------------------------------------------------------------
// reference assertion checker: every whole-share split, a fixed witness pool

/// Three-valued result: `None` is "unknown".
pub type Tri = Option<bool>;

fn tri_and(a: Tri, b: Tri) -> Tri {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn tri_or(a: Tri, b: Tri) -> Tri {
    tri_and(a.map(|x| !x), b.map(|x| !x)).map(|x| !x)
}

pub struct RefChecker<'a> {
    pub prog: &'a Program,
    pub st: &'a State,
    pub witnesses: Vec<Value>,
}

impl RefChecker<'_> {
    fn eval(&self, e: &Expr, logic: &Env) -> Result<Value, EvalError> {
        let vars = Layered { locals: &self.st.env, logic };
        Evaluator { prog: self.prog, sp: self.st.sp, vars: &vars, fp: None, mem: &self.st.mem }.eval(e)
    }

    pub fn check(&self, fp: &Footprint, a: &Assertion, logic: &Env) -> Tri {
        match a {
            Assertion::Emp => Some(fp.is_empty()),
            Assertion::And(p, q) => tri_and(self.check(fp, p, logic), self.check(fp, q, logic)),
            Assertion::Or(p, q) => tri_or(self.check(fp, p, logic), self.check(fp, q, logic)),
            Assertion::Imp(p, q) => tri_or(self.check(fp, p, logic).map(|x| !x), self.check(fp, q, logic)),
            Assertion::Not(p) => self.check(fp, p, logic).map(|x| !x),
            Assertion::Prop(e) => Some(self.eval(e, logic).is_ok_and(|v| v.is_true())),
            Assertion::Eval(e, t) => {
                let want = match t {
                    ValueTerm::Lit(v) => Some(*v),
                    ValueTerm::Logic(x) => logic.get(x).copied(),
                };
                Some(fp.is_empty() && want.is_some() && self.eval(e, logic).ok() == want)
            }
            Assertion::Expr(e) => Some(fp.is_empty() && self.eval(e, logic).is_ok_and(|v| v.is_true())),
            Assertion::Defined(e) => Some(
                fp.is_empty()
                    && match self.eval(e, logic) {
                        Ok(Value::Int(_) | Value::Ptr(..)) => true,
                        Ok(Value::Float(x)) => !x.is_nan(),
                        _ => false,
                    },
            ),
            Assertion::MapsTo(ea, ch, ev) => {
                let (Ok(addr), Ok(v)) = (self.eval(ea, logic), self.eval(ev, logic)) else {
                    return Some(false);
                };
                let Value::Ptr(b, o) = addr else { return Some(false) };
                if matches!(v, Value::Undef) {
                    return Some(false);
                }
                let lo = o.signed() as i64;
                let cells: Vec<_> = (lo..lo + chunk_width(*ch)).map(|k| (b, k)).collect();
                let exact = fp.len() == cells.len() && cells.iter().all(|c| fp.share(*c) == Share::FULL);
                Some(exact && self.st.mem.load(*ch, addr).ok() == Some(v))
            }
            Assertion::Star(p, q) => {
                let entries: Vec<_> = fp.iter().collect();
                let mut acc = Some(false);
                for mask in 0u32..(1 << entries.len()) {
                    let l = Footprint::from_entries(
                        entries.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e),
                    );
                    let r = Footprint::from_entries(
                        entries.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 0).map(|(_, e)| *e),
                    );
                    acc = tri_or(acc, tri_and(self.check(&l, p, logic), self.check(&r, q, logic)));
                }
                acc
            }
            Assertion::Exists(x, p) => {
                let mut logic = logic.clone();
                for w in &self.witnesses {
                    logic.insert(x.clone(), *w);
                    if self.check(fp, p, &logic) == Some(true) {
                        return Some(true);
                    }
                }
                None
            }
        }
    }
}

// ---------------------------------------------------------------------------
// list reversal fixture

/// Cell layout of a linked list inside the `heap` global: each cell is 8
/// bytes, value then next pointer.
#[derive(Clone, Debug)]
pub struct ListLayout {
    pub values: Vec<i32>,
    /// Byte offset of each cell, in list order.
    pub offsets: Vec<u32>,
}

impl ListLayout {
    /// `n` cells with values 10, 20, ... placed in a scrambled order.
    pub fn scrambled(n: usize) -> Self {
        let mut offsets: Vec<u32> = (0..n as u32).map(|i| i * 8).collect();
        // deterministic shuffle: rotate and reverse halves
        offsets.rotate_left(n / 2);
        offsets.reverse();
        ListLayout { values: (1..=n as i32).map(|i| i * 10).collect(), offsets }
    }

    pub fn heap_size(&self) -> usize {
        (self.values.len() * 8).max(8)
    }

    fn addr(&self, k: usize) -> String {
        match self.offsets.get(k) {
            Some(0) => "&heap".into(),
            Some(o) => format!("&heap + {o}"),
            None => "0".into(),
        }
    }

    /// Address of cell `k`, or null when `k` is out of range either way.
    fn ptr(&self, k: isize) -> String {
        if k < 0 {
            "0".into()
        } else {
            self.addr(k as usize)
        }
    }

    fn field(&self, k: usize, plus: u32) -> String {
        let o = self.offsets[k] + plus;
        if o == 0 {
            "&heap".into()
        } else {
            format!("&heap + {o}")
        }
    }

    /// Heap cells after `k` reversal iterations.
    fn cells(&self, k: usize) -> Vec<String> {
        let n = self.values.len();
        (0..n)
            .flat_map(|j| {
                let next = if j < k { self.ptr(j as isize - 1) } else { self.ptr(j as isize + 1) };
                [format!("{} |->[i32] {}", self.field(j, 0), self.values[j]), format!("{} |->[i32] {next}", self.field(j, 4))]
            })
            .collect()
    }

    fn shape(&self, k: usize, head: &str, p: &str, q: Option<&str>) -> String {
        let mut parts = vec![format!("[{head} == {p}]")];
        if let Some(q) = q {
            parts.push(format!("[q == {q}]"));
        }
        parts.extend(self.cells(k));
        parts.push("true".into());
        parts.join(" * ")
    }

    /// Source of the annotated reversal program. With `bug = Some(k)` the
    /// invariant's shape for iteration `k` names the wrong `q`.
    pub fn program(&self, bug: Option<usize>) -> String {
        let n = self.values.len();
        let inv: Vec<String> = (0..=n)
            .map(|k| {
                let q = if bug == Some(k) { "&heap + 1000".to_string() } else { self.ptr(k as isize - 1) };
                format!("({})", self.shape(k, "p", &self.ptr(k as isize), Some(&q)))
            })
            .collect();
        let pre = self.shape(0, "p", &self.ptr(0), None);
        let post = self.shape(n, "ret0", &self.ptr(n as isize - 1), None);
        let mut build = String::new();
        for j in 0..n {
            build.push_str(&format!("    store i32[{}] = {};\n", self.field(j, 0), self.values[j]));
            build.push_str(&format!("    store i32[{}] = {};\n", self.field(j, 4), self.ptr(j as isize + 1)));
        }
        format!(
            "global heap[{size}];\n\n\
             fn rev(p) : 1\n    requires {pre}\n    ensures {post}\n{{\n    locals q, t;\n    q = 0;\n    block {{\n        \
             loop invariant {inv} {{\n            if (p == 0) {{ exit 0; }}\n            t = i32[p + 4];\n            \
             store i32[p + 4] = q;\n            q = p;\n            p = t;\n        }}\n    }}\n    return q;\n}}\n\n\
             fn main() : 1 {{\n    locals r;\n{build}    r = call &rev({head});\n    return r;\n}}\n",
            size = self.heap_size(),
            inv = inv.join("\n            || "),
            head = self.ptr(0),
        )
    }
}

/// Follow next pointers from `head` through `mem`, reading values, without
/// going through the semantics. Stops at null; fails on a cycle or a
/// malformed cell.
pub fn walk_list(mem: &Memory, head: Value, limit: usize) -> Result<Vec<i32>, String> {
    let mut out = Vec::new();
    let mut cur = head;
    loop {
        match cur {
            Value::Int(i) if i.is_zero() => return Ok(out),
            Value::Ptr(b, o) => {
                if out.len() >= limit {
                    return Err("list longer than expected".into());
                }
                let v = mem.load(Chunk::Int32, cur).map_err(|e| e.to_string())?;
                let Value::Int(v) = v else { return Err(format!("cell value {v} is not an integer")) };
                out.push(v.signed());
                cur = mem.load(Chunk::Int32, Value::Ptr(b, o.add(Int32::new(4)))).map_err(|e| e.to_string())?;
            }
            other => return Err(format!("bad link {other}")),
        }
    }
}
