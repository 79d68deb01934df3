//! Seeded generator of small well-formed programs.
//!
//! Every program has a `scratch` global, a `main` returning one value and,
//! when calls are enabled, a couple of leaf functions. Loops are always the
//! bounded `block { loop { if (c >= N) exit 0; ...; c = c + 1; } }` shape,
//! so every generated program either terminates or gets stuck.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::syntax::{ident, Comparison, Expr, FunDef, GlobalVar, Item, Op, Program, Stmt};
use crate::values::{Chunk, Int32, Value};

pub const SCRATCH: &str = "scratch";
pub const SCRATCH_SIZE: u32 = 32;
const VARS: [&str; 4] = ["x0", "x1", "x2", "x3"];
const COUNTERS: [&str; 4] = ["c0", "c1", "c2", "c3"];
const LEAVES: [&str; 2] = ["leaf0", "leaf1"];

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub seed: u64,
    /// Nesting depth of compound statements. Zero gives straight-line code.
    pub max_depth: u32,
    pub max_loop_iters: u32,
    /// Binary and unary integer operators expressions may use.
    pub ops: Vec<Op>,
    pub calls: bool,
    /// Statements per generated sequence.
    pub max_stmts: usize,
}

impl GenConfig {
    pub fn new(seed: u64) -> Self {
        GenConfig {
            seed,
            max_depth: 3,
            max_loop_iters: 4,
            ops: vec![
                Op::Add,
                Op::Sub,
                Op::Mul,
                Op::And,
                Op::Or,
                Op::Xor,
                Op::Shl,
                Op::Shru,
                Op::Divs,
                Op::Modu,
                Op::Cmp(Comparison::Lt),
                Op::Cmp(Comparison::Eq),
                Op::Cmpu(Comparison::Ge),
                Op::Neg,
                Op::Cast8s,
            ],
            calls: true,
            max_stmts: 4,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenConfig { seed, ..self.clone() }
    }
}

struct Gen<'c> {
    cfg: &'c GenConfig,
    rng: ChaCha8Rng,
    in_leaf: bool,
}

impl Gen<'_> {
    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        xs.choose(&mut self.rng).expect("nonempty")
    }

    fn small_int(&mut self) -> Expr {
        if self.rng.gen_bool(0.1) {
            Expr::Val(Value::Int(Int32::new(self.rng.gen())))
        } else {
            Expr::int(self.rng.gen_range(-8..=16))
        }
    }

    fn scratch_addr(&mut self, ch: Chunk) -> Expr {
        let size = ch.size();
        let ofs = if self.rng.gen_bool(0.015) {
            // one past the end: stuck in every semantics
            SCRATCH_SIZE
        } else if self.rng.gen_bool(0.3) {
            SCRATCH_SIZE - size
        } else {
            self.rng.gen_range(0..SCRATCH_SIZE / size) * size
        };
        if ofs == 0 {
            Expr::addr_of(SCRATCH)
        } else {
            Expr::binop(Op::Add, Expr::addr_of(SCRATCH), Expr::int(ofs as i32))
        }
    }

    fn int_chunk(&mut self, p_int32: f64) -> Chunk {
        if self.rng.gen_bool(p_int32) {
            Chunk::Int32
        } else {
            *self.pick(&[Chunk::Int8Signed, Chunk::Int8Unsigned, Chunk::Int16Signed, Chunk::Int16Unsigned])
        }
    }

    fn leaf_var(&mut self) -> Expr {
        if self.in_leaf {
            Expr::var(self.pick(&["a", "b", "t"]))
        } else if self.rng.gen_bool(0.2) {
            Expr::var(self.pick(&COUNTERS))
        } else {
            Expr::var(self.pick(&VARS))
        }
    }

    fn expr(&mut self, depth: u32) -> Expr {
        let roll = self.rng.gen_range(0..10);
        if depth == 0 || roll < 4 {
            return match self.rng.gen_range(0..10) {
                0..=3 => self.small_int(),
                4..=7 => self.leaf_var(),
                _ => {
                    let ch = self.int_chunk(0.9);
                    let addr = self.scratch_addr(ch);
                    Expr::load(ch, addr)
                }
            };
        }
        let op = self.pick(&self.cfg.ops).clone();
        match op.arity() {
            1 => Expr::unop(op, self.expr(depth - 1)),
            _ => {
                let a = self.expr(depth - 1);
                // keep shift amounts in range most of the time
                let b = if matches!(op, Op::Shl | Op::Shru | Op::Shrs) && self.rng.gen_bool(0.9) {
                    Expr::int(self.rng.gen_range(0..32))
                } else {
                    self.expr(depth - 1)
                };
                Expr::binop(op, a, b)
            }
        }
    }

    fn cond(&mut self) -> Expr {
        let c = *self.pick(&[Comparison::Lt, Comparison::Le, Comparison::Eq, Comparison::Ne, Comparison::Gt]);
        let a = self.expr(1);
        let b = self.expr(1);
        Expr::binop(Op::Cmp(c), a, b)
    }

    fn store(&mut self) -> Stmt {
        let ch = self.int_chunk(0.85);
        let v = self.expr(2);
        if self.rng.gen_bool(0.2) {
            let ofs = self.rng.gen_range(0..8 / ch.size()) * ch.size();
            return Stmt::Store(ch, Expr::Op(Op::AddrStack(Int32::new(ofs)), vec![]), v);
        }
        let addr = self.scratch_addr(ch);
        Stmt::Store(ch, addr, v)
    }

    fn seq(&mut self, depth: u32, blocks: u32, loops: usize) -> Vec<Stmt> {
        let n = self.rng.gen_range(1..=self.cfg.max_stmts);
        (0..n).map(|_| self.stmt(depth, blocks, loops)).collect()
    }

    /// A statement at nesting `depth` with `blocks` enclosing blocks and
    /// `loops` enclosing generated loops.
    fn stmt(&mut self, depth: u32, blocks: u32, loops: usize) -> Stmt {
        loop {
            let roll = self.rng.gen_range(0..100);
            match roll {
                0..=29 => {
                    let x = *self.pick(&VARS);
                    return Stmt::assign(x, self.expr(2));
                }
                30..=44 => return self.store(),
                45..=57 if depth > 0 => {
                    let c = self.cond();
                    let a = Stmt::seq_all(self.seq(depth - 1, blocks, loops));
                    let b = if self.rng.gen_bool(0.5) { Stmt::seq_all(self.seq(depth - 1, blocks, loops)) } else { Stmt::Skip };
                    return Stmt::if_(c, a, b);
                }
                58..=67 if depth > 0 => {
                    let mut body = self.seq(depth - 1, blocks + 1, loops);
                    if self.rng.gen_bool(0.95) {
                        let n = if blocks > 0 && self.rng.gen_bool(0.2) { self.rng.gen_range(1..=blocks) } else { 0 };
                        body.push(Stmt::Exit(n));
                    }
                    return Stmt::block(Stmt::seq_all(body));
                }
                68..=79 if depth > 0 && loops < COUNTERS.len() => {
                    let c = COUNTERS[loops];
                    let bound = self.rng.gen_range(0..=self.cfg.max_loop_iters) as i32;
                    let guard = Stmt::if_(
                        Expr::binop(Op::Cmp(Comparison::Ge), Expr::var(c), Expr::int(bound)),
                        Stmt::Exit(0),
                        Stmt::Skip,
                    );
                    let mut body = vec![guard];
                    body.extend(self.seq(depth - 1, blocks + 1, loops + 1));
                    body.push(Stmt::assign(c, Expr::binop(Op::Add, Expr::var(c), Expr::int(1))));
                    return Stmt::seq(
                        Stmt::assign(c, Expr::int(0)),
                        Stmt::block(Stmt::loop_(Stmt::seq_all(body))),
                    );
                }
                80..=86 if blocks > 0 => {
                    // deeper exits matter most: they are what a broken exit rule gets wrong
                    let n = if blocks > 1 && self.rng.gen_bool(0.6) { self.rng.gen_range(1..blocks) } else { 0 };
                    return Stmt::Exit(n);
                }
                87..=95 if self.cfg.calls => {
                    let x = *self.pick(&VARS);
                    let f = *self.pick(&LEAVES);
                    let args = vec![self.expr(1), self.expr(1)];
                    return Stmt::call(&[x], Expr::addr_of(f), args);
                }
                96..=97 => return Stmt::Return(vec![self.expr(1)]),
                _ => {}
            }
        }
    }

    fn leaf(&mut self, name: &str) -> FunDef {
        self.in_leaf = true;
        let mut body = vec![Stmt::assign("t", self.expr(2))];
        if self.rng.gen_bool(0.7) {
            body.push(Stmt::Store(Chunk::Int32, Expr::Op(Op::AddrStack(Int32::new(0)), vec![]), Expr::var("t")));
            body.push(Stmt::assign(
                "t",
                Expr::binop(Op::Add, Expr::load(Chunk::Int32, Expr::Op(Op::AddrStack(Int32::new(0)), vec![])), Expr::var("b")),
            ));
        }
        if self.rng.gen_bool(0.5) {
            body.push(self.store());
        }
        body.push(Stmt::Return(vec![self.expr(1)]));
        self.in_leaf = false;
        FunDef::new(name, &["a", "b"], &["t"], 1, 8, Stmt::seq_all(body))
    }

    fn main(&mut self) -> FunDef {
        let mut body = Vec::new();
        for x in VARS {
            body.push(Stmt::assign(x, Expr::int(self.rng.gen_range(-4..=12))));
        }
        for c in COUNTERS {
            body.push(Stmt::assign(c, Expr::int(0)));
        }
        for k in 0..SCRATCH_SIZE / 4 {
            let addr = Expr::binop(Op::Add, Expr::addr_of(SCRATCH), Expr::int((k * 4) as i32));
            body.push(Stmt::Store(Chunk::Int32, addr, Expr::int(self.rng.gen_range(0..64))));
        }
        body.extend(self.seq(self.cfg.max_depth, 0, 0));
        let ret = Expr::binop(Op::Xor, Expr::var("x0"), Expr::binop(Op::Add, Expr::var("x1"), Expr::var("x2")));
        body.push(Stmt::Return(vec![ret]));
        let locals: Vec<&str> = VARS.iter().chain(&COUNTERS).copied().collect();
        FunDef::new("main", &[], &locals, 1, 8, Stmt::seq_all(body))
    }
}

/// The program for `cfg.seed`. Deterministic in the whole configuration.
pub fn gen_program(cfg: &GenConfig) -> Program {
    let mut g = Gen { cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed), in_leaf: false };
    let mut items = vec![Item::Global(GlobalVar { name: ident(SCRATCH), size: SCRATCH_SIZE })];
    if cfg.calls {
        for name in LEAVES {
            items.push(Item::Function(g.leaf(name)));
        }
    }
    items.push(Item::Function(g.main()));
    Program::new(items, None).expect("generated programs are well formed")
}
