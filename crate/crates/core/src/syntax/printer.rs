use std::fmt::Write;

use super::parser::{infix_level, INFIX_LEVELS};
use super::{Annotation, Expr, FunDef, Item, Op, Program, Stmt};
use crate::assertions::{Assertion, ValueTerm};
use crate::eval::op_mnemonic;
use crate::values::{format_float, Value};

const INDENT: &str = "    ";

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::from("# cminor program\n");
    if let Some(g) = p.gamma() {
        let _ = writeln!(out, "gamma {};", print_assertion(g));
    }
    for item in p.items() {
        match item {
            Item::Global(g) => {
                let _ = writeln!(out, "global {}[{}];", g.name, g.size);
            }
            Item::Function(f) => {
                out.push('\n');
                print_fundef(&mut out, &f);
            }
        }
    }
    out
}

fn print_fundef(out: &mut String, f: &FunDef) {
    let _ = write!(out, "fn {}({}) : {}", f.name, join(&f.params), f.results);
    if !f.aux.is_empty() {
        let _ = write!(out, "\n{INDENT}aux {}", join(&f.aux));
    }
    if let Some(p) = &f.requires {
        let _ = write!(out, "\n{INDENT}requires {}", print_assertion(p));
    }
    if let Some(q) = &f.ensures {
        let _ = write!(out, "\n{INDENT}ensures {}", print_assertion(q));
    }
    out.push_str(" {\n");
    if !f.locals.is_empty() {
        let _ = writeln!(out, "{INDENT}locals {};", join(&f.locals));
    }
    if f.stackspace != 0 {
        let _ = writeln!(out, "{INDENT}stack {};", f.stackspace);
    }
    print_body(out, &f.body, 1);
    out.push_str("}\n");
}

fn join(xs: &[super::Ident]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Print a statement as it appears inside braces. `skip` alone prints as
/// nothing; `{}` parses back to it.
fn print_body(out: &mut String, s: &Stmt, depth: usize) {
    if *s == Stmt::Skip {
        return;
    }
    let mut cur = s;
    while let Stmt::Seq(a, b) = cur {
        print_stmt_at(out, a, depth);
        cur = b;
    }
    print_stmt_at(out, cur, depth);
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn print_braced(out: &mut String, s: &Stmt, depth: usize) {
    out.push_str("{\n");
    print_body(out, s, depth + 1);
    indent(out, depth);
    out.push('}');
}

fn print_stmt_at(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match s {
        Stmt::Skip => out.push_str("skip;"),
        Stmt::Assign(x, e) => {
            let _ = write!(out, "{x} = {};", print_expr(e));
        }
        Stmt::Store(ch, a, v) => {
            let _ = write!(out, "store {ch}[{}] = {};", print_expr(a), print_expr(v));
        }
        Stmt::Seq(..) => print_braced(out, s, depth),
        Stmt::If(c, a, b) => {
            let _ = write!(out, "if ({}) ", print_expr(c));
            print_braced(out, a, depth);
            if **b != Stmt::Skip {
                out.push_str(" else ");
                print_braced(out, b, depth);
            }
        }
        Stmt::Loop(b) => {
            out.push_str("loop ");
            print_braced(out, b, depth);
        }
        Stmt::Block(b) => {
            out.push_str("block ");
            print_braced(out, b, depth);
        }
        Stmt::Exit(n) => {
            let _ = write!(out, "exit {n};");
        }
        Stmt::Call(dests, _, callee, args) => {
            if !dests.is_empty() {
                let _ = write!(out, "({}) = ", join(dests));
            }
            let args: Vec<String> = args.iter().map(print_expr).collect();
            let _ = write!(out, "call {}({});", print_callee(callee), args.join(", "));
        }
        Stmt::Return(es) => {
            if es.is_empty() {
                out.push_str("return;");
            } else {
                let es: Vec<String> = es.iter().map(print_expr).collect();
                let _ = write!(out, "return {};", es.join(", "));
            }
        }
        Stmt::Annot(..) => print_annotated(out, s, depth),
    }
    out.push('\n');
}

fn print_annotated(out: &mut String, s: &Stmt, depth: usize) {
    let annots: Vec<&Annotation> = s.annotations().collect();
    let inner = s.peel();
    let all = |f: fn(&Annotation) -> bool| annots.iter().all(|a| f(a));
    match inner {
        Stmt::Loop(b) if all(|a| matches!(a, Annotation::Invariant(_))) => {
            out.push_str("loop ");
            for a in &annots {
                if let Annotation::Invariant(x) = a {
                    let _ = write!(out, "invariant {} ", print_assertion(x));
                }
            }
            print_braced(out, b, depth);
        }
        Stmt::Block(b) if all(|a| matches!(a, Annotation::BlockExit(_))) => {
            out.push_str("block ");
            for a in &annots {
                if let Annotation::BlockExit(x) = a {
                    let _ = write!(out, "exits {} ", print_assertion(x));
                }
            }
            print_braced(out, b, depth);
        }
        Stmt::Skip if annots.len() == 1 && all(|a| matches!(a, Annotation::Assert(_))) => {
            if let Annotation::Assert(x) = annots[0] {
                let _ = write!(out, "assert {};", print_assertion(x));
            }
        }
        // Other shapes have no concrete syntax; keep the annotations as
        // comments and print the statement itself.
        _ => {
            for a in &annots {
                let (kind, x) = match a {
                    Annotation::Invariant(x) => ("invariant", x),
                    Annotation::BlockExit(x) => ("exits", x),
                    Annotation::Assert(x) => ("assert", x),
                };
                let _ = writeln!(out, "# {kind} {}", print_assertion(x));
                indent(out, depth);
            }
            let mut tmp = String::new();
            print_stmt_at(&mut tmp, inner, 0);
            out.push_str(tmp.trim_end_matches('\n'));
        }
    }
}

pub fn print_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    print_stmt_at(&mut out, s, 0);
    out.truncate(out.trim_end().len());
    out
}

fn print_callee(e: &Expr) -> String {
    match e {
        Expr::Var(_) | Expr::Op(Op::AddrSymbol(_), _) => print_expr(e),
        Expr::Val(v) if !matches!(v, Value::Int(i) if i.signed() < 0) && !matches!(v, Value::Float(_)) => print_expr(e),
        _ => format!("({})", print_expr(e)),
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr_at(&mut out, e, 0, false);
    out
}

fn value_literal(v: &Value) -> String {
    match v {
        Value::Undef => "undef".into(),
        Value::Int(i) => i.to_string(),
        Value::Ptr(b, o) => format!("ptr({}, {})", b.0, o),
        Value::Float(x) => format_float(*x),
    }
}

/// Print `e` where a binding strength of at least `min` is required.
/// `no_star` marks positions where a bare `*` would end the expression.
fn expr_at(out: &mut String, e: &Expr, min: usize, no_star: bool) {
    match e {
        Expr::Val(v) => out.push_str(&value_literal(v)),
        Expr::Var(x) => out.push_str(x),
        Expr::Load(ch, a) => {
            let _ = write!(out, "{ch}[");
            expr_at(out, a, 0, false);
            out.push(']');
        }
        Expr::Op(op, args) => {
            if let (Some((lvl, sym)), [a, b]) = (infix_level(op), args.as_slice()) {
                let wrap = lvl < min || (no_star && *op == Op::Mul);
                if wrap {
                    out.push('(');
                }
                let inner_no_star = no_star && !wrap;
                expr_at(out, a, lvl, inner_no_star);
                let _ = write!(out, " {sym} ");
                expr_at(out, b, lvl + 1, inner_no_star);
                if wrap {
                    out.push(')');
                }
                return;
            }
            match (op, args.as_slice()) {
                (Op::IntConst(i), []) => {
                    let _ = write!(out, "intconst({i})");
                }
                (Op::FloatConst(x), []) => {
                    let _ = write!(out, "floatconst({})", format_float(*x));
                }
                (Op::AddrSymbol(s), []) => {
                    let _ = write!(out, "&{s}");
                }
                (Op::AddrStack(i), []) => {
                    let _ = write!(out, "stack({i})");
                }
                (Op::Neg, [a]) => {
                    out.push_str("-(");
                    expr_at(out, a, 0, false);
                    out.push(')');
                }
                (Op::NotInt, [a]) => {
                    out.push('~');
                    expr_at(out, a, INFIX_LEVELS, no_star);
                }
                _ => {
                    let name = match op {
                        Op::Cmp(c) => format!("cmp_{}", c.mnemonic()),
                        Op::Cmpu(c) => format!("cmpu_{}", c.mnemonic()),
                        Op::Cmpf(c) => format!("cmpf_{}", c.mnemonic()),
                        other => op_mnemonic(other).to_string(),
                    };
                    out.push_str(&name);
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        expr_at(out, a, 0, false);
                    }
                    out.push(')');
                }
            }
        }
    }
}

fn prec(a: &Assertion) -> usize {
    match a {
        Assertion::Exists(..) => 0,
        Assertion::Imp(..) => 1,
        Assertion::Or(..) => 2,
        Assertion::And(..) => 3,
        Assertion::Star(..) => 4,
        Assertion::Not(..) => 5,
        _ => 6,
    }
}

pub fn print_assertion(a: &Assertion) -> String {
    let mut out = String::new();
    assertion_at(&mut out, a, 0);
    out
}

fn assertion_at(out: &mut String, a: &Assertion, min: usize) {
    let wrap = prec(a) < min;
    if wrap {
        out.push('(');
    }
    match a {
        Assertion::Emp => out.push_str("emp"),
        Assertion::Prop(Expr::Val(Value::Int(i))) if i.unsigned() == 1 => out.push_str("true"),
        Assertion::Prop(Expr::Val(Value::Int(i))) if i.unsigned() == 0 => out.push_str("false"),
        Assertion::Prop(e) => {
            let _ = write!(out, "prop({})", print_expr(e));
        }
        Assertion::Defined(e) => {
            let _ = write!(out, "defined({})", print_expr(e));
        }
        Assertion::Expr(e) => {
            let _ = write!(out, "[{}]", print_expr(e));
        }
        Assertion::Eval(e, t) => {
            expr_at(out, e, 0, true);
            out.push_str(" ==> ");
            match t {
                ValueTerm::Lit(v) => out.push_str(&value_literal(v)),
                ValueTerm::Logic(x) => out.push_str(x),
            }
        }
        Assertion::MapsTo(p, ch, v) => {
            atom_expr(out, p);
            let _ = write!(out, " |->[{ch}] ");
            atom_expr(out, v);
        }
        Assertion::Star(p, q) => binary(out, p, " * ", q, 4),
        Assertion::And(p, q) => binary(out, p, " && ", q, 3),
        Assertion::Or(p, q) => binary(out, p, " || ", q, 2),
        Assertion::Imp(p, q) => {
            assertion_at(out, p, 2);
            out.push_str(" => ");
            assertion_at(out, q, 1);
        }
        Assertion::Not(p) => {
            out.push('!');
            assertion_at(out, p, 5);
        }
        Assertion::Exists(x, p) => {
            let _ = write!(out, "exists {x}. ");
            assertion_at(out, p, 0);
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Expression operand of `|->`: parenthesize anything beginning with `(`
/// so it is not read as a parenthesized assertion.
fn atom_expr(out: &mut String, e: &Expr) {
    expr_at(out, e, 0, true);
}

fn binary(out: &mut String, p: &Assertion, sym: &str, q: &Assertion, lvl: usize) {
    assertion_at(out, p, lvl);
    out.push_str(sym);
    assertion_at(out, q, lvl + 1);
}
