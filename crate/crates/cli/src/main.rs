//! `cminor`: run, check, cross-test and format Cminor programs.
//!
//! Exit codes: 0 success, 1 check or difftest failure, 2 stuck run,
//! 3 run out of fuel, 64 usage error, 65 parse error, 66 unreadable input,
//! 73 unwritable output file.

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cminor::eval::{Env, State};
use cminor::footprint::{Footprint, Share};
use cminor::hoare::{check_function, CheckConfig};
use cminor::oracle::{
    difftest_erasure, difftest_erasure_with, difftest_mutation, difftest_smallstep_vs_bigstep, GenConfig,
};
use cminor::smallstep::{max_absorb, run_with, Absorption, Mutation, NoObserver, Outcome, Semantics, Tracer};
use cminor::syntax::{parse_expr, parse_program, pretty_print, Expr, Program};
use cminor::values::Value;

const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_NOINPUT: u8 = 66;
const EX_CANTCREAT: u8 = 73;

#[derive(Parser)]
#[command(name = "cminor", version, about = "Executable semantics workbench for sequential Cminor")]
struct Cli {
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunTarget {
    file: PathBuf,
    #[arg(long, default_value = "main")]
    entry: String,
    /// Integer or float literals passed to the entry function.
    #[arg(long, num_args = 0.., allow_negative_numbers = true)]
    args: Vec<String>,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiffMode {
    Bigstep,
    Erasure,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationName {
    Exit,
    Loop,
    Store,
    Return,
    Block,
    Stack,
}

impl MutationName {
    fn mutation(self) -> Mutation {
        match self {
            MutationName::Exit => Mutation::ExitKeepsBlock,
            MutationName::Loop => Mutation::LoopRunsOnce,
            MutationName::Store => Mutation::StorePermissionOffByOneChunk,
            MutationName::Return => Mutation::ReturnDropsResults,
            MutationName::Block => Mutation::BlockNotPushed,
            MutationName::Stack => Mutation::SkipStackGrant,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a function and print its outcome.
    Run {
        #[command(flatten)]
        target: RunTarget,
        /// Skip all footprint checks.
        #[arg(long)]
        erased: bool,
        /// Print one line per step before the outcome.
        #[arg(long)]
        trace: bool,
    },
    /// Run a function and check its annotations along the way.
    Check {
        #[command(flatten)]
        target: RunTarget,
        /// Unknown results fail the check (default).
        #[arg(long, conflicts_with = "permissive")]
        strict: bool,
        /// Unknown results do not fail the check.
        #[arg(long)]
        permissive: bool,
        #[arg(long)]
        json: bool,
    },
    /// Compare semantics on generated programs.
    Difftest {
        #[arg(long, value_enum)]
        mode: DiffMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Plant a fault in the small-step machine.
        #[arg(long, value_enum)]
        mutation: Option<MutationName>,
        #[arg(long)]
        json: bool,
    },
    /// How many steps the K-th top-level statement of the entry function
    /// runs before it needs the rest of the program.
    Absorb {
        file: PathBuf,
        #[arg(long)]
        stmt_index: usize,
        #[arg(long, default_value = "main")]
        entry: String,
        #[arg(long, default_value_t = 1000)]
        bound: u64,
    },
    /// Pretty-print a program and confirm the output parses back to itself.
    Fmt { file: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn color_enabled() -> bool {
    std::env::var("CMINOR_COLOR").map(|v| v != "0").unwrap_or(true) && std::io::stdout().is_terminal()
}

fn paint(text: &str, code: &str, on: bool) -> String {
    if on {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn load(path: &Path) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| fail(EX_NOINPUT, format!("{}: {e}", path.display())))?;
    parse_program(&src).map_err(|e| fail(EX_DATAERR, format!("{}: {e}", path.display())))
}

fn parse_args(args: &[String]) -> Result<Vec<Value>, Failure> {
    args.iter()
        .map(|a| match parse_expr(a) {
            Ok(Expr::Val(v @ (Value::Int(_) | Value::Float(_)))) => Ok(v),
            _ => Err(fail(EX_USAGE, format!("argument `{a}` is not an integer or float literal"))),
        })
        .collect()
}

/// Globals held in full, every variable of `entry` undefined, no stack.
fn absorb_state(prog: &Program, entry: &str) -> Result<State, Failure> {
    let f = prog.function(entry).ok_or_else(|| fail(EX_USAGE, format!("no function named `{entry}`")))?;
    let mut fp = Footprint::new();
    for (b, g) in prog.data_blocks() {
        fp = fp.grant(b, 0, g.size as i64, Share::FULL).expect("globals are disjoint");
    }
    let mut env = Env::new();
    for x in f.params.iter().chain(&f.locals) {
        env.insert(x.clone(), Value::Undef);
    }
    Ok(State { sp: None, env, fp, mem: prog.initial_memory().clone() })
}

fn execute(cli: Cli, color: bool) -> Result<(String, u8), Failure> {
    match cli.command {
        Command::Run { target, erased, trace } => {
            let prog = load(&target.file)?;
            let args = parse_args(&target.args)?;
            let sem = if erased { Semantics::ERASED } else { Semantics::FOOTPRINT };
            let mut out = String::new();
            let result = if trace {
                let mut t = Tracer::default();
                let r = run_with(&prog, &target.entry, &args, target.fuel, sem, &mut t);
                for l in t.lines {
                    out.push_str(&l);
                    out.push('\n');
                }
                r
            } else {
                run_with(&prog, &target.entry, &args, target.fuel, sem, &mut NoObserver)
            }
            .map_err(|e| fail(EX_USAGE, e.to_string()))?;
            let (code, style) = match result.outcome {
                Outcome::Finished { .. } => (0, "32"),
                Outcome::Stuck { .. } => (2, "31"),
                Outcome::OutOfFuel { .. } => (3, "33"),
            };
            out.push_str(&paint(&result.outcome.to_string(), style, color));
            out.push('\n');
            Ok((out, code))
        }
        Command::Check { target, strict: _, permissive, json } => {
            let prog = load(&target.file)?;
            let args = parse_args(&target.args)?;
            let cfg = CheckConfig { fuel: target.fuel, strict: !permissive };
            let report = check_function(&prog, &target.entry, &args, cfg).map_err(|e| fail(EX_USAGE, e.to_string()))?;
            let text = if json { report.to_json() + "\n" } else { report.to_text() };
            Ok((text, if report.pass { 0 } else { 1 }))
        }
        Command::Difftest { mode, seed, count, mutation, json } => {
            let cfg = GenConfig::new(seed);
            let m = mutation.map(MutationName::mutation);
            let report = match (mode, m) {
                (DiffMode::Bigstep, None) => difftest_smallstep_vs_bigstep(&cfg, count),
                (DiffMode::Bigstep, Some(m)) => difftest_mutation(&cfg, count, m),
                (DiffMode::Erasure, None) => difftest_erasure(&cfg, count),
                (DiffMode::Erasure, m) => difftest_erasure_with(&cfg, count, m),
            };
            let text = if json { report.to_json() + "\n" } else { report.to_text() };
            Ok((text, if report.passed() { 0 } else { 1 }))
        }
        Command::Absorb { file, stmt_index, entry, bound } => {
            let prog = load(&file)?;
            let st = absorb_state(&prog, &entry)?;
            let body = prog.function(&entry).expect("checked above").body.clone();
            let stmts = body.flatten_seq();
            let s = stmts.get(stmt_index).ok_or_else(|| {
                fail(EX_USAGE, format!("`{entry}` has {} top-level statements, no index {stmt_index}", stmts.len()))
            })?;
            let line = match max_absorb(&prog, s, &st, bound) {
                Absorption::Exactly(n) => format!("absorbs exactly {n} steps"),
                Absorption::AtLeastBound(n) => format!("absorbs at least {n} steps (bound reached)"),
            };
            Ok((line + "\n", 0))
        }
        Command::Fmt { file } => {
            let prog = load(&file)?;
            let text = pretty_print(&prog);
            let again = parse_program(&text).map_err(|e| fail(1, format!("formatted output does not parse: {e}")))?;
            if pretty_print(&again) != text {
                return Err(fail(1, "formatting is not a fixpoint"));
            }
            Ok((text, 0))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EX_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let output = cli.output.clone();
    let color = output.is_none() && color_enabled();
    match execute(cli, color) {
        Ok((text, code)) => {
            match output {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("cminor: {}: {e}", path.display());
                        return ExitCode::from(EX_CANTCREAT);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("cminor: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
