//! Differential harnesses over generated programs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::smallstep::{run_with, Mutation, NoObserver, Outcome, Semantics, Tracer};
use crate::syntax::{pretty_print, Program};

use super::bigstep::{bigstep_call, BigCall};
use super::gen::{gen_program, GenConfig};

/// Fuel for both sides of every comparison.
pub const DIFF_FUEL: u64 = 100_000;
/// Trailing trace lines kept in a divergence report.
const TRACE_TAIL: usize = 30;

#[derive(Clone, Debug, Serialize)]
pub struct Divergence {
    pub seed: u64,
    pub detail: String,
    pub program: String,
    pub small_step: String,
    pub other: String,
    pub trace_tail: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffReport {
    pub mode: String,
    pub first_seed: u64,
    pub cases: usize,
    pub compared: usize,
    /// Cases where either side ran out of fuel.
    pub skipped: usize,
    pub finished: usize,
    pub stuck: usize,
    pub divergences: Vec<Divergence>,
    pub notes: Vec<String>,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.divergences.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "difftest mode={} seeds={}..{} compared={} finished={} stuck={} skipped={} divergences={}",
            self.mode,
            self.first_seed,
            self.first_seed + self.cases as u64,
            self.compared,
            self.finished,
            self.stuck,
            self.skipped,
            self.divergences.len()
        );
        for n in &self.notes {
            let _ = writeln!(out, "note {n}");
        }
        for d in &self.divergences {
            let _ = writeln!(out, "--- divergence seed={}", d.seed);
            let _ = writeln!(out, "detail {}", d.detail);
            let _ = writeln!(out, "small-step {}", d.small_step);
            let _ = writeln!(out, "other {}", d.other);
            let _ = writeln!(out, "program");
            out.push_str(&d.program);
            let _ = writeln!(out, "trace");
            for l in &d.trace_tail {
                let _ = writeln!(out, "  {l}");
            }
            let _ = writeln!(out, "--- end");
        }
        let _ = writeln!(out, "result {}", if self.passed() { "pass" } else { "fail" });
        out
    }
}

enum Verdict {
    Skip,
    Agree { finished: bool },
    Diverge(String, String, String),
}

fn run_small(prog: &Program, sem: Semantics) -> Outcome {
    run_with(prog, "main", &[], DIFF_FUEL, sem, &mut NoObserver).expect("generated main takes no arguments").outcome
}

fn trace_tail(prog: &Program, sem: Semantics) -> Vec<String> {
    let mut t = Tracer::default();
    let _ = run_with(prog, "main", &[], DIFF_FUEL, sem, &mut t);
    let skip = t.lines.len().saturating_sub(TRACE_TAIL);
    t.lines.split_off(skip)
}

fn compare_bigstep(small: &Outcome, big: &BigCall) -> Verdict {
    let diverge = |d: &str| Verdict::Diverge(d.to_string(), small.to_string(), format!("{big:?}"));
    match (small, big) {
        (Outcome::OutOfFuel { .. }, _) | (_, BigCall::OutOfFuel) => Verdict::Skip,
        (Outcome::Stuck { .. }, BigCall::Stuck(_)) => Verdict::Agree { finished: false },
        (
            Outcome::Finished { results, state, entry_env },
            BigCall::Finished { results: r2, state: s2, entry_env: e2 },
        ) => {
            if results != r2 {
                diverge("returned values differ")
            } else if entry_env != e2 {
                diverge("final local environments differ")
            } else if state.mem != s2.mem {
                diverge("final memories differ")
            } else if state.fp != s2.fp {
                diverge("final footprints differ")
            } else {
                Verdict::Agree { finished: true }
            }
        }
        _ => diverge("outcome classes differ"),
    }
}

fn compare_erasure(with_fp: &Outcome, erased: &Outcome) -> Verdict {
    match (with_fp, erased) {
        (Outcome::OutOfFuel { .. }, _) => Verdict::Skip,
        (Outcome::Finished { results, state, entry_env }, Outcome::Finished { results: r2, state: s2, entry_env: e2 }) => {
            let d = if results != r2 {
                "returned values differ"
            } else if state.mem != s2.mem {
                "final memories differ"
            } else if entry_env != e2 {
                "final local environments differ"
            } else {
                return Verdict::Agree { finished: true };
            };
            Verdict::Diverge(d.into(), with_fp.to_string(), erased.to_string())
        }
        (Outcome::Finished { .. }, _) => Verdict::Diverge(
            "footprint run finished but erased run did not".into(),
            with_fp.to_string(),
            erased.to_string(),
        ),
        // the converse direction is not required
        _ => Verdict::Agree { finished: false },
    }
}

fn harness(
    mode: &str,
    cfg: &GenConfig,
    count: usize,
    small_sem: Semantics,
    case: impl Fn(&Program) -> Verdict + Sync,
) -> DiffReport {
    let verdicts: Vec<(u64, Verdict)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let prog = gen_program(&cfg.with_seed(seed));
            (seed, case(&prog))
        })
        .collect();
    let mut report = DiffReport {
        mode: mode.to_string(),
        first_seed: cfg.seed,
        cases: count,
        compared: 0,
        skipped: 0,
        finished: 0,
        stuck: 0,
        divergences: Vec::new(),
        notes: Vec::new(),
    };
    for (seed, v) in verdicts {
        match v {
            Verdict::Skip => report.skipped += 1,
            Verdict::Agree { finished } => {
                report.compared += 1;
                if finished {
                    report.finished += 1;
                } else {
                    report.stuck += 1;
                }
            }
            Verdict::Diverge(detail, small_step, other) => {
                report.compared += 1;
                let prog = gen_program(&cfg.with_seed(seed));
                report.divergences.push(Divergence {
                    seed,
                    detail,
                    program: pretty_print(&prog),
                    small_step,
                    other,
                    trace_tail: trace_tail(&prog, small_sem),
                });
            }
        }
    }
    report
}

/// Small-step against big-step on `count` programs from seeds
/// `cfg.seed..cfg.seed+count`.
pub fn difftest_smallstep_vs_bigstep(cfg: &GenConfig, count: usize) -> DiffReport {
    difftest_mutation_inner("bigstep", cfg, count, Semantics::FOOTPRINT)
}

/// As [`difftest_smallstep_vs_bigstep`], with `m` planted in the small-step
/// machine. A useful harness reports at least one divergence.
pub fn difftest_mutation(cfg: &GenConfig, count: usize, m: Mutation) -> DiffReport {
    difftest_mutation_inner(&format!("bigstep-mutated-{m:?}"), cfg, count, Semantics::mutated(m))
}

fn difftest_mutation_inner(mode: &str, cfg: &GenConfig, count: usize, sem: Semantics) -> DiffReport {
    harness(mode, cfg, count, sem, |prog| {
        let small = run_small(prog, sem);
        let big = bigstep_call(prog, "main", &[], DIFF_FUEL, false).expect("generated main takes no arguments");
        compare_bigstep(&small, &big)
    })
}

/// Every program that finishes with footprints must finish the same way
/// with footprint checks erased.
pub fn difftest_erasure(cfg: &GenConfig, count: usize) -> DiffReport {
    difftest_erasure_with(cfg, count, None)
}

/// Erasure check with `m` planted in the footprint run. The notes record
/// how many programs the mutation made stuck that erased runs finish.
pub fn difftest_erasure_with(cfg: &GenConfig, count: usize, m: Option<Mutation>) -> DiffReport {
    let sem = m.map(Semantics::mutated).unwrap_or(Semantics::FOOTPRINT);
    let mode = match m {
        Some(m) => format!("erasure-mutated-{m:?}"),
        None => "erasure".to_string(),
    };
    let mut report = harness(&mode, cfg, count, sem, |prog| {
        compare_erasure(&run_small(prog, sem), &run_small(prog, Semantics::ERASED))
    });
    let only_erased: usize = (0..count as u64)
        .into_par_iter()
        .filter(|i| {
            let prog = gen_program(&cfg.with_seed(cfg.seed + i));
            matches!(run_small(&prog, sem), Outcome::Stuck { .. })
                && run_small(&prog, Semantics::ERASED).is_finished()
        })
        .count();
    report.notes.push(format!(
        "{only_erased} programs stuck with footprints finish erased; refinement {}",
        if report.passed() { "holds" } else { "violated" }
    ));
    report
}
