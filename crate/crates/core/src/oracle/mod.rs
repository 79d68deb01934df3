//! Reference semantics and generators for differential testing.

pub mod bigstep;
pub mod difftest;
pub mod gen;

pub use bigstep::{bigstep_call, bigstep_exec, BigCall, BigOutcome};
pub use difftest::{difftest_erasure, difftest_erasure_with, difftest_mutation, difftest_smallstep_vs_bigstep, DiffReport, Divergence};
pub use gen::{gen_program, GenConfig};
