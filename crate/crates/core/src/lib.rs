//! Executable semantics for sequential Cminor: values and memory, permission
//! footprints, expression and statement semantics, separation-logic
//! assertions checked on concrete states, runtime annotation checking, and
//! reference semantics for differential testing.

pub mod assertions;
pub mod eval;
pub mod footprint;
pub mod hoare;
pub mod memory;
pub mod oracle;
pub mod smallstep;
pub mod syntax;
pub mod values;
