//! Cyclic safe-recursion derivations.
//!
//! Proof graphs over the safe-recursion sequent system are parsed ([`prooffmt`]), validated
//! ([`kernel`]), classified ([`checker`]), run ([`evaluator`]) and compiled into the guarded
//! recursion algebra ([`algebra`], [`translator`]). [`nonuniform`] turns circuit families into
//! length-determined advice oracles and proof graphs over them.

pub mod algebra;
pub mod checker;
pub mod evaluator;
pub mod fixtures;
pub mod kernel;
pub mod nonuniform;
pub mod par;
pub mod prooffmt;
pub mod translator;
pub mod value;

pub use kernel::{NodeIx, ProofGraph, Rule, Sequent, Succedent};
pub use value::Value;
