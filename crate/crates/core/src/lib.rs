//! Deforestation by fusion-strategy inference for a small call-by-value
//! functional language.
//!
//! The pipeline: [`parse`] → [`thunk`] → [`dup`] → [`infer`] → [`solver`] →
//! [`unify`] → [`elab`] → [`simplify`], with [`interp`] as the reference
//! semantics used to check every step.

pub mod interp;
pub mod parse;
pub mod pretty;
pub mod syntax;
pub mod thunk;
pub mod dup;
pub mod infer;
pub mod solver;
pub mod unify;
pub mod elab;
pub mod simplify;
pub mod normal;
pub mod pipeline;
pub mod gen;
pub mod corpus;

pub use interp::{diff_check, diff_check_with, eval, eval_with, DiffReport, EvalCounters, EvalResult, Outcome, Value, Verdict};
pub use parse::{parse, ParseError};
pub use pretty::{pretty, pretty_term};
pub use syntax::{alpha_eq, program_alpha_eq, Arm, Def, Kind, Name, NodeId, Program, Term};
