//! MiniPrisma: a hybrid contract/client calculus with a secure compiler.
//!
//! The pipeline lowers direct-style remote communication to a trampolined,
//! defunctionalized state machine:
//!
//! 1. [`passes::mnf_program`] — monadic normal form (flat let chains),
//! 2. [`passes::guard_program`] — state/who access-control guards,
//! 3. [`passes::cps_program`] — remote bindings become explicit binds,
//! 4. [`passes::defun_program`] — binds become first-order `More`/`Done`
//!    records dispatched by synthesized `clfn`/`cofn` interpreters.
//!
//! [`interp`] gives the calculus small-step semantics in two modes: honest
//! clients run the code they are handed, malicious clients answer with
//! arbitrary values from arbitrary addresses. [`equiv`] explores the
//! malicious semantics exhaustively within bounds and decides trace-set
//! equality, which is the compiler's security criterion: compilation must
//! not admit interaction orderings the source program forbids.

pub mod ast;
pub mod canon;
pub mod emit;
pub mod equiv;
pub mod interp;
pub mod parser;
pub mod passes;
pub mod pretty;
pub mod validate;

pub use ast::{Const, Definition, Ident, Location, Nat256, Program, Substitution, Synth, Term};
pub use equiv::{EquivReport, TraceSet};
pub use interp::{Bounds, Configuration, Event, StepOutcome};
pub use passes::FreshSupply;
