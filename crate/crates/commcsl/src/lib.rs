//! Verification toolkit for information-flow security of shared-memory
//! concurrent programs.
//!
//! The toolkit has three cooperating parts:
//!
//! - a **resource-specification checker** ([`rspec`]): validates that an
//!   abstraction function and the actions of a shared data structure
//!   commute up to abstraction, the condition under which concurrent
//!   interleavings cannot leak through the abstract view;
//! - a **proof-outline checker** ([`outline`]): checks annotated concurrent
//!   heap programs against a relational program logic whose assertions
//!   constrain *pairs* of executions, separating uniquely-owned state from
//!   shared state accessed under valid resource specifications;
//! - a **relational execution oracle** ([`oracle`]): runs programs under
//!   pairs of schedules and low-equivalent inputs and searches exhaustively
//!   (within bounds) for observable differences in low outputs.
//!
//! Programs are written in a small concurrent heap language ([`lang`]) with
//! structured parallelism, atomic blocks, and a first-order expression
//! language over integers, booleans, pairs, sequences, multisets, and maps
//! ([`expr`], [`value`]). All checks are exhaustive over bounded domains
//! ([`bounds`]) and report either machine-checked acceptance, bounded
//! acceptance (discharged by enumeration), or rejection with a concrete
//! counterexample.

pub mod assertion;
pub mod bounds;
pub mod classify;
pub mod consistency;
pub mod entail;
pub mod expr;
pub mod frac;
pub mod heap;
pub mod lang;
pub mod matching;
pub mod parse;
pub mod rspec;
pub mod semantics;
pub mod smt;
pub mod value;
