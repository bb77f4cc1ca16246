//! linchk checks linearizability of concurrent object models by trace
//! refinement between branching-bisimulation quotients, and lock-freedom via
//! divergence-sensitive branching bisimilarity, with counterexample
//! generation.
//!
//! Pipeline: a guarded-command object model ([`modelir`]) is explored under a
//! bounded most-general client into an LTS ([`explorer`], [`lts`]); the LTS
//! and the LTS of the object's atomic-block specification are minimized by
//! partition refinement ([`bisim`]); linearizability is decided by trace
//! inclusion between the quotients ([`refine`]) and lock-freedom by
//! divergence-sensitive branching bisimilarity against an abstract model
//! ([`progress`]). [`bench`] carries the curated benchmark models and
//! [`cli`] the command-line front end.

pub mod bench;
pub mod bisim;
pub mod cli;
pub mod explorer;
pub mod lts;
pub mod modelir;
pub mod progress;
pub mod refine;
