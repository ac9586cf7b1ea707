//! Verification of masked arithmetic programs against order-d probing adversaries.
//!
//! A masked program splits secrets into randomized shares so that any d
//! intermediate observations are statistically independent of the secrets.
//! This crate checks that property for straight-line programs over κ-bit
//! words. The pipeline:
//!
//! 1. [`frontend`] parses a small C-like source language and elaborates it
//!    into SSA form with one operator per assignment.
//! 2. [`typesys`] infers distribution types (uniform / secret-independent /
//!    leaky) for observable sets, helped by the semantics-preserving
//!    rewrites in [`transforms`].
//! 3. [`explore`] drives the type system over the space of size-d
//!    observation sets, leaving a small list of potential leaks.
//! 4. [`counting`] resolves each potential leak exactly, by brute-force
//!    histogram comparison (optionally parallel) or by emitting an SMT
//!    formula for an external solver.
//! 5. [`patterns`] caches counting verdicts keyed by expression shape so
//!    structurally repeated sets are decided once.
//!
//! [`pipeline::run`] ties the phases together; the `maskcheck` binary is a
//! thin wrapper around it.

pub mod counting;
pub mod expr;
pub mod explore;
pub mod frontend;
pub mod patterns;
pub mod pipeline;
pub mod program;
pub mod report;
pub mod tables;
pub mod transforms;
pub mod typesys;
pub mod vars;
pub mod width;

pub use expr::{BinOp, ExprArena, ExprId, ExprNode, ShiftDir};
pub use program::Program;
pub use vars::{VarId, VarKind, VarTable};
pub use width::Width;
