//! Source language frontend: lexing, parsing, elaboration to SSA.
//!
//! The surface language is a small C-flavored straight-line language:
//!
//! ```text
//! #public a;
//! #private k;
//! #random r, r';
//! #table Sbox;                    // built-in AES S-box (width 8)
//! #table P "perm.hex";            // table loaded from a hex file
//!
//! refresh(x, m) {
//!     y = x ^ m;
//!     return y;
//! }
//!
//! #preshare { x' = k ^ r; }       // presharing: computed off-device
//! t = refresh(x', r');
//! acc = t ^ (k << 1);
//! for i in 0..2 { acc = acc ^ r; }
//! return acc;
//! ```
//!
//! Statements are assignments, static `for` loops with constant bounds,
//! calls of previously defined procedures, and `return`. Subscripted names
//! (`t[i]`) denote name families whose index must be constant after loop
//! unrolling; `t[3]` flattens to the variable `t_3`. Elaboration inlines
//! calls, unrolls loops, splits every multi-operator right-hand side into
//! single-operator temporaries `_tN`, renames reassignments SSA-style, and
//! classifies every variable into the public / private / random / assigned
//! partition.

mod ast;
mod elaborate;
mod lex;
mod parse;
mod print;

pub use ast::{
    Decl, IndexValue, LValue, ProcDef, SourceProgram, Span, SrcBinOp, SrcExpr, Stmt, TableDecl,
};
pub use elaborate::{elaborate, elaborate_with, ElaborateOptions};
pub use parse::{parse, parse_expr};
pub use print::pretty_print;

/// A frontend failure with a source position. Rendered `line:col: message`
/// so the CLI can prefix the file path.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }
}
