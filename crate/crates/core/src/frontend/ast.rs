//! Surface syntax tree, close to what the user wrote.

use crate::vars::VarKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn none() -> Span {
        Span { line: 0, col: 0 }
    }
}

/// Binary operators as written. Shifts are kept separate because their
/// right operand must be constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrcBinOp {
    Xor,
    And,
    Or,
    GfMul,
    Add,
    Sub,
    Mul,
    Shl,
    Shr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SrcExpr {
    Const(i64, Span),
    /// Variable reference, optionally subscripted (`t[i-1]`).
    Name(String, Option<Box<SrcExpr>>, Span),
    /// `~e`
    Not(Box<SrcExpr>, Span),
    Bin(SrcBinOp, Box<SrcExpr>, Box<SrcExpr>, Span),
    /// `F(args)`: a table application (one argument) or a procedure call.
    Call(String, Vec<SrcExpr>, Span),
}

impl SrcExpr {
    pub fn span(&self) -> Span {
        match self {
            SrcExpr::Const(_, s)
            | SrcExpr::Name(_, _, s)
            | SrcExpr::Not(_, s)
            | SrcExpr::Bin(_, _, _, s)
            | SrcExpr::Call(_, _, s) => *s,
        }
    }
}

/// Assignment target: base name plus optional constant subscript.
#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub base: String,
    pub subscript: Option<SrcExpr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign {
        /// One target, or several for a multi-return procedure call.
        targets: Vec<LValue>,
        rhs: SrcExpr,
        span: Span,
    },
    For {
        var: String,
        lo: SrcExpr,
        hi: SrcExpr,
        body: Vec<Stmt>,
        span: Span,
    },
    /// `#preshare { ... }`: statements computing input shares off-device.
    Preshare { body: Vec<Stmt>, span: Span },
    Return { exprs: Vec<SrcExpr>, span: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub kind: VarKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDecl {
    pub name: String,
    /// None selects the built-in AES S-box (width 8 only).
    pub path: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

/// Parsed but not yet elaborated program.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceProgram {
    pub decls: Vec<Decl>,
    pub tables: Vec<TableDecl>,
    pub procs: Vec<ProcDef>,
    /// Statements written outside any procedure; when nonempty they form
    /// the entry body, otherwise the last procedure is the entry.
    pub top_stmts: Vec<Stmt>,
}

/// Constant value a subscript or loop bound evaluates to.
pub type IndexValue = i64;

impl SourceProgram {
    /// Count assignments in the entry body, descending into preshare
    /// blocks but not loops or calls (pre-elaboration view).
    pub fn entry_assignment_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::Assign { .. } => 1,
                    Stmt::Preshare { body, .. } => count(body),
                    _ => 0,
                })
                .sum()
        }
        if !self.top_stmts.is_empty() {
            count(&self.top_stmts)
        } else {
            self.procs.last().map(|p| count(&p.body)).unwrap_or(0)
        }
    }
}
