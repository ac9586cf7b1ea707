//! The elaborated straight-line program: an SSA assignment list with one
//! operator per right-hand side, the variable partition, and the derived
//! observable set, plus the computation map over a shared expression arena.

use std::collections::{BTreeMap, BTreeSet};

use crate::expr::{BinOp, ExprArena, ExprId, ShiftDir};
use crate::frontend::Span;
use crate::tables::{TableId, TableRegistry};
use crate::vars::{VarId, VarKind, VarTable};
use crate::width::Width;

/// A direct operand of a single assignment: either a variable defined (or
/// declared) earlier, or a constant already reduced into the word domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Var(VarId),
    Const(u16),
}

impl Operand {
    pub fn as_var(self) -> Option<VarId> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Const(_) => None,
        }
    }
}

/// Right-hand side of one assignment. At most one operator by construction;
/// the frontend splits anything larger into `_tN` temporaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rhs {
    /// Plain copy `x <- y` or `x <- c`.
    Atom(Operand),
    Not(Operand),
    Table(TableId, Operand),
    Bin(BinOp, Operand, Operand),
    Shift(ShiftDir, u8, Operand),
}

impl Rhs {
    pub fn operands(&self) -> Vec<Operand> {
        match *self {
            Rhs::Atom(o) | Rhs::Not(o) | Rhs::Table(_, o) | Rhs::Shift(_, _, o) => vec![o],
            Rhs::Bin(_, a, b) => vec![a, b],
        }
    }

    pub fn operand_vars(&self) -> Vec<VarId> {
        self.operands().into_iter().filter_map(Operand::as_var).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Assignment {
    pub target: VarId,
    pub rhs: Rhs,
    /// True when the assignment belongs to a presharing block: it models the
    /// secret-sharing step that happens before the program under attack runs.
    pub preshare: bool,
    pub span: Span,
}

/// Fully elaborated program. Immutable after construction; analyses treat it
/// as shared read-only state.
#[derive(Debug)]
pub struct Program {
    pub width: Width,
    pub vars: VarTable,
    pub tables: TableRegistry,
    pub assignments: Vec<Assignment>,
    /// Variables listed by the final `return`, in source order.
    pub outputs: Vec<VarId>,
    pub x_p: BTreeSet<VarId>,
    pub x_k: BTreeSet<VarId>,
    pub x_r: BTreeSet<VarId>,
    pub x_i: BTreeSet<VarId>,
    /// Observable variables: publics, randoms, and every intermediate except
    /// presharing-internal temporaries nobody outside the presharing reads.
    pub x_o: BTreeSet<VarId>,
    pub arena: ExprArena,
    computations: BTreeMap<VarId, ExprId>,
}

impl Program {
    pub(crate) fn new(
        width: Width,
        vars: VarTable,
        tables: TableRegistry,
        assignments: Vec<Assignment>,
        outputs: Vec<VarId>,
    ) -> Self {
        let mut x_p = BTreeSet::new();
        let mut x_k = BTreeSet::new();
        let mut x_r = BTreeSet::new();
        let mut x_i = BTreeSet::new();
        for id in vars.ids() {
            match vars.kind(id) {
                Some(VarKind::Public) => {
                    x_p.insert(id);
                }
                Some(VarKind::Private) => {
                    x_k.insert(id);
                }
                Some(VarKind::Random) => {
                    x_r.insert(id);
                }
                None => {
                    x_i.insert(id);
                }
            }
        }
        debug_assert_eq!(
            x_i.len(),
            assignments.len(),
            "SSA: every intermediate has exactly one assignment"
        );

        // A presharing-assigned variable stays observable only if the body
        // outside the presharing consumes it (it is then a share the real
        // program receives as input). Presharing-internal temporaries are
        // invisible to an attacker probing the program itself.
        let mut read_outside_preshare: BTreeSet<VarId> = BTreeSet::new();
        for a in &assignments {
            if !a.preshare {
                read_outside_preshare.extend(a.rhs.operand_vars());
            }
        }
        read_outside_preshare.extend(outputs.iter().copied());

        let mut x_o: BTreeSet<VarId> = x_p.union(&x_r).copied().collect();
        for a in &assignments {
            if !a.preshare || read_outside_preshare.contains(&a.target) {
                x_o.insert(a.target);
            }
        }

        let arena = ExprArena::new(width);
        let mut computations: BTreeMap<VarId, ExprId> = BTreeMap::new();
        for id in vars.ids() {
            if let Some(kind) = vars.kind(id) {
                computations.insert(id, arena.var(id, kind));
            }
        }
        for a in &assignments {
            let child = |o: Operand| match o {
                Operand::Var(v) => computations[&v],
                Operand::Const(c) => arena.constant(c as u32),
            };
            let e = match a.rhs {
                Rhs::Atom(o) => child(o),
                Rhs::Not(o) => arena.not(child(o)),
                Rhs::Table(t, o) => arena.table(t, child(o)),
                Rhs::Bin(op, l, r) => arena.bin(op, child(l), child(r)),
                Rhs::Shift(dir, amt, o) => arena.shift(dir, amt, child(o)),
            };
            computations.insert(a.target, e);
        }

        Program {
            width,
            vars,
            tables,
            assignments,
            outputs,
            x_p,
            x_k,
            x_r,
            x_i,
            x_o,
            arena,
            computations,
        }
    }

    /// The computation of `x`: its defining expression with every
    /// intermediate recursively substituted, so only inputs remain as leaves.
    pub fn computation(&self, x: VarId) -> ExprId {
        self.computations[&x]
    }

    /// Observables whose computation depends on something beyond public
    /// inputs. Only these can possibly leak, so analysis restricts to them.
    pub fn x_check(&self) -> Vec<VarId> {
        self.x_o
            .iter()
            .copied()
            .filter(|&x| {
                self.arena
                    .vars(self.computation(x))
                    .iter()
                    .any(|v| !self.x_p.contains(v))
            })
            .collect()
    }

    /// Direct operands of the single assignment defining `x`.
    pub fn operands(&self, x: VarId) -> Option<Vec<Operand>> {
        self.assignment_of(x).map(|a| a.rhs.operands())
    }

    pub fn assignment_of(&self, x: VarId) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.target == x)
    }

    pub fn is_preshare(&self, x: VarId) -> bool {
        self.assignment_of(x).map(|a| a.preshare).unwrap_or(false)
    }

    /// All variables carrying a computation (inputs and intermediates).
    pub fn all_vars(&self) -> Vec<VarId> {
        self.computations.keys().copied().collect()
    }
}
