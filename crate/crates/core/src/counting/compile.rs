//! Straight-line compilation of expression DAGs for the counting loops.
//!
//! The arena evaluator is fine for one-off queries, but counting runs the
//! same expressions across millions of assignments. Each observable set is
//! compiled once into a register program: one instruction per reachable DAG
//! node in dependency order, executed over a flat register file with input
//! variables read from an environment slot array. Shared subterms are
//! computed once per assignment instead of once per tree path.

use std::collections::BTreeMap;

use crate::expr::{BinOp, ExprArena, ExprId, ExprNode, ShiftDir};
use crate::tables::{TableId, TableRegistry};
use crate::vars::VarId;
use crate::width::Width;

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const { dst: u32, v: u16 },
    Load { dst: u32, slot: u32 },
    Not { dst: u32, a: u32 },
    Table { dst: u32, table: u32, a: u32 },
    Shl { dst: u32, amt: u32, a: u32 },
    Shr { dst: u32, amt: u32, a: u32 },
    Bin { dst: u32, op: BinOp, a: u32, b: u32 },
}

/// A compiled batch of expressions sharing one register file.
pub(crate) struct Compiled {
    width: Width,
    instrs: Vec<Instr>,
    /// Table values cloned out of the registry so `run` borrows nothing.
    tables: Vec<Vec<u16>>,
    /// Register holding each requested expression, in request order.
    outputs: Vec<u32>,
    regs: usize,
}

impl Compiled {
    /// Compile `exprs` against an environment layout. `slots` must map every
    /// variable occurring as a leaf of any requested expression.
    pub(crate) fn new(
        arena: &ExprArena,
        tables: &TableRegistry,
        width: Width,
        exprs: &[ExprId],
        slots: &BTreeMap<VarId, usize>,
    ) -> Compiled {
        let order = arena.reachable(exprs);
        let mut reg_of: BTreeMap<ExprId, u32> = BTreeMap::new();
        let mut table_of: BTreeMap<TableId, u32> = BTreeMap::new();
        let mut cloned_tables = Vec::new();
        let mut instrs = Vec::with_capacity(order.len());

        for (next, &e) in order.iter().enumerate() {
            let dst = next as u32;
            reg_of.insert(e, dst);
            let r = |id: ExprId| reg_of[&id];
            instrs.push(match arena.node(e) {
                ExprNode::Const(v) => Instr::Const { dst, v },
                ExprNode::Var(x, _) => Instr::Load {
                    dst,
                    slot: slots[&x] as u32,
                },
                ExprNode::Not(a) => Instr::Not { dst, a: r(a) },
                ExprNode::Table(t, a) => {
                    let table = *table_of.entry(t).or_insert_with(|| {
                        cloned_tables.push(tables.values(t).to_vec());
                        (cloned_tables.len() - 1) as u32
                    });
                    Instr::Table { dst, table, a: r(a) }
                }
                ExprNode::Shift(ShiftDir::Left, amt, a) => Instr::Shl {
                    dst,
                    amt: amt as u32,
                    a: r(a),
                },
                ExprNode::Shift(ShiftDir::Right, amt, a) => Instr::Shr {
                    dst,
                    amt: amt as u32,
                    a: r(a),
                },
                ExprNode::Bin(op, a, b) => Instr::Bin {
                    dst,
                    op,
                    a: r(a),
                    b: r(b),
                },
            });
        }

        Compiled {
            width,
            instrs,
            tables: cloned_tables,
            outputs: exprs.iter().map(|e| reg_of[e]).collect(),
            regs: order.len(),
        }
    }

    pub(crate) fn regs(&self) -> usize {
        self.regs
    }

    pub(crate) fn outputs(&self) -> &[u32] {
        &self.outputs
    }

    /// Evaluate every instruction into `regs`, reading inputs from `env`.
    /// `regs` must have at least `self.regs()` entries; output values are
    /// read back through `outputs()`.
    pub(crate) fn run(&self, env: &[u16], regs: &mut [u16]) {
        let w = self.width;
        for instr in &self.instrs {
            match *instr {
                Instr::Const { dst, v } => regs[dst as usize] = v,
                Instr::Load { dst, slot } => regs[dst as usize] = env[slot as usize],
                Instr::Not { dst, a } => regs[dst as usize] = w.not(regs[a as usize]),
                Instr::Table { dst, table, a } => {
                    regs[dst as usize] = self.tables[table as usize][regs[a as usize] as usize]
                }
                Instr::Shl { dst, amt, a } => regs[dst as usize] = w.shl(regs[a as usize], amt),
                Instr::Shr { dst, amt, a } => regs[dst as usize] = w.shr(regs[a as usize], amt),
                Instr::Bin { dst, op, a, b } => {
                    let (x, y) = (regs[a as usize], regs[b as usize]);
                    regs[dst as usize] = match op {
                        BinOp::Xor => x ^ y,
                        BinOp::And => x & y,
                        BinOp::Or => x | y,
                        BinOp::GfMul => w.gf_mul(x, y),
                        BinOp::Add => w.add(x, y),
                        BinOp::Sub => w.sub(x, y),
                        BinOp::Mul => w.mul(x, y),
                    };
                }
            }
        }
    }
}
