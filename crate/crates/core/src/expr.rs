//! Hash-consed expression DAG plus the per-node analyses every later
//! phase leans on: variable sets, occurrence counts, dominant randoms.
//!
//! Nodes are interned, so structural equality is pointer (id) equality and
//! shared subterms are represented once. All analyses are computed at
//! intern time from the children's already-computed results, making every
//! query O(1) and making the arena safe to read from many threads.

use crate::tables::{TableId, TableRegistry};
use crate::vars::{VarId, VarKind};
use crate::width::Width;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, RwLock};

/// Index into an [`ExprArena`]. Children always have smaller ids than
/// their parents, so ascending id order is a topological order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExprId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    /// Bitwise exclusive or.
    Xor,
    And,
    Or,
    /// Finite-field product in GF(2^κ).
    GfMul,
    /// Addition mod 2^κ.
    Add,
    /// Subtraction mod 2^κ.
    Sub,
    /// Multiplication mod 2^κ.
    Mul,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Xor => "^",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::GfMul => "@",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
        }
    }

    pub fn is_commutative(self) -> bool {
        !matches!(self, BinOp::Sub)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShiftDir {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExprNode {
    Const(u16),
    Var(VarId, VarKind),
    Not(ExprId),
    /// Application of a registered bijective table.
    Table(TableId, ExprId),
    Bin(BinOp, ExprId, ExprId),
    /// Logical shift by a constant amount.
    Shift(ShiftDir, u8, ExprId),
}

/// Analyses attached to every node, computed bottom-up at intern time.
#[derive(Debug, Clone)]
struct NodeInfo {
    /// All variables under the node.
    vars: Arc<BTreeSet<VarId>>,
    /// Random variables under the node.
    rvars: Arc<BTreeSet<VarId>>,
    /// Syntactic occurrence count per variable in the tree view of the
    /// DAG, saturating at 2 (the analyses only distinguish 0 / 1 / many).
    occ: Arc<BTreeMap<VarId, u8>>,
    /// Dominant random variables: randoms occurring exactly once whose
    /// leaf-to-root path crosses only invertible operator positions
    /// (xor, not, add, sub, field product by a nonzero constant, or a
    /// bijective table).
    dom: Arc<BTreeSet<VarId>>,
    /// Tree size (node count counting shared subterms once per occurrence),
    /// saturating.
    size: u32,
}

struct ArenaInner {
    nodes: Vec<ExprNode>,
    info: Vec<NodeInfo>,
    index: HashMap<ExprNode, ExprId>,
    empty_set: Arc<BTreeSet<VarId>>,
    empty_map: Arc<BTreeMap<VarId, u8>>,
}

/// The interner. A program (or a synthetic expression set) owns exactly
/// one; ids from different arenas must not be mixed.
pub struct ExprArena {
    width: Width,
    inner: RwLock<ArenaInner>,
}

impl std::fmt::Debug for ExprArena {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.read().unwrap();
        f.debug_struct("ExprArena")
            .field("width", &self.width)
            .field("nodes", &inner.nodes.len())
            .finish()
    }
}

impl ExprArena {
    pub fn new(width: Width) -> Self {
        ExprArena {
            width,
            inner: RwLock::new(ArenaInner {
                nodes: Vec::new(),
                info: Vec::new(),
                index: HashMap::new(),
                empty_set: Arc::new(BTreeSet::new()),
                empty_map: Arc::new(BTreeMap::new()),
            }),
        }
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn intern(&self, node: ExprNode) -> ExprId {
        let mut inner = self.inner.write().unwrap();
        if let Some(&id) = inner.index.get(&node) {
            return id;
        }
        let info = inner.compute_info(&node);
        let id = ExprId(inner.nodes.len() as u32);
        inner.nodes.push(node);
        inner.info.push(info);
        inner.index.insert(node, id);
        id
    }

    /// Intern a constant, reduced into the word domain.
    pub fn constant(&self, v: u32) -> ExprId {
        self.intern(ExprNode::Const(self.width.truncate(v)))
    }

    pub fn var(&self, v: VarId, kind: VarKind) -> ExprId {
        self.intern(ExprNode::Var(v, kind))
    }

    pub fn not(&self, c: ExprId) -> ExprId {
        self.intern(ExprNode::Not(c))
    }

    pub fn table(&self, t: TableId, c: ExprId) -> ExprId {
        self.intern(ExprNode::Table(t, c))
    }

    pub fn bin(&self, op: BinOp, l: ExprId, r: ExprId) -> ExprId {
        self.intern(ExprNode::Bin(op, l, r))
    }

    pub fn shift(&self, dir: ShiftDir, amount: u8, c: ExprId) -> ExprId {
        self.intern(ExprNode::Shift(dir, amount, c))
    }

    pub fn node(&self, id: ExprId) -> ExprNode {
        self.inner.read().unwrap().nodes[id.0 as usize]
    }

    pub fn vars(&self, id: ExprId) -> Arc<BTreeSet<VarId>> {
        self.inner.read().unwrap().info[id.0 as usize].vars.clone()
    }

    pub fn rvars(&self, id: ExprId) -> Arc<BTreeSet<VarId>> {
        self.inner.read().unwrap().info[id.0 as usize].rvars.clone()
    }

    pub fn occurrences(&self, id: ExprId) -> Arc<BTreeMap<VarId, u8>> {
        self.inner.read().unwrap().info[id.0 as usize].occ.clone()
    }

    pub fn dominators(&self, id: ExprId) -> Arc<BTreeSet<VarId>> {
        self.inner.read().unwrap().info[id.0 as usize].dom.clone()
    }

    pub fn size(&self, id: ExprId) -> u32 {
        self.inner.read().unwrap().info[id.0 as usize].size
    }

    /// Evaluate under a full variable assignment. DAG-aware (each shared
    /// node computed once per call).
    pub fn eval(&self, id: ExprId, env: &BTreeMap<VarId, u16>, tables: &TableRegistry) -> u16 {
        let inner = self.inner.read().unwrap();
        let mut memo: HashMap<ExprId, u16> = HashMap::new();
        self.eval_rec(&inner, id, env, tables, &mut memo)
    }

    fn eval_rec(
        &self,
        inner: &ArenaInner,
        id: ExprId,
        env: &BTreeMap<VarId, u16>,
        tables: &TableRegistry,
        memo: &mut HashMap<ExprId, u16>,
    ) -> u16 {
        if let Some(&v) = memo.get(&id) {
            return v;
        }
        let w = self.width;
        let v = match inner.nodes[id.0 as usize] {
            ExprNode::Const(c) => c,
            ExprNode::Var(x, _) => *env
                .get(&x)
                .unwrap_or_else(|| panic!("eval: unbound variable {x:?}")),
            ExprNode::Not(c) => w.not(self.eval_rec(inner, c, env, tables, memo)),
            ExprNode::Table(t, c) => tables.apply(t, self.eval_rec(inner, c, env, tables, memo)),
            ExprNode::Bin(op, l, r) => {
                let a = self.eval_rec(inner, l, env, tables, memo);
                let b = self.eval_rec(inner, r, env, tables, memo);
                match op {
                    BinOp::Xor => a ^ b,
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::GfMul => w.gf_mul(a, b),
                    BinOp::Add => w.add(a, b),
                    BinOp::Sub => w.sub(a, b),
                    BinOp::Mul => w.mul(a, b),
                }
            }
            ExprNode::Shift(dir, amt, c) => {
                let a = self.eval_rec(inner, c, env, tables, memo);
                match dir {
                    ShiftDir::Left => w.shl(a, amt as u32),
                    ShiftDir::Right => w.shr(a, amt as u32),
                }
            }
        };
        memo.insert(id, v);
        v
    }

    /// Replace every occurrence of `target` (as a node) with `replacement`,
    /// rebuilding ancestors. Returns the rewritten root.
    pub fn substitute(&self, root: ExprId, target: ExprId, replacement: ExprId) -> ExprId {
        let mut memo = HashMap::new();
        self.substitute_memo(root, target, replacement, &mut memo)
    }

    pub fn substitute_memo(
        &self,
        root: ExprId,
        target: ExprId,
        replacement: ExprId,
        memo: &mut HashMap<ExprId, ExprId>,
    ) -> ExprId {
        if root == target {
            return replacement;
        }
        if let Some(&r) = memo.get(&root) {
            return r;
        }
        let out = match self.node(root) {
            ExprNode::Const(_) | ExprNode::Var(..) => root,
            ExprNode::Not(c) => {
                let c2 = self.substitute_memo(c, target, replacement, memo);
                if c2 == c {
                    root
                } else {
                    self.not(c2)
                }
            }
            ExprNode::Table(t, c) => {
                let c2 = self.substitute_memo(c, target, replacement, memo);
                if c2 == c {
                    root
                } else {
                    self.table(t, c2)
                }
            }
            ExprNode::Bin(op, l, r) => {
                let l2 = self.substitute_memo(l, target, replacement, memo);
                let r2 = self.substitute_memo(r, target, replacement, memo);
                if l2 == l && r2 == r {
                    root
                } else {
                    self.bin(op, l2, r2)
                }
            }
            ExprNode::Shift(dir, amt, c) => {
                let c2 = self.substitute_memo(c, target, replacement, memo);
                if c2 == c {
                    root
                } else {
                    self.shift(dir, amt, c2)
                }
            }
        };
        memo.insert(root, out);
        out
    }

    /// Substitute variables by whole expressions (used to build the
    /// computation map). `binding(x)` returns the expression a variable
    /// unfolds to, or None to leave it as a leaf.
    pub fn substitute_vars(
        &self,
        root: ExprId,
        binding: &impl Fn(VarId) -> Option<ExprId>,
        memo: &mut HashMap<ExprId, ExprId>,
    ) -> ExprId {
        if let Some(&r) = memo.get(&root) {
            return r;
        }
        let out = match self.node(root) {
            ExprNode::Const(_) => root,
            ExprNode::Var(x, _) => binding(x).unwrap_or(root),
            ExprNode::Not(c) => {
                let c2 = self.substitute_vars(c, binding, memo);
                if c2 == c {
                    root
                } else {
                    self.not(c2)
                }
            }
            ExprNode::Table(t, c) => {
                let c2 = self.substitute_vars(c, binding, memo);
                if c2 == c {
                    root
                } else {
                    self.table(t, c2)
                }
            }
            ExprNode::Bin(op, l, r) => {
                let l2 = self.substitute_vars(l, binding, memo);
                let r2 = self.substitute_vars(r, binding, memo);
                if l2 == l && r2 == r {
                    root
                } else {
                    self.bin(op, l2, r2)
                }
            }
            ExprNode::Shift(dir, amt, c) => {
                let c2 = self.substitute_vars(c, binding, memo);
                if c2 == c {
                    root
                } else {
                    self.shift(dir, amt, c2)
                }
            }
        };
        memo.insert(root, out);
        out
    }

    /// All distinct nodes reachable from the given roots, ascending id
    /// order (children before parents).
    pub fn reachable(&self, roots: &[ExprId]) -> Vec<ExprId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<ExprId> = roots.to_vec();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            match self.node(id) {
                ExprNode::Const(_) | ExprNode::Var(..) => {}
                ExprNode::Not(c) | ExprNode::Table(_, c) | ExprNode::Shift(_, _, c) => {
                    stack.push(c)
                }
                ExprNode::Bin(_, l, r) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Fully parenthesized rendering, re-parsable by the frontend.
    pub fn pretty(
        &self,
        id: ExprId,
        names: &impl Fn(VarId) -> String,
        tables: &TableRegistry,
    ) -> String {
        match self.node(id) {
            ExprNode::Const(c) => format!("{c}"),
            ExprNode::Var(x, _) => names(x),
            ExprNode::Not(c) => format!("~{}", self.pretty_atom(c, names, tables)),
            ExprNode::Table(t, c) => {
                format!("{}({})", tables.name(t), self.pretty(c, names, tables))
            }
            ExprNode::Bin(op, l, r) => format!(
                "{} {} {}",
                self.pretty_atom(l, names, tables),
                op.symbol(),
                self.pretty_atom(r, names, tables)
            ),
            ExprNode::Shift(dir, amt, c) => {
                let sym = match dir {
                    ShiftDir::Left => "<<",
                    ShiftDir::Right => ">>",
                };
                format!("{} {} {}", self.pretty_atom(c, names, tables), sym, amt)
            }
        }
    }

    fn pretty_atom(
        &self,
        id: ExprId,
        names: &impl Fn(VarId) -> String,
        tables: &TableRegistry,
    ) -> String {
        match self.node(id) {
            ExprNode::Const(_) | ExprNode::Var(..) | ExprNode::Table(..) => {
                self.pretty(id, names, tables)
            }
            _ => format!("({})", self.pretty(id, names, tables)),
        }
    }
}

impl ArenaInner {
    fn compute_info(&self, node: &ExprNode) -> NodeInfo {
        match *node {
            ExprNode::Const(_) => NodeInfo {
                vars: self.empty_set.clone(),
                rvars: self.empty_set.clone(),
                occ: self.empty_map.clone(),
                dom: self.empty_set.clone(),
                size: 1,
            },
            ExprNode::Var(x, kind) => {
                let set: Arc<BTreeSet<VarId>> = Arc::new([x].into_iter().collect());
                let (rvars, dom) = if kind == VarKind::Random {
                    (set.clone(), set.clone())
                } else {
                    (self.empty_set.clone(), self.empty_set.clone())
                };
                NodeInfo {
                    vars: set.clone(),
                    rvars,
                    occ: Arc::new([(x, 1u8)].into_iter().collect()),
                    dom,
                    size: 1,
                }
            }
            // Not and bijective tables are invertible unary wrappers:
            // everything passes through except size.
            ExprNode::Not(c) | ExprNode::Table(_, c) => {
                let ci = &self.info[c.0 as usize];
                NodeInfo {
                    vars: ci.vars.clone(),
                    rvars: ci.rvars.clone(),
                    occ: ci.occ.clone(),
                    dom: ci.dom.clone(),
                    size: ci.size.saturating_add(1),
                }
            }
            // Shifts discard bits, so nothing below them can dominate.
            ExprNode::Shift(_, _, c) => {
                let ci = &self.info[c.0 as usize];
                NodeInfo {
                    vars: ci.vars.clone(),
                    rvars: ci.rvars.clone(),
                    occ: ci.occ.clone(),
                    dom: self.empty_set.clone(),
                    size: ci.size.saturating_add(1),
                }
            }
            ExprNode::Bin(op, l, r) => {
                let li = &self.info[l.0 as usize];
                let ri = &self.info[r.0 as usize];
                let vars: Arc<BTreeSet<VarId>> = if ri.vars.is_empty() {
                    li.vars.clone()
                } else if li.vars.is_empty() {
                    ri.vars.clone()
                } else {
                    Arc::new(li.vars.union(&ri.vars).copied().collect())
                };
                let rvars: Arc<BTreeSet<VarId>> = if ri.rvars.is_empty() {
                    li.rvars.clone()
                } else if li.rvars.is_empty() {
                    ri.rvars.clone()
                } else {
                    Arc::new(li.rvars.union(&ri.rvars).copied().collect())
                };
                let occ: Arc<BTreeMap<VarId, u8>> = if ri.occ.is_empty() {
                    li.occ.clone()
                } else if li.occ.is_empty() {
                    ri.occ.clone()
                } else {
                    let mut m = (*li.occ).clone();
                    for (&v, &n) in ri.occ.iter() {
                        let e = m.entry(v).or_insert(0);
                        *e = e.saturating_add(n).min(2);
                    }
                    Arc::new(m)
                };
                let dom: Arc<BTreeSet<VarId>> = match op {
                    // A random passes through xor/add/sub as long as it
                    // does not also occur on the other side.
                    BinOp::Xor | BinOp::Add | BinOp::Sub => {
                        let mut d = BTreeSet::new();
                        for &v in li.dom.iter() {
                            if !ri.occ.contains_key(&v) {
                                d.insert(v);
                            }
                        }
                        for &v in ri.dom.iter() {
                            if !li.occ.contains_key(&v) {
                                d.insert(v);
                            }
                        }
                        if d.is_empty() {
                            self.empty_set.clone()
                        } else {
                            Arc::new(d)
                        }
                    }
                    // Field product by a nonzero constant is a bijection.
                    BinOp::GfMul => {
                        let lc = self.as_nonzero_const(l);
                        let rc = self.as_nonzero_const(r);
                        if lc.is_some() {
                            ri.dom.clone()
                        } else if rc.is_some() {
                            li.dom.clone()
                        } else {
                            self.empty_set.clone()
                        }
                    }
                    BinOp::And | BinOp::Or | BinOp::Mul => self.empty_set.clone(),
                };
                NodeInfo {
                    vars,
                    rvars,
                    occ,
                    dom,
                    size: li.size.saturating_add(ri.size).saturating_add(1),
                }
            }
        }
    }

    fn as_nonzero_const(&self, id: ExprId) -> Option<u16> {
        match self.nodes[id.0 as usize] {
            ExprNode::Const(c) if c != 0 => Some(c),
            _ => None,
        }
    }
}

/// One-shot joint-uniformity test: assign to every member x a dominant
/// random of its computation that occurs in no other member's computation.
/// Such witnesses are automatically pairwise distinct. Returns the witness
/// assignment, or None if some member has no usable dominant random.
pub fn uniform_by_dominators(
    arena: &ExprArena,
    members: &[(VarId, ExprId)],
) -> Option<BTreeMap<VarId, VarId>> {
    let mut witnesses = BTreeMap::new();
    for (i, &(x, e)) in members.iter().enumerate() {
        let dom = arena.dominators(e);
        let mut chosen = None;
        'cand: for &r in dom.iter() {
            for (j, &(_, other)) in members.iter().enumerate() {
                if j != i && arena.rvars(other).contains(&r) {
                    continue 'cand;
                }
            }
            chosen = Some(r);
            break;
        }
        witnesses.insert(x, chosen?);
    }
    Some(witnesses)
}
