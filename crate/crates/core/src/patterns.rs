//! Verdict reuse across observable sets that repeat up to renaming.
//!
//! Exact counting is the expensive last resort, and the sets that reach it
//! are rarely original: a masked S-box presents the same three-expression
//! shape hundreds of times, differing only in which randoms were drawn or
//! in one round constant. This module collapses that repetition. A set is
//! normalized by folding away assimilable constants, reduced to a
//! renaming-invariant fingerprint, and looked up in a persistent store of
//! previously counted canonical forms; a hit reuses the stored verdict, a
//! miss is counted once and inserted for everyone after it.
//!
//! A constant `c` is assimilable when all of its occurrences sit beside a
//! single anchor variable `x` as `x∘c` (`∘` one of xor, plus, minus) and
//! `x` itself never appears outside such constant contexts. The pair then
//! collapses into a fresh anchor variable standing for the combined value,
//! and the anchor's remaining constants `c'` are refolded to keep meaning:
//! `c'⊕c` under xor, `c'-c` under plus and minus. Folding repeats until no
//! constant qualifies, taking the smallest constant (then the smallest
//! anchor id) first so equal inputs normalize identically. Xor contexts
//! are recognized anywhere in a maximal xor spine, which is re-clustered
//! by associativity and commutativity first; plus and minus contexts are
//! recognized only as written, directly on the variable.
//!
//! Two normalized sets match when a bijection over their variables turns
//! one into the other with kinds preserved and constants and table ids
//! equal on the nose. Such a bijection carries uniform randoms to uniform
//! randoms and secrets to secrets, so the joint distributions differ only
//! by relabeling and the cached verdict transfers soundly. Verdicts are
//! only ever established by counting or type inference, never copied from
//! another pattern, so a chain of matches never compounds.
//!
//! Matching is syntactic. It will not identify sets that are equal only up
//! to deeper algebra, and table ids are compared as numbers, so reuse
//! across programs assumes the same table registration order. Entries are
//! width-specific; a set at one word size never answers for another.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::expr::{BinOp, ExprArena, ExprId, ExprNode, ShiftDir};
use crate::tables::TableId;
use crate::transforms;
use crate::typesys::DistType;
use crate::vars::{VarId, VarKind};
use crate::width::Width;

/// One constant-folding step performed by [`normalize`]: every `anchor ∘
/// constant` context was replaced by the fresh variable `fresh`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assimilation {
    pub constant: u16,
    pub op: BinOp,
    /// The variable the constant was folded into.
    pub anchor: VarId,
    /// The replacement variable; its kind is inherited from `anchor`.
    pub fresh: VarId,
    /// Display name for reports, `anchor#n`.
    pub name: String,
}

/// A set of expressions at the fixpoint of assimilation, self-contained in
/// its own arena. No remaining constant is assimilable.
#[derive(Debug)]
pub struct NormalizedSet {
    arena: ExprArena,
    members: Vec<ExprId>,
    assimilated: Vec<Assimilation>,
    fingerprint: String,
}

impl NormalizedSet {
    pub fn arena(&self) -> &ExprArena {
        &self.arena
    }

    pub fn members(&self) -> &[ExprId] {
        &self.members
    }

    pub fn assimilated(&self) -> &[Assimilation] {
        &self.assimilated
    }

    /// Renaming-invariant key: the width and the sorted multiset of member
    /// shapes. Equal fingerprints are necessary (not sufficient) for a
    /// match, which makes this the store's bucket key.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn width(&self) -> Width {
        self.arena.width()
    }

    fn assemble(width: Width, trees: &[Tree], assimilated: Vec<Assimilation>) -> NormalizedSet {
        let arena = ExprArena::new(width);
        let mut members: Vec<ExprId> = trees.iter().map(|t| from_tree(&arena, t)).collect();
        let mut seen = BTreeSet::new();
        members.retain(|m| seen.insert(*m));
        members.sort_by_cached_key(|&m| {
            (
                render(&arena, m, Render::Shape),
                render(&arena, m, Render::Exact),
            )
        });
        let shapes: Vec<String> = members
            .iter()
            .map(|&m| render(&arena, m, Render::Shape))
            .collect();
        let fingerprint = format!("w{}:{}", width.bits(), shapes.join("|"));
        NormalizedSet {
            arena,
            members,
            assimilated,
            fingerprint,
        }
    }

    fn masked_fingerprint(&self) -> String {
        let mut shapes: Vec<String> = self
            .members
            .iter()
            .map(|&m| render(&self.arena, m, Render::Masked))
            .collect();
        shapes.sort();
        format!("w{}:{}", self.width().bits(), shapes.join("|"))
    }
}

/// Fold every assimilable constant out of `members` and return the
/// canonical residue.
///
/// The set is first cleaned by the algebraic simplifier, then each maximal
/// xor spine has its constants folded into one trailing leaf. Assimilation
/// steps follow deterministically (smallest constant, then smallest anchor
/// id) until none applies. The result lives in a private arena; the input
/// arena only receives intermediate nodes.
pub fn normalize(arena: &ExprArena, members: &[ExprId]) -> NormalizedSet {
    let mut work: Vec<ExprId> = members.iter().map(|&m| canon(arena, m)).collect();
    let mut seen = BTreeSet::new();
    work.retain(|m| seen.insert(*m));

    let mut next_var = work
        .iter()
        .flat_map(|&m| arena.vars(m).iter().copied().collect::<Vec<_>>())
        .map(|v| v.0 + 1)
        .max()
        .unwrap_or(0);
    let mut assimilated = Vec::new();

    loop {
        let mut scan = Scan::default();
        for &m in &work {
            scan_member(arena, m, &mut scan);
        }
        let Some((c, x, op)) = pick_candidate(&scan) else {
            break;
        };
        let kind = scan.kinds[&x];
        let fresh_id = VarId(next_var);
        next_var += 1;
        let fresh = arena.var(fresh_id, kind);
        for m in work.iter_mut() {
            *m = canon(arena, rewrite(arena, *m, c, x, op, fresh));
        }
        let mut seen = BTreeSet::new();
        work.retain(|m| seen.insert(*m));
        assimilated.push(Assimilation {
            constant: c,
            op,
            anchor: x,
            fresh: fresh_id,
            name: format!("anchor#{}", assimilated.len()),
        });
    }

    let trees: Vec<Tree> = work.iter().map(|&m| to_tree(arena, m)).collect();
    NormalizedSet::assemble(arena.width(), &trees, assimilated)
}

/// Search for a kind-preserving variable bijection turning `a` into `b`.
///
/// Members may pair in any order; candidate pairings are pruned to members
/// with identical shapes and the variable binding is grown by unification,
/// backtracking on conflict. Constants and table ids must agree exactly.
pub fn match_sets(a: &NormalizedSet, b: &NormalizedSet) -> Option<BTreeMap<VarId, VarId>> {
    if a.width() != b.width() || a.members.len() != b.members.len() {
        return None;
    }
    let ash: Vec<String> = a
        .members
        .iter()
        .map(|&m| render(&a.arena, m, Render::Shape))
        .collect();
    let bsh: Vec<String> = b
        .members
        .iter()
        .map(|&m| render(&b.arena, m, Render::Shape))
        .collect();

    fn go(
        a: &NormalizedSet,
        b: &NormalizedSet,
        ash: &[String],
        bsh: &[String],
        i: usize,
        used: &mut Vec<bool>,
        fwd: &BTreeMap<VarId, VarId>,
        rev: &BTreeMap<VarId, VarId>,
    ) -> Option<BTreeMap<VarId, VarId>> {
        if i == a.members.len() {
            return Some(fwd.clone());
        }
        for j in 0..b.members.len() {
            if used[j] || ash[i] != bsh[j] {
                continue;
            }
            let mut f = fwd.clone();
            let mut r = rev.clone();
            if unify(&a.arena, a.members[i], &b.arena, b.members[j], &mut f, &mut r) {
                used[j] = true;
                if let Some(h) = go(a, b, ash, bsh, i + 1, used, &f, &r) {
                    return Some(h);
                }
                used[j] = false;
            }
        }
        None
    }

    let mut used = vec![false; b.members.len()];
    go(
        a,
        b,
        &ash,
        &bsh,
        0,
        &mut used,
        &BTreeMap::new(),
        &BTreeMap::new(),
    )
}

fn unify(
    aa: &ExprArena,
    ea: ExprId,
    ba: &ExprArena,
    eb: ExprId,
    fwd: &mut BTreeMap<VarId, VarId>,
    rev: &mut BTreeMap<VarId, VarId>,
) -> bool {
    match (aa.node(ea), ba.node(eb)) {
        (ExprNode::Const(u), ExprNode::Const(v)) => u == v,
        (ExprNode::Var(x, kx), ExprNode::Var(y, ky)) => {
            if kx != ky {
                return false;
            }
            match (fwd.get(&x).copied(), rev.get(&y).copied()) {
                (None, None) => {
                    fwd.insert(x, y);
                    rev.insert(y, x);
                    true
                }
                (Some(y2), Some(x2)) => y2 == y && x2 == x,
                _ => false,
            }
        }
        (ExprNode::Not(ca), ExprNode::Not(cb)) => unify(aa, ca, ba, cb, fwd, rev),
        (ExprNode::Table(ta, ca), ExprNode::Table(tb, cb)) => {
            ta == tb && unify(aa, ca, ba, cb, fwd, rev)
        }
        (ExprNode::Shift(da, na, ca), ExprNode::Shift(db, nb, cb)) => {
            da == db && na == nb && unify(aa, ca, ba, cb, fwd, rev)
        }
        (ExprNode::Bin(oa, la, ra), ExprNode::Bin(ob, lb, rb)) => {
            oa == ob && unify(aa, la, ba, lb, fwd, rev) && unify(aa, ra, ba, rb, fwd, rev)
        }
        _ => false,
    }
}

// Canonical form: algebraic simplification, then every maximal xor spine
// gets its constant leaves folded into at most one, placed last, and
// direct commutative operations put a lone constant on the right.

fn canon(arena: &ExprArena, e: ExprId) -> ExprId {
    spine_fold(arena, transforms::simplify_alg_expr(arena, e))
}

fn spine_fold(arena: &ExprArena, e: ExprId) -> ExprId {
    match arena.node(e) {
        ExprNode::Const(_) | ExprNode::Var(..) => e,
        ExprNode::Not(c) => arena.not(spine_fold(arena, c)),
        ExprNode::Table(t, c) => arena.table(t, spine_fold(arena, c)),
        ExprNode::Shift(d, n, c) => arena.shift(d, n, spine_fold(arena, c)),
        ExprNode::Bin(BinOp::Xor, ..) => {
            let mut leaves = Vec::new();
            spine_leaves(arena, e, &mut leaves);
            let mut acc = 0u16;
            let mut out = Vec::with_capacity(leaves.len());
            for l in leaves {
                match arena.node(l) {
                    ExprNode::Const(v) => acc ^= v,
                    ExprNode::Var(..) => out.push(l),
                    _ => out.push(spine_fold(arena, l)),
                }
            }
            if acc != 0 {
                out.push(arena.constant(acc as u32));
            }
            rebuild_spine(arena, &out)
        }
        ExprNode::Bin(op, l, r) => {
            let l2 = spine_fold(arena, l);
            let r2 = spine_fold(arena, r);
            let lc = matches!(arena.node(l2), ExprNode::Const(_));
            let rc = matches!(arena.node(r2), ExprNode::Const(_));
            if op.is_commutative() && lc && !rc {
                arena.bin(op, r2, l2)
            } else {
                arena.bin(op, l2, r2)
            }
        }
    }
}

fn spine_leaves(arena: &ExprArena, e: ExprId, out: &mut Vec<ExprId>) {
    match arena.node(e) {
        ExprNode::Bin(BinOp::Xor, l, r) => {
            spine_leaves(arena, l, out);
            spine_leaves(arena, r, out);
        }
        _ => out.push(e),
    }
}

fn rebuild_spine(arena: &ExprArena, leaves: &[ExprId]) -> ExprId {
    match leaves.split_first() {
        None => arena.constant(0),
        Some((&first, rest)) => rest
            .iter()
            .fold(first, |acc, &l| arena.bin(BinOp::Xor, acc, l)),
    }
}

// Occurrence census backing the assimilability test. Every constant and
// variable occurrence is classified by its immediate context; a candidate
// (c, x, ∘) is valid when all of c's occurrences carry the anchor x and
// all of x's occurrences carry some constant, under the same ∘.

#[derive(Debug)]
enum ConstSite {
    /// Leaf of a xor spine; carries the spine's direct variable leaves.
    Spine(BTreeSet<VarId>),
    /// Right operand of `x + c` or `x - c`.
    Direct(BinOp, VarId),
    /// Any position that rules the constant out.
    Blocked,
}

#[derive(Debug, PartialEq, Eq)]
enum VarSite {
    /// Leaf of a xor spine; carries the spine's constant leaf, if any.
    Spine(Option<u16>),
    /// Left operand of `x + c` or `x - c`.
    Direct(BinOp),
    /// Any other position.
    Plain,
}

#[derive(Default)]
struct Scan {
    consts: BTreeMap<u16, Vec<ConstSite>>,
    vars: BTreeMap<VarId, Vec<VarSite>>,
    kinds: BTreeMap<VarId, VarKind>,
}

fn scan_member(arena: &ExprArena, e: ExprId, s: &mut Scan) {
    match arena.node(e) {
        ExprNode::Const(v) => s.consts.entry(v).or_default().push(ConstSite::Blocked),
        ExprNode::Var(x, k) => {
            s.kinds.insert(x, k);
            s.vars.entry(x).or_default().push(VarSite::Plain);
        }
        ExprNode::Bin(BinOp::Xor, ..) => scan_spine(arena, e, s),
        ExprNode::Bin(op @ (BinOp::Add | BinOp::Sub), l, r) => {
            if let (ExprNode::Var(x, k), ExprNode::Const(c)) = (arena.node(l), arena.node(r)) {
                s.kinds.insert(x, k);
                s.vars.entry(x).or_default().push(VarSite::Direct(op));
                s.consts.entry(c).or_default().push(ConstSite::Direct(op, x));
            } else {
                scan_member(arena, l, s);
                scan_member(arena, r, s);
            }
        }
        ExprNode::Bin(_, l, r) => {
            scan_member(arena, l, s);
            scan_member(arena, r, s);
        }
        ExprNode::Not(c) | ExprNode::Table(_, c) | ExprNode::Shift(_, _, c) => {
            scan_member(arena, c, s)
        }
    }
}

fn scan_spine(arena: &ExprArena, root: ExprId, s: &mut Scan) {
    let mut leaves = Vec::new();
    spine_leaves(arena, root, &mut leaves);
    let mut vars = BTreeSet::new();
    let mut konst = None;
    for &l in &leaves {
        match arena.node(l) {
            ExprNode::Var(x, _) => {
                vars.insert(x);
            }
            ExprNode::Const(v) => konst = Some(v),
            _ => {}
        }
    }
    for &l in &leaves {
        match arena.node(l) {
            ExprNode::Const(v) => s
                .consts
                .entry(v)
                .or_default()
                .push(ConstSite::Spine(vars.clone())),
            ExprNode::Var(x, k) => {
                s.kinds.insert(x, k);
                s.vars.entry(x).or_default().push(VarSite::Spine(konst));
            }
            _ => scan_member(arena, l, s),
        }
    }
}

fn pick_candidate(s: &Scan) -> Option<(u16, VarId, BinOp)> {
    let mut best: Option<(u16, VarId, BinOp)> = None;
    let mut consider = |c: u16, x: VarId, op: BinOp| {
        if best.map_or(true, |(bc, bx, _)| (c, x.0) < (bc, bx.0)) {
            best = Some((c, x, op));
        }
    };
    for (&c, sites) in &s.consts {
        if sites.iter().all(|st| matches!(st, ConstSite::Spine(_))) {
            let mut anchors: Option<BTreeSet<VarId>> = None;
            for st in sites {
                if let ConstSite::Spine(vs) = st {
                    anchors = Some(match anchors {
                        None => vs.clone(),
                        Some(a) => a.intersection(vs).copied().collect(),
                    });
                }
            }
            for &x in anchors.iter().flatten() {
                let all_const_contexts = s.vars[&x]
                    .iter()
                    .all(|vs| matches!(vs, VarSite::Spine(Some(_))));
                if all_const_contexts {
                    consider(c, x, BinOp::Xor);
                }
            }
        } else if let Some(ConstSite::Direct(op, x)) = sites.first() {
            let uniform = sites.iter().all(|st| match st {
                ConstSite::Direct(o, v) => o == op && v == x,
                _ => false,
            });
            let anchored = s.vars[x].iter().all(|vs| vs == &VarSite::Direct(*op));
            if uniform && anchored {
                consider(c, *x, *op);
            }
        }
    }
    best
}

/// Replace every `x ∘ c` context by `fresh` and refold the anchor's other
/// constants. Sound because `fresh` stands for the value `x ∘ c`: under
/// xor, `x⊕c' = fresh⊕(c'⊕c)`; under plus and minus, `x∘c' = fresh∘(c'-c)`.
fn rewrite(arena: &ExprArena, e: ExprId, c: u16, x: VarId, op: BinOp, fresh: ExprId) -> ExprId {
    let w = arena.width();
    match arena.node(e) {
        ExprNode::Const(_) | ExprNode::Var(..) => e,
        ExprNode::Not(cc) => arena.not(rewrite(arena, cc, c, x, op, fresh)),
        ExprNode::Table(t, cc) => arena.table(t, rewrite(arena, cc, c, x, op, fresh)),
        ExprNode::Shift(d, n, cc) => arena.shift(d, n, rewrite(arena, cc, c, x, op, fresh)),
        ExprNode::Bin(BinOp::Xor, ..) => {
            let mut leaves = Vec::new();
            spine_leaves(arena, e, &mut leaves);
            let has_anchor = op == BinOp::Xor
                && leaves
                    .iter()
                    .any(|&l| matches!(arena.node(l), ExprNode::Var(y, _) if y == x));
            let mut out = Vec::with_capacity(leaves.len());
            for l in leaves {
                match arena.node(l) {
                    ExprNode::Var(y, _) if has_anchor && y == x => out.push(fresh),
                    ExprNode::Const(v) if has_anchor => {
                        if v != c {
                            out.push(arena.constant((v ^ c) as u32));
                        }
                    }
                    ExprNode::Const(_) | ExprNode::Var(..) => out.push(l),
                    _ => out.push(rewrite(arena, l, c, x, op, fresh)),
                }
            }
            rebuild_spine(arena, &out)
        }
        ExprNode::Bin(o @ (BinOp::Add | BinOp::Sub), l, r) if o == op => {
            if let (ExprNode::Var(y, _), ExprNode::Const(v)) = (arena.node(l), arena.node(r)) {
                if y == x {
                    return if v == c {
                        fresh
                    } else {
                        arena.bin(op, fresh, arena.constant(w.sub(v, c) as u32))
                    };
                }
            }
            arena.bin(
                o,
                rewrite(arena, l, c, x, op, fresh),
                rewrite(arena, r, c, x, op, fresh),
            )
        }
        ExprNode::Bin(o, l, r) => arena.bin(
            o,
            rewrite(arena, l, c, x, op, fresh),
            rewrite(arena, r, c, x, op, fresh),
        ),
    }
}

// Rendering. Shape keeps operator skeleton, variable kinds, constants and
// table ids; Masked hides constant values (for the family summary); Exact
// adds variable ids (a deterministic sort tiebreak, not renaming
// invariant).

#[derive(Clone, Copy, PartialEq, Eq)]
enum Render {
    Shape,
    Masked,
    Exact,
}

fn render(arena: &ExprArena, e: ExprId, mode: Render) -> String {
    let mut out = String::new();
    render_into(arena, e, mode, &mut out);
    out
}

fn render_into(arena: &ExprArena, e: ExprId, mode: Render, out: &mut String) {
    match arena.node(e) {
        ExprNode::Const(v) => {
            if mode == Render::Masked {
                out.push('#');
            } else {
                out.push('#');
                out.push_str(&v.to_string());
            }
        }
        ExprNode::Var(x, k) => {
            out.push(k.letter());
            if mode == Render::Exact {
                out.push_str(&x.0.to_string());
            }
        }
        ExprNode::Not(c) => {
            out.push('~');
            render_into(arena, c, mode, out);
        }
        ExprNode::Table(t, c) => {
            out.push('T');
            out.push_str(&t.0.to_string());
            out.push('(');
            render_into(arena, c, mode, out);
            out.push(')');
        }
        ExprNode::Shift(d, n, c) => {
            out.push('(');
            render_into(arena, c, mode, out);
            out.push_str(match d {
                ShiftDir::Left => "<<",
                ShiftDir::Right => ">>",
            });
            out.push_str(&n.to_string());
            out.push(')');
        }
        ExprNode::Bin(op, l, r) => {
            out.push('(');
            render_into(arena, l, mode, out);
            out.push_str(op.symbol());
            render_into(arena, r, mode, out);
            out.push(')');
        }
    }
}

// Serialization bridge: expressions as self-contained trees, one store
// entry per line.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Tree {
    Const(u16),
    Var(u32, VarKind),
    Not(Box<Tree>),
    Table(u32, Box<Tree>),
    Shift(ShiftDir, u8, Box<Tree>),
    Bin(BinOp, Box<Tree>, Box<Tree>),
}

fn to_tree(arena: &ExprArena, e: ExprId) -> Tree {
    match arena.node(e) {
        ExprNode::Const(v) => Tree::Const(v),
        ExprNode::Var(x, k) => Tree::Var(x.0, k),
        ExprNode::Not(c) => Tree::Not(Box::new(to_tree(arena, c))),
        ExprNode::Table(t, c) => Tree::Table(t.0, Box::new(to_tree(arena, c))),
        ExprNode::Shift(d, n, c) => Tree::Shift(d, n, Box::new(to_tree(arena, c))),
        ExprNode::Bin(op, l, r) => Tree::Bin(
            op,
            Box::new(to_tree(arena, l)),
            Box::new(to_tree(arena, r)),
        ),
    }
}

fn from_tree(arena: &ExprArena, t: &Tree) -> ExprId {
    match t {
        Tree::Const(v) => arena.constant(*v as u32),
        Tree::Var(x, k) => arena.var(VarId(*x), *k),
        Tree::Not(c) => {
            let c = from_tree(arena, c);
            arena.not(c)
        }
        Tree::Table(t, c) => {
            let c = from_tree(arena, c);
            arena.table(TableId(*t), c)
        }
        Tree::Shift(d, n, c) => {
            let c = from_tree(arena, c);
            arena.shift(*d, *n, c)
        }
        Tree::Bin(op, l, r) => {
            let l = from_tree(arena, l);
            let r = from_tree(arena, r);
            arena.bin(*op, l, r)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredEntry {
    width: Width,
    members: Vec<Tree>,
    assimilated: Vec<Assimilation>,
    verdict: DistType,
    provenance: String,
}

/// A cached canonical form with the verdict that was counted or inferred
/// for it.
#[derive(Debug)]
pub struct PatternEntry {
    pub set: NormalizedSet,
    pub verdict: DistType,
    pub provenance: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("pattern store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("pattern store line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("only resolved verdicts can be cached, got `{0}`")]
    Unresolved(DistType),
}

/// Result of consulting the store with a raw expression set.
#[derive(Debug)]
pub enum CacheOutcome {
    /// An isomorphic entry exists; its verdict applies.
    Hit(DistType),
    /// Nothing matched. The caller resolves the returned normalized set by
    /// counting or inference and inserts the result.
    Miss(NormalizedSet),
}

struct StoreInner {
    entries: Vec<PatternEntry>,
    buckets: HashMap<String, Vec<usize>>,
}

/// The verdict cache. Lookups share a read lock; inserts serialize behind
/// a write lock and append one line to the backing file, so concurrent
/// checkers can share one store.
pub struct PatternStore {
    path: Option<PathBuf>,
    inner: RwLock<StoreInner>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl PatternStore {
    /// A store with no backing file; entries live for the process only.
    pub fn in_memory() -> PatternStore {
        PatternStore {
            path: None,
            inner: RwLock::new(StoreInner {
                entries: Vec::new(),
                buckets: HashMap::new(),
            }),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Open a file-backed store, loading every existing entry eagerly. A
    /// missing file is an empty store; it is created on first insert.
    pub fn open(path: impl AsRef<Path>) -> Result<PatternStore, StoreError> {
        let path = path.as_ref().to_path_buf();
        let store = PatternStore {
            path: Some(path.clone()),
            inner: RwLock::new(StoreInner {
                entries: Vec::new(),
                buckets: HashMap::new(),
            }),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        };
        if path.exists() {
            let file = std::fs::File::open(&path)?;
            let mut inner = store.inner.write().unwrap();
            for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let stored: StoredEntry =
                    serde_json::from_str(&line).map_err(|source| StoreError::Parse {
                        line: n + 1,
                        source,
                    })?;
                let set =
                    NormalizedSet::assemble(stored.width, &stored.members, stored.assimilated);
                push_entry(
                    &mut inner,
                    PatternEntry {
                        set,
                        verdict: stored.verdict,
                        provenance: stored.provenance,
                    },
                );
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lookups that returned a cached verdict.
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Lookups that found nothing.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Normalize a raw set and consult the store in one step.
    pub fn lookup_set(&self, arena: &ExprArena, members: &[ExprId]) -> CacheOutcome {
        let n = normalize(arena, members);
        match self.lookup(&n) {
            Some(v) => CacheOutcome::Hit(v),
            None => CacheOutcome::Miss(n),
        }
    }

    /// Scan the fingerprint bucket for an isomorphic entry.
    pub fn lookup(&self, set: &NormalizedSet) -> Option<DistType> {
        let inner = self.inner.read().unwrap();
        if let Some(bucket) = inner.buckets.get(set.fingerprint()) {
            for &i in bucket {
                let entry = &inner.entries[i];
                if match_sets(&entry.set, set).is_some() {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Some(entry.verdict);
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        None
    }

    /// Record a freshly resolved canonical form. Returns false when an
    /// isomorphic entry already exists; the first verdict is kept, so an
    /// entry never derives from another pattern. The verdict must be
    /// resolved; `Unknown` is the signal that resolution is still owed.
    pub fn insert(
        &self,
        set: NormalizedSet,
        verdict: DistType,
        provenance: impl Into<String>,
    ) -> Result<bool, StoreError> {
        if verdict == DistType::Unknown {
            return Err(StoreError::Unresolved(verdict));
        }
        let mut inner = self.inner.write().unwrap();
        if let Some(bucket) = inner.buckets.get(set.fingerprint()) {
            for &i in bucket {
                if match_sets(&inner.entries[i].set, &set).is_some() {
                    return Ok(false);
                }
            }
        }
        let entry = PatternEntry {
            set,
            verdict,
            provenance: provenance.into(),
        };
        if let Some(path) = &self.path {
            let stored = StoredEntry {
                width: entry.set.width(),
                members: entry
                    .set
                    .members
                    .iter()
                    .map(|&m| to_tree(&entry.set.arena, m))
                    .collect(),
                assimilated: entry.set.assimilated.clone(),
                verdict: entry.verdict,
                provenance: entry.provenance.clone(),
            };
            let mut line = serde_json::to_string(&stored).expect("store entries serialize");
            line.push('\n');
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?;
            file.write_all(line.as_bytes())?;
        }
        push_entry(&mut inner, entry);
        Ok(true)
    }

    /// Entry counts grouped by shape with constants hidden: one line per
    /// family of sets that differ only in constant values and renaming.
    pub fn summary(&self) -> Vec<(String, usize)> {
        let inner = self.inner.read().unwrap();
        let mut families: BTreeMap<String, usize> = BTreeMap::new();
        for entry in &inner.entries {
            *families.entry(entry.set.masked_fingerprint()).or_default() += 1;
        }
        families.into_iter().collect()
    }
}

fn push_entry(inner: &mut StoreInner, entry: PatternEntry) {
    let idx = inner.entries.len();
    inner
        .buckets
        .entry(entry.set.fingerprint().to_string())
        .or_default()
        .push(idx);
    inner.entries.push(entry);
}
