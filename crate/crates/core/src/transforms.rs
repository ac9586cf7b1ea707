//! Sound rewrites of computation sets, used to unlock type-rule premises
//! that fail on the raw computations.
//!
//! Three rewrites exist, all preserving the joint distribution of the set:
//!
//! * [`simplify_alg`]: algebraic laws (`e^e = 0`, `0^e = e`, `0*e = 0`,
//!   `0@e = 0`, `e-e = 0`) plus constant folding, with XOR cancellation
//!   generalized across whole XOR spines.
//! * [`simplify_dom`]: replace the largest sub-expression dominated by a
//!   random `r`, with `r` occurring nowhere else in the set, by `r` itself.
//! * [`simplify_col`]: collapse a pair of same-kind variables that always
//!   travel together inside XOR spines into one fresh variable.
//!
//! Every application is recorded in a [`TransformTrace`] so that a set
//! extended by one more member can replay the same rewrites (or detect that
//! a rewrite no longer applies to the extended set).

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::expr::{BinOp, ExprArena, ExprId, ExprNode};
use crate::vars::{VarId, VarKind};

/// Sentinel variable used for exclusivity tests: never appears in real
/// programs (ids are dense from zero), treated as public so it perturbs no
/// random-variable analysis.
pub const SENTINEL: VarId = VarId(u32::MAX);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Algebraic simplification pass (parameter-free, always replayable).
    Alg,
    /// `node` was replaced by `Var(r)` everywhere in the set.
    Dom { node: ExprId, r: VarId },
    /// `{z1, z2}` collapsed into the fresh variable (z1's position keeps
    /// the fresh variable, z2's occurrences vanish).
    Col {
        z1: VarId,
        z2: VarId,
        fresh: VarId,
        kind: VarKind,
    },
}

#[derive(Debug, Clone, Default)]
pub struct TransformTrace {
    pub steps: Vec<Step>,
}

impl TransformTrace {
    pub fn extend(&mut self, other: &TransformTrace) {
        self.steps.extend(other.steps.iter().copied());
    }

    pub fn dom_steps(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Dom { .. })).count()
    }

    pub fn col_steps(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Col { .. })).count()
    }
}

/// Allocates variable ids disjoint from the program's for collapse
/// variables, remembering what each one replaced.
#[derive(Debug, Clone)]
pub struct FreshVars {
    next: u32,
    pub created: Vec<(VarId, VarKind, VarId, VarId)>,
}

impl FreshVars {
    /// `first_free` must exceed every program variable id (the sentinel at
    /// `u32::MAX` is avoided automatically).
    pub fn new(first_free: u32) -> Self {
        FreshVars {
            next: first_free,
            created: Vec::new(),
        }
    }

    fn alloc(&mut self, kind: VarKind, z1: VarId, z2: VarId) -> VarId {
        let id = VarId(self.next);
        self.next += 1;
        self.created.push((id, kind, z1, z2));
        id
    }
}

/// Algebraic simplification of a whole set; one parameter-free trace step.
pub fn simplify_alg(arena: &ExprArena, set: &[ExprId]) -> (Vec<ExprId>, TransformTrace) {
    let mut memo = HashMap::new();
    let out = set.iter().map(|&e| alg_expr_memo(arena, e, &mut memo)).collect();
    (
        out,
        TransformTrace {
            steps: vec![Step::Alg],
        },
    )
}

/// Algebraic simplification of a single expression, to fixpoint.
pub fn simplify_alg_expr(arena: &ExprArena, e: ExprId) -> ExprId {
    alg_expr_memo(arena, e, &mut HashMap::new())
}

fn alg_expr_memo(arena: &ExprArena, e: ExprId, memo: &mut HashMap<ExprId, ExprId>) -> ExprId {
    let mut cur = e;
    // A bottom-up pass is almost always a fixpoint already; iterate for the
    // rare case where a rebuilt node enables another law.
    loop {
        let next = alg_pass(arena, cur, memo);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn alg_pass(arena: &ExprArena, e: ExprId, memo: &mut HashMap<ExprId, ExprId>) -> ExprId {
    if let Some(&r) = memo.get(&e) {
        return r;
    }
    let w = arena.width();
    let out = match arena.node(e) {
        ExprNode::Const(_) | ExprNode::Var(..) => e,
        ExprNode::Not(c) => {
            let c2 = alg_pass(arena, c, memo);
            match arena.node(c2) {
                ExprNode::Const(v) => arena.constant(w.not(v) as u32),
                _ => arena.not(c2),
            }
        }
        ExprNode::Table(t, c) => arena.table(t, alg_pass(arena, c, memo)),
        ExprNode::Shift(dir, amt, c) => arena.shift(dir, amt, alg_pass(arena, c, memo)),
        ExprNode::Bin(BinOp::Xor, _, _) => {
            // Work on the whole maximal XOR spine at once: cancellation may
            // pair occurrences that sit in different branches.
            let mut leaves = Vec::new();
            collect_xor_leaves(arena, e, &mut leaves);
            let mut rewritten = Vec::with_capacity(leaves.len());
            for leaf in leaves {
                let l2 = alg_pass(arena, leaf, memo);
                // A rewritten leaf may itself have become a spine.
                if matches!(arena.node(l2), ExprNode::Bin(BinOp::Xor, _, _)) {
                    collect_xor_leaves(arena, l2, &mut rewritten);
                } else {
                    rewritten.push(l2);
                }
            }
            rebuild_xor_spine(arena, &rewritten)
        }
        ExprNode::Bin(op, l, r) => {
            let l2 = alg_pass(arena, l, memo);
            let r2 = alg_pass(arena, r, memo);
            let lv = const_of(arena, l2);
            let rv = const_of(arena, r2);
            match (op, lv, rv) {
                (_, Some(a), Some(b)) => {
                    let v = match op {
                        BinOp::Xor => a ^ b,
                        BinOp::And => a & b,
                        BinOp::Or => a | b,
                        BinOp::GfMul => w.gf_mul(a, b),
                        BinOp::Add => w.add(a, b),
                        BinOp::Sub => w.sub(a, b),
                        BinOp::Mul => w.mul(a, b),
                    };
                    arena.constant(v as u32)
                }
                (BinOp::Mul | BinOp::GfMul, Some(0), _) | (BinOp::Mul | BinOp::GfMul, _, Some(0)) => {
                    arena.constant(0)
                }
                (BinOp::Sub, _, _) if l2 == r2 => arena.constant(0),
                _ => arena.bin(op, l2, r2),
            }
        }
    };
    memo.insert(e, out);
    out
}

fn const_of(arena: &ExprArena, e: ExprId) -> Option<u16> {
    match arena.node(e) {
        ExprNode::Const(v) => Some(v),
        _ => None,
    }
}

/// Flatten the maximal XOR spine rooted at `e` into its non-XOR leaves, in
/// left-to-right order.
fn collect_xor_leaves(arena: &ExprArena, e: ExprId, out: &mut Vec<ExprId>) {
    match arena.node(e) {
        ExprNode::Bin(BinOp::Xor, l, r) => {
            collect_xor_leaves(arena, l, out);
            collect_xor_leaves(arena, r, out);
        }
        _ => out.push(e),
    }
}

/// Drop zero leaves, cancel identical leaves pairwise, rebuild
/// left-associatively in surviving order.
fn rebuild_xor_spine(arena: &ExprArena, leaves: &[ExprId]) -> ExprId {
    let mut counts: HashMap<ExprId, usize> = HashMap::new();
    for &l in leaves {
        *counts.entry(l).or_insert(0) += 1;
    }
    let mut emitted: HashSet<ExprId> = HashSet::new();
    let mut survivors = Vec::new();
    for &l in leaves {
        if counts[&l] % 2 == 0 {
            continue;
        }
        if const_of(arena, l) == Some(0) {
            continue;
        }
        if emitted.insert(l) {
            survivors.push(l);
        }
    }
    match survivors.split_first() {
        None => arena.constant(0),
        Some((&first, rest)) => rest
            .iter()
            .fold(first, |acc, &l| arena.bin(BinOp::Xor, acc, l)),
    }
}

/// Dominated-sub-expression replacement over a set.
///
/// Repeatedly: find the largest sub-expression `e` with a dominating random
/// `r` that occurs nowhere in the set outside `e`, and replace `e` by `r`
/// across the whole set (hash-consing makes the replacement global). Each
/// step strictly shrinks total size, so this terminates.
pub fn simplify_dom(arena: &ExprArena, set: &[ExprId]) -> (Vec<ExprId>, TransformTrace) {
    let mut cur: Vec<ExprId> = set.to_vec();
    let mut trace = TransformTrace::default();
    loop {
        match best_dom_candidate(arena, &cur) {
            None => break,
            Some((node, r)) => {
                let rv = arena.var(r, VarKind::Random);
                let mut memo = HashMap::new();
                cur = cur
                    .iter()
                    .map(|&m| arena.substitute_memo(m, node, rv, &mut memo))
                    .collect();
                trace.steps.push(Step::Dom { node, r });
            }
        }
    }
    (cur, trace)
}

/// Largest (then lowest-id) sub-expression with an exclusively-occurring
/// dominator. Variable leaves are skipped: replacing `r` by `r` is a no-op.
fn best_dom_candidate(arena: &ExprArena, set: &[ExprId]) -> Option<(ExprId, VarId)> {
    let sentinel = arena.var(SENTINEL, VarKind::Public);
    let mut best: Option<(u32, ExprId, VarId)> = None;
    for node in arena.reachable(set) {
        if matches!(arena.node(node), ExprNode::Var(..) | ExprNode::Const(_)) {
            continue;
        }
        let doms = arena.dominators(node);
        if doms.is_empty() {
            continue;
        }
        let size = arena.size(node);
        if let Some((bs, bn, _)) = best {
            // A smaller candidate can never win; a same-size one only on
            // lower id.
            if size < bs || (size == bs && node >= bn) {
                continue;
            }
        }
        for &r in doms.iter() {
            let exclusive = {
                let mut memo = HashMap::new();
                set.iter().all(|&m| {
                    let masked = arena.substitute_memo(m, node, sentinel, &mut memo);
                    !arena.vars(masked).contains(&r)
                })
            };
            if exclusive {
                best = Some((size, node, r));
                break;
            }
        }
    }
    best.map(|(_, node, r)| (node, r))
}

/// Collapse pairs of same-kind variables whose occurrences always travel
/// together as leaves of the same XOR spines, replacing each pair by a
/// fresh variable of that kind. Reruns the pair search so larger clusters
/// collapse transitively.
pub fn simplify_col(
    arena: &ExprArena,
    set: &[ExprId],
    fresh: &mut FreshVars,
) -> (Vec<ExprId>, TransformTrace) {
    let mut cur: Vec<ExprId> = set.to_vec();
    let mut trace = TransformTrace::default();
    loop {
        let acct = spine_accounting(arena, &cur);
        match best_col_pair(arena, &cur, &acct) {
            None => break,
            Some((z1, z2, kind)) => {
                let id = fresh.alloc(kind, z1, z2);
                cur = cur
                    .iter()
                    .map(|&m| collapse_pair(arena, m, z1, z2, id, kind))
                    .collect();
                trace.steps.push(Step::Col {
                    z1,
                    z2,
                    fresh: id,
                    kind,
                });
            }
        }
    }
    (cur, trace)
}

/// Replace `z1` by the fresh variable and `z2` by zero, then clean up: as
/// both only occur as XOR-spine leaves, this is exactly the rewrite of each
/// spine `... ^ z1 ^ ... ^ z2 ^ ...` into `... ^ fresh ^ ...`.
fn collapse_pair(
    arena: &ExprArena,
    m: ExprId,
    z1: VarId,
    z2: VarId,
    fresh: VarId,
    kind: VarKind,
) -> ExprId {
    let fresh_var = arena.var(fresh, kind);
    let zero = arena.constant(0);
    let mut memo = HashMap::new();
    let replaced = arena.substitute_vars(
        m,
        &|x| {
            if x == z1 {
                Some(fresh_var)
            } else if x == z2 {
                Some(zero)
            } else {
                None
            }
        },
        &mut memo,
    );
    simplify_alg_expr(arena, replaced)
}

/// Per-variable occurrence accounting against maximal XOR spines:
/// how often a variable appears outside any spine, and how often inside
/// each spine's leaf list.
#[derive(Debug, Default)]
struct SpineAccounting {
    outside: BTreeMap<VarId, usize>,
    in_spine: BTreeMap<VarId, BTreeMap<ExprId, usize>>,
}

fn spine_accounting(arena: &ExprArena, set: &[ExprId]) -> SpineAccounting {
    let mut acct = SpineAccounting::default();
    let mut seen_spines: HashSet<ExprId> = HashSet::new();
    for &m in set {
        descend(arena, m, &mut acct, &mut seen_spines);
    }
    acct
}

/// Walk from a non-spine position: XOR children start spines, variables
/// found here count as outside-spine occurrences.
fn descend(
    arena: &ExprArena,
    e: ExprId,
    acct: &mut SpineAccounting,
    seen_spines: &mut HashSet<ExprId>,
) {
    match arena.node(e) {
        ExprNode::Const(_) => {}
        ExprNode::Var(x, _) => {
            *acct.outside.entry(x).or_insert(0) += 1;
        }
        ExprNode::Not(c) | ExprNode::Table(_, c) | ExprNode::Shift(_, _, c) => {
            enter(arena, c, acct, seen_spines)
        }
        ExprNode::Bin(BinOp::Xor, _, _) => spine_root(arena, e, acct, seen_spines),
        ExprNode::Bin(_, l, r) => {
            enter(arena, l, acct, seen_spines);
            enter(arena, r, acct, seen_spines);
        }
    }
}

fn enter(
    arena: &ExprArena,
    e: ExprId,
    acct: &mut SpineAccounting,
    seen_spines: &mut HashSet<ExprId>,
) {
    if matches!(arena.node(e), ExprNode::Bin(BinOp::Xor, _, _)) {
        spine_root(arena, e, acct, seen_spines)
    } else {
        descend(arena, e, acct, seen_spines)
    }
}

fn spine_root(
    arena: &ExprArena,
    e: ExprId,
    acct: &mut SpineAccounting,
    seen_spines: &mut HashSet<ExprId>,
) {
    // Identical spines (shared nodes) behave identically; account once.
    if !seen_spines.insert(e) {
        return;
    }
    let mut leaves = Vec::new();
    collect_xor_leaves(arena, e, &mut leaves);
    for leaf in leaves {
        match arena.node(leaf) {
            ExprNode::Var(x, _) => {
                *acct
                    .in_spine
                    .entry(x)
                    .or_default()
                    .entry(e)
                    .or_insert(0) += 1;
            }
            _ => descend(arena, leaf, acct, seen_spines),
        }
    }
}

fn best_col_pair(
    arena: &ExprArena,
    set: &[ExprId],
    acct: &SpineAccounting,
) -> Option<(VarId, VarId, VarKind)> {
    // Eligible: never outside a spine, exactly once in each spine touched.
    let mut eligible: Vec<(VarId, VarKind, &BTreeMap<ExprId, usize>)> = Vec::new();
    let kinds = leaf_kinds(arena, set);
    for (&x, spines) in &acct.in_spine {
        if acct.outside.get(&x).copied().unwrap_or(0) > 0 {
            continue;
        }
        if spines.values().any(|&c| c != 1) {
            continue;
        }
        eligible.push((x, kinds[&x], spines));
    }
    for i in 0..eligible.len() {
        for j in i + 1..eligible.len() {
            let (z1, k1, s1) = eligible[i];
            let (z2, k2, s2) = eligible[j];
            if k1 == k2 && s1 == s2 {
                return Some((z1, z2, k1));
            }
        }
    }
    None
}

fn leaf_kinds(arena: &ExprArena, set: &[ExprId]) -> BTreeMap<VarId, VarKind> {
    let mut kinds = BTreeMap::new();
    for node in arena.reachable(set) {
        if let ExprNode::Var(x, k) = arena.node(node) {
            kinds.insert(x, k);
        }
    }
    kinds
}

/// Replay a recorded trace on one additional expression.
///
/// Returns None when a recorded step no longer applies in the presence of
/// the new expression (its occurrences of the step's variables would break
/// the exclusivity or clustering condition the step relied on), meaning the
/// cached simplified set cannot be soundly extended and the caller must
/// re-derive transforms for the extended set.
pub fn replay(arena: &ExprArena, trace: &TransformTrace, e: ExprId) -> Option<ExprId> {
    let mut cur = e;
    for step in &trace.steps {
        match *step {
            Step::Alg => cur = simplify_alg_expr(arena, cur),
            Step::Dom { node, r } => {
                let sentinel = arena.var(SENTINEL, VarKind::Public);
                let masked = arena.substitute(cur, node, sentinel);
                if arena.vars(masked).contains(&r) {
                    return None;
                }
                cur = arena.substitute(cur, node, arena.var(r, VarKind::Random));
            }
            Step::Col {
                z1,
                z2,
                fresh,
                kind,
            } => {
                let vars = arena.vars(cur);
                let has1 = vars.contains(&z1);
                let has2 = vars.contains(&z2);
                if !has1 && !has2 {
                    continue;
                }
                let acct = spine_accounting(arena, &[cur]);
                let ok = |z: VarId| {
                    acct.outside.get(&z).copied().unwrap_or(0) == 0
                        && acct
                            .in_spine
                            .get(&z)
                            .map(|s| s.values().all(|&c| c == 1))
                            .unwrap_or(false)
                };
                let spines = |z: VarId| acct.in_spine.get(&z).map(|s| s.keys().collect::<Vec<_>>());
                if !(has1 && has2 && ok(z1) && ok(z2) && spines(z1) == spines(z2)) {
                    return None;
                }
                cur = collapse_pair(arena, cur, z1, z2, fresh, kind);
            }
        }
    }
    Some(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ShiftDir;
    use crate::tables::TableRegistry;
    use crate::vars::VarId;
    use crate::width::Width;

    fn rvar(arena: &ExprArena, n: u32) -> ExprId {
        arena.var(VarId(n), VarKind::Random)
    }

    fn kvar(arena: &ExprArena, n: u32) -> ExprId {
        arena.var(VarId(n), VarKind::Private)
    }

    #[test]
    fn alg_cancels_across_spines() {
        let a = ExprArena::new(Width::W8);
        let (r, rp, k) = (rvar(&a, 0), rvar(&a, 1), kvar(&a, 2));
        // (r' ^ r) ^ (k ^ r)  ->  r' ^ k
        let e = a.bin(BinOp::Xor, a.bin(BinOp::Xor, rp, r), a.bin(BinOp::Xor, k, r));
        let got = simplify_alg_expr(&a, e);
        assert_eq!(got, a.bin(BinOp::Xor, rp, k));
    }

    #[test]
    fn alg_handles_direct_laws() {
        let a = ExprArena::new(Width::W8);
        let x = rvar(&a, 0);
        let zero = a.constant(0);
        assert_eq!(simplify_alg_expr(&a, a.bin(BinOp::Xor, x, x)), zero);
        assert_eq!(simplify_alg_expr(&a, a.bin(BinOp::Xor, zero, x)), x);
        assert_eq!(simplify_alg_expr(&a, a.bin(BinOp::Sub, x, x)), zero);
        assert_eq!(simplify_alg_expr(&a, a.bin(BinOp::Mul, zero, x)), zero);
        assert_eq!(simplify_alg_expr(&a, a.bin(BinOp::GfMul, x, zero)), zero);
        // not licensed: e - 0 stays put
        let sub0 = a.bin(BinOp::Sub, x, zero);
        assert_eq!(simplify_alg_expr(&a, sub0), sub0);
    }

    #[test]
    fn alg_folds_constants() {
        let a = ExprArena::new(Width::W8);
        let e = a.bin(BinOp::Add, a.constant(200), a.constant(100));
        assert_eq!(simplify_alg_expr(&a, e), a.constant(44));
        let n = a.not(a.constant(0));
        assert_eq!(simplify_alg_expr(&a, n), a.constant(255));
    }

    #[test]
    fn alg_simplifies_nested_sbox_argument() {
        // Sbox((r0 ^ ((k ^ r0) ^ r1)) ^ r1) ^ z  ->  Sbox(k) ^ z
        let a = ExprArena::new(Width::W8);
        let mut tables = TableRegistry::new();
        let t = tables.register_aes_sbox("Sbox", Width::W8).unwrap();
        let (r0, r1, k, z) = (rvar(&a, 0), rvar(&a, 1), kvar(&a, 2), rvar(&a, 3));
        let inner = a.bin(
            BinOp::Xor,
            a.bin(BinOp::Xor, r0, a.bin(BinOp::Xor, a.bin(BinOp::Xor, k, r0), r1)),
            r1,
        );
        let e = a.bin(BinOp::Xor, a.table(t, inner), z);
        let got = simplify_alg_expr(&a, e);
        assert_eq!(got, a.bin(BinOp::Xor, a.table(t, k), z));
    }

    #[test]
    fn dom_replaces_shared_node_globally() {
        let a = ExprArena::new(Width::W8);
        let (k, r, rp) = (kvar(&a, 0), rvar(&a, 1), rvar(&a, 2));
        // {k^r, ((k^r)^r') - r'}  ->  {r, (r^r') - r'}
        let kr = a.bin(BinOp::Xor, k, r);
        let m2 = a.bin(BinOp::Sub, a.bin(BinOp::Xor, kr, rp), rp);
        let (out, trace) = simplify_dom(&a, &[kr, m2]);
        let rr = a.var(VarId(1), VarKind::Random);
        assert_eq!(out[0], rr);
        assert_eq!(out[1], a.bin(BinOp::Sub, a.bin(BinOp::Xor, rr, rp), rp));
        assert_eq!(trace.dom_steps(), 1);
    }

    #[test]
    fn dom_respects_exclusivity() {
        let a = ExprArena::new(Width::W8);
        let (k, r) = (kvar(&a, 0), rvar(&a, 1));
        // r occurs outside k^r in the second member: nothing to do for it.
        let kr = a.bin(BinOp::Xor, k, r);
        let and = a.bin(BinOp::And, r, k);
        let (out, trace) = simplify_dom(&a, &[kr, and]);
        assert_eq!(out, vec![kr, and]);
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn dom_prefers_largest_candidate() {
        let a = ExprArena::new(Width::W8);
        let (k, r) = (kvar(&a, 0), rvar(&a, 1));
        // (k ^ r) + 1: both k^r (size 3, dominated by r) and the whole
        // (size 5, also dominated by r) are candidates; largest wins.
        let e = a.bin(BinOp::Add, a.bin(BinOp::Xor, k, r), a.constant(1));
        let (out, _) = simplify_dom(&a, &[e]);
        assert_eq!(out[0], a.var(VarId(1), VarKind::Random));
    }

    #[test]
    fn col_collapses_shared_pair() {
        let a = ExprArena::new(Width::W8);
        let mut tables = TableRegistry::new();
        let t = tables.register_aes_sbox("S", Width::W8).unwrap();
        let (k, r2, r3) = (kvar(&a, 0), rvar(&a, 1), rvar(&a, 2));
        // {(S(k) ^ r2) ^ r3, (S(S(k)) ^ r2) ^ r3} -> {S(k) ^ Z, S(S(k)) ^ Z}
        let s1 = a.table(t, k);
        let s2 = a.table(t, s1);
        let m1 = a.bin(BinOp::Xor, a.bin(BinOp::Xor, s1, r2), r3);
        let m2 = a.bin(BinOp::Xor, a.bin(BinOp::Xor, s2, r2), r3);
        let mut fresh = FreshVars::new(100);
        let (out, trace) = simplify_col(&a, &[m1, m2], &mut fresh);
        assert_eq!(trace.col_steps(), 1);
        let z = a.var(VarId(100), VarKind::Random);
        assert_eq!(out[0], a.bin(BinOp::Xor, s1, z));
        assert_eq!(out[1], a.bin(BinOp::Xor, s2, z));
    }

    #[test]
    fn col_requires_cooccurrence() {
        let a = ExprArena::new(Width::W8);
        let (r2, r3) = (rvar(&a, 1), rvar(&a, 2));
        // {r2 ^ r3, r2}: r2 occurs in a spine without r3; no collapse.
        let m1 = a.bin(BinOp::Xor, r2, r3);
        let mut fresh = FreshVars::new(100);
        let (out, trace) = simplify_col(&a, &[m1, r2], &mut fresh);
        assert_eq!(out, vec![m1, r2]);
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn col_ignores_mixed_kinds() {
        let a = ExprArena::new(Width::W8);
        let (k, r) = (kvar(&a, 0), rvar(&a, 1));
        let m = a.bin(BinOp::Xor, k, r);
        let mut fresh = FreshVars::new(100);
        let (out, trace) = simplify_col(&a, &[m], &mut fresh);
        assert_eq!(out, vec![m]);
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn col_grows_clusters_transitively() {
        let a = ExprArena::new(Width::W8);
        let (k1, k2) = (kvar(&a, 0), kvar(&a, 10));
        let (r1, r2, r3) = (rvar(&a, 1), rvar(&a, 2), rvar(&a, 3));
        // {k1^r1^r2^r3, k2^r1^r2^r3}: all three randoms collapse into one.
        let spine = |k: ExprId| {
            a.bin(BinOp::Xor, a.bin(BinOp::Xor, a.bin(BinOp::Xor, k, r1), r2), r3)
        };
        let mut fresh = FreshVars::new(100);
        let (out, trace) = simplify_col(&a, &[spine(k1), spine(k2)], &mut fresh);
        assert_eq!(trace.col_steps(), 2);
        let z = a.var(VarId(101), VarKind::Random);
        assert_eq!(out[0], a.bin(BinOp::Xor, k1, z));
        assert_eq!(out[1], a.bin(BinOp::Xor, k2, z));
    }

    #[test]
    fn replay_dom_detects_conflicts() {
        let a = ExprArena::new(Width::W8);
        let (k, r, rp) = (kvar(&a, 0), rvar(&a, 1), rvar(&a, 2));
        let kr = a.bin(BinOp::Xor, k, r);
        let (_, trace) = simplify_dom(&a, &[kr]);
        assert_eq!(trace.dom_steps(), 1);
        // New member containing k^r: replacement extends.
        let y = a.bin(BinOp::Xor, kr, rp);
        let replayed = replay(&a, &trace, y).unwrap();
        let rv = a.var(VarId(1), VarKind::Random);
        assert_eq!(replayed, a.bin(BinOp::Xor, rv, rp));
        // New member using r outside k^r: replacement is invalid.
        let bad = a.bin(BinOp::And, r, rp);
        assert!(replay(&a, &trace, bad).is_none());
        // New member not mentioning r at all: untouched.
        let unrelated = a.bin(BinOp::Xor, rp, a.constant(1));
        assert_eq!(replay(&a, &trace, unrelated).unwrap(), unrelated);
    }

    #[test]
    fn replay_col_extends_or_rejects() {
        let a = ExprArena::new(Width::W8);
        let (k, r2, r3, r9) = (kvar(&a, 0), rvar(&a, 1), rvar(&a, 2), rvar(&a, 3));
        let m1 = a.bin(BinOp::Xor, a.bin(BinOp::Xor, k, r2), r3);
        let mut fresh = FreshVars::new(100);
        let (_, trace) = simplify_col(&a, &[m1], &mut fresh);
        assert_eq!(trace.col_steps(), 1);
        // Extension carrying the same pair on one spine: rewritten.
        let y = a.bin(BinOp::Xor, a.bin(BinOp::Xor, r9, r2), r3);
        let z = a.var(VarId(100), VarKind::Random);
        assert_eq!(
            replay(&a, &trace, y).unwrap(),
            a.bin(BinOp::Xor, r9, z)
        );
        // Extension with r2 alone: the recorded collapse no longer holds.
        assert!(replay(&a, &trace, r2).is_none());
        // Extension with r2 outside any spine: same.
        let bad = a.bin(BinOp::And, r2, r3);
        assert!(replay(&a, &trace, bad).is_none());
    }

    #[test]
    fn shift_blocks_nothing_but_keeps_children_simplified(){
        let a = ExprArena::new(Width::W8);
        let x = rvar(&a, 0);
        let e = a.shift(ShiftDir::Left, 2, a.bin(BinOp::Xor, x, x));
        assert_eq!(simplify_alg_expr(&a, e), a.shift(ShiftDir::Left, 2, a.constant(0)));
    }
}
