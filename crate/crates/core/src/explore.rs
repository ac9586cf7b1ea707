//! Systematic coverage of the size-d observation space.
//!
//! Checking every size-d subset of the observables one by one is hopeless;
//! instead the explorer proves large groups in one stroke. Each frame
//! holds a list of pairs `(i, block)` promising "i observations drawn from
//! this block", with the i summing to d and the blocks partitioning the
//! checkable variables. The frame checks one concrete selection (the
//! first i of each block), then greedily extends the proven group by
//! every further variable the checker still accepts: any d-subset of the
//! final group is then secure by subset closure. Remaining selections are
//! covered recursively by re-partitioning each block into the proven part
//! and the rest. A selection whose check fails is recorded as a potential
//! leaking set for exact resolution downstream.
//!
//! The checker itself is a three-level ladder. A set is first typed on
//! the simplified computations directly; if that is inconclusive, after
//! rewriting under exclusive dominant randoms; finally after collapsing
//! co-travelling random pairs (interleaved with further dominant
//! rewrites). For every accepted group the applied rewrites are recorded,
//! and a candidate extension first replays them on its own computation:
//! if the recorded rewrites no longer apply the candidate is rejected
//! outright, otherwise the replayed forms (plus any newly available
//! rewrites) are re-typed. A provably leaky set is rejected at any level
//! without trying further ones.

use std::collections::{BTreeMap, BTreeSet};

use crate::expr::{ExprArena, ExprId};
use crate::transforms::{self, FreshVars, TransformTrace};
use crate::typesys::{infer_set, DistType, Member, TypeContext};
use crate::vars::VarId;

/// Work counters for one exploration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    /// Size-1..d observation tuples the naive enumeration would visit.
    pub tuples: u64,
    /// Group checks actually performed (cache hits excluded).
    pub sets: u64,
    /// Checks that needed expression rewrites to conclude.
    pub simply_dom: u64,
    /// Checks that needed pair collapsing on top of rewrites.
    pub simply_col: u64,
}

/// Outcome of an exploration: the potential leaking sets (size d each,
/// pending exact resolution), the proven groups that cover everything
/// else, and the work counters.
#[derive(Debug, Clone)]
pub struct ExploreResult {
    pub pls: Vec<BTreeSet<VarId>>,
    pub covered: Vec<BTreeSet<VarId>>,
    pub stats: Stats,
}

/// Ladder level at which a check concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Direct,
    Dominator,
    Collapse,
}

/// Member expressions at one rewrite level, with the rewrite sequence
/// that produces them from the simplified computations.
#[derive(Debug, Clone)]
struct LevelState {
    exprs: BTreeMap<VarId, ExprId>,
    trace: TransformTrace,
}

#[derive(Debug, Clone)]
struct FamilyEntry {
    accepted: bool,
    dom: Option<LevelState>,
    col: Option<LevelState>,
}

impl FamilyEntry {
    fn rejected() -> Self {
        FamilyEntry {
            accepted: false,
            dom: None,
            col: None,
        }
    }
}

/// Group checker with per-group rewrite caching.
pub struct CheckEngine<'c, 'p> {
    ctx: &'c TypeContext<'p>,
    fresh: FreshVars,
    families: BTreeMap<BTreeSet<VarId>, FamilyEntry>,
    pub stats: Stats,
}

impl<'c, 'p> CheckEngine<'c, 'p> {
    pub fn new(ctx: &'c TypeContext<'p>) -> Self {
        let first_free = ctx.program.all_vars().len() as u32;
        CheckEngine {
            ctx,
            fresh: FreshVars::new(first_free),
            families: BTreeMap::new(),
            stats: Stats::default(),
        }
    }

    pub fn ctx(&self) -> &'c TypeContext<'p> {
        self.ctx
    }

    /// Check a group from scratch (memoized on the exact variable set).
    pub fn check_family(&mut self, set: &BTreeSet<VarId>) -> bool {
        if let Some(entry) = self.families.get(set) {
            return entry.accepted;
        }
        self.stats.sets += 1;
        let (entry, level) = self.run_ladder(set);
        self.bump(level);
        let accepted = entry.accepted;
        self.families.insert(set.clone(), entry);
        accepted
    }

    /// Check `family + x`, reusing the family's recorded rewrites. The
    /// family must have been accepted before. On acceptance the extended
    /// group is cached under its own key.
    pub fn check_extension(&mut self, family: &BTreeSet<VarId>, x: VarId) -> bool {
        let ctx = self.ctx;
        let arena = &ctx.program.arena;
        let entry = self
            .families
            .get(family)
            .expect("extension requires a checked family")
            .clone();
        debug_assert!(entry.accepted, "extension requires an accepted family");
        debug_assert!(!family.contains(&x));

        let lam_x = ctx.lambda(x);
        let mut lam: BTreeMap<VarId, ExprId> =
            family.iter().map(|&y| (y, ctx.lambda(y))).collect();
        lam.insert(x, lam_x);
        let mut key = family.clone();
        key.insert(x);

        match self.infer(&lam) {
            v if v.is_secure() => {
                // Accepted on the plain computations. Keep the recorded
                // rewrite states alive for future extensions when they
                // still apply to the new member; drop them otherwise.
                let dom = entry.dom.and_then(|st| extend_state(arena, st, x, lam_x));
                let col = entry.col.and_then(|st| extend_state(arena, st, x, lam_x));
                self.families.insert(
                    key,
                    FamilyEntry {
                        accepted: true,
                        dom,
                        col,
                    },
                );
                true
            }
            DistType::Leaky => false,
            _ => {
                // Dominant-rewrite level: replay the recorded sequence on
                // the new member when one exists (a failed replay rejects
                // the candidate outright), or derive rewrites fresh.
                let dom_state = match entry.dom {
                    Some(st) => {
                        let Some(ex) = transforms::replay(arena, &st.trace, lam_x) else {
                            return false;
                        };
                        let mut exprs = st.exprs.clone();
                        exprs.insert(x, ex);
                        let (exprs, trace) = {
                            let vals: Vec<ExprId> = exprs.values().copied().collect();
                            let (rewritten, extra) = transforms::simplify_dom(arena, &vals);
                            let mut trace = st.trace.clone();
                            trace.extend(&extra);
                            (rezip(&exprs, rewritten), trace)
                        };
                        LevelState { exprs, trace }
                    }
                    None => {
                        let vals: Vec<ExprId> = lam.values().copied().collect();
                        let (rewritten, trace) = transforms::simplify_dom(arena, &vals);
                        LevelState {
                            exprs: rezip(&lam, rewritten),
                            trace,
                        }
                    }
                };
                if !dom_state.trace.steps.is_empty() {
                    match self.infer(&dom_state.exprs) {
                        v if v.is_secure() => {
                            self.stats.simply_dom += 1;
                            self.families.insert(
                                key,
                                FamilyEntry {
                                    accepted: true,
                                    dom: Some(dom_state),
                                    col: None,
                                },
                            );
                            return true;
                        }
                        DistType::Leaky => return false,
                        _ => {}
                    }
                }
                // Collapse level.
                let col_state = match entry.col {
                    Some(st) => {
                        let Some(ex) = transforms::replay(arena, &st.trace, lam_x) else {
                            return false;
                        };
                        let mut exprs = st.exprs.clone();
                        exprs.insert(x, ex);
                        let vals: Vec<ExprId> = exprs.values().copied().collect();
                        let (rewritten, extra, _) = self.col_fixpoint(&vals);
                        let mut trace = st.trace.clone();
                        trace.extend(&extra);
                        LevelState {
                            exprs: rezip(&exprs, rewritten),
                            trace,
                        }
                    }
                    None => {
                        let vals: Vec<ExprId> = dom_state.exprs.values().copied().collect();
                        let (rewritten, extra, any_col) = self.col_fixpoint(&vals);
                        if !any_col {
                            return false;
                        }
                        let mut trace = dom_state.trace.clone();
                        trace.extend(&extra);
                        LevelState {
                            exprs: rezip(&dom_state.exprs, rewritten),
                            trace,
                        }
                    }
                };
                if self.infer(&col_state.exprs).is_secure() {
                    self.stats.simply_dom += 1;
                    self.stats.simply_col += 1;
                    self.families.insert(
                        key,
                        FamilyEntry {
                            accepted: true,
                            dom: Some(dom_state),
                            col: Some(col_state),
                        },
                    );
                    true
                } else {
                    false
                }
            }
        }
    }

    fn run_ladder(&mut self, set: &BTreeSet<VarId>) -> (FamilyEntry, Option<Level>) {
        let ctx = self.ctx;
        let arena = &ctx.program.arena;
        let lam: BTreeMap<VarId, ExprId> = set.iter().map(|&x| (x, ctx.lambda(x))).collect();
        match self.infer(&lam) {
            v if v.is_secure() => {
                return (
                    FamilyEntry {
                        accepted: true,
                        dom: None,
                        col: None,
                    },
                    Some(Level::Direct),
                )
            }
            DistType::Leaky => return (FamilyEntry::rejected(), None),
            _ => {}
        }
        let vals: Vec<ExprId> = lam.values().copied().collect();
        let (dom_exprs, dom_trace) = transforms::simplify_dom(arena, &vals);
        let dom_state = LevelState {
            exprs: rezip(&lam, dom_exprs),
            trace: dom_trace,
        };
        if !dom_state.trace.steps.is_empty() {
            match self.infer(&dom_state.exprs) {
                v if v.is_secure() => {
                    return (
                        FamilyEntry {
                            accepted: true,
                            dom: Some(dom_state),
                            col: None,
                        },
                        Some(Level::Dominator),
                    )
                }
                DistType::Leaky => return (FamilyEntry::rejected(), None),
                _ => {}
            }
        }
        let vals: Vec<ExprId> = dom_state.exprs.values().copied().collect();
        let (col_exprs, col_extra, any_col) = self.col_fixpoint(&vals);
        if !any_col {
            return (FamilyEntry::rejected(), None);
        }
        let mut trace = dom_state.trace.clone();
        trace.extend(&col_extra);
        let col_state = LevelState {
            exprs: rezip(&dom_state.exprs, col_exprs),
            trace,
        };
        if self.infer(&col_state.exprs).is_secure() {
            (
                FamilyEntry {
                    accepted: true,
                    dom: Some(dom_state),
                    col: Some(col_state),
                },
                Some(Level::Collapse),
            )
        } else {
            (FamilyEntry::rejected(), None)
        }
    }

    /// Collapse and dominant rewrites interleaved to a joint fixpoint
    /// (a collapse can expose a new exclusive dominator and vice versa).
    /// The returned flag says whether any collapse happened at all.
    fn col_fixpoint(&mut self, exprs: &[ExprId]) -> (Vec<ExprId>, TransformTrace, bool) {
        let ctx = self.ctx;
        let arena = &ctx.program.arena;
        let mut cur = exprs.to_vec();
        let mut trace = TransformTrace::default();
        let mut any_col = false;
        loop {
            let (collapsed, col_trace) = transforms::simplify_col(arena, &cur, &mut self.fresh);
            let col_changed = !col_trace.steps.is_empty();
            if col_changed {
                any_col = true;
                cur = collapsed;
                trace.extend(&col_trace);
            }
            let (rewritten, dom_trace) = transforms::simplify_dom(arena, &cur);
            let dom_changed = !dom_trace.steps.is_empty();
            if dom_changed {
                cur = rewritten;
                trace.extend(&dom_trace);
            }
            if !col_changed && !dom_changed {
                return (cur, trace, any_col);
            }
        }
    }

    fn infer(&self, exprs: &BTreeMap<VarId, ExprId>) -> DistType {
        let members: Vec<Member> = exprs
            .iter()
            .map(|(&v, &e)| Member::new(v, e))
            .collect();
        infer_set(self.ctx, &members).verdict
    }

    fn bump(&mut self, level: Option<Level>) {
        match level {
            Some(Level::Dominator) => self.stats.simply_dom += 1,
            Some(Level::Collapse) => {
                self.stats.simply_dom += 1;
                self.stats.simply_col += 1;
            }
            _ => {}
        }
    }

    #[cfg(test)]
    fn entry(&self, set: &BTreeSet<VarId>) -> Option<&FamilyEntry> {
        self.families.get(set)
    }
}

fn rezip(keys: &BTreeMap<VarId, ExprId>, vals: Vec<ExprId>) -> BTreeMap<VarId, ExprId> {
    debug_assert_eq!(keys.len(), vals.len());
    keys.keys().copied().zip(vals).collect()
}

/// Replay a recorded rewrite state onto one more member; None when a
/// recorded step no longer applies.
fn extend_state(
    arena: &ExprArena,
    mut st: LevelState,
    x: VarId,
    lam_x: ExprId,
) -> Option<LevelState> {
    let ex = transforms::replay(arena, &st.trace, lam_x)?;
    st.exprs.insert(x, ex);
    Some(st)
}

/// One exploration pair: draw `i` observations from `block`. The block
/// is kept in checking order (ascending simplified-computation size, ties
/// by variable id); `c` is the concrete selection grown by extensions.
#[derive(Debug, Clone)]
struct Pair {
    i: usize,
    block: Vec<VarId>,
    c: BTreeSet<VarId>,
}

impl Pair {
    fn new(i: usize, block: Vec<VarId>) -> Self {
        debug_assert!(i <= block.len());
        Pair {
            i,
            block,
            c: BTreeSet::new(),
        }
    }
}

/// Explore all size-d observation sets of the program behind `ctx`.
pub fn explore(ctx: &TypeContext, d: usize) -> ExploreResult {
    assert!(d >= 1, "attack order must be at least 1");
    let x_check = ctx.program.x_check();
    let mut engine = CheckEngine::new(ctx);
    engine.stats.tuples = tuple_count(ctx.program.x_o.len(), d);
    let mut pls: BTreeSet<BTreeSet<VarId>> = BTreeSet::new();
    let mut covered: Vec<BTreeSet<VarId>> = Vec::new();

    if x_check.len() < d {
        // Fewer checkable variables than observations: the adversary can
        // see all of them at once, so check that single set directly.
        if !x_check.is_empty() {
            let set: BTreeSet<VarId> = x_check.iter().copied().collect();
            if engine.check_family(&set) {
                covered.push(set);
            } else {
                pls.insert(set);
            }
        }
    } else {
        let universe: BTreeSet<VarId> = x_check.iter().copied().collect();
        let block = sorted_for_checking(ctx, x_check);
        let root = Pair::new(d, block);
        explore_frame(&mut engine, vec![root], &mut pls, &mut covered, d, &universe);
    }

    ExploreResult {
        pls: pls.into_iter().collect(),
        covered,
        stats: engine.stats,
    }
}

fn explore_frame(
    engine: &mut CheckEngine,
    mut pairs: Vec<Pair>,
    pls: &mut BTreeSet<BTreeSet<VarId>>,
    covered: &mut Vec<BTreeSet<VarId>>,
    d: usize,
    universe: &BTreeSet<VarId>,
) {
    debug_assert_eq!(pairs.iter().map(|p| p.i).sum::<usize>(), d);
    debug_assert!(pairs.iter().all(|p| p.i <= p.block.len() && !p.block.is_empty()));
    debug_assert_eq!(
        pairs.iter().flat_map(|p| p.block.iter()).count(),
        universe.len(),
        "blocks must partition the checkable variables"
    );
    debug_assert!(pairs
        .iter()
        .flat_map(|p| p.block.iter())
        .all(|v| universe.contains(v)));

    // The frame's concrete selection: the first i of each block.
    for p in pairs.iter_mut() {
        p.c = p.block.iter().copied().take(p.i).collect();
    }
    let mut family: BTreeSet<VarId> = pairs.iter().flat_map(|p| p.c.iter().copied()).collect();

    if engine.check_family(&family) {
        // Grow the proven group by every variable, from any block, that
        // the checker still accepts on top of it.
        let mut cands: Vec<(usize, VarId)> = Vec::new();
        for (pi, p) in pairs.iter().enumerate() {
            for &x in &p.block {
                if !p.c.contains(&x) {
                    cands.push((pi, x));
                }
            }
        }
        let ctx = engine.ctx();
        cands.sort_by_key(|&(_, v)| check_key(ctx, v));
        for (pi, x) in cands {
            if engine.check_extension(&family, x) {
                pairs[pi].c.insert(x);
                family.insert(x);
            }
        }
        covered.push(family);
    } else {
        pls.insert(family);
    }

    // Unfinished pairs: a nonzero quota drawn from a block not wholly
    // selected. Redistribute their quota between selection and rest.
    let split: Vec<usize> = (0..pairs.len())
        .filter(|&idx| pairs[idx].i != 0 && pairs[idx].block.len() > pairs[idx].i)
        .collect();
    if split.is_empty() {
        return;
    }
    let remainders: Vec<Vec<VarId>> = split
        .iter()
        .map(|&idx| {
            let p = &pairs[idx];
            p.block.iter().copied().filter(|v| !p.c.contains(v)).collect()
        })
        .collect();
    let bounds: Vec<usize> = split
        .iter()
        .zip(&remainders)
        .map(|(&idx, rem)| pairs[idx].i.min(rem.len()))
        .collect();

    // All redistributions in ascending lexicographic order, skipping the
    // all-zero one (it reproduces this frame).
    let mut combo = vec![0usize; split.len()];
    'combos: loop {
        let mut pos = split.len();
        loop {
            if pos == 0 {
                break 'combos;
            }
            pos -= 1;
            if combo[pos] < bounds[pos] {
                combo[pos] += 1;
                for later in combo[pos + 1..].iter_mut() {
                    *later = 0;
                }
                break;
            }
        }
        let mut child: Vec<Pair> = Vec::new();
        for (idx, p) in pairs.iter().enumerate() {
            if !split.contains(&idx) {
                child.push(Pair::new(p.i, p.block.clone()));
            }
        }
        for (k, &idx) in split.iter().enumerate() {
            let p = &pairs[idx];
            let taken: Vec<VarId> = p.block.iter().copied().filter(|v| p.c.contains(v)).collect();
            child.push(Pair::new(p.i - combo[k], taken));
            if !remainders[k].is_empty() {
                child.push(Pair::new(combo[k], remainders[k].clone()));
            }
        }
        explore_frame(engine, child, pls, covered, d, universe);
    }
}

/// Checking order: cheapest simplified computation first, ids breaking
/// ties. Small expressions make the likeliest accepted seeds and keep
/// rewrite traces short.
fn check_key(ctx: &TypeContext, x: VarId) -> (u32, VarId) {
    (ctx.program.arena.size(ctx.lambda(x)), x)
}

fn sorted_for_checking(ctx: &TypeContext, mut vars: Vec<VarId>) -> Vec<VarId> {
    vars.sort_by_key(|&v| check_key(ctx, v));
    vars
}

/// Number of size-1..=d observation tuples over `n` observables,
/// saturating on overflow.
fn tuple_count(n: usize, d: usize) -> u64 {
    let mut total: u128 = 0;
    for i in 1..=d.min(n) {
        total = total.saturating_add(binomial(n, i));
    }
    total.min(u64::MAX as u128) as u64
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.saturating_mul((n - j) as u128) / (j + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{elaborate, parse};
    use crate::program::Program;
    use crate::width::Width;

    const GOUBIN: &str = r#"
        #private k;
        #random r, r';
        #preshare { x' = k ^ r; }
        y0 = x' ^ r';
        y1 = y0 - r';
        y2 = y1 ^ x';
        y3 = r' ^ r;
        y4 = y3 ^ x';
        y5 = y4 - y3;
        A  = y5 ^ y2;
        return A;
    "#;

    fn goubin() -> Program {
        elaborate(&parse(GOUBIN).unwrap(), Width::W8).unwrap()
    }

    fn v(p: &Program, name: &str) -> VarId {
        p.vars.lookup(name).unwrap()
    }

    fn vset(p: &Program, names: &[&str]) -> BTreeSet<VarId> {
        names.iter().map(|n| v(p, n)).collect()
    }

    #[test]
    fn first_order_conversion_leaves_only_the_spurious_output() {
        // Of the ten checkable variables only the final output resists
        // every rule (it is the secret minus one share, which happens to
        // be uniform but not provably so here).
        let p = goubin();
        let ctx = TypeContext::new(&p);
        let res = explore(&ctx, 1);
        assert_eq!(res.pls, vec![vset(&p, &["A"])]);
        assert_eq!(res.stats.tuples, 10);
        assert_eq!(res.stats.sets, 5);
        assert_eq!(res.stats.simply_dom, 0);
        assert_eq!(res.stats.simply_col, 0);
    }

    #[test]
    fn every_singleton_is_covered_or_potentially_leaking() {
        let p = goubin();
        let ctx = TypeContext::new(&p);
        let res = explore(&ctx, 1);
        for &x in &p.x_check() {
            let s: BTreeSet<VarId> = [x].into_iter().collect();
            let ok = res.covered.iter().any(|c| s.is_subset(c))
                || res.pls.iter().any(|l| *l == s);
            assert!(ok, "variable {x:?} neither covered nor flagged");
        }
    }

    #[test]
    fn second_order_finds_the_share_recombination() {
        // y0 ^ y3 cancels both randoms and equals the secret exactly;
        // the pair must surface as a potential leaking set. The pair of
        // one random with the masked share leaks too.
        let p = goubin();
        let ctx = TypeContext::new(&p);
        let res = explore(&ctx, 2);
        assert!(res.pls.contains(&vset(&p, &["y0", "y3"])));
        assert!(res.pls.contains(&vset(&p, &["r", "x'"])));
        assert!(res.pls.iter().all(|s| s.len() == 2));
    }

    #[test]
    fn second_order_covers_every_pair() {
        let p = goubin();
        let ctx = TypeContext::new(&p);
        let res = explore(&ctx, 2);
        let xc = p.x_check();
        for (ai, &a) in xc.iter().enumerate() {
            for &b in &xc[ai + 1..] {
                let s: BTreeSet<VarId> = [a, b].into_iter().collect();
                let ok = res.covered.iter().any(|c| s.is_subset(c))
                    || res.pls.contains(&s);
                assert!(ok, "pair {s:?} neither covered nor flagged");
            }
        }
    }

    #[test]
    fn single_share_masking_is_first_order_secure() {
        let p = elaborate(
            &parse("#private k;\n#random r;\na = k ^ r;\nreturn a;").unwrap(),
            Width::W8,
        )
        .unwrap();
        let ctx = TypeContext::new(&p);
        let res = explore(&ctx, 1);
        assert!(res.pls.is_empty());
        assert_eq!(res.stats.sets, 2);
        assert_eq!(res.stats.tuples, 2);
    }

    #[test]
    fn order_beyond_observables_checks_everything_at_once() {
        let p = elaborate(
            &parse("#private k;\n#random r;\na = k ^ r;\nreturn a;").unwrap(),
            Width::W8,
        )
        .unwrap();
        let ctx = TypeContext::new(&p);
        let res = explore(&ctx, 3);
        // Observing both the random and the masked value recovers the
        // secret, and no rule pretends otherwise.
        assert_eq!(res.pls, vec![vset(&p, &["r", "a"])]);
    }

    #[test]
    fn dominant_rewrite_accepts_and_extensions_replay_it() {
        // {x', y1} needs the shared-node rewrite to verify. Extending by
        // y0 must replay that rewrite on y0's computation and succeed
        // without deriving anything new.
        let p = goubin();
        let ctx = TypeContext::new(&p);
        let mut engine = CheckEngine::new(&ctx);

        let fam = vset(&p, &["x'", "y1"]);
        assert!(engine.check_family(&fam));
        assert_eq!(engine.stats.simply_dom, 1);
        let entry = engine.entry(&fam).unwrap();
        let st = entry.dom.as_ref().unwrap();
        assert_eq!(st.trace.dom_steps(), 1);
        assert!(entry.col.is_none());

        assert!(engine.check_extension(&fam, v(&p, "y0")));
        assert_eq!(engine.stats.simply_dom, 2);
        let grown = vset(&p, &["x'", "y0", "y1"]);
        let entry = engine.entry(&grown).unwrap();
        assert_eq!(entry.dom.as_ref().unwrap().trace.dom_steps(), 1);

        // The observed random r occurs outside the rewritten node, so the
        // recorded rewrite cannot replay onto it: immediate rejection.
        assert!(!engine.check_extension(&grown, v(&p, "r")));
        assert!(engine.entry(&vset(&p, &["x'", "y0", "y1", "r"])).is_none());
    }

    #[test]
    fn collapse_level_verifies_reassociated_masking() {
        // m1 = (k ^ r2) ^ r3 and m2 = (k ^ r3) ^ r2 share no node, so no
        // dominant rewrite applies; collapsing {r2, r3} makes both
        // computations the same single expression, which then rewrites
        // to the collapsed random alone and types key-free.
        let src = "#private k;\n#random r2, r3;\n\
                   t1 = k ^ r2;\nm1 = t1 ^ r3;\n\
                   t2 = k ^ r3;\nm2 = t2 ^ r2;\n\
                   t3 = k ^ r2;\nm3 = t3 ^ r3;\n\
                   m4 = t1 & r3;\nreturn m1;";
        let p = elaborate(&parse(src).unwrap(), Width::W8).unwrap();
        let ctx = TypeContext::new(&p);
        let mut engine = CheckEngine::new(&ctx);
        let fam = vset(&p, &["m1", "m2"]);
        assert!(engine.check_family(&fam));
        assert_eq!(engine.stats.simply_dom, 1);
        assert_eq!(engine.stats.simply_col, 1);
        let entry = engine.entry(&fam).unwrap();
        let col = entry.col.as_ref().unwrap();
        assert!(col.trace.col_steps() >= 1 && col.trace.dom_steps() >= 1);

        // m3 carries the pair as co-travelling leaves of one spine, so
        // the recorded collapse replays onto it cleanly.
        assert!(engine.check_extension(&fam, v(&p, "m3")));
        assert_eq!(engine.stats.simply_col, 2);

        // t1 carries r2 without r3, m4 carries r2 outside any spine:
        // both break the recorded collapse and are rejected outright.
        assert!(!engine.check_extension(&fam, v(&p, "t1")));
        assert!(!engine.check_extension(&fam, v(&p, "m4")));
        assert!(engine.entry(&vset(&p, &["m1", "m2", "t1"])).is_none());
    }

    #[test]
    fn leaky_groups_are_rejected_without_rewrites() {
        // (k & r) is biased toward zero whatever r does; the group check
        // must fail at the first level and never reach a rewrite.
        let p = elaborate(
            &parse("#private k;\n#random r;\nm = k & r;\nreturn m;").unwrap(),
            Width::W8,
        )
        .unwrap();
        let ctx = TypeContext::new(&p);
        let mut engine = CheckEngine::new(&ctx);
        assert!(!engine.check_family(&vset(&p, &["m"])));
        assert_eq!(engine.stats.simply_dom, 0);
        assert_eq!(engine.stats.sets, 1);
    }

    #[test]
    fn family_checks_are_memoized() {
        let p = goubin();
        let ctx = TypeContext::new(&p);
        let mut engine = CheckEngine::new(&ctx);
        let fam = vset(&p, &["y3"]);
        assert!(engine.check_family(&fam));
        assert!(engine.check_family(&fam));
        assert_eq!(engine.stats.sets, 1);
    }

    #[test]
    fn tuple_counts_saturate_instead_of_overflowing() {
        assert_eq!(tuple_count(10, 1), 10);
        assert_eq!(tuple_count(10, 2), 55);
        assert_eq!(tuple_count(4, 9), 15);
        assert_eq!(tuple_count(10_000, 40), u64::MAX);
    }
}
