//! Distribution types over observed values and the rules that assign them.
//!
//! Every set of observable variables has a joint distribution once the
//! secret and public inputs are fixed and the randoms are drawn. The
//! analysis classifies that distribution without ever computing it:
//! [`DistType::Uniform`] (jointly uniform for every input, the strongest
//! answer), [`DistType::SecretIndependent`] (possibly skewed but identical
//! for all secrets), [`DistType::Leaky`] (provably varies with a secret),
//! or [`DistType::Unknown`] when no rule applies. Unknown is not a verdict;
//! it is the signal to escalate to expression transforms and, past those,
//! to exact model counting.
//!
//! Two inference entry points live here. [`TypeContext::first_order`]
//! types a single variable from the shape of its defining assignment and
//! its operands' types. [`infer_set`] types a whole set by peeling members
//! that are supported by the rest: a member owning a dominant random no
//! other member touches can be removed (its value is fresh noise to them),
//! a member computed entirely from other members and publics can be
//! removed (it adds no information), and a remainder that never touches a
//! private input is independent of secrets outright. Peeling iterates to a
//! fixpoint, so sets that fail any one-shot test still verify when the
//! peels enable each other.

use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::expr::{BinOp, ExprArena, ExprId, ExprNode};
use crate::program::{Operand, Program, Rhs};
use crate::transforms;
use crate::vars::{VarId, VarKind};

/// How the joint distribution of an observable set relates to the secrets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DistType {
    /// Jointly uniform under every secret/public assignment.
    Uniform,
    /// One fixed distribution, whatever the secrets are.
    SecretIndependent,
    /// Provably depends on a secret.
    Leaky,
    /// No rule applied; the set needs a stronger method.
    Unknown,
}

impl DistType {
    /// Uniform implies secret-independent; both certify security.
    pub fn is_secure(self) -> bool {
        matches!(self, DistType::Uniform | DistType::SecretIndependent)
    }
}

impl std::fmt::Display for DistType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DistType::Uniform => "uniform",
            DistType::SecretIndependent => "secret-independent",
            DistType::Leaky => "leaky",
            DistType::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// One observable under analysis: the variable and the expression standing
/// for its value. At the base level the expression is the simplified
/// computation; transformed levels substitute rewritten forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Member {
    pub var: VarId,
    pub expr: ExprId,
}

impl Member {
    pub fn new(var: VarId, expr: ExprId) -> Self {
        Member { var, expr }
    }
}

/// One applied rule in a derivation, kept so reports can show why a set
/// was accepted or condemned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofStep {
    /// Member removed in the uniformity phase: `witness` is a dominant
    /// random of its expression appearing in no other member.
    UniformWitness { var: VarId, witness: VarId },
    /// Member removed in the independence phase by the same witness
    /// argument.
    IndependentWitness { var: VarId, witness: VarId },
    /// Member removed because its defining operands all sit in the
    /// remaining set, the public inputs, or constants.
    OperandSupported { var: VarId },
    /// Members dropped because their expressions read public inputs only.
    PublicOnly { vars: Vec<VarId> },
    /// The remaining expressions never touch a private input.
    KeyFree,
    /// A member is leaky on its own, so the whole set is.
    LeakyMember { var: VarId },
    /// A subset was already proven leaky by exact counting.
    CountedLeaky { set: Vec<VarId> },
    /// A superset was already proven secret-independent by exact counting.
    CountedIndependent { set: Vec<VarId> },
    /// Singleton decided by the per-variable rules.
    FirstOrder { var: VarId, verdict: DistType },
}

/// Outcome of a set inference: the type found and the rule applications
/// that justify it (empty for `Unknown`).
#[derive(Debug, Clone)]
pub struct Inference {
    pub verdict: DistType,
    pub steps: Vec<ProofStep>,
}

impl Inference {
    fn new(verdict: DistType, steps: Vec<ProofStep>) -> Self {
        Inference { verdict, steps }
    }
}

/// Verdicts established by exact model counting, fed back so later
/// inferences skip work: any superset of a counted-leaky set leaks, and
/// any subset of a counted-independent set is independent.
#[derive(Debug, Clone, Default)]
pub struct FeedbackStore {
    leaky: Vec<BTreeSet<VarId>>,
    independent: Vec<BTreeSet<VarId>>,
}

impl FeedbackStore {
    pub fn new() -> Self {
        FeedbackStore::default()
    }

    pub fn record_leaky(&mut self, set: BTreeSet<VarId>) {
        if !self.leaky.contains(&set) {
            self.leaky.push(set);
        }
    }

    pub fn record_independent(&mut self, set: BTreeSet<VarId>) {
        if !self.independent.contains(&set) {
            self.independent.push(set);
        }
    }

    /// A recorded leaky set contained in `of`, if any.
    pub fn leaky_subset(&self, of: &BTreeSet<VarId>) -> Option<&BTreeSet<VarId>> {
        self.leaky.iter().find(|l| l.is_subset(of))
    }

    /// A recorded independent set containing `of`, if any.
    pub fn independent_superset(&self, of: &BTreeSet<VarId>) -> Option<&BTreeSet<VarId>> {
        self.independent.iter().find(|s| of.is_subset(s))
    }

    pub fn is_empty(&self) -> bool {
        self.leaky.is_empty() && self.independent.is_empty()
    }
}

/// Shared state for all type queries against one program: the simplified
/// computation of every variable, memoized per-variable types, and the
/// counting feedback.
pub struct TypeContext<'p> {
    pub program: &'p Program,
    pub feedback: FeedbackStore,
    lambda: BTreeMap<VarId, ExprId>,
    first_order_memo: RefCell<BTreeMap<VarId, DistType>>,
}

impl<'p> TypeContext<'p> {
    /// Build the context, algebraically simplifying every computation up
    /// front. Simplification only rewrites (never weakens), so all side
    /// conditions are evaluated on the reduced forms.
    pub fn new(program: &'p Program) -> Self {
        let mut lambda = BTreeMap::new();
        for x in program.all_vars() {
            let e = program.computation(x);
            lambda.insert(x, transforms::simplify_alg_expr(&program.arena, e));
        }
        TypeContext {
            program,
            feedback: FeedbackStore::new(),
            lambda,
            first_order_memo: RefCell::new(BTreeMap::new()),
        }
    }

    /// The simplified computation of `x`. Equal to the raw computation
    /// (same interned id) when nothing cancelled.
    pub fn lambda(&self, x: VarId) -> ExprId {
        self.lambda[&x]
    }

    /// Dominant randoms of the simplified computation of `x`.
    pub fn dominant(&self, x: VarId) -> Arc<BTreeSet<VarId>> {
        self.program.arena.dominators(self.lambda(x))
    }

    /// The base member for `x`: the variable paired with its simplified
    /// computation.
    pub fn member(&self, x: VarId) -> Member {
        Member::new(x, self.lambda(x))
    }

    /// Type of the single variable `x`, derived from its kind or its
    /// defining assignment. Memoized; recursion follows the SSA order, so
    /// it terminates.
    pub fn first_order(&self, x: VarId) -> DistType {
        if let Some(&t) = self.first_order_memo.borrow().get(&x) {
            return t;
        }
        let t = self.first_order_uncached(x);
        self.first_order_memo.borrow_mut().insert(x, t);
        t
    }

    fn first_order_uncached(&self, x: VarId) -> DistType {
        match self.program.vars.kind(x) {
            Some(VarKind::Public) => DistType::SecretIndependent,
            Some(VarKind::Random) => DistType::Uniform,
            Some(VarKind::Private) => DistType::Leaky,
            None => {
                // A dominant random in the simplified computation makes
                // the value uniform regardless of how it was assembled;
                // try it first because uniform is the strongest answer.
                if !self.dominant(x).is_empty() {
                    return DistType::Uniform;
                }
                let t = self.by_assignment(x);
                if t != DistType::Unknown {
                    return t;
                }
                // A computation that never reads a private input follows
                // one fixed distribution.
                if !contains_private(&self.program.arena, self.lambda(x)) {
                    return DistType::SecretIndependent;
                }
                DistType::Unknown
            }
        }
    }

    fn by_assignment(&self, x: VarId) -> DistType {
        let rhs = self
            .program
            .assignment_of(x)
            .expect("kindless variable must be assigned")
            .rhs;
        match rhs {
            Rhs::Atom(Operand::Const(_)) | Rhs::Not(Operand::Const(_)) => {
                DistType::SecretIndependent
            }
            // Complement and table lookups are bijections (tables are
            // validated at registration), so they carry the operand's
            // distribution class unchanged.
            Rhs::Atom(Operand::Var(y)) | Rhs::Not(Operand::Var(y)) => self.first_order(y),
            Rhs::Table(_, Operand::Const(_)) => DistType::SecretIndependent,
            Rhs::Table(_, Operand::Var(y)) => self.first_order(y),
            Rhs::Shift(_, _, Operand::Const(_)) => DistType::SecretIndependent,
            // Shifts discard bits: uniformity is lost, and a leak may or
            // may not survive, so only independence transfers.
            Rhs::Shift(_, _, Operand::Var(y)) => self.secure_to_si(y),
            Rhs::Bin(op, a, b) => self.by_bin(op, a, b),
        }
    }

    fn by_bin(&self, op: BinOp, a: Operand, b: Operand) -> DistType {
        match (a, b) {
            (Operand::Const(_), Operand::Const(_)) => DistType::SecretIndependent,
            // A constant mixed into one secure operand yields a function
            // of that operand alone.
            (Operand::Const(_), Operand::Var(y)) | (Operand::Var(y), Operand::Const(_)) => {
                self.secure_to_si(y)
            }
            (Operand::Var(y), Operand::Var(z)) if y == z => match op {
                // y ^ y and y - y are the constant zero.
                BinOp::Xor | BinOp::Sub => DistType::SecretIndependent,
                // y & y and y | y are y itself, so even a leak persists.
                BinOp::And | BinOp::Or => match self.first_order(y) {
                    DistType::Leaky => DistType::Leaky,
                    t if t.is_secure() => DistType::SecretIndependent,
                    _ => DistType::Unknown,
                },
                // Remaining ops compute a fixed function of the operand.
                _ => self.secure_to_si(y),
            },
            (Operand::Var(y), Operand::Var(z)) => self.by_distinct_pair(op, y, z),
        }
    }

    fn by_distinct_pair(&self, op: BinOp, y: VarId, z: VarId) -> DistType {
        let arena = &self.program.arena;
        let (ty, tz) = (self.first_order(y), self.first_order(z));
        let nonlinear = matches!(op, BinOp::And | BinOp::Or | BinOp::GfMul | BinOp::Mul);
        let (ly, lz) = (self.lambda(y), self.lambda(z));
        let fresh_in = |a: ExprId, b: ExprId| {
            // a owns a dominant random that b never reads: combining them
            // still exposes fresh noise.
            arena
                .dominators(a)
                .iter()
                .any(|r| !arena.rvars(b).contains(r))
        };
        if nonlinear && ty == DistType::Uniform && tz == DistType::Uniform {
            if fresh_in(ly, lz) || fresh_in(lz, ly) {
                return DistType::SecretIndependent;
            }
        }
        // Two secure operands over disjoint randomness are independent of
        // each other, so any function of the pair stays secure.
        if ty.is_secure()
            && tz.is_secure()
            && arena.rvars(ly).intersection(&arena.rvars(lz)).next().is_none()
        {
            return DistType::SecretIndependent;
        }
        // A leaky operand masked by a uniform one through a non-invertible
        // op: the bias survives, so the result provably leaks.
        if nonlinear {
            let leak_through = |tl: DistType, tu: DistType, el: ExprId, eu: ExprId| {
                tl == DistType::Leaky && tu == DistType::Uniform && fresh_in(eu, el)
            };
            if leak_through(ty, tz, ly, lz) || leak_through(tz, ty, lz, ly) {
                return DistType::Leaky;
            }
        }
        DistType::Unknown
    }

    fn secure_to_si(&self, y: VarId) -> DistType {
        if self.first_order(y).is_secure() {
            DistType::SecretIndependent
        } else {
            DistType::Unknown
        }
    }
}

/// Infer the joint distribution type of a member set.
///
/// Phases, strongest verdict first. Leak detection: a counted-leaky subset
/// or a first-order-leaky member condemns the set. Uniformity: repeatedly
/// peel every member holding a dominant random absent from all other
/// members; if everything peels, the joint is uniform. Independence:
/// repeatedly (1) peel a member whose defining operands all lie in the
/// remaining set, publics, or constants, latest definition first, (2) drop
/// members reading public inputs only, (3) accept if no private input
/// remains anywhere, (4) peel by the witness argument again. A stuck
/// remainder answers `Unknown`.
pub fn infer_set(ctx: &TypeContext, members: &[Member]) -> Inference {
    let arena = &ctx.program.arena;
    let member_vars: BTreeSet<VarId> = members.iter().map(|m| m.var).collect();

    if let Some(l) = ctx.feedback.leaky_subset(&member_vars) {
        let step = ProofStep::CountedLeaky {
            set: l.iter().copied().collect(),
        };
        return Inference::new(DistType::Leaky, vec![step]);
    }
    for m in members {
        if ctx.first_order(m.var) == DistType::Leaky {
            return Inference::new(
                DistType::Leaky,
                vec![ProofStep::LeakyMember { var: m.var }],
            );
        }
    }

    // Uniformity by iterated witness peeling. The witness condition for a
    // member only depends on the set it is judged against, so peels are
    // batched per round and recomputed after shrinking.
    let mut s: Vec<Member> = members.to_vec();
    let mut steps: Vec<ProofStep> = Vec::new();
    loop {
        if s.is_empty() {
            return Inference::new(DistType::Uniform, steps);
        }
        let peels = batch_witnesses(arena, &s);
        if peels.is_empty() {
            break;
        }
        for &(var, witness) in &peels {
            steps.push(ProofStep::UniformWitness { var, witness });
        }
        let peeled: BTreeSet<VarId> = peels.iter().map(|&(v, _)| v).collect();
        s.retain(|m| !peeled.contains(&m.var));
    }
    if let [only] = members {
        if ctx.first_order(only.var) == DistType::Uniform {
            let step = ProofStep::FirstOrder {
                var: only.var,
                verdict: DistType::Uniform,
            };
            return Inference::new(DistType::Uniform, vec![step]);
        }
    }

    // Independence.
    if let Some(sup) = ctx.feedback.independent_superset(&member_vars) {
        let step = ProofStep::CountedIndependent {
            set: sup.iter().copied().collect(),
        };
        return Inference::new(DistType::SecretIndependent, vec![step]);
    }
    let mut s: Vec<Member> = members.to_vec();
    let mut steps: Vec<ProofStep> = Vec::new();
    'fixpoint: loop {
        if s.is_empty() {
            return Inference::new(DistType::SecretIndependent, steps);
        }
        // Operand-supported peel. Later definitions peel first: under
        // SSA a definition never reads a later variable, so this order
        // cannot strand a peelable member.
        let cur_vars: BTreeSet<VarId> = s.iter().map(|m| m.var).collect();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].var.cmp(&s[i].var));
        for idx in order {
            let Some(ops) = ctx.program.operands(s[idx].var) else {
                continue;
            };
            let supported = ops.iter().all(|o| match *o {
                Operand::Const(_) => true,
                Operand::Var(v) => cur_vars.contains(&v) || ctx.program.x_p.contains(&v),
            });
            if supported {
                steps.push(ProofStep::OperandSupported { var: s[idx].var });
                s.remove(idx);
                continue 'fixpoint;
            }
        }
        // Public-only members carry no secret-relevant information.
        let dropped: Vec<VarId> = s
            .iter()
            .filter(|m| all_leaves_public(arena, m.expr))
            .map(|m| m.var)
            .collect();
        if !dropped.is_empty() {
            let gone: BTreeSet<VarId> = dropped.iter().copied().collect();
            steps.push(ProofStep::PublicOnly { vars: dropped });
            s.retain(|m| !gone.contains(&m.var));
            continue;
        }
        // No private input left anywhere: the joint distribution is a
        // fixed function of publics and randoms.
        if s.iter().all(|m| !contains_private(arena, m.expr)) {
            steps.push(ProofStep::KeyFree);
            return Inference::new(DistType::SecretIndependent, steps);
        }
        let peels = batch_witnesses(arena, &s);
        if !peels.is_empty() {
            for &(var, witness) in &peels {
                steps.push(ProofStep::IndependentWitness { var, witness });
            }
            let peeled: BTreeSet<VarId> = peels.iter().map(|&(v, _)| v).collect();
            s.retain(|m| !peeled.contains(&m.var));
            continue;
        }
        break;
    }
    if let [only] = members {
        if ctx.first_order(only.var).is_secure() {
            let step = ProofStep::FirstOrder {
                var: only.var,
                verdict: DistType::SecretIndependent,
            };
            return Inference::new(DistType::SecretIndependent, vec![step]);
        }
    }
    Inference::new(DistType::Unknown, Vec::new())
}

/// Members holding a witness against the current set: a dominant random of
/// their expression read by no other member. Witnesses from one round are
/// automatically distinct (each is absent from every other member).
fn batch_witnesses(arena: &ExprArena, s: &[Member]) -> Vec<(VarId, VarId)> {
    let mut peels = Vec::new();
    for (i, m) in s.iter().enumerate() {
        let dom = arena.dominators(m.expr);
        let witness = dom.iter().copied().find(|r| {
            s.iter()
                .enumerate()
                .all(|(j, n)| j == i || !arena.rvars(n.expr).contains(r))
        });
        if let Some(w) = witness {
            peels.push((m.var, w));
        }
    }
    peels
}

fn contains_private(arena: &ExprArena, e: ExprId) -> bool {
    arena
        .reachable(&[e])
        .iter()
        .any(|&n| matches!(arena.node(n), ExprNode::Var(_, VarKind::Private)))
}

fn all_leaves_public(arena: &ExprArena, e: ExprId) -> bool {
    arena
        .reachable(&[e])
        .iter()
        .all(|&n| !matches!(arena.node(n), ExprNode::Var(_, k) if k != VarKind::Public))
}
