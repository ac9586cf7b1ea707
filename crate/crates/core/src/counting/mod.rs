//! Exact resolution of observable sets by joint distribution counting.
//!
//! The type system proves most sets secure; the sets it leaves behind are
//! settled here by brute force. For one observable set the joint value
//! histogram over all random assignments is computed per secret assignment,
//! with public inputs fixed in an outer loop. The set is secret independent
//! exactly when, for every public assignment, all secret assignments induce
//! the same histogram; the first differing histogram cell is returned as a
//! re-checkable leak witness.
//!
//! Enumeration cost is exponential in kappa times the number of inputs, so
//! every entry point takes a bit budget and refuses oversized instances
//! instead of silently running for hours. Oversized instances can still be
//! handed to an external solver through [`smt`].

mod compile;
mod parallel;
pub mod smt;
pub mod smtsolve;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::expr::{ExprArena, ExprId, ExprNode};
use crate::program::Program;
use crate::tables::TableRegistry;
use crate::vars::{VarId, VarKind};
use crate::width::Width;

use compile::Compiled;

/// Default ceiling, in bits, on both the histogram index space and the
/// enumerated input space. 2^32 evaluations is roughly a minute of work;
/// anything beyond belongs on a solver.
pub const DEFAULT_BIT_BUDGET: u32 = 32;

/// Ceiling on kappa times the random count for emitted solver formulas,
/// which grow a conjunct per random assignment.
pub const SMT_BIT_CAP: u32 = 12;

/// Joint value counts for one observable set under fixed public and secret
/// inputs, indexed by tuples of member values.
///
/// Member order is the order the expressions were given in, which for
/// program sets is ascending variable id. A tuple `(c_0, .., c_{m-1})`
/// lives at index `sum c_j * |I|^j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    width: Width,
    arity: usize,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn width(&self) -> Width {
        self.width
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, tuple: &[u16]) -> usize {
        assert_eq!(tuple.len(), self.arity, "tuple arity mismatch");
        let base = self.width.domain_size() as usize;
        tuple
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * base + c as usize)
    }

    pub fn tuple_at(&self, mut idx: usize) -> Vec<u16> {
        let base = self.width.domain_size() as usize;
        (0..self.arity)
            .map(|_| {
                let c = (idx % base) as u16;
                idx /= base;
                c
            })
            .collect()
    }

    /// Total mass, always the size of the enumerated random space.
    pub fn mass(&self) -> u128 {
        self.counts.iter().map(|&c| c as u128).sum()
    }

    /// True when every cell holds the same count, i.e. the joint
    /// distribution is uniform over the full tuple space.
    pub fn is_flat(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] == w[1])
    }
}

/// A concrete demonstration that two secret assignments are telling the
/// adversary apart: under `eta_p`, the observed tuple occurs `count_ref`
/// times for `eta_k_ref` but `count` times for `eta_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakWitness {
    pub eta_p: BTreeMap<VarId, u16>,
    pub eta_k_ref: BTreeMap<VarId, u16>,
    pub eta_k: BTreeMap<VarId, u16>,
    pub tuple: Vec<u16>,
    pub count_ref: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountVerdict {
    SecretIndependent,
    Leaky(LeakWitness),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CountError {
    #[error("joint histogram needs {bits_needed} index bits, over the {budget}-bit budget")]
    HistogramBudget { bits_needed: u32, budget: u32 },
    #[error("enumerating {bits_needed} bits of input space is over the {budget}-bit budget")]
    EnumerationBudget { bits_needed: u32, budget: u32 },
    #[error("{bits_needed} bits of random space exceed the {cap}-bit formula cap")]
    SmtCap { bits_needed: u32, cap: u32 },
}

/// One observable set prepared for enumeration: expressions compiled, input
/// variables classified by kind and laid out in an environment array as
/// publics, then privates, then randoms, each ascending.
pub(crate) struct Task {
    pub(crate) width: Width,
    pub(crate) publics: Vec<VarId>,
    pub(crate) privates: Vec<VarId>,
    pub(crate) randoms: Vec<VarId>,
    pub(crate) arity: usize,
    pub(crate) compiled: Compiled,
}

impl Task {
    fn from_parts(
        arena: &ExprArena,
        tables: &TableRegistry,
        width: Width,
        exprs: &[ExprId],
        budget: u32,
    ) -> Result<Task, CountError> {
        let mut publics = BTreeSet::new();
        let mut privates = BTreeSet::new();
        let mut randoms = BTreeSet::new();
        for id in arena.reachable(exprs) {
            if let ExprNode::Var(x, kind) = arena.node(id) {
                match kind {
                    VarKind::Public => publics.insert(x),
                    VarKind::Private => privates.insert(x),
                    VarKind::Random => randoms.insert(x),
                };
            }
        }
        let publics: Vec<VarId> = publics.into_iter().collect();
        let privates: Vec<VarId> = privates.into_iter().collect();
        let randoms: Vec<VarId> = randoms.into_iter().collect();

        let hist_bits = exprs.len() as u32 * width.bits();
        if hist_bits > budget {
            return Err(CountError::HistogramBudget {
                bits_needed: hist_bits,
                budget,
            });
        }
        let enum_bits = (publics.len() + privates.len() + randoms.len()) as u32 * width.bits();
        if enum_bits > budget {
            return Err(CountError::EnumerationBudget {
                bits_needed: enum_bits,
                budget,
            });
        }

        let mut slots = BTreeMap::new();
        for (i, &x) in publics.iter().chain(&privates).chain(&randoms).enumerate() {
            slots.insert(x, i);
        }
        let compiled = Compiled::new(arena, tables, width, exprs, &slots);
        Ok(Task {
            width,
            publics,
            privates,
            randoms,
            arity: exprs.len(),
            compiled,
        })
    }

    fn from_program(p: &Program, set: &BTreeSet<VarId>, budget: u32) -> Result<Task, CountError> {
        let exprs: Vec<ExprId> = set.iter().map(|&x| p.computation(x)).collect();
        Task::from_parts(&p.arena, &p.tables, p.width, &exprs, budget)
    }

    fn slot_count(&self) -> usize {
        self.publics.len() + self.privates.len() + self.randoms.len()
    }

    /// Environment slice holding the random inputs.
    pub(crate) fn random_slots(&self) -> std::ops::Range<usize> {
        let lo = self.publics.len() + self.privates.len();
        lo..lo + self.randoms.len()
    }

    pub(crate) fn counts_len(&self) -> usize {
        (self.width.domain_size() as usize).pow(self.arity as u32)
    }
}

/// Advance the environment digits in `range` as a little-endian counter
/// over the word domain. Returns false on wrap-around, leaving all digits
/// zero again; an empty range wraps immediately.
pub(crate) fn advance(env: &mut [u16], range: std::ops::Range<usize>, mask: u16) -> bool {
    for slot in range {
        if env[slot] < mask {
            env[slot] += 1;
            return true;
        }
        env[slot] = 0;
    }
    false
}

/// Count every random assignment once into `counts`, with publics and
/// privates pinned to their current `env` values.
pub(crate) fn count_random_space(task: &Task, env: &mut [u16], regs: &mut [u16], counts: &mut [u64]) {
    let base = task.width.domain_size() as usize;
    let mask = task.width.mask();
    let range = task.random_slots();
    for slot in range.clone() {
        env[slot] = 0;
    }
    loop {
        task.compiled.run(env, regs);
        let mut idx = 0usize;
        for &reg in task.compiled.outputs().iter().rev() {
            idx = idx * base + regs[reg as usize] as usize;
        }
        counts[idx] += 1;
        if !advance(env, range.clone(), mask) {
            break;
        }
    }
}

fn bind(env: &mut [u16], vars: &[VarId], offset: usize, values: &BTreeMap<VarId, u16>, role: &str, p: &Program) {
    for (i, &x) in vars.iter().enumerate() {
        let v = match values.get(&x) {
            Some(&v) => v,
            None => panic!("{role} input `{}` not covered by the assignment", p.vars.name(x)),
        };
        assert!(
            v <= p.width.mask(),
            "{role} input `{}` bound to {v}, outside the {}-bit domain",
            p.vars.name(x),
            p.width.bits()
        );
        env[offset + i] = v;
    }
}

/// Joint histogram of `set` under one public and one secret assignment,
/// enumerating all random assignments. The maps must cover every public
/// respectively private variable the set's expressions depend on; extra
/// entries are ignored.
pub fn count_joint(
    p: &Program,
    set: &BTreeSet<VarId>,
    eta_p: &BTreeMap<VarId, u16>,
    eta_k: &BTreeMap<VarId, u16>,
    budget: u32,
) -> Result<Histogram, CountError> {
    let task = Task::from_program(p, set, budget)?;
    let mut env = vec![0u16; task.slot_count()];
    bind(&mut env, &task.publics, 0, eta_p, "public", p);
    bind(&mut env, &task.privates, task.publics.len(), eta_k, "private", p);
    let mut regs = vec![0u16; task.compiled.regs()];
    let mut counts = vec![0u64; task.counts_len()];
    count_random_space(&task, &mut env, &mut regs, &mut counts);
    Ok(Histogram {
        width: task.width,
        arity: task.arity,
        counts,
    })
}

fn first_diff(a: &[u64], b: &[u64]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

fn zip_env(vars: &[VarId], values: &[u16]) -> BTreeMap<VarId, u16> {
    vars.iter().copied().zip(values.iter().copied()).collect()
}

fn decode_tuple(width: Width, arity: usize, mut idx: usize) -> Vec<u16> {
    let base = width.domain_size() as usize;
    (0..arity)
        .map(|_| {
            let c = (idx % base) as u16;
            idx /= base;
            c
        })
        .collect()
}

/// The secret independence loop: for each public assignment, compare every
/// secret assignment's histogram against the first one. `counts_for` maps
/// an environment (randoms ignored) to the full random-space histogram;
/// `cancel`, when present, is raised the moment a mismatch is found.
fn decide_impl(
    task: &Task,
    mut counts_for: impl FnMut(&Task, &[u16]) -> Vec<u64>,
    cancel: Option<&AtomicBool>,
) -> CountVerdict {
    let mask = task.width.mask();
    let p_range = 0..task.publics.len();
    let k_range = task.publics.len()..task.publics.len() + task.privates.len();
    let mut env = vec![0u16; task.slot_count()];
    loop {
        let mut reference: Option<(Vec<u64>, Vec<u16>)> = None;
        loop {
            let counts = counts_for(task, &env);
            match &reference {
                None => reference = Some((counts, env[k_range.clone()].to_vec())),
                Some((ref_counts, ref_k)) => {
                    if let Some(idx) = first_diff(ref_counts, &counts) {
                        if let Some(flag) = cancel {
                            flag.store(true, Ordering::Relaxed);
                        }
                        return CountVerdict::Leaky(LeakWitness {
                            eta_p: zip_env(&task.publics, &env[p_range]),
                            eta_k_ref: zip_env(&task.privates, ref_k),
                            eta_k: zip_env(&task.privates, &env[k_range]),
                            tuple: decode_tuple(task.width, task.arity, idx),
                            count_ref: ref_counts[idx],
                            count: counts[idx],
                        });
                    }
                }
            }
            if !advance(&mut env, k_range.clone(), mask) {
                break;
            }
        }
        if !advance(&mut env, p_range.clone(), mask) {
            break;
        }
    }
    CountVerdict::SecretIndependent
}

fn sequential_counts(task: &Task) -> impl FnMut(&Task, &[u16]) -> Vec<u64> {
    let mut regs = vec![0u16; task.compiled.regs()];
    move |task, env| {
        let mut env = env.to_vec();
        let mut counts = vec![0u64; task.counts_len()];
        count_random_space(task, &mut env, &mut regs, &mut counts);
        counts
    }
}

/// Single-threaded exhaustive decision for one observable set.
pub fn bf_decide(
    p: &Program,
    set: &BTreeSet<VarId>,
    budget: u32,
) -> Result<CountVerdict, CountError> {
    let task = Task::from_program(p, set, budget)?;
    let counts_for = sequential_counts(&task);
    Ok(decide_impl(&task, counts_for, None))
}

/// Multi-threaded decision, bit-identical to [`bf_decide`]: the random
/// space is tiled across workers into private partial histograms merged by
/// summation, and a shared flag cancels outstanding tiles once a leak is
/// found. Histogram comparison itself stays sequential.
pub fn parallel_decide(
    p: &Program,
    set: &BTreeSet<VarId>,
    workers: usize,
    budget: u32,
) -> Result<CountVerdict, CountError> {
    let task = Task::from_program(p, set, budget)?;
    let cancel = AtomicBool::new(false);
    let verdict = decide_impl(
        &task,
        |task, env| parallel::counts_tiled(task, env, workers, &cancel),
        Some(&cancel),
    );
    Ok(verdict)
}

/// Decision over bare expressions instead of program variables, used when a
/// set is checked through a renamed canonical form. Member order follows
/// `exprs`; leaf variables are classified by their embedded kinds.
pub fn decide_exprs(
    arena: &ExprArena,
    tables: &TableRegistry,
    width: Width,
    exprs: &[ExprId],
    workers: usize,
    budget: u32,
) -> Result<CountVerdict, CountError> {
    let task = Task::from_parts(arena, tables, width, exprs, budget)?;
    if workers <= 1 {
        let counts_for = sequential_counts(&task);
        Ok(decide_impl(&task, counts_for, None))
    } else {
        let cancel = AtomicBool::new(false);
        let verdict = decide_impl(
            &task,
            |task, env| parallel::counts_tiled(task, env, workers, &cancel),
            Some(&cancel),
        );
        Ok(verdict)
    }
}
