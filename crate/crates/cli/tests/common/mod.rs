//! Shared corpus and reference interpreter for the integration suites.
//!
//! The interpreter is deliberately independent of the library's compiled
//! evaluator: it executes the assignment list step by step over a plain
//! environment map and re-derives every distribution question by full
//! enumeration. Library verdicts are checked against these re-derivations
//! rather than against themselves. Only the word-level operator
//! definitions and table contents are shared, since those define the
//! language rather than analyze it.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use maskcheck_core::frontend::{elaborate, parse};
use maskcheck_core::program::{Operand, Rhs};
use maskcheck_core::{Program, VarId, Width};

/// Small masked programs, every operator covered, each enumerable
/// exhaustively at one or two bits with at most three randoms.
pub const CORPUS: &[(&str, &str)] = &[
    (
        "bare_secret",
        "#private k;\n#random r;\nm = k ^ r;\nu = m ^ r;\nreturn u;\n",
    ),
    (
        "goubin_b2a",
        "#private k;\n#random r, r';\n#preshare { x' = k ^ r; }\n\
         y0 = x' ^ r';\ny1 = y0 - r';\ny2 = y1 ^ x';\ny3 = r' ^ r;\n\
         y4 = y3 ^ x';\ny5 = y4 - y3;\nA  = y5 ^ y2;\nreturn A;\n",
    ),
    (
        "and_mask",
        "#private k;\n#random r;\nx = k ^ r;\na = x & r;\nreturn a;\n",
    ),
    (
        "or_mask",
        "#private k;\n#random r;\nx = k ^ r;\no = x | r;\nreturn o;\n",
    ),
    (
        "arith_mask",
        "#private k;\n#random r;\ns = k + r;\nt = s - r;\nreturn t;\n",
    ),
    (
        "gf_scale",
        "#private k;\n#random r;\ng = k @ r;\nreturn g;\n",
    ),
    (
        "shift_pair",
        "#private k;\n#random r;\nx = k ^ r;\nhi = x >> 1;\nlo = x << 1;\nreturn hi;\n",
    ),
    (
        "not_refresh",
        "#private k;\n#random r, r';\nx = k ^ r;\nn = ~x;\ny = n ^ r';\nreturn y;\n",
    ),
    (
        "mul_wrap",
        "#private k;\n#random r;\nx = k ^ r;\nm = x * 3;\nreturn m;\n",
    ),
    (
        "public_offset",
        "#public p;\n#private k;\n#random r;\nx = k ^ r;\na = x + p;\nreturn a;\n",
    ),
    (
        "double_secret",
        "#private k, k';\n#random r, r';\nx = k ^ r;\ny = k' ^ r';\ns = x ^ y;\nreturn s;\n",
    ),
    (
        "three_rand_ladder",
        "#private k;\n#random r0, r1, r2;\na = k ^ r0;\nb = a ^ r1;\nc = b ^ r2;\nreturn c;\n",
    ),
    (
        "sub_const",
        "#private k;\n#random r;\nx = k ^ r;\nd = 2 - x;\ne = d ^ 1;\nreturn e;\n",
    ),
];

pub fn program(src: &str, w: Width) -> Program {
    elaborate(&parse(src).expect("corpus parses"), w).expect("corpus elaborates")
}

pub fn corpus(w: Width) -> Vec<(&'static str, Program)> {
    CORPUS.iter().map(|&(name, src)| (name, program(src, w))).collect()
}

fn operand(env: &BTreeMap<VarId, u16>, o: Operand) -> u16 {
    match o {
        Operand::Var(v) => env[&v],
        Operand::Const(c) => c,
    }
}

/// Execute the assignment list in order, extending `env` (which must bind
/// every input) with every computed variable.
pub fn execute(p: &Program, env: &mut BTreeMap<VarId, u16>) {
    let w = p.width;
    for asg in &p.assignments {
        let val = match asg.rhs {
            Rhs::Atom(o) => operand(env, o),
            Rhs::Not(o) => w.not(operand(env, o)),
            Rhs::Table(t, o) => p.tables.apply(t, operand(env, o)),
            Rhs::Bin(op, a, b) => {
                use maskcheck_core::BinOp::*;
                let (x, y) = (operand(env, a), operand(env, b));
                match op {
                    Xor => x ^ y,
                    And => x & y,
                    Or => x | y,
                    GfMul => w.gf_mul(x, y),
                    Add => w.add(x, y),
                    Sub => w.sub(x, y),
                    Mul => w.mul(x, y),
                }
            }
            Rhs::Shift(dir, amt, o) => {
                let x = operand(env, o);
                match dir {
                    maskcheck_core::ShiftDir::Left => w.shl(x, amt as u32),
                    maskcheck_core::ShiftDir::Right => w.shr(x, amt as u32),
                }
            }
        };
        env.insert(asg.target, val);
    }
}

/// All assignments of width-sized values to `vars`, as environment maps.
pub fn assignments(vars: &[VarId], w: Width) -> Vec<BTreeMap<VarId, u16>> {
    let d = w.domain_size() as u64;
    let total = d.pow(vars.len() as u32);
    (0..total)
        .map(|mut idx| {
            let mut env = BTreeMap::new();
            for &v in vars {
                env.insert(v, (idx % d) as u16);
                idx /= d;
            }
            env
        })
        .collect()
}

fn sorted(vars: &BTreeSet<VarId>) -> Vec<VarId> {
    vars.iter().copied().collect()
}

/// Joint histogram of `set` over all random assignments, with publics and
/// secrets fixed by `fixed`. Members index little-endian in ascending
/// variable order.
pub fn histogram(p: &Program, set: &BTreeSet<VarId>, fixed: &BTreeMap<VarId, u16>) -> Vec<u64> {
    let w = p.width;
    let d = w.domain_size() as usize;
    let members = sorted(set);
    let mut counts = vec![0u64; d.pow(members.len() as u32)];
    for eta_r in assignments(&sorted(&p.x_r), w) {
        let mut env = fixed.clone();
        env.extend(eta_r);
        execute(p, &mut env);
        let mut idx = 0usize;
        for &m in members.iter().rev() {
            idx = idx * d + env[&m] as usize;
        }
        counts[idx] += 1;
    }
    counts
}

/// Uniform: every input assignment induces a flat joint histogram.
pub fn is_uniform(p: &Program, set: &BTreeSet<VarId>) -> bool {
    let inputs: Vec<VarId> = p.x_p.union(&p.x_k).copied().collect();
    assignments(&inputs, p.width).iter().all(|fixed| {
        let h = histogram(p, set, fixed);
        h.iter().all(|&c| c == h[0])
    })
}

/// Secret independent: for every public assignment, all secret
/// assignments induce the same joint histogram.
pub fn is_si(p: &Program, set: &BTreeSet<VarId>) -> bool {
    let publics = sorted(&p.x_p);
    let secrets = sorted(&p.x_k);
    assignments(&publics, p.width).iter().all(|eta_p| {
        let mut hists = assignments(&secrets, p.width).into_iter().map(|eta_k| {
            let mut fixed = eta_p.clone();
            fixed.extend(eta_k);
            histogram(p, set, &fixed)
        });
        let first = hists.next().expect("at least one secret assignment");
        hists.all(|h| h == first)
    })
}

/// Every size-`d` subset of the checkable variables that is genuinely
/// leaky by exhaustive enumeration.
pub fn leaky_sets(p: &Program, d: usize) -> Vec<BTreeSet<VarId>> {
    subsets(&p.x_check(), d)
        .into_iter()
        .filter(|s| !is_si(p, s))
        .collect()
}

/// All size-`d` subsets of `vars`, in lexicographic order.
pub fn subsets(vars: &[VarId], d: usize) -> Vec<BTreeSet<VarId>> {
    let mut out = Vec::new();
    let mut pick = Vec::with_capacity(d);
    fn go(vars: &[VarId], d: usize, from: usize, pick: &mut Vec<VarId>, out: &mut Vec<BTreeSet<VarId>>) {
        if pick.len() == d {
            out.push(pick.iter().copied().collect());
            return;
        }
        for i in from..vars.len() {
            pick.push(vars[i]);
            go(vars, d, i + 1, pick, out);
            pick.pop();
        }
    }
    go(vars, d, 0, &mut pick, &mut out);
    out
}

pub fn names(p: &Program, set: &BTreeSet<VarId>) -> Vec<String> {
    set.iter().map(|&v| p.vars.name(v).to_string()).collect()
}
