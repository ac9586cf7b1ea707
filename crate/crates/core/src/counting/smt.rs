//! Solver formula emission for sets too large to enumerate directly.
//!
//! The secret independence question for one observable set becomes a
//! quantifier-free formula over bit-vectors and integers: one symbol per
//! member expression per assignment of that member's randoms, an indicator
//! per global random assignment telling whether the members hit a chosen
//! tuple, and the same indicators again with the secrets replaced by a
//! primed copy. The formula asserts the two indicator sums differ, so it is
//! satisfiable exactly when some public assignment, secret pair, and tuple
//! witness a leak: sat means leaky, unsat means secret independent.
//!
//! Formulas grow a conjunct per random assignment, so emission is capped by
//! the random bit count. Output stays inside QF_BV plus integer sums and is
//! deliberately solver-agnostic; a sidecar manifest records what each
//! symbol stands for and how to read the answer.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;
use std::process::Command;

use crate::expr::{BinOp, ExprId, ExprNode, ShiftDir};
use crate::program::Program;
use crate::vars::{VarId, VarKind};

use super::CountError;

/// An emitted formula and its sidecar manifest (JSON) explaining the
/// symbols and the verdict mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtDoc {
    pub formula: String,
    pub manifest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat,
    Unsat,
    Unknown,
}

struct Emitter<'p> {
    p: &'p Program,
    kappa: u32,
    /// Next auxiliary symbol number, used to flatten table lookups and
    /// field products so terms never nest exponentially.
    aux: u32,
    lines: Vec<String>,
}

/// Emit the secret independence formula for `set`. Fails with
/// [`CountError::SmtCap`] when the global random space exceeds `cap` bits,
/// since conjunct count is exponential in it.
pub fn emit_smt(p: &Program, set: &BTreeSet<VarId>, cap: u32) -> Result<SmtDoc, CountError> {
    let kappa = p.width.bits();
    let members: Vec<VarId> = set.iter().copied().collect();
    let exprs: Vec<ExprId> = members.iter().map(|&x| p.computation(x)).collect();

    let mut publics = BTreeSet::new();
    let mut privates = BTreeSet::new();
    let mut globals = BTreeSet::new();
    let mut member_randoms: Vec<Vec<VarId>> = Vec::new();
    for &e in &exprs {
        let mut own = BTreeSet::new();
        for id in p.arena.reachable(&[e]) {
            if let ExprNode::Var(x, kind) = p.arena.node(id) {
                match kind {
                    VarKind::Public => {
                        publics.insert(x);
                    }
                    VarKind::Private => {
                        privates.insert(x);
                    }
                    VarKind::Random => {
                        globals.insert(x);
                        own.insert(x);
                    }
                }
            }
        }
        member_randoms.push(own.into_iter().collect());
    }
    let publics: Vec<VarId> = publics.into_iter().collect();
    let privates: Vec<VarId> = privates.into_iter().collect();
    let globals: Vec<VarId> = globals.into_iter().collect();

    let random_bits = globals.len() as u32 * kappa;
    if random_bits > cap {
        return Err(CountError::SmtCap {
            bits_needed: random_bits,
            cap,
        });
    }

    // A member mentioning a private needs both copies; the rest are shared
    // between the plain and primed indicator families.
    let has_private: Vec<bool> = exprs
        .iter()
        .map(|&e| {
            p.arena
                .reachable(&[e])
                .iter()
                .any(|&id| matches!(p.arena.node(id), ExprNode::Var(_, VarKind::Private)))
        })
        .collect();
    let any_private = has_private.iter().any(|&b| b);

    let mut em = Emitter {
        p,
        kappa,
        aux: 0,
        lines: Vec::new(),
    };
    let base = p.width.domain_size() as u64;

    em.push("(set-logic ALL)".to_string());
    for &x in &publics {
        em.declare_bv(&format!("v{}", x.0));
    }
    for &x in &privates {
        em.declare_bv(&format!("v{}", x.0));
        if any_private {
            em.declare_bv(&format!("v{}p", x.0));
        }
    }
    for j in 0..members.len() {
        em.declare_bv(&format!("c{j}"));
    }

    // Member value symbols: one per assignment of the member's own
    // randoms, in both secret copies where needed.
    for (j, &e) in exprs.iter().enumerate() {
        let own = &member_randoms[j];
        let combos = base.pow(own.len() as u32);
        for idx in 0..combos {
            let f = assignment(own, idx, base);
            let sym = format!("m{j}_f{idx}");
            let term = em.term(e, &f, false);
            em.define_bv(&sym, &term);
        }
        if has_private[j] {
            for idx in 0..combos {
                let f = assignment(own, idx, base);
                let sym = format!("m{j}p_f{idx}");
                let term = em.term(e, &f, true);
                em.define_bv(&sym, &term);
            }
        }
    }

    // Indicators: for each global random assignment, whether the member
    // tuple equals (c0, .., c_{m-1}), once per secret copy.
    let combos = base.pow(globals.len() as u32);
    for g in 0..combos {
        let cond = indicator_condition(&members, &member_randoms, &globals, g, base, None);
        em.declare_int(&format!("i{g}"));
        em.push(format!("(assert (= i{g} (ite {cond} 1 0)))"));
    }
    for g in 0..combos {
        let cond =
            indicator_condition(&members, &member_randoms, &globals, g, base, Some(&has_private));
        em.declare_int(&format!("ip{g}"));
        em.push(format!("(assert (= ip{g} (ite {cond} 1 0)))"));
    }

    let plain = sum((0..combos).map(|g| format!("i{g}")));
    let primed = sum((0..combos).map(|g| format!("ip{g}")));
    em.push(format!("(assert (distinct {plain} {primed}))"));
    em.push("(check-sat)".to_string());

    let name = |x: &VarId| p.vars.name(*x).to_string();
    let manifest = serde_json::json!({
        "width": kappa,
        "members": members
            .iter()
            .enumerate()
            .map(|(j, x)| {
                serde_json::json!({
                    "var": name(x),
                    "symbol": format!("m{j}"),
                    "primed": has_private[j],
                    "randoms": member_randoms[j].iter().map(name).collect::<Vec<_>>(),
                })
            })
            .collect::<Vec<_>>(),
        "publics": publics
            .iter()
            .map(|x| serde_json::json!({"var": name(x), "symbol": format!("v{}", x.0)}))
            .collect::<Vec<_>>(),
        "privates": privates
            .iter()
            .map(|x| {
                serde_json::json!({
                    "var": name(x),
                    "symbol": format!("v{}", x.0),
                    "primed_symbol": if any_private { Some(format!("v{}p", x.0)) } else { None },
                })
            })
            .collect::<Vec<_>>(),
        "randoms": globals.iter().map(name).collect::<Vec<_>>(),
        "tuple": (0..members.len()).map(|j| format!("c{j}")).collect::<Vec<_>>(),
        "verdicts": {"sat": "leaky", "unsat": "secret-independent"},
    });

    Ok(SmtDoc {
        formula: em.lines.join("\n") + "\n",
        manifest: serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    })
}

/// Decode assignment number `idx` into values for `vars`, little-endian
/// digits over the word domain.
fn assignment(vars: &[VarId], mut idx: u64, base: u64) -> BTreeMap<VarId, u16> {
    vars.iter()
        .map(|&x| {
            let v = (idx % base) as u16;
            idx /= base;
            (x, v)
        })
        .collect()
}

/// The tuple-match condition for global random assignment `g`. With
/// `primed`, members containing a private use their primed symbols; the
/// rest are shared with the plain family.
fn indicator_condition(
    members: &[VarId],
    member_randoms: &[Vec<VarId>],
    globals: &[VarId],
    g: u64,
    base: u64,
    primed: Option<&[bool]>,
) -> String {
    let global_f = assignment(globals, g, base);
    let eqs: Vec<String> = (0..members.len())
        .map(|j| {
            let idx = member_randoms[j]
                .iter()
                .rev()
                .fold(0u64, |acc, x| acc * base + global_f[x] as u64);
            let tag = match primed {
                Some(flags) if flags[j] => "p",
                _ => "",
            };
            format!("(= m{j}{tag}_f{idx} c{j})")
        })
        .collect();
    if eqs.len() == 1 {
        eqs.into_iter().next().unwrap()
    } else {
        format!("(and {})", eqs.join(" "))
    }
}

fn sum(terms: impl Iterator<Item = String>) -> String {
    let terms: Vec<String> = terms.collect();
    if terms.len() == 1 {
        terms.into_iter().next().unwrap()
    } else {
        format!("(+ {})", terms.join(" "))
    }
}

impl<'p> Emitter<'p> {
    fn push(&mut self, line: String) {
        self.lines.push(line);
    }

    fn declare_bv(&mut self, sym: &str) {
        self.push(format!("(declare-const {sym} (_ BitVec {}))", self.kappa));
    }

    fn declare_int(&mut self, sym: &str) {
        self.push(format!("(declare-const {sym} Int)"));
    }

    fn define_bv(&mut self, sym: &str, term: &str) {
        self.declare_bv(sym);
        self.push(format!("(assert (= {sym} {term}))"));
    }

    fn lit(&self, v: u16) -> String {
        format!("(_ bv{v} {})", self.kappa)
    }

    /// Value of `e` under `f` when it is a constant or an assigned random,
    /// the two cases the emitter folds eagerly.
    fn immediate(&self, e: ExprId, f: &BTreeMap<VarId, u16>) -> Option<u16> {
        match self.p.arena.node(e) {
            ExprNode::Const(c) => Some(c),
            ExprNode::Var(x, VarKind::Random) => Some(f[&x]),
            _ => None,
        }
    }

    /// Bind `term` to a fresh auxiliary symbol unless it is already a bare
    /// symbol or literal, so expansions below can repeat it freely.
    fn atomize(&mut self, term: String) -> String {
        if !term.starts_with('(') || term.starts_with("(_ bv") {
            return term;
        }
        let sym = format!("a{}", self.aux);
        self.aux += 1;
        self.define_bv(&sym, &term);
        sym
    }

    /// Render `e` with randoms substituted from `f`. With `primed`,
    /// private inputs render as their primed copy.
    fn term(&mut self, e: ExprId, f: &BTreeMap<VarId, u16>, primed: bool) -> String {
        match self.p.arena.node(e) {
            ExprNode::Const(c) => self.lit(c),
            ExprNode::Var(x, VarKind::Random) => self.lit(f[&x]),
            ExprNode::Var(x, VarKind::Private) if primed => format!("v{}p", x.0),
            ExprNode::Var(x, _) => format!("v{}", x.0),
            ExprNode::Not(c) => {
                let t = self.term(c, f, primed);
                format!("(bvnot {t})")
            }
            ExprNode::Shift(dir, amt, c) => {
                let t = self.term(c, f, primed);
                let op = match dir {
                    ShiftDir::Left => "bvshl",
                    ShiftDir::Right => "bvlshr",
                };
                format!("({op} {t} {})", self.lit(amt as u16))
            }
            ExprNode::Table(tid, c) => {
                if let Some(v) = self.immediate(c, f) {
                    return self.lit(self.p.tables.apply(tid, v));
                }
                let arg = self.term(c, f, primed);
                let arg = self.atomize(arg);
                let values = self.p.tables.values(tid).to_vec();
                let last = values.len() - 1;
                let mut chain = self.lit(values[last]);
                for v in (0..last).rev() {
                    chain = format!(
                        "(ite (= {arg} {}) {} {chain})",
                        self.lit(v as u16),
                        self.lit(values[v])
                    );
                }
                chain
            }
            ExprNode::Bin(BinOp::GfMul, a, b) => self.gf_mul(a, b, f, primed),
            ExprNode::Bin(op, a, b) => {
                let ta = self.term(a, f, primed);
                let tb = self.term(b, f, primed);
                let sym = match op {
                    BinOp::Xor => "bvxor",
                    BinOp::And => "bvand",
                    BinOp::Or => "bvor",
                    BinOp::Add => "bvadd",
                    BinOp::Sub => "bvsub",
                    BinOp::Mul => "bvmul",
                    BinOp::GfMul => unreachable!("handled above"),
                };
                format!("({sym} {ta} {tb})")
            }
        }
    }

    /// Field product by shift-and-add: xor together x^i times the doubled
    /// side for every set bit i of the other side, with doubling reduced by
    /// the width's polynomial at each step. Auxiliary symbols keep each
    /// doubling linear in size.
    fn gf_mul(
        &mut self,
        a: ExprId,
        b: ExprId,
        f: &BTreeMap<VarId, u16>,
        primed: bool,
    ) -> String {
        let ca = self.immediate(a, f);
        let cb = self.immediate(b, f);
        if let (Some(x), Some(y)) = (ca, cb) {
            return self.lit(self.p.width.gf_mul(x, y));
        }
        // Put the known constant, if any, on the bit-selection side.
        let (doubled, bits) = if ca.is_some() { (b, a) } else { (a, b) };
        let bits_const = self.immediate(bits, f);
        if bits_const == Some(0) {
            return self.lit(0);
        }

        let kappa = self.kappa;
        let poly_low = (self.p.width.reduction_poly() & self.p.width.mask() as u32) as u16;
        let highest = match bits_const {
            Some(c) => 15 - c.leading_zeros(),
            None => kappa - 1,
        };

        let t = self.term(doubled, f, primed);
        let mut level = self.atomize(t);
        let mut levels = vec![level.clone()];
        for _ in 0..highest {
            let msb = kappa - 1;
            let next = format!(
                "(bvxor (bvshl {level} {}) (ite (= ((_ extract {msb} {msb}) {level}) #b1) {} {}))",
                self.lit(1),
                self.lit(poly_low),
                self.lit(0)
            );
            level = self.atomize(next);
            levels.push(level.clone());
        }

        let terms: Vec<String> = match bits_const {
            Some(c) => (0..=highest)
                .filter(|&i| (c >> i) & 1 == 1)
                .map(|i| levels[i as usize].clone())
                .collect(),
            None => {
                let tb = self.term(bits, f, primed);
                let tb = self.atomize(tb);
                (0..=highest)
                    .map(|i| {
                        format!(
                            "(ite (= ((_ extract {i} {i}) {tb}) #b1) {} {})",
                            levels[i as usize],
                            self.lit(0)
                        )
                    })
                    .collect()
            }
        };
        terms
            .into_iter()
            .reduce(|acc, t| format!("(bvxor {acc} {t})"))
            .expect("at least one product term")
    }
}

/// Run an external solver command on a formula file and classify its
/// answer. The command is split on whitespace; the file path is appended
/// as the final argument. Any first output line other than sat or unsat,
/// and any nonzero exit with empty output, maps to Unknown.
pub fn run_solver(command: &str, file: &Path) -> io::Result<SolverAnswer> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, "empty solver command")
    })?;
    let output = Command::new(program).args(parts).arg(file).output()?;
    let stdout = String::from_utf8_lossy(&output.stdout);
    Ok(match stdout.lines().map(str::trim).find(|l| !l.is_empty()) {
        Some("sat") => SolverAnswer::Sat,
        Some("unsat") => SolverAnswer::Unsat,
        _ => SolverAnswer::Unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{bf_decide, CountVerdict};
    use super::*;
    use crate::frontend::{elaborate, parse};
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

    fn goubin_at(w: Width) -> Program {
        elaborate(&parse(GOUBIN).unwrap(), w).unwrap()
    }

    fn v(p: &Program, name: &str) -> VarId {
        p.vars.lookup(name).unwrap()
    }

    fn vset(p: &Program, names: &[&str]) -> BTreeSet<VarId> {
        names.iter().map(|n| v(p, n)).collect()
    }

    fn count_asserts(doc: &SmtDoc, prefix: &str) -> usize {
        doc.formula
            .lines()
            .filter(|l| l.starts_with(&format!("(assert (= {prefix}")))
            .count()
    }

    #[test]
    fn share_pair_formula_has_the_expected_census() {
        // Two members over two one-bit randoms: four value symbols each,
        // a primed copy only for the secret-bearing member, indicators in
        // both families for all four global assignments, one disequality.
        let p = goubin_at(Width::W1);
        let doc = emit_smt(&p, &vset(&p, &["y0", "y3"]), 12).unwrap();
        assert_eq!(count_asserts(&doc, "m0_f"), 4);
        assert_eq!(count_asserts(&doc, "m0p_f"), 4);
        assert_eq!(count_asserts(&doc, "m1_f"), 4);
        assert_eq!(count_asserts(&doc, "m1p_f"), 0);
        assert_eq!(count_asserts(&doc, "i"), 8);
        assert_eq!(
            doc.formula.lines().filter(|l| l.starts_with("(assert (distinct")).count(),
            1
        );
        assert_eq!(
            doc.formula.lines().filter(|l| l.starts_with("(assert")).count(),
            21
        );
        assert!(doc.manifest.contains("\"sat\": \"leaky\""));
    }

    #[test]
    fn secret_free_sets_emit_no_primed_members() {
        let p = goubin_at(Width::W1);
        let doc = emit_smt(&p, &vset(&p, &["y3"]), 12).unwrap();
        assert_eq!(count_asserts(&doc, "m0_f"), 4);
        assert_eq!(count_asserts(&doc, "m0p_f"), 0);
        assert!(!doc.formula.contains("v0p"));
    }

    #[test]
    fn cap_rejects_oversized_random_spaces() {
        let p = goubin_at(Width::W8);
        assert_eq!(
            emit_smt(&p, &vset(&p, &["y0", "y3"]), 12),
            Err(CountError::SmtCap {
                bits_needed: 16,
                cap: 12
            })
        );
    }

    #[test]
    fn micro_solver_agrees_with_enumeration() {
        use super::super::smtsolve::{solve_str, Answer};
        let p = goubin_at(Width::W1);
        for (names, leaky) in [
            (&["y0", "y3"][..], true),
            (&["x'"][..], false),
            (&["y3"][..], false),
            (&["y0", "y1"][..], false),
        ] {
            let set = vset(&p, names);
            let doc = emit_smt(&p, &set, 12).unwrap();
            let answer = solve_str(&doc.formula).unwrap();
            let expected = if leaky { Answer::Sat } else { Answer::Unsat };
            assert_eq!(answer, expected, "solver disagrees on {names:?}");
            let verdict = bf_decide(&p, &set, 32).unwrap();
            assert_eq!(leaky, matches!(verdict, CountVerdict::Leaky(_)));
        }
    }

    #[test]
    fn field_products_and_tables_survive_the_encoding() {
        use super::super::smtsolve::{solve_str, Answer};
        use std::io::Write;
        // S is a fixed permutation; t = S(k @ r) leaks whether k is zero,
        // while u = S(k ^ r) stays balanced. The shift-and-add product
        // expansion and the table chain must both agree with enumeration.
        let mut hex = tempfile::NamedTempFile::new().unwrap();
        writeln!(hex, "3\n0\n2\n1").unwrap();
        let src = format!(
            r#"
            #table S "{}";
            #private k;
            #random r;
            t = S(k @ r);
            u = S(k ^ r);
            return u;
        "#,
            hex.path().display()
        );
        let p = elaborate(&parse(&src).unwrap(), Width::W2).unwrap();
        for (name, leaky) in [("t", true), ("u", false)] {
            let set = vset(&p, &[name]);
            let doc = emit_smt(&p, &set, 12).unwrap();
            let answer = solve_str(&doc.formula).unwrap();
            let expected = if leaky { Answer::Sat } else { Answer::Unsat };
            assert_eq!(answer, expected, "solver disagrees on {name}");
            let verdict = bf_decide(&p, &set, 32).unwrap();
            assert_eq!(leaky, matches!(verdict, CountVerdict::Leaky(_)));
        }
    }
}
