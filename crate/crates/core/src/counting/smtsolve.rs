//! A tiny built-in decision procedure for the emitted formulas.
//!
//! Emitted formulas have a rigid shape: bit-vector constants, a chain of
//! definitional equalities in dependency order, integer indicators, and one
//! final disequality. That fragment does not need a real SMT solver. This
//! module parses the s-expression text, replays the definitions, and
//! enumerates the remaining free bit-vector symbols outright, answering sat
//! exactly when some valuation passes every constraint.
//!
//! It exists so the solver path is testable end to end without an external
//! binary, and it doubles as the `smt-solve` CLI subcommand. Free space
//! beyond a small bit cap answers Unknown; point a real solver at the file
//! instead.

use std::collections::{HashMap, HashSet};

/// Free symbols beyond this many total bits make enumeration unreasonable.
const FREE_BITS_CAP: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unsupported form: {0}")]
    Unsupported(String),
    #[error("sort mismatch in {0}")]
    Sort(String),
}

#[derive(Debug, Clone, PartialEq)]
enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val {
    Bv { v: u16, w: u32 },
    Int(i64),
    Bool(bool),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sort {
    Bv(u32),
    Int,
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' => {
                while let Some(&n) = chars.peek() {
                    chars.next();
                    if n == '\n' {
                        break;
                    }
                }
            }
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn parse_sexprs(tokens: &[String]) -> Result<Vec<SExpr>, SolveError> {
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    for t in tokens {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack
                    .pop()
                    .ok_or_else(|| SolveError::Syntax("unbalanced `)`".into()))?;
                if stack.is_empty() {
                    return Err(SolveError::Syntax("unbalanced `)`".into()));
                }
                stack.last_mut().unwrap().push(SExpr::List(done));
            }
            a => stack.last_mut().unwrap().push(SExpr::Atom(a.to_string())),
        }
    }
    if stack.len() != 1 {
        return Err(SolveError::Syntax("unclosed `(`".into()));
    }
    Ok(stack.pop().unwrap())
}

fn mask(w: u32) -> u16 {
    (((1u32 << w) - 1) & 0xFFFF) as u16
}

struct Solver {
    /// Declared symbols in order, with sorts.
    decls: Vec<(String, Sort)>,
    /// Definitional asserts `(= sym term)`, in source order.
    defs: Vec<(String, SExpr)>,
    /// Remaining asserts, checked under every valuation.
    constraints: Vec<SExpr>,
}

impl Solver {
    fn build(items: Vec<SExpr>) -> Result<Solver, SolveError> {
        let mut solver = Solver {
            decls: Vec::new(),
            defs: Vec::new(),
            constraints: Vec::new(),
        };
        let mut defined: HashSet<String> = HashSet::new();
        for item in items {
            let SExpr::List(parts) = item else {
                return Err(SolveError::Syntax("top-level atom".into()));
            };
            let Some(SExpr::Atom(head)) = parts.first() else {
                return Err(SolveError::Syntax("empty top-level form".into()));
            };
            match head.as_str() {
                "set-logic" | "check-sat" | "set-info" | "set-option" | "exit" => {}
                "declare-const" => {
                    let [_, SExpr::Atom(name), sort] = parts.as_slice() else {
                        return Err(SolveError::Syntax("malformed declare-const".into()));
                    };
                    solver.decls.push((name.clone(), parse_sort(sort)?));
                }
                "declare-fun" => {
                    // Only the zero-argument form, which is declare-const.
                    let [_, SExpr::Atom(name), SExpr::List(args), sort] = parts.as_slice() else {
                        return Err(SolveError::Syntax("malformed declare-fun".into()));
                    };
                    if !args.is_empty() {
                        return Err(SolveError::Unsupported("declare-fun with arguments".into()));
                    }
                    solver.decls.push((name.clone(), parse_sort(sort)?));
                }
                "assert" => {
                    let [_, body] = parts.as_slice() else {
                        return Err(SolveError::Syntax("malformed assert".into()));
                    };
                    // An equality whose left side is a declared, not yet
                    // defined symbol acts as that symbol's definition.
                    if let SExpr::List(eq) = body {
                        if let [SExpr::Atom(op), SExpr::Atom(sym), rhs] = eq.as_slice() {
                            if op == "="
                                && solver.decls.iter().any(|(n, _)| n == sym)
                                && !defined.contains(sym)
                            {
                                defined.insert(sym.clone());
                                solver.defs.push((sym.clone(), rhs.clone()));
                                continue;
                            }
                        }
                    }
                    solver.constraints.push(body.clone());
                }
                other => {
                    return Err(SolveError::Unsupported(format!("command `{other}`")));
                }
            }
        }
        Ok(solver)
    }

    fn free_symbols(&self) -> Vec<(String, Sort)> {
        self.decls
            .iter()
            .filter(|(n, _)| !self.defs.iter().any(|(d, _)| d == n))
            .cloned()
            .collect()
    }

    fn solve(&self) -> Result<Answer, SolveError> {
        let free = self.free_symbols();
        let mut bits = 0u32;
        for (name, sort) in &free {
            match sort {
                Sort::Bv(w) => bits += w,
                Sort::Int => {
                    return Err(SolveError::Unsupported(format!(
                        "free integer symbol `{name}`"
                    )))
                }
            }
        }
        if bits > FREE_BITS_CAP {
            return Ok(Answer::Unknown);
        }

        let mut env: HashMap<String, Val> = HashMap::new();
        for combo in 0u64..(1u64 << bits) {
            let mut rest = combo;
            for (name, sort) in &free {
                let Sort::Bv(w) = sort else { unreachable!() };
                env.insert(
                    name.clone(),
                    Val::Bv {
                        v: (rest & mask(*w) as u64) as u16,
                        w: *w,
                    },
                );
                rest >>= w;
            }
            for (name, term) in &self.defs {
                let v = eval(term, &env)?;
                env.insert(name.clone(), v);
            }
            let mut ok = true;
            for c in &self.constraints {
                match eval(c, &env)? {
                    Val::Bool(true) => {}
                    Val::Bool(false) => {
                        ok = false;
                        break;
                    }
                    _ => return Err(SolveError::Sort("assert of non-boolean".into())),
                }
            }
            if ok {
                return Ok(Answer::Sat);
            }
        }
        Ok(Answer::Unsat)
    }
}

fn parse_sort(s: &SExpr) -> Result<Sort, SolveError> {
    match s {
        SExpr::Atom(a) if a == "Int" => Ok(Sort::Int),
        SExpr::List(parts) => {
            if let [SExpr::Atom(u), SExpr::Atom(bv), SExpr::Atom(n)] = parts.as_slice() {
                if u == "_" && bv == "BitVec" {
                    let w: u32 = n
                        .parse()
                        .map_err(|_| SolveError::Syntax(format!("bad width `{n}`")))?;
                    if w == 0 || w > 16 {
                        return Err(SolveError::Unsupported(format!("width {w}")));
                    }
                    return Ok(Sort::Bv(w));
                }
            }
            Err(SolveError::Unsupported("sort".into()))
        }
        SExpr::Atom(a) => Err(SolveError::Unsupported(format!("sort `{a}`"))),
    }
}

fn atom_value(a: &str, env: &HashMap<String, Val>) -> Result<Val, SolveError> {
    if let Some(bits) = a.strip_prefix("#b") {
        let w = bits.len() as u32;
        let v = u16::from_str_radix(bits, 2)
            .map_err(|_| SolveError::Syntax(format!("bad binary literal `{a}`")))?;
        return Ok(Val::Bv { v, w });
    }
    if let Some(hex) = a.strip_prefix("#x") {
        let w = 4 * hex.len() as u32;
        let v = u16::from_str_radix(hex, 16)
            .map_err(|_| SolveError::Syntax(format!("bad hex literal `{a}`")))?;
        return Ok(Val::Bv { v, w });
    }
    if a.chars().all(|c| c.is_ascii_digit()) {
        return Ok(Val::Int(a.parse().map_err(|_| {
            SolveError::Syntax(format!("bad numeral `{a}`"))
        })?));
    }
    env.get(a)
        .copied()
        .ok_or_else(|| SolveError::UnknownSymbol(a.to_string()))
}

fn bv_operand(v: Val, ctx: &str) -> Result<(u16, u32), SolveError> {
    match v {
        Val::Bv { v, w } => Ok((v, w)),
        _ => Err(SolveError::Sort(ctx.to_string())),
    }
}

fn int_operand(v: Val, ctx: &str) -> Result<i64, SolveError> {
    match v {
        Val::Int(i) => Ok(i),
        _ => Err(SolveError::Sort(ctx.to_string())),
    }
}

fn eval(term: &SExpr, env: &HashMap<String, Val>) -> Result<Val, SolveError> {
    let parts = match term {
        SExpr::Atom(a) => return atom_value(a, env),
        SExpr::List(parts) => parts,
    };
    let Some(head) = parts.first() else {
        return Err(SolveError::Syntax("empty application".into()));
    };

    // Indexed operators: (_ bvN w) literals and ((_ extract hi lo) t).
    if let SExpr::List(idx) = head {
        if let [SExpr::Atom(u), SExpr::Atom(op), args @ ..] = idx.as_slice() {
            if u == "_" && op == "extract" {
                let [SExpr::Atom(hi), SExpr::Atom(lo)] = args else {
                    return Err(SolveError::Syntax("malformed extract".into()));
                };
                let (hi, lo): (u32, u32) = (
                    hi.parse()
                        .map_err(|_| SolveError::Syntax("bad extract index".into()))?,
                    lo.parse()
                        .map_err(|_| SolveError::Syntax("bad extract index".into()))?,
                );
                let [_, arg] = parts.as_slice() else {
                    return Err(SolveError::Syntax("extract arity".into()));
                };
                let (v, w) = bv_operand(eval(arg, env)?, "extract")?;
                if hi < lo || hi >= w {
                    return Err(SolveError::Sort("extract range".into()));
                }
                let width = hi - lo + 1;
                return Ok(Val::Bv {
                    v: (v >> lo) & mask(width),
                    w: width,
                });
            }
        }
        return Err(SolveError::Unsupported("indexed operator".into()));
    }

    let SExpr::Atom(op) = head else { unreachable!() };
    if op == "_" {
        // (_ bvN w) literal.
        let [_, SExpr::Atom(val), SExpr::Atom(w)] = parts.as_slice() else {
            return Err(SolveError::Syntax("malformed indexed literal".into()));
        };
        let n = val
            .strip_prefix("bv")
            .ok_or_else(|| SolveError::Syntax(format!("bad literal `{val}`")))?;
        let v: u32 = n
            .parse()
            .map_err(|_| SolveError::Syntax(format!("bad literal `{val}`")))?;
        let w: u32 = w
            .parse()
            .map_err(|_| SolveError::Syntax("bad literal width".into()))?;
        return Ok(Val::Bv {
            v: (v & mask(w) as u32) as u16,
            w,
        });
    }

    let args: Vec<Val> = parts[1..]
        .iter()
        .map(|t| eval(t, env))
        .collect::<Result<_, _>>()?;
    let need = |n: usize| -> Result<(), SolveError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(SolveError::Syntax(format!("`{op}` arity")))
        }
    };

    let bv_fold = |f: fn(u16, u16) -> u16| -> Result<Val, SolveError> {
        if args.len() < 2 {
            return Err(SolveError::Syntax(format!("`{op}` arity")));
        }
        let mut acc = bv_operand(args[0], op)?;
        for &a in &args[1..] {
            let (v, w) = bv_operand(a, op)?;
            if w != acc.1 {
                return Err(SolveError::Sort(op.clone()));
            }
            acc = (f(acc.0, v) & mask(w), w);
        }
        Ok(Val::Bv { v: acc.0, w: acc.1 })
    };

    match op.as_str() {
        "bvxor" => bv_fold(|a, b| a ^ b),
        "bvand" => bv_fold(|a, b| a & b),
        "bvor" => bv_fold(|a, b| a | b),
        "bvadd" => bv_fold(|a, b| a.wrapping_add(b)),
        "bvmul" => bv_fold(|a, b| a.wrapping_mul(b)),
        "bvsub" => {
            need(2)?;
            let (a, w) = bv_operand(args[0], op)?;
            let (b, w2) = bv_operand(args[1], op)?;
            if w != w2 {
                return Err(SolveError::Sort(op.clone()));
            }
            Ok(Val::Bv {
                v: a.wrapping_sub(b) & mask(w),
                w,
            })
        }
        "bvnot" => {
            need(1)?;
            let (a, w) = bv_operand(args[0], op)?;
            Ok(Val::Bv {
                v: !a & mask(w),
                w,
            })
        }
        "bvshl" | "bvlshr" => {
            need(2)?;
            let (a, w) = bv_operand(args[0], op)?;
            let (s, _) = bv_operand(args[1], op)?;
            let v = if s as u32 >= w {
                0
            } else if op == "bvshl" {
                (a << s) & mask(w)
            } else {
                a >> s
            };
            Ok(Val::Bv { v, w })
        }
        "=" => {
            need(2)?;
            if args[0] == args[1] {
                Ok(Val::Bool(true))
            } else {
                match (args[0], args[1]) {
                    (Val::Bv { w: w1, .. }, Val::Bv { w: w2, .. }) if w1 != w2 => {
                        Err(SolveError::Sort("= on different widths".into()))
                    }
                    (Val::Bool(_), Val::Int(_)) | (Val::Int(_), Val::Bool(_)) => {
                        Err(SolveError::Sort("= on different sorts".into()))
                    }
                    _ => Ok(Val::Bool(false)),
                }
            }
        }
        "distinct" => {
            for i in 0..args.len() {
                for j in i + 1..args.len() {
                    if args[i] == args[j] {
                        return Ok(Val::Bool(false));
                    }
                }
            }
            Ok(Val::Bool(true))
        }
        "and" => {
            for a in &args {
                match a {
                    Val::Bool(true) => {}
                    Val::Bool(false) => return Ok(Val::Bool(false)),
                    _ => return Err(SolveError::Sort("and".into())),
                }
            }
            Ok(Val::Bool(true))
        }
        "or" => {
            for a in &args {
                match a {
                    Val::Bool(false) => {}
                    Val::Bool(true) => return Ok(Val::Bool(true)),
                    _ => return Err(SolveError::Sort("or".into())),
                }
            }
            Ok(Val::Bool(false))
        }
        "not" => match args.as_slice() {
            [Val::Bool(b)] => Ok(Val::Bool(!b)),
            _ => Err(SolveError::Sort("not".into())),
        },
        "ite" => {
            need(3)?;
            match args[0] {
                Val::Bool(true) => Ok(args[1]),
                Val::Bool(false) => Ok(args[2]),
                _ => Err(SolveError::Sort("ite condition".into())),
            }
        }
        "+" => {
            let mut acc = 0i64;
            for &a in &args {
                acc += int_operand(a, op)?;
            }
            Ok(Val::Int(acc))
        }
        other => Err(SolveError::Unsupported(format!("operator `{other}`"))),
    }
}

/// Decide a formula given as SMT-LIB text. See the module doc for the
/// supported fragment and the free-space cap.
pub fn solve_str(text: &str) -> Result<Answer, SolveError> {
    let items = parse_sexprs(&tokenize(text))?;
    Solver::build(items)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitional_equalities_substitute_and_decide() {
        let sat = "
            (declare-const x (_ BitVec 2))
            (declare-const y (_ BitVec 2))
            (assert (= y (bvxor x (_ bv1 2))))
            (assert (= (bvand y x) (_ bv2 2)))
            (check-sat)
        ";
        assert_eq!(solve_str(sat).unwrap(), Answer::Sat);

        let unsat = "
            (declare-const x (_ BitVec 2))
            (assert (= x (_ bv0 2)))
            (assert (= (bvor x (_ bv0 2)) (_ bv3 2)))
        ";
        assert_eq!(solve_str(unsat).unwrap(), Answer::Unsat);
    }

    #[test]
    fn indicator_shape_evaluates() {
        // The emitted formulas' integer layer: defined indicators, sums,
        // and a final disequality.
        let text = "
            (declare-const c (_ BitVec 1))
            (declare-const i0 Int)
            (declare-const i1 Int)
            (assert (= i0 (ite (= c #b0) 1 0)))
            (assert (= i1 (ite (= c #b1) 1 0)))
            (assert (distinct (+ i0 i1) (+ i1 i1)))
        ";
        // c=0: sums 1 vs 0, distinct. c=1: 1 vs 2, distinct.
        assert_eq!(solve_str(text).unwrap(), Answer::Sat);

        let never = "
            (declare-const c (_ BitVec 1))
            (declare-const i0 Int)
            (assert (= i0 (ite (= c #b0) 1 0)))
            (assert (distinct i0 i0))
        ";
        assert_eq!(solve_str(never).unwrap(), Answer::Unsat);
    }

    #[test]
    fn bit_level_operators_match_their_semantics() {
        let cases = [
            ("(= ((_ extract 2 1) #b0110) #b11)", Answer::Sat),
            ("(= (bvshl #b01 (_ bv1 2)) (_ bv2 2))", Answer::Sat),
            ("(= (bvshl #b01 (_ bv2 2)) (_ bv0 2))", Answer::Sat),
            ("(= (bvlshr #b10 (_ bv1 2)) (_ bv1 2))", Answer::Sat),
            ("(= (bvnot #b00) #b11)", Answer::Sat),
            ("(= (bvadd #b11 #b01) (_ bv0 2))", Answer::Sat),
            ("(= (bvsub #b00 #b01) (_ bv3 2))", Answer::Sat),
            ("(= (bvmul #b11 #b10) (_ bv2 2))", Answer::Sat),
        ];
        for (formula, expected) in cases {
            let text = format!("(assert {formula})");
            assert_eq!(solve_str(&text).unwrap(), expected, "{formula}");
        }
    }

    #[test]
    fn oversized_free_space_answers_unknown() {
        let text = "
            (declare-const a (_ BitVec 8))
            (declare-const b (_ BitVec 8))
            (declare-const c (_ BitVec 8))
            (assert (= (bvand a b) c))
        ";
        assert_eq!(solve_str(text).unwrap(), Answer::Unknown);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(matches!(
            solve_str("(assert (= x"),
            Err(SolveError::Syntax(_))
        ));
        assert!(matches!(
            solve_str("(assert (frobnicate 1 2))"),
            Err(SolveError::Unsupported(_))
        ));
        assert!(matches!(
            solve_str("(assert (= y #b1))"),
            Err(SolveError::UnknownSymbol(_))
        ));
    }
}
