//! Elaboration: procedure inlining, static loop unrolling, subscript
//! flattening, splitting of multi-operator expressions into `_tN`
//! temporaries, SSA renaming, and variable classification.

use std::collections::HashMap;
use std::path::PathBuf;

use super::ast::*;
use super::Diagnostic;
use crate::expr::{BinOp, ShiftDir};
use crate::program::{Assignment, Operand, Program, Rhs};
use crate::tables::{TableId, TableRegistry};
use crate::vars::{VarId, VarOrigin, VarTable};
use crate::width::Width;

#[derive(Debug, Clone)]
pub struct ElaborateOptions {
    /// Upper bound on total unrolled loop iterations, to make runaway static
    /// loops fail loudly instead of exhausting memory.
    pub unroll_limit: usize,
    /// Directory table file paths are resolved against (the source file's
    /// directory, for CLI use).
    pub table_dir: Option<PathBuf>,
}

impl Default for ElaborateOptions {
    fn default() -> Self {
        ElaborateOptions {
            unroll_limit: 4096,
            table_dir: None,
        }
    }
}

pub fn elaborate(sp: &SourceProgram, width: Width) -> Result<Program, Diagnostic> {
    elaborate_with(sp, width, &ElaborateOptions::default())
}

pub fn elaborate_with(
    sp: &SourceProgram,
    width: Width,
    opts: &ElaborateOptions,
) -> Result<Program, Diagnostic> {
    let mut cx = Cx {
        width,
        opts,
        vars: VarTable::default(),
        tables: TableRegistry::new(),
        table_ids: HashMap::new(),
        procs: HashMap::new(),
        assignments: Vec::new(),
        outputs: None,
        env: HashMap::new(),
        temp_counter: 0,
        unrolled: 0,
        in_preshare: false,
        call_stack: Vec::new(),
    };

    for t in &sp.tables {
        cx.register_table(t)?;
    }
    for d in &sp.decls {
        let id = cx
            .vars
            .declare(&d.name, Some(d.kind), VarOrigin::Input)
            .map_err(|e| Diagnostic::new(d.span, e.to_string()))?;
        cx.env.insert(d.name.clone(), id);
    }
    for p in &sp.procs {
        if cx.procs.insert(p.name.clone(), p).is_some() {
            return Err(Diagnostic::new(
                p.span,
                format!("procedure `{}` defined twice", p.name),
            ));
        }
        if cx.table_ids.contains_key(&p.name) {
            return Err(Diagnostic::new(
                p.span,
                format!("`{}` is already a table name", p.name),
            ));
        }
    }

    let entry: &[Stmt] = if !sp.top_stmts.is_empty() {
        &sp.top_stmts
    } else if let Some(main) = sp.procs.last() {
        if !main.params.is_empty() {
            return Err(Diagnostic::new(
                main.span,
                "entry procedure must take no parameters",
            ));
        }
        &main.body
    } else {
        return Err(Diagnostic::new(Span::none(), "program has no statements"));
    };

    let mut scope = Scope {
        names: HashMap::new(),
        loop_vars: HashMap::new(),
    };
    cx.run_block(entry, &mut scope, true)?;

    let outputs = cx.outputs.take().unwrap_or_default();
    Ok(Program::new(
        width,
        cx.vars,
        cx.tables,
        cx.assignments,
        outputs,
    ))
}

/// Lexical scope of the block being elaborated. Entry statements resolve
/// global input names directly; procedure bodies see only their parameters
/// and locals (plus tables, which are global).
struct Scope {
    names: HashMap<String, Operand>,
    loop_vars: HashMap<String, i64>,
}

struct Cx<'a> {
    width: Width,
    opts: &'a ElaborateOptions,
    vars: VarTable,
    tables: TableRegistry,
    table_ids: HashMap<String, TableId>,
    procs: HashMap<String, &'a ProcDef>,
    assignments: Vec<Assignment>,
    outputs: Option<Vec<VarId>>,
    env: HashMap<String, VarId>,
    temp_counter: usize,
    unrolled: usize,
    in_preshare: bool,
    call_stack: Vec<String>,
}

impl<'a> Cx<'a> {
    fn register_table(&mut self, t: &TableDecl) -> Result<(), Diagnostic> {
        let diag = |e: crate::tables::TableError| Diagnostic::new(t.span, e.to_string());
        let id = match &t.path {
            Some(path) => {
                let mut full = PathBuf::from(path);
                if full.is_relative() {
                    if let Some(dir) = &self.opts.table_dir {
                        full = dir.join(full);
                    }
                }
                let id = self
                    .tables
                    .register_from_file(&t.name, &full, self.width)
                    .map_err(diag)?;
                // Keep the path as written so printing round-trips.
                self.tables.set_source(id, path);
                id
            }
            None => self.tables.register_aes_sbox(&t.name, self.width).map_err(diag)?,
        };
        self.table_ids.insert(t.name.clone(), id);
        Ok(())
    }

    fn run_block(
        &mut self,
        stmts: &[Stmt],
        scope: &mut Scope,
        is_entry: bool,
    ) -> Result<Option<Vec<Operand>>, Diagnostic> {
        let mut returned: Option<Vec<Operand>> = None;
        for stmt in stmts {
            if returned.is_some() || (is_entry && self.outputs.is_some()) {
                return Err(Diagnostic::new(
                    *stmt_span(stmt),
                    "unreachable statement after `return`",
                ));
            }
            match stmt {
                Stmt::Assign { targets, rhs, span } => {
                    self.run_assign(targets, rhs, *span, scope)?;
                }
                Stmt::For {
                    var,
                    lo,
                    hi,
                    body,
                    span,
                } => {
                    let lo = self.const_eval(lo, scope)?;
                    let hi = self.const_eval(hi, scope)?;
                    let iterations = hi.saturating_sub(lo).max(0) as usize;
                    self.unrolled += iterations;
                    if self.unrolled > self.opts.unroll_limit {
                        return Err(Diagnostic::new(
                            *span,
                            format!(
                                "loop unrolls past the limit of {} iterations",
                                self.opts.unroll_limit
                            ),
                        ));
                    }
                    if scope.loop_vars.contains_key(var) {
                        return Err(Diagnostic::new(
                            *span,
                            format!("loop variable `{var}` shadows an enclosing loop"),
                        ));
                    }
                    for i in lo..hi {
                        scope.loop_vars.insert(var.clone(), i);
                        let r = self.run_block(body, scope, is_entry)?;
                        if r.is_some() {
                            return Err(Diagnostic::new(*span, "`return` inside a loop"));
                        }
                    }
                    scope.loop_vars.remove(var);
                }
                Stmt::Preshare { body, span } => {
                    if !is_entry {
                        return Err(Diagnostic::new(
                            *span,
                            "presharing blocks are only allowed at the top level",
                        ));
                    }
                    if self.in_preshare {
                        return Err(Diagnostic::new(*span, "nested presharing block"));
                    }
                    self.in_preshare = true;
                    let r = self.run_block(body, scope, is_entry)?;
                    self.in_preshare = false;
                    if r.is_some() {
                        return Err(Diagnostic::new(*span, "`return` inside a presharing block"));
                    }
                }
                Stmt::Return { exprs, span } => {
                    let mut ops = Vec::with_capacity(exprs.len());
                    for e in exprs {
                        ops.push(self.lower_operand(e, scope)?);
                    }
                    if is_entry {
                        let mut ids = Vec::with_capacity(ops.len());
                        for (op, e) in ops.iter().zip(exprs) {
                            match op {
                                Operand::Var(v) => ids.push(*v),
                                Operand::Const(_) => {
                                    return Err(Diagnostic::new(
                                        e.span(),
                                        "cannot return a constant",
                                    ))
                                }
                            }
                        }
                        self.outputs = Some(ids);
                    } else {
                        returned = Some(ops);
                    }
                    let _ = span;
                }
            }
        }
        Ok(returned)
    }

    fn run_assign(
        &mut self,
        targets: &[LValue],
        rhs: &SrcExpr,
        span: Span,
        scope: &mut Scope,
    ) -> Result<(), Diagnostic> {
        // A procedure call may return a tuple; everything else is single-valued.
        if let SrcExpr::Call(name, args, call_span) = rhs {
            if self.procs.contains_key(name.as_str()) {
                let results = self.inline_call(name, args, *call_span, scope)?;
                if results.len() != targets.len() {
                    return Err(Diagnostic::new(
                        span,
                        format!(
                            "`{name}` returns {} value(s) but {} target(s) given",
                            results.len(),
                            targets.len()
                        ),
                    ));
                }
                for (t, r) in targets.iter().zip(results) {
                    let name = self.target_name(t, scope)?;
                    self.emit(&name, Rhs::Atom(r), span, scope);
                }
                return Ok(());
            }
        }
        if targets.len() != 1 {
            return Err(Diagnostic::new(
                span,
                "tuple assignment requires a procedure call on the right",
            ));
        }
        let name = self.target_name(&targets[0], scope)?;
        let rhs = self.lower_rhs(rhs, scope)?;
        self.emit(&name, rhs, span, scope);
        Ok(())
    }

    fn target_name(&mut self, lv: &LValue, scope: &mut Scope) -> Result<String, Diagnostic> {
        match &lv.subscript {
            None => Ok(lv.base.clone()),
            Some(idx) => {
                let v = self.const_eval(idx, scope)?;
                if v < 0 {
                    return Err(Diagnostic::new(lv.span, "negative subscript"));
                }
                Ok(format!("{}_{v}", lv.base))
            }
        }
    }

    /// Record an assignment to source name `name`, creating a fresh SSA
    /// version if the name is already bound.
    fn emit(&mut self, name: &str, rhs: Rhs, span: Span, scope: &mut Scope) -> VarId {
        let id = if self.env.contains_key(name) {
            self.vars.declare_fresh(name, None, VarOrigin::Intermediate)
        } else {
            self.vars
                .declare(name, None, VarOrigin::Intermediate)
                .expect("unbound name cannot collide")
        };
        self.env.insert(name.to_string(), id);
        scope.names.insert(name.to_string(), Operand::Var(id));
        self.assignments.push(Assignment {
            target: id,
            rhs,
            preshare: self.in_preshare,
            span,
        });
        id
    }

    fn fresh_temp(&mut self, rhs: Rhs, span: Span, scope: &mut Scope) -> Operand {
        let name = format!("_t{}", self.temp_counter);
        self.temp_counter += 1;
        Operand::Var(self.emit(&name, rhs, span, scope))
    }

    /// Lower an arbitrary expression to a single-operator right-hand side,
    /// emitting `_tN` temporaries for nested operators.
    fn lower_rhs(&mut self, e: &SrcExpr, scope: &mut Scope) -> Result<Rhs, Diagnostic> {
        match e {
            SrcExpr::Const(_, _) | SrcExpr::Name(..) => {
                Ok(Rhs::Atom(self.lower_operand(e, scope)?))
            }
            SrcExpr::Not(inner, _) => Ok(Rhs::Not(self.lower_operand(inner, scope)?)),
            SrcExpr::Bin(op, l, r, span) => match op {
                SrcBinOp::Shl | SrcBinOp::Shr => {
                    let amount = self.const_eval(r, scope).map_err(|_| {
                        Diagnostic::new(*span, "shift amount must be a compile-time constant")
                    })?;
                    if !(0..=255).contains(&amount) {
                        return Err(Diagnostic::new(*span, "shift amount out of range"));
                    }
                    let dir = if *op == SrcBinOp::Shl {
                        ShiftDir::Left
                    } else {
                        ShiftDir::Right
                    };
                    Ok(Rhs::Shift(dir, amount as u8, self.lower_operand(l, scope)?))
                }
                _ => {
                    let bin = match op {
                        SrcBinOp::Xor => BinOp::Xor,
                        SrcBinOp::And => BinOp::And,
                        SrcBinOp::Or => BinOp::Or,
                        SrcBinOp::GfMul => BinOp::GfMul,
                        SrcBinOp::Add => BinOp::Add,
                        SrcBinOp::Sub => BinOp::Sub,
                        SrcBinOp::Mul => BinOp::Mul,
                        SrcBinOp::Shl | SrcBinOp::Shr => unreachable!(),
                    };
                    let l = self.lower_operand(l, scope)?;
                    let r = self.lower_operand(r, scope)?;
                    Ok(Rhs::Bin(bin, l, r))
                }
            },
            SrcExpr::Call(name, args, span) => {
                if let Some(&tid) = self.table_ids.get(name.as_str()) {
                    if args.len() != 1 {
                        return Err(Diagnostic::new(
                            *span,
                            format!("table `{name}` takes exactly one argument"),
                        ));
                    }
                    let arg = self.lower_operand(&args[0], scope)?;
                    return Ok(Rhs::Table(tid, arg));
                }
                if self.procs.contains_key(name.as_str()) {
                    let mut results = self.inline_call(name, args, *span, scope)?;
                    if results.len() != 1 {
                        return Err(Diagnostic::new(
                            *span,
                            format!("`{name}` returns {} values in single-value position", results.len()),
                        ));
                    }
                    return Ok(Rhs::Atom(results.pop().unwrap()));
                }
                Err(Diagnostic::new(
                    *span,
                    format!("`{name}` is not a procedure or table"),
                ))
            }
        }
    }

    /// Lower an expression to an operand, splitting off temporaries as needed.
    fn lower_operand(&mut self, e: &SrcExpr, scope: &mut Scope) -> Result<Operand, Diagnostic> {
        match e {
            SrcExpr::Const(v, span) => {
                if *v < 0 {
                    return Err(Diagnostic::new(*span, "negative constant"));
                }
                Ok(Operand::Const(self.width.truncate(*v as u32)))
            }
            SrcExpr::Name(base, subscript, span) => {
                let name = match subscript {
                    None => {
                        if let Some(&v) = scope.loop_vars.get(base.as_str()) {
                            // A bare loop variable in value position is its
                            // current constant.
                            if v < 0 {
                                return Err(Diagnostic::new(*span, "negative loop value"));
                            }
                            return Ok(Operand::Const(self.width.truncate(v as u32)));
                        }
                        base.clone()
                    }
                    Some(idx) => {
                        let v = self.const_eval(idx, scope)?;
                        if v < 0 {
                            return Err(Diagnostic::new(*span, "negative subscript"));
                        }
                        format!("{base}_{v}")
                    }
                };
                if let Some(op) = scope.names.get(&name) {
                    return Ok(*op);
                }
                // Entry-level scope also sees declared inputs directly.
                if self.call_stack.is_empty() {
                    if let Some(&id) = self.env.get(&name) {
                        return Ok(Operand::Var(id));
                    }
                } else if let Some(&id) = self.env.get(&name) {
                    // A procedure may read declared inputs, but never
                    // intermediates of the caller.
                    if self.vars.kind(id).is_some() {
                        return Ok(Operand::Var(id));
                    }
                }
                Err(Diagnostic::new(
                    *span,
                    format!("use of undeclared variable `{name}`"),
                ))
            }
            _ => {
                let span = e.span();
                let rhs = self.lower_rhs(e, scope)?;
                Ok(self.fresh_temp(rhs, span, scope))
            }
        }
    }

    fn inline_call(
        &mut self,
        name: &str,
        args: &[SrcExpr],
        span: Span,
        scope: &mut Scope,
    ) -> Result<Vec<Operand>, Diagnostic> {
        if self.call_stack.iter().any(|n| n == name) {
            return Err(Diagnostic::new(
                span,
                format!("recursive call of `{name}` (call stack: {})", self.call_stack.join(" -> ")),
            ));
        }
        let proc = *self.procs.get(name).unwrap();
        if proc.params.len() != args.len() {
            return Err(Diagnostic::new(
                span,
                format!(
                    "`{name}` takes {} argument(s), {} given",
                    proc.params.len(),
                    args.len()
                ),
            ));
        }
        let mut inner = Scope {
            names: HashMap::new(),
            loop_vars: HashMap::new(),
        };
        for (param, arg) in proc.params.iter().zip(args) {
            let op = self.lower_operand(arg, scope)?;
            inner.names.insert(param.clone(), op);
        }
        self.call_stack.push(name.to_string());
        let result = self.run_block(&proc.body, &mut inner, false)?;
        self.call_stack.pop();
        result.ok_or_else(|| {
            Diagnostic::new(span, format!("`{name}` ends without returning a value"))
        })
    }

    /// Evaluate a compile-time constant expression: integers, loop
    /// variables, and +, -, * arithmetic over them.
    fn const_eval(&self, e: &SrcExpr, scope: &Scope) -> Result<i64, Diagnostic> {
        match e {
            SrcExpr::Const(v, _) => Ok(*v),
            SrcExpr::Name(name, None, span) => scope
                .loop_vars
                .get(name.as_str())
                .copied()
                .ok_or_else(|| {
                    Diagnostic::new(
                        *span,
                        format!("`{name}` is not a compile-time constant"),
                    )
                }),
            SrcExpr::Bin(op, l, r, span) => {
                let l = self.const_eval(l, scope)?;
                let r = self.const_eval(r, scope)?;
                match op {
                    SrcBinOp::Add => Ok(l + r),
                    SrcBinOp::Sub => Ok(l - r),
                    SrcBinOp::Mul => Ok(l * r),
                    SrcBinOp::Xor => Ok(l ^ r),
                    _ => Err(Diagnostic::new(
                        *span,
                        "only +, -, *, ^ are allowed in compile-time constants",
                    )),
                }
            }
            other => Err(Diagnostic::new(
                other.span(),
                "expected a compile-time constant",
            )),
        }
    }
}

fn stmt_span(s: &Stmt) -> &Span {
    match s {
        Stmt::Assign { span, .. }
        | Stmt::For { span, .. }
        | Stmt::Preshare { span, .. }
        | Stmt::Return { span, .. } => span,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use crate::width::Width;

    fn elab(src: &str) -> Program {
        elaborate(&parse(src).unwrap(), Width::W8).unwrap()
    }

    fn names(p: &Program, ids: &std::collections::BTreeSet<VarId>) -> Vec<String> {
        ids.iter().map(|&i| p.vars.name(i).to_string()).collect()
    }

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

    #[test]
    fn goubin_partition_and_observables() {
        let p = elab(GOUBIN);
        assert_eq!(names(&p, &p.x_k), ["k"]);
        assert_eq!(names(&p, &p.x_r), ["r", "r'"]);
        assert_eq!(
            names(&p, &p.x_i),
            ["x'", "y0", "y1", "y2", "y3", "y4", "y5", "A"]
        );
        assert!(p.x_p.is_empty());
        // x' is preshare-assigned but consumed by the body, so observable.
        let mut expect: Vec<String> =
            ["x'", "A", "y0", "y1", "y2", "y3", "y4", "y5", "r", "r'"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        expect.sort();
        let mut got = names(&p, &p.x_o);
        got.sort();
        assert_eq!(got, expect);
    }

    #[test]
    fn goubin_computation_of_output_is_k_minus_r() {
        let p = elab(GOUBIN);
        let a = *p.outputs.first().unwrap();
        let k = p.vars.lookup("k").unwrap();
        let r = p.vars.lookup("r").unwrap();
        let rp = p.vars.lookup("r'").unwrap();
        let e = p.computation(a);
        for kv in 0..=255u16 {
            for rv in [0u16, 1, 77, 200, 255] {
                for rpv in [0u16, 3, 130] {
                    let env: std::collections::BTreeMap<_, _> =
                        [(k, kv), (r, rv), (rp, rpv)].into_iter().collect();
                    let got = p.arena.eval(e, &env, &p.tables);
                    assert_eq!(got, p.width.sub(kv, rv));
                }
            }
        }
    }

    #[test]
    fn preshare_internal_temp_is_hidden() {
        let p = elab(
            "#private k;\n#random a, b;\n#preshare { t = k ^ a; s = t ^ b; }\nu = s ^ a;\nreturn u;",
        );
        let t = p.vars.lookup("t").unwrap();
        let s = p.vars.lookup("s").unwrap();
        assert!(!p.x_o.contains(&t), "t is only read inside the presharing");
        assert!(p.x_o.contains(&s), "s is consumed by the body");
    }

    #[test]
    fn multi_operator_rhs_splits_into_temps() {
        let p = elab("#random a, b, c;\ny = a ^ b ^ c;\nreturn y;");
        assert_eq!(p.assignments.len(), 2);
        let t0 = p.vars.lookup("_t0").unwrap();
        assert_eq!(p.vars.name(p.assignments[0].target), "_t0");
        assert!(p.x_i.contains(&t0));
    }

    #[test]
    fn loops_unroll_and_subscripts_flatten() {
        let p = elab(
            "#random r;\n#private k;\nt[0] = k ^ r;\nfor i in 1..3 { t[i] = t[i-1] ^ r; }\nreturn t[2];",
        );
        let names: Vec<_> = p
            .assignments
            .iter()
            .map(|a| p.vars.name(a.target))
            .collect();
        assert_eq!(names, ["t_0", "t_1", "t_2"]);
        assert_eq!(p.outputs.len(), 1);
        assert_eq!(p.vars.name(p.outputs[0]), "t_2");
    }

    #[test]
    fn reassignment_gets_ssa_suffix() {
        let p = elab("#random a, b;\nx = a ^ b;\nx = x ^ a;\nreturn x;");
        let names: Vec<_> = p
            .assignments
            .iter()
            .map(|a| p.vars.name(a.target))
            .collect();
        assert_eq!(names, ["x", "x_2"]);
        // The second assignment reads the first version.
        let ops = p.assignments[1].rhs.operand_vars();
        assert!(ops.contains(&p.vars.lookup("x").unwrap()));
        assert_eq!(p.vars.name(p.outputs[0]), "x_2");
    }

    #[test]
    fn procedures_inline_with_fresh_locals() {
        let p = elab(
            r#"
            #random m0, m1;
            #private k;
            refresh(x, m) {
                t = x ^ m;
                return t;
            }
            a = refresh(k, m0);
            b = refresh(a, m1);
            return b;
            "#,
        );
        let names: Vec<_> = p
            .assignments
            .iter()
            .map(|a| p.vars.name(a.target))
            .collect();
        assert_eq!(names, ["t", "a", "t_2", "b"]);
    }

    #[test]
    fn recursion_is_rejected() {
        let err = elaborate(
            &parse("#random a;\nloop(x) { y = loop(x); return y; }\nz = loop(a);\nreturn z;")
                .unwrap(),
            Width::W8,
        )
        .unwrap_err();
        assert!(err.message.contains("recursive"), "{}", err.message);
    }

    #[test]
    fn unroll_limit_is_enforced() {
        let src = "#random a;\nx = a;\nfor i in 0..100 { x = x ^ a; }\nreturn x;";
        let mut opts = ElaborateOptions::default();
        opts.unroll_limit = 10;
        let err = elaborate_with(&parse(src).unwrap(), Width::W8, &opts).unwrap_err();
        assert!(err.message.contains("unrolls past"), "{}", err.message);
    }

    #[test]
    fn undeclared_variable_is_a_diagnostic() {
        let err = elaborate(&parse("#random a;\nx = a ^ q;\nreturn x;").unwrap(), Width::W8)
            .unwrap_err();
        assert!(err.message.contains("undeclared variable `q`"));
        assert_eq!(err.line, 2);
    }

    #[test]
    fn tables_apply_and_validate_arity() {
        let p = elab("#table Sbox;\n#private k;\n#random r;\nx = k ^ r;\ny = Sbox(x);\nreturn y;");
        match p.assignments[1].rhs {
            Rhs::Table(tid, _) => assert_eq!(p.tables.name(tid), "Sbox"),
            ref other => panic!("expected table rhs, got {other:?}"),
        }
        let err = elaborate(
            &parse("#table Sbox;\n#random r;\ny = Sbox(r, r);\nreturn y;").unwrap(),
            Width::W8,
        )
        .unwrap_err();
        assert!(err.message.contains("exactly one argument"));
    }

    #[test]
    fn shift_amounts_must_be_constant() {
        let err = elaborate(
            &parse("#random a, b;\nx = a << b;\nreturn x;").unwrap(),
            Width::W8,
        )
        .unwrap_err();
        assert!(err.message.contains("shift amount"));
        let p = elab("#random a;\nx = a << 3;\nreturn x;");
        assert!(matches!(p.assignments[0].rhs, Rhs::Shift(ShiftDir::Left, 3, _)));
    }
}
