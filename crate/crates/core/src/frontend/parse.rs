//! Recursive-descent parser. Precedence, loosest to tightest:
//! `|`, `^`, `&`, `<< >>`, `+ -`, `* @`, unary `~`.

use super::ast::*;
use super::lex::{lex, SpannedTok, Tok};
use super::Diagnostic;
use crate::vars::VarKind;

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|t| t.span)
            .or_else(|| self.toks.last().map(|t| t.span))
            .unwrap_or(Span::none())
    }

    fn next(&mut self) -> Option<SpannedTok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<Span, Diagnostic> {
        match self.next() {
            Some(t) if &t.tok == want => Ok(t.span),
            Some(t) => Err(Diagnostic::new(
                t.span,
                format!("expected {want}, found {}", t.tok),
            )),
            None => Err(Diagnostic::new(
                self.span(),
                format!("expected {want}, found end of input"),
            )),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Span), Diagnostic> {
        match self.next() {
            Some(SpannedTok {
                tok: Tok::Ident(s),
                span,
            }) => Ok((s, span)),
            Some(t) => Err(Diagnostic::new(
                t.span,
                format!("expected identifier, found {}", t.tok),
            )),
            None => Err(Diagnostic::new(
                self.span(),
                "expected identifier, found end of input",
            )),
        }
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek() == Some(tok)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

pub fn parse(src: &str) -> Result<SourceProgram, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut prog = SourceProgram::default();

    while let Some(tok) = p.peek().cloned() {
        match tok {
            Tok::Hash(word) if word == "preshare" => {
                // Preshare blocks belong to the entry body.
                prog.top_stmts.push(parse_stmt(&mut p)?);
            }
            Tok::Hash(word) => {
                p.next();
                parse_pragma(&mut p, &word, &mut prog)?;
            }
            Tok::Ident(name) => {
                // Distinguish `name(params) { ... }` (procedure definition)
                // from statements by looking for `(` ... `)` `{`.
                if is_proc_def(&p) {
                    let span = p.span();
                    p.next();
                    let params = parse_param_list(&mut p)?;
                    let body = parse_block(&mut p)?;
                    prog.procs.push(ProcDef {
                        name,
                        params,
                        body,
                        span,
                    });
                } else {
                    prog.top_stmts.push(parse_stmt(&mut p)?);
                }
            }
            Tok::LParen => {
                prog.top_stmts.push(parse_stmt(&mut p)?);
            }
            other => {
                return Err(Diagnostic::new(
                    p.span(),
                    format!("expected declaration or statement, found {other}"),
                ))
            }
        }
    }

    if prog.procs.is_empty() && prog.top_stmts.is_empty() {
        return Err(Diagnostic::new(Span::none(), "program has no statements"));
    }
    Ok(prog)
}

/// Parse a standalone expression (used by the pattern store to reload
/// serialized computations).
pub fn parse_expr(src: &str) -> Result<SrcExpr, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = parse_expr_prec(&mut p)?;
    if let Some(t) = p.next() {
        return Err(Diagnostic::new(
            t.span,
            format!("trailing input after expression: {}", t.tok),
        ));
    }
    Ok(e)
}

fn is_proc_def(p: &Parser) -> bool {
    // ident ( ident-list ) {  -- scan without consuming
    let mut i = p.pos + 1;
    if p.toks.get(i).map(|t| &t.tok) != Some(&Tok::LParen) {
        return false;
    }
    i += 1;
    let mut depth = 1;
    while let Some(t) = p.toks.get(i) {
        match t.tok {
            Tok::LParen => depth += 1,
            Tok::RParen => {
                depth -= 1;
                if depth == 0 {
                    return p.toks.get(i + 1).map(|t| &t.tok) == Some(&Tok::LBrace);
                }
            }
            _ => {}
        }
        i += 1;
    }
    false
}

fn parse_pragma(p: &mut Parser, word: &str, prog: &mut SourceProgram) -> Result<(), Diagnostic> {
    match word {
        "public" | "private" | "random" => {
            let kind = match word {
                "public" => VarKind::Public,
                "private" => VarKind::Private,
                _ => VarKind::Random,
            };
            loop {
                let (name, span) = p.expect_ident()?;
                if prog.decls.iter().any(|d| d.name == name) {
                    return Err(Diagnostic::new(span, format!("`{name}` declared twice")));
                }
                prog.decls.push(Decl { name, kind, span });
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
            p.expect(&Tok::Semi)?;
        }
        "table" => {
            let (name, span) = p.expect_ident()?;
            let path = match p.peek() {
                Some(Tok::Str(s)) => {
                    let s = s.clone();
                    p.next();
                    Some(s)
                }
                _ => None,
            };
            if prog.tables.iter().any(|t| t.name == name) {
                return Err(Diagnostic::new(span, format!("table `{name}` declared twice")));
            }
            prog.tables.push(TableDecl { name, path, span });
            p.expect(&Tok::Semi)?;
        }
        other => {
            return Err(Diagnostic::new(
                p.span(),
                format!("malformed pragma `#{other}`: expected public, private, random, table, or preshare"),
            ))
        }
    }
    Ok(())
}

fn parse_param_list(p: &mut Parser) -> Result<Vec<String>, Diagnostic> {
    p.expect(&Tok::LParen)?;
    let mut params = Vec::new();
    if !p.at(&Tok::RParen) {
        loop {
            let (name, _) = p.expect_ident()?;
            params.push(name);
            if !p.eat(&Tok::Comma) {
                break;
            }
        }
    }
    p.expect(&Tok::RParen)?;
    Ok(params)
}

fn parse_block(p: &mut Parser) -> Result<Vec<Stmt>, Diagnostic> {
    p.expect(&Tok::LBrace)?;
    let mut stmts = Vec::new();
    while !p.at(&Tok::RBrace) {
        if p.peek().is_none() {
            return Err(Diagnostic::new(p.span(), "unterminated block: missing `}`"));
        }
        stmts.push(parse_stmt(p)?);
    }
    p.expect(&Tok::RBrace)?;
    Ok(stmts)
}

fn parse_stmt(p: &mut Parser) -> Result<Stmt, Diagnostic> {
    let span = p.span();
    match p.peek().cloned() {
        Some(Tok::Hash(word)) if word == "preshare" => {
            p.next();
            let body = parse_block(p)?;
            Ok(Stmt::Preshare { body, span })
        }
        Some(Tok::Ident(word)) if word == "for" => {
            p.next();
            let (var, _) = p.expect_ident()?;
            let (in_kw, in_span) = p.expect_ident()?;
            if in_kw != "in" {
                return Err(Diagnostic::new(in_span, "expected `in` after loop variable"));
            }
            let lo = parse_expr_prec(p)?;
            p.expect(&Tok::DotDot)?;
            let hi = parse_expr_prec(p)?;
            let body = parse_block(p)?;
            Ok(Stmt::For {
                var,
                lo,
                hi,
                body,
                span,
            })
        }
        Some(Tok::Ident(word)) if word == "return" => {
            p.next();
            let mut exprs = Vec::new();
            if !p.at(&Tok::Semi) {
                loop {
                    exprs.push(parse_expr_prec(p)?);
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            p.expect(&Tok::Semi)?;
            Ok(Stmt::Return { exprs, span })
        }
        Some(Tok::LParen) => {
            // Tuple assignment: (a, b) = f(x);
            p.next();
            let mut targets = Vec::new();
            loop {
                targets.push(parse_lvalue(p)?);
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
            p.expect(&Tok::RParen)?;
            p.expect(&Tok::Eq)?;
            let rhs = parse_expr_prec(p)?;
            p.expect(&Tok::Semi)?;
            Ok(Stmt::Assign { targets, rhs, span })
        }
        Some(Tok::Ident(_)) => {
            let target = parse_lvalue(p)?;
            p.expect(&Tok::Eq)?;
            let rhs = parse_expr_prec(p)?;
            p.expect(&Tok::Semi)?;
            Ok(Stmt::Assign {
                targets: vec![target],
                rhs,
                span,
            })
        }
        Some(other) => Err(Diagnostic::new(
            span,
            format!("expected statement, found {other}"),
        )),
        None => Err(Diagnostic::new(span, "expected statement, found end of input")),
    }
}

fn parse_lvalue(p: &mut Parser) -> Result<LValue, Diagnostic> {
    let (base, span) = p.expect_ident()?;
    let subscript = if p.eat(&Tok::LBracket) {
        let e = parse_expr_prec(p)?;
        p.expect(&Tok::RBracket)?;
        Some(e)
    } else {
        None
    };
    Ok(LValue {
        base,
        subscript,
        span,
    })
}

fn parse_expr_prec(p: &mut Parser) -> Result<SrcExpr, Diagnostic> {
    parse_or(p)
}

macro_rules! binop_level {
    ($name:ident, $next:ident, $(($tok:pat, $op:expr)),+) => {
        fn $name(p: &mut Parser) -> Result<SrcExpr, Diagnostic> {
            let mut lhs = $next(p)?;
            loop {
                let op = match p.peek() {
                    $(Some($tok) => $op,)+
                    _ => break,
                };
                let span = p.span();
                p.next();
                let rhs = $next(p)?;
                lhs = SrcExpr::Bin(op, Box::new(lhs), Box::new(rhs), span);
            }
            Ok(lhs)
        }
    };
}

binop_level!(parse_or, parse_xor, (Tok::Pipe, SrcBinOp::Or));
binop_level!(parse_xor, parse_and, (Tok::Caret, SrcBinOp::Xor));
binop_level!(parse_and, parse_shift, (Tok::Amp, SrcBinOp::And));
binop_level!(
    parse_shift,
    parse_addsub,
    (Tok::Shl, SrcBinOp::Shl),
    (Tok::Shr, SrcBinOp::Shr)
);
binop_level!(
    parse_addsub,
    parse_mul,
    (Tok::Plus, SrcBinOp::Add),
    (Tok::Minus, SrcBinOp::Sub)
);
binop_level!(
    parse_mul,
    parse_unary,
    (Tok::Star, SrcBinOp::Mul),
    (Tok::At, SrcBinOp::GfMul)
);

fn parse_unary(p: &mut Parser) -> Result<SrcExpr, Diagnostic> {
    if p.at(&Tok::Tilde) {
        let span = p.span();
        p.next();
        let inner = parse_unary(p)?;
        return Ok(SrcExpr::Not(Box::new(inner), span));
    }
    parse_atom(p)
}

fn parse_atom(p: &mut Parser) -> Result<SrcExpr, Diagnostic> {
    let span = p.span();
    match p.next() {
        Some(SpannedTok {
            tok: Tok::Int(v), ..
        }) => Ok(SrcExpr::Const(v, span)),
        Some(SpannedTok {
            tok: Tok::Ident(name),
            ..
        }) => {
            if p.at(&Tok::LParen) {
                p.next();
                let mut args = Vec::new();
                if !p.at(&Tok::RParen) {
                    loop {
                        args.push(parse_expr_prec(p)?);
                        if !p.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                p.expect(&Tok::RParen)?;
                Ok(SrcExpr::Call(name, args, span))
            } else if p.eat(&Tok::LBracket) {
                let idx = parse_expr_prec(p)?;
                p.expect(&Tok::RBracket)?;
                Ok(SrcExpr::Name(name, Some(Box::new(idx)), span))
            } else {
                Ok(SrcExpr::Name(name, None, span))
            }
        }
        Some(SpannedTok {
            tok: Tok::LParen, ..
        }) => {
            let e = parse_expr_prec(p)?;
            p.expect(&Tok::RParen)?;
            Ok(e)
        }
        Some(t) => Err(Diagnostic::new(
            t.span,
            format!("expected expression, found {}", t.tok),
        )),
        None => Err(Diagnostic::new(
            span,
            "expected expression, found end of input",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_goubin_shape() {
        let src = r#"
            #private k;
            #random r, r';
            #preshare { x' = k ^ r; }
            y0 = x' ^ r';
            y1 = y0 - r';
            return y1;
        "#;
        let prog = parse(src).unwrap();
        assert_eq!(prog.decls.len(), 3);
        assert_eq!(prog.entry_assignment_count(), 3);
        assert!(matches!(prog.top_stmts[0], Stmt::Preshare { .. }));
    }

    #[test]
    fn declarations_only_plus_return() {
        let prog = parse("#public a;\nreturn a;").unwrap();
        assert_eq!(prog.entry_assignment_count(), 0);
        match &prog.top_stmts[0] {
            Stmt::Return { exprs, .. } => assert_eq!(exprs.len(), 1),
            other => panic!("expected return, got {other:?}"),
        }
    }

    #[test]
    fn multi_operator_rhs_parses() {
        let prog = parse("#random a, b, c;\ny = a ^ b ^ c;").unwrap();
        match &prog.top_stmts[0] {
            Stmt::Assign { rhs, .. } => {
                // left associative: (a ^ b) ^ c
                match rhs {
                    SrcExpr::Bin(SrcBinOp::Xor, l, _, _) => {
                        assert!(matches!(**l, SrcExpr::Bin(SrcBinOp::Xor, ..)));
                    }
                    other => panic!("unexpected rhs {other:?}"),
                }
            }
            other => panic!("expected assign, got {other:?}"),
        }
    }

    #[test]
    fn precedence_groups_like_c() {
        // a ^ b & c  parses as  a ^ (b & c)
        let e = parse_expr("a ^ b & c").unwrap();
        match e {
            SrcExpr::Bin(SrcBinOp::Xor, _, r, _) => {
                assert!(matches!(*r, SrcExpr::Bin(SrcBinOp::And, ..)))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn proc_defs_and_calls() {
        let src = r#"
            #random m;
            #private k;
            ref(x, y) {
                t = x ^ y;
                return t;
            }
            out = ref(k, m);
        "#;
        let prog = parse(src).unwrap();
        assert_eq!(prog.procs.len(), 1);
        assert_eq!(prog.procs[0].params, vec!["x", "y"]);
        assert_eq!(prog.top_stmts.len(), 1);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse("#private k;\ny = k +;").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("expected expression"));
    }
}
