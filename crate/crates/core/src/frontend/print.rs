//! Printing an elaborated [`Program`] back to parseable source text.

use std::fmt::Write;

use crate::program::{Operand, Program, Rhs};
use crate::expr::ShiftDir;
use crate::vars::VarKind;

/// Render a program as source text that parses and elaborates back to a
/// structurally identical program.
pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    let mut decl_line = |kind: VarKind, pragma: &str| {
        let names: Vec<&str> = p
            .vars
            .ids()
            .filter(|&id| p.vars.kind(id) == Some(kind))
            .map(|id| p.vars.name(id))
            .collect();
        if !names.is_empty() {
            writeln!(out, "#{pragma} {};", names.join(", ")).unwrap();
        }
    };
    decl_line(VarKind::Public, "public");
    decl_line(VarKind::Private, "private");
    decl_line(VarKind::Random, "random");

    for id in (0..p.tables.len() as u32).map(crate::tables::TableId) {
        match p.tables.source(id) {
            Some(path) => writeln!(out, "#table {} \"{}\";", p.tables.name(id), path).unwrap(),
            None => writeln!(out, "#table {};", p.tables.name(id)).unwrap(),
        }
    }

    let mut i = 0;
    while i < p.assignments.len() {
        if p.assignments[i].preshare {
            out.push_str("#preshare {\n");
            while i < p.assignments.len() && p.assignments[i].preshare {
                out.push_str("    ");
                print_assignment(&mut out, p, i);
                i += 1;
            }
            out.push_str("}\n");
        } else {
            print_assignment(&mut out, p, i);
            i += 1;
        }
    }

    if !p.outputs.is_empty() {
        let names: Vec<&str> = p.outputs.iter().map(|&v| p.vars.name(v)).collect();
        writeln!(out, "return {};", names.join(", ")).unwrap();
    }
    out
}

fn print_assignment(out: &mut String, p: &Program, i: usize) {
    let a = &p.assignments[i];
    let op = |o: Operand| match o {
        Operand::Var(v) => p.vars.name(v).to_string(),
        Operand::Const(c) => c.to_string(),
    };
    let rhs = match a.rhs {
        Rhs::Atom(o) => op(o),
        Rhs::Not(o) => format!("~{}", op(o)),
        Rhs::Table(t, o) => format!("{}({})", p.tables.name(t), op(o)),
        Rhs::Bin(b, l, r) => format!("{} {} {}", op(l), b.symbol(), op(r)),
        Rhs::Shift(ShiftDir::Left, amt, o) => format!("{} << {amt}", op(o)),
        Rhs::Shift(ShiftDir::Right, amt, o) => format!("{} >> {amt}", op(o)),
    };
    writeln!(out, "{} = {};", p.vars.name(a.target), rhs).unwrap();
}

#[cfg(test)]
mod tests {
    use super::super::{elaborate, parse};
    use super::*;
    use crate::width::Width;

    fn roundtrips(src: &str) {
        let p1 = elaborate(&parse(src).unwrap(), Width::W8).unwrap();
        let printed = pretty_print(&p1);
        let p2 = elaborate(&parse(&printed).unwrap(), Width::W8)
            .unwrap_or_else(|e| panic!("re-parse failed: {e}\n{printed}"));
        assert_eq!(printed, pretty_print(&p2), "printing is not a fixpoint");
        assert_eq!(p1.assignments.len(), p2.assignments.len());
        for (a, b) in p1.assignments.iter().zip(&p2.assignments) {
            assert_eq!(p1.vars.name(a.target), p2.vars.name(b.target));
            assert_eq!(a.preshare, b.preshare);
        }
        let names = |p: &crate::program::Program, s: &std::collections::BTreeSet<crate::vars::VarId>| {
            s.iter().map(|&v| p.vars.name(v).to_string()).collect::<Vec<_>>()
        };
        assert_eq!(names(&p1, &p1.x_o), names(&p2, &p2.x_o));
        assert_eq!(names(&p1, &p1.x_r), names(&p2, &p2.x_r));
    }

    #[test]
    fn goubin_roundtrips() {
        roundtrips(
            "#private k;\n#random r, r';\n#preshare { x' = k ^ r; }\ny0 = x' ^ r';\ny1 = y0 - r';\ny2 = y1 ^ x';\ny3 = r' ^ r;\ny4 = y3 ^ x';\ny5 = y4 - y3;\nA = y5 ^ y2;\nreturn A;",
        );
    }

    #[test]
    fn splits_loops_tables_roundtrip() {
        roundtrips(
            "#table Sbox;\n#public x0;\n#private k;\n#random r;\nu = Sbox(k ^ x0) ^ r;\nfor i in 0..2 { u = u ^ r; }\nv = ~u;\nw = v << 3;\nreturn w;",
        );
    }
}
