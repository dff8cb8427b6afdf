//! Tab-separated listing matching the instruction table columns.

use std::fmt::Write;

use super::{Binding, IrItem, IrProgram, Op, TacInstr};

pub const HEADER: &str = "Code Type\tLHS\tRHS\tOperator\tResult\tLHS\tRHS\tOperator\tResult";

pub fn dump_row(i: &TacInstr) -> String {
    let f = i.flags();
    let op = if i.op == Op::None { String::new() } else { i.op.symbol().to_string() };
    format!("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}", i.code, i.lhs, i.rhs, op, i.result, f[0], f[1], f[2], f[3])
}

pub fn dump_rows(rows: &[TacInstr]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&dump_row(r));
        s.push('\n');
    }
    s
}

/// Row plus address and binding columns.
pub fn dump_row_verbose(i: &TacInstr, ir: &IrProgram) -> String {
    let b = match &i.binding {
        None => String::new(),
        Some(Binding::Builtin) => "builtin".into(),
        Some(Binding::Equate) => "equate".into(),
        Some(Binding::Covered(a)) => format!("covered {a}"),
        Some(Binding::Func { func, .. }) => format!("fn {}", ir.functions[*func].signature),
    };
    format!("{}\t{}\t{}", dump_row(i), i.addr, b)
}

pub fn dump_program(ir: &IrProgram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}\tAddress\tBinding");
    for f in &ir.functions {
        let _ = writeln!(s, "# function {} [{}]", f.signature, f.domain);
        for r in &f.code {
            let _ = writeln!(s, "{}", dump_row_verbose(r, ir));
        }
    }
    let mut items: Vec<(String, &IrItem)> = ir.top.iter().map(|i| ("top".to_string(), i)).collect();
    for c in &ir.classes {
        items.extend(c.body.iter().map(|i| (format!("class {}", c.name), i)));
    }
    for (ctx, item) in items {
        match item {
            IrItem::Code(rows) => {
                let _ = writeln!(s, "# code ({ctx})");
                for r in rows {
                    let _ = writeln!(s, "{}", dump_row_verbose(r, ir));
                }
            }
            IrItem::Query(seg) => {
                let _ = writeln!(s, "# query {} ({ctx})", seg.id);
                for r in &seg.instrs {
                    let _ = writeln!(s, "{}", dump_row_verbose(r, ir));
                }
            }
        }
    }
    s
}
