//! Structural matching of function name patterns against IR subtrees.

use std::collections::BTreeMap;

use crate::frontend::{call_args, call_signature, Expr, Param, Prefix};
use crate::ir::{Binding, IrSegment, Node, Op, Operand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Fact functions: determined slots take logic-free subtrees, `$` slots
    /// take subtrees holding an undetermined variable.
    Fact,
    /// Rules: same slot discipline, applied as a rewrite.
    Rule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub slots: BTreeMap<String, Node>,
    /// Instruction indices matched by pattern operators, root first.
    pub interior: Vec<usize>,
}

pub fn match_at(seg: &IrSegment, pattern: &Expr, params: &[Param], root: usize, _mode: Mode) -> Option<Match> {
    let mut m = Match { slots: BTreeMap::new(), interior: Vec::new() };
    if matches!(pattern, Expr::Var { .. } | Expr::Num(_)) {
        return None;
    }
    if go(seg, pattern, params, &Node::Instr(root), &mut m) {
        Some(m)
    } else {
        None
    }
}

fn prefix_of(params: &[Param], name: &str, occurrence: Prefix) -> Prefix {
    params.iter().find(|p| p.name == name).map(|p| p.prefix).unwrap_or(occurrence)
}

fn go(seg: &IrSegment, pat: &Expr, params: &[Param], node: &Node, m: &mut Match) -> bool {
    match pat {
        Expr::Var { name, prefix } => {
            if let Some(prev) = m.slots.get(name) {
                return seg.to_expr(prev) == seg.to_expr(node);
            }
            let ok = match prefix_of(params, name, *prefix) {
                Prefix::None => !seg.has_logic(node),
                Prefix::Dollar => seg.has_logic(node),
                Prefix::Hash => true,
            };
            if ok {
                m.slots.insert(name.clone(), node.clone());
            }
            ok
        }
        Expr::Num(n) => matches!(node, Node::Leaf(Operand::Const(c)) if c == n),
        Expr::Member { .. } => false,
        Expr::Neg(x) => match node {
            Node::Instr(i) if seg.instrs[*i].op == Op::Neg => {
                m.interior.push(*i);
                go(seg, x, params, &seg.node_of(&seg.instrs[*i].lhs), m)
            }
            _ => false,
        },
        Expr::Binary { op, lhs, rhs } => match node {
            Node::Instr(i) if seg.instrs[*i].op == Op::Bin(*op) => {
                m.interior.push(*i);
                let ins = &seg.instrs[*i];
                go(seg, lhs, params, &seg.node_of(&ins.lhs), m) && go(seg, rhs, params, &seg.node_of(&ins.rhs), m)
            }
            _ => false,
        },
        Expr::Call(parts) => match node {
            Node::Instr(i) if seg.instrs[*i].op == Op::Call => {
                let sig = match &seg.instrs[*i].lhs {
                    Operand::Sig(s) => s,
                    _ => return false,
                };
                if sig.text != call_signature(parts) {
                    return false;
                }
                let args = seg.call_args(*i);
                let pats: Vec<&Expr> = call_args(parts).collect();
                if args.len() != pats.len() {
                    return false;
                }
                m.interior.push(*i);
                m.interior.extend(seg.comma_instrs(*i));
                pats.iter().zip(args.iter()).all(|(p, a)| go(seg, p, params, a, m))
            }
            _ => false,
        },
    }
}

/// Interior nodes must be free for a new binding: unbound, or evaluated
/// directly as builtins.
pub fn interior_free(seg: &IrSegment, m: &Match) -> bool {
    m.interior
        .iter()
        .all(|&i| matches!(seg.instrs[i].binding, None | Some(Binding::Builtin)))
}

/// Replace slot names in `e` by the given expressions.
pub fn substitute(e: &Expr, slots: &BTreeMap<String, Expr>) -> Expr {
    match e {
        Expr::Var { name, .. } => slots.get(name).cloned().unwrap_or_else(|| e.clone()),
        Expr::Num(_) | Expr::Member { .. } => e.clone(),
        Expr::Neg(x) => Expr::Neg(Box::new(substitute(x, slots))),
        Expr::Binary { op, lhs, rhs } => Expr::bin(*op, substitute(lhs, slots), substitute(rhs, slots)),
        Expr::Call(parts) => Expr::Call(
            parts
                .iter()
                .map(|p| match p {
                    crate::frontend::CallPart::Word(w) => crate::frontend::CallPart::Word(w.clone()),
                    crate::frontend::CallPart::Args(a) => {
                        crate::frontend::CallPart::Args(a.iter().map(|x| substitute(x, slots)).collect())
                    }
                })
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, pattern_params, Stmt};
    use crate::ir::lower;

    fn seg(src: &str) -> IrSegment {
        let ir = lower(&parse_program(src).unwrap()).unwrap();
        let s = ir.segments().next().unwrap().clone();
        s
    }

    fn pat(src: &str) -> (Expr, Vec<Param>) {
        let p = parse_program(&format!("@{{{src}}}{{}}")).unwrap_or_else(|_| {
            parse_program(&format!("expr:@{{{src}}}{{return:0;}}")).unwrap()
        });
        match &p.stmts[0] {
            Stmt::Func(f) => (f.pattern.expr.clone(), pattern_params(&f.pattern.expr).unwrap()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn inverse_fact_matches_query() {
        let s = seg("new:x=0; 1+$x==2;");
        let (p, params) = pat("a+$x==b");
        let m = match_at(&s, &p, &params, 1, Mode::Fact).unwrap();
        assert_eq!(m.interior, vec![1, 0]);
        assert_eq!(m.slots["x"], Node::Leaf(Operand::LogicVar("x".into())));
        assert_eq!(m.slots["a"], Node::Leaf(Operand::Const(1.0)));
    }

    #[test]
    fn determined_slot_rejects_logic() {
        let s = seg("new:x=0; $x+1==2;");
        let (p, params) = pat("a+$x==b");
        assert!(match_at(&s, &p, &params, 1, Mode::Fact).is_none());
    }

    #[test]
    fn repeated_slot_requires_equal_subtrees() {
        let s = seg("new:x=0; 1*$x^2+4*x+(-100)==0;");
        let (p, params) = pat("a*$x^2+b*x+c==0");
        let root = s.root().unwrap();
        let m = match_at(&s, &p, &params, root, Mode::Fact).unwrap();
        assert_eq!(m.slots["b"], Node::Leaf(Operand::Const(4.0)));
        let s2 = seg("new:x=0; new:y=0; 1*$x^2+4*$y+(-100)==0;");
        assert!(match_at(&s2, &p, &params, s2.root().unwrap(), Mode::Fact).is_none());
    }
}
