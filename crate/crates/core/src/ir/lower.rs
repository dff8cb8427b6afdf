//! AST to TAC lowering.

use std::collections::BTreeSet;

use thiserror::Error;

use super::*;
use crate::frontend::{
    pattern_params, resolve_domains_with, ClassDecl, DomainError, FunctionDecl, FunctionKind, LValue, Program,
    Stmt,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowerError {
    #[error("use of undeclared identifier `{name}` in {context}")]
    Undeclared { name: String, context: String },
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
}

/// Builtin names readable everywhere.
pub const CONSTANTS: [&str; 3] = ["π", "pi", "e"];

pub fn lower(p: &Program) -> Result<IrProgram, LowerError> {
    lower_with_libraries(p, &[])
}

/// Lower `main` together with loaded library programs. Library functions
/// belong to the library's domain (its source name).
pub fn lower_with_libraries(main: &Program, libs: &[Program]) -> Result<IrProgram, LowerError> {
    let lib_names: Vec<String> = libs.iter().map(|l| l.source_name.clone()).collect();
    let domains = resolve_domains_with(main, &lib_names)?;
    let mut globals: BTreeSet<String> = CONSTANTS.iter().map(|s| s.to_string()).collect();
    for p in libs.iter().chain(std::iter::once(main)) {
        collect_declared(&p.stmts, &mut globals);
    }
    let mut lw = Lowerer { next_addr: 100, next_segment: 0, globals, out: IrProgram::default() };
    lw.out.source_name = main.source_name.clone();
    lw.out.top_domains = domains.top.clone();

    for lib in libs {
        for f in lib.functions() {
            lw.function(f, &lib.source_name)?;
        }
        for c in lib.classes() {
            let d = DomainSet::from_names([c.name.clone(), lib.source_name.clone()]);
            lw.class(c, d, None)?;
        }
    }
    for f in main.functions() {
        lw.function(f, &main.source_name)?;
    }
    let mut class_vars: Vec<(String, BTreeSet<String>)> = Vec::new();
    for c in main.classes() {
        let d = domains.classes.get(&c.name).cloned().unwrap_or_default();
        let mut inherited = BTreeSet::new();
        for (n, vars) in &class_vars {
            if d.contains(n) {
                inherited.extend(vars.iter().cloned());
            }
        }
        let vars = lw.class(c, d, Some(inherited))?;
        class_vars.push((c.name.clone(), vars));
    }
    let stmts: Vec<&Stmt> = main.statements().collect();
    let mut declared = lw.globals.clone();
    let top = lw.block(&stmts, None, &mut declared, "top level")?;
    lw.out.top = top;
    Ok(lw.out)
}

pub fn extract_query_segments(ir: &IrProgram) -> Vec<IrSegment> {
    ir.segments().cloned().collect()
}

fn collect_declared(stmts: &[Stmt], out: &mut BTreeSet<String>) {
    for s in stmts {
        match s {
            Stmt::New(defs) => out.extend(defs.iter().map(|(n, _)| n.clone())),
            Stmt::Assign { target: LValue::Var(n), .. } => {
                out.insert(n.clone());
            }
            Stmt::Instantiate { name, .. } => {
                out.insert(name.clone());
            }
            _ => {}
        }
    }
}

struct Lowerer {
    next_addr: u32,
    next_segment: usize,
    globals: BTreeSet<String>,
    out: IrProgram,
}

/// Row buffer numbering temps and labels by row position (1-based).
struct Rows {
    rows: Vec<TacInstr>,
}

impl Rows {
    fn new() -> Self {
        Rows { rows: Vec::new() }
    }

    fn next_id(&self) -> u32 {
        self.rows.len() as u32 + 1
    }

    fn push(&mut self, i: TacInstr) -> u32 {
        self.rows.push(i);
        self.rows.len() as u32
    }

    fn temp(&mut self, lhs: Operand, rhs: Operand, op: Op) -> Operand {
        let id = self.next_id();
        self.push(TacInstr::new(code::OP, lhs, rhs, op, Operand::Temp(id)));
        Operand::Temp(id)
    }
}

/// Post-order lowering of one expression; returns the operand holding its value.
pub(crate) fn lower_expr(e: &Expr, logic: &BTreeSet<String>, rows: &mut Vec<TacInstr>, next_temp: &mut u32) -> Operand {
    fn push(rows: &mut Vec<TacInstr>, next_temp: &mut u32, lhs: Operand, rhs: Operand, op: Op) -> Operand {
        let id = *next_temp;
        *next_temp += 1;
        rows.push(TacInstr::new(code::OP, lhs, rhs, op, Operand::Temp(id)));
        Operand::Temp(id)
    }
    match e {
        Expr::Num(n) => Operand::Const(*n),
        Expr::Var { name, prefix } => {
            if *prefix == Prefix::Dollar || logic.contains(name) {
                Operand::LogicVar(name.clone())
            } else {
                Operand::Var(name.clone())
            }
        }
        Expr::Member { object, field } => Operand::Var(format!("{object}.{field}")),
        Expr::Neg(x) => {
            let o = lower_expr(x, logic, rows, next_temp);
            push(rows, next_temp, o, Operand::None, Op::Neg)
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = lower_expr(lhs, logic, rows, next_temp);
            let r = lower_expr(rhs, logic, rows, next_temp);
            push(rows, next_temp, l, r, Op::Bin(*op))
        }
        Expr::Call(parts) => {
            let sig = CallSig::from_parts(parts);
            let mut args = Vec::new();
            for a in crate::frontend::call_args(parts) {
                args.push(lower_expr(a, logic, rows, next_temp));
            }
            let mut it = args.into_iter();
            let arg = match it.next() {
                None => Operand::None,
                Some(first) => {
                    let mut acc = first;
                    for a in it {
                        acc = push(rows, next_temp, acc, a, Op::Comma);
                    }
                    acc
                }
            };
            push(rows, next_temp, Operand::Sig(sig), arg, Op::Call)
        }
    }
}

impl Lowerer {
    fn place(&mut self, rows: &mut [TacInstr]) {
        for r in rows {
            r.addr = HierAddr::top(self.next_addr);
            self.next_addr += 10;
        }
    }

    fn expr_rows(&self, e: &Expr, rows: &mut Rows) -> Operand {
        let mut next = rows.next_id();
        lower_expr(e, &BTreeSet::new(), &mut rows.rows, &mut next)
    }

    fn check_reads(&self, e: &Expr, declared: &BTreeSet<String>, context: &str) -> Result<(), LowerError> {
        let mut bad = None;
        e.walk(&mut |n| match n {
            Expr::Var { name, .. } if !declared.contains(name) && bad.is_none() => bad = Some(name.clone()),
            Expr::Member { object, .. } if !declared.contains(object) && bad.is_none() => bad = Some(object.clone()),
            _ => {}
        });
        match bad {
            Some(name) => Err(LowerError::Undeclared { name, context: context.to_string() }),
            None => Ok(()),
        }
    }

    fn function(&mut self, f: &FunctionDecl, domain: &str) -> Result<FuncId, LowerError> {
        let context = format!("function `{}`", f.pattern.signature());
        let mut rows = Rows::new();
        let entry = rows.next_id();
        rows.push(TacInstr::new(code::LABEL, Operand::None, Operand::None, Op::None, Operand::Label(entry)));
        let params: Vec<Operand> = f.params.iter().map(|p| Operand::Var(p.name.clone())).collect();
        let mut it = params.into_iter();
        let arg = match it.next() {
            None => Operand::None,
            Some(first) => {
                let mut acc = first;
                for p in it {
                    acc = rows.temp(acc, p, Op::Comma);
                }
                acc
            }
        };
        let sig = match &f.pattern.expr {
            Expr::Call(parts) if !f.pattern.braced => CallSig::from_parts(parts),
            _ => CallSig { text: f.pattern.signature(), shape: vec![] },
        };
        rows.push(TacInstr::new(code::OP, Operand::Sig(sig.clone()), arg, Op::Call, Operand::Ans));
        rows.push(TacInstr::new(code::END, Operand::None, Operand::None, Op::None, Operand::Label(entry)));
        let attr = match f.kind {
            FunctionKind::ForwardFact => attr::FORWARD,
            FunctionKind::InverseFact => attr::INVERSE,
            FunctionKind::Rule => attr::RULE,
            FunctionKind::ConstraintQueryGroup => attr::GROUP,
        };
        rows.push(TacInstr::new(code::DECL, Operand::Label(entry), Operand::Const(attr), Op::Decl, Operand::Label(entry)));
        let body_label = rows.next_id();
        rows.push(TacInstr::new(code::LABEL, Operand::None, Operand::None, Op::None, Operand::Label(body_label)));
        let body_start = rows.rows.len();

        let mut declared = self.globals.clone();
        declared.extend(f.params.iter().map(|p| p.name.clone()));
        declared.insert("ans".to_string());
        for s in &f.body {
            self.body_stmt(s, &mut rows, &mut declared, &context)?;
        }
        if !matches!(f.body.last(), Some(Stmt::Return(_))) {
            rows.push(TacInstr::new(code::RETURN, Operand::None, Operand::None, Op::None, Operand::None));
        }
        let body_end = rows.rows.len();
        rows.push(TacInstr::new(code::END, Operand::None, Operand::None, Op::None, Operand::Label(body_label)));
        rows.push(TacInstr::new(
            code::DECL,
            Operand::Label(entry),
            Operand::Label(body_label),
            Op::None,
            Operand::Label(entry),
        ));
        let mut code = rows.rows;
        self.place(&mut code);

        let id = self.out.functions.len();
        self.out.functions.push(IrFunction {
            id,
            signature: sig.text.clone(),
            domain: domain.to_string(),
            kind: f.kind,
            pcp: f.pcp.clone(),
            pattern: f.pattern.expr.clone(),
            params: f.params.clone(),
            query_of: None,
            uses_ans: f.uses_ans(),
            rule_return: if f.kind == FunctionKind::Rule { f.return_expr().cloned() } else { None },
            code,
            body: body_start..body_end,
            line: f.line,
        });
        for q in &f.queries {
            let qsig = match &q.expr {
                Expr::Call(parts) => CallSig::from_parts(parts),
                _ => CallSig { text: q.signature(), shape: vec![] },
            };
            let params = pattern_params(&q.expr).map_err(|m| LowerError::Invalid { context: context.clone(), message: m })?;
            let mut qcode = vec![
                TacInstr::new(code::LABEL, Operand::None, Operand::None, Op::None, Operand::Label(1)),
                TacInstr::new(code::OP, Operand::Sig(qsig.clone()), Operand::None, Op::Call, Operand::Ans),
                TacInstr::new(code::END, Operand::None, Operand::None, Op::None, Operand::Label(1)),
                TacInstr::new(code::DECL, Operand::Label(1), Operand::Const(attr::GROUP), Op::Decl, Operand::Label(1)),
            ];
            self.place(&mut qcode);
            let qid = self.out.functions.len();
            self.out.functions.push(IrFunction {
                id: qid,
                signature: qsig.text,
                domain: domain.to_string(),
                kind: FunctionKind::ConstraintQueryGroup,
                pcp: f.pcp.clone(),
                pattern: q.expr.clone(),
                params,
                query_of: Some(id),
                uses_ans: true,
                rule_return: None,
                code: qcode,
                body: 4..4,
                line: f.line,
            });
        }
        Ok(id)
    }

    fn body_stmt(
        &mut self,
        s: &Stmt,
        rows: &mut Rows,
        declared: &mut BTreeSet<String>,
        context: &str,
    ) -> Result<(), LowerError> {
        match s {
            Stmt::Expr(e) | Stmt::Output { value: e, .. } | Stmt::Return(e) if e.has_logic_var() => {
                Err(LowerError::Invalid {
                    context: context.to_string(),
                    message: "queries are not allowed inside function bodies".into(),
                })
            }
            Stmt::Func(_) | Stmt::Class(_) | Stmt::Load(_) => Err(LowerError::Invalid {
                context: context.to_string(),
                message: "declarations are not allowed inside function bodies".into(),
            }),
            _ => self.plain_stmt(s, rows, declared, context),
        }
    }

    /// Statements that lower to straight-line rows.
    fn plain_stmt(
        &mut self,
        s: &Stmt,
        rows: &mut Rows,
        declared: &mut BTreeSet<String>,
        context: &str,
    ) -> Result<(), LowerError> {
        match s {
            Stmt::New(defs) => {
                for (n, e) in defs {
                    self.check_reads(e, declared, context)?;
                    let v = self.expr_rows(e, rows);
                    rows.push(TacInstr::new(code::OP, Operand::Var(n.clone()), v, Op::Assign, Operand::Var(n.clone())));
                    declared.insert(n.clone());
                }
            }
            Stmt::Assign { target, value } => {
                self.check_reads(value, declared, context)?;
                let name = match target {
                    LValue::Var(n) => {
                        declared.insert(n.clone());
                        n.clone()
                    }
                    LValue::Member { object, field } => {
                        if !declared.contains(object) {
                            return Err(LowerError::Undeclared { name: object.clone(), context: context.into() });
                        }
                        format!("{object}.{field}")
                    }
                };
                let v = self.expr_rows(value, rows);
                rows.push(TacInstr::new(code::OP, Operand::Var(name.clone()), v, Op::Assign, Operand::Var(name)));
            }
            Stmt::Return(e) => {
                self.check_reads(e, declared, context)?;
                let v = self.expr_rows(e, rows);
                rows.push(TacInstr::new(code::RETURN, v, Operand::None, Op::None, Operand::None));
            }
            Stmt::Output { value, sink } => {
                self.check_reads(value, declared, context)?;
                let v = self.expr_rows(value, rows);
                rows.push(TacInstr::new(code::OUTPUT, v, Operand::Var(sink.clone()), Op::Output, Operand::None));
            }
            Stmt::Instantiate { class, name } => {
                if self.out.class(class).is_none() {
                    return Err(LowerError::Invalid {
                        context: context.to_string(),
                        message: format!("unknown class `{class}`"),
                    });
                }
                let sig = CallSig { text: class.clone(), shape: vec![] };
                rows.push(TacInstr::new(code::DECL, Operand::Sig(sig), Operand::None, Op::New, Operand::Var(name.clone())));
                declared.insert(name.clone());
            }
            Stmt::Expr(e) => {
                self.check_reads(e, declared, context)?;
                self.expr_rows(e, rows);
            }
            Stmt::Func(_) | Stmt::Class(_) | Stmt::Load(_) => {
                return Err(LowerError::Invalid {
                    context: context.to_string(),
                    message: "unexpected declaration".into(),
                })
            }
        }
        Ok(())
    }

    /// Lower a statement list, splitting it into code runs and query segments.
    fn block(
        &mut self,
        stmts: &[&Stmt],
        class: Option<&str>,
        declared: &mut BTreeSet<String>,
        context: &str,
    ) -> Result<Vec<IrItem>, LowerError> {
        let mut items = Vec::new();
        let mut rows = Rows::new();
        let flush = |this: &mut Self, rows: &mut Rows, items: &mut Vec<IrItem>| {
            if !rows.rows.is_empty() {
                let mut r = std::mem::take(&mut rows.rows);
                this.place(&mut r);
                items.push(IrItem::Code(r));
            }
        };
        for s in stmts {
            match s {
                Stmt::Expr(e) if e.has_logic_var() => {
                    flush(self, &mut rows, &mut items);
                    self.check_reads(e, declared, context)?;
                    let logic = e.dollar_names();
                    let mut instrs = Vec::new();
                    let mut next = 1;
                    let root = lower_expr(e, &logic, &mut instrs, &mut next);
                    if instrs.is_empty() || root.temp().is_none() {
                        return Err(LowerError::Invalid {
                            context: context.to_string(),
                            message: format!("query `{e}` has no operation to ground"),
                        });
                    }
                    let lo = HierAddr::top(self.next_addr - 10);
                    self.place(&mut instrs);
                    let hi = HierAddr::top(self.next_addr);
                    self.next_addr += 10;
                    let id = self.next_segment;
                    self.next_segment += 1;
                    items.push(IrItem::Query(IrSegment {
                        id,
                        context: class.map(str::to_string),
                        instrs,
                        lo,
                        hi,
                        next_temp: next,
                        line: 0,
                    }));
                }
                Stmt::Output { value, .. } | Stmt::Return(value) if value.has_logic_var() => {
                    return Err(LowerError::Invalid {
                        context: context.to_string(),
                        message: "undetermined variables are only allowed in query statements".into(),
                    })
                }
                Stmt::Return(_) => {
                    return Err(LowerError::Invalid {
                        context: context.to_string(),
                        message: "`return:` outside a function".into(),
                    })
                }
                _ => self.plain_stmt(s, &mut rows, declared, context)?,
            }
        }
        flush(self, &mut rows, &mut items);
        Ok(items)
    }

    fn class(
        &mut self,
        c: &ClassDecl,
        domains: DomainSet,
        inherited: Option<BTreeSet<String>>,
    ) -> Result<BTreeSet<String>, LowerError> {
        for s in &c.body {
            match s {
                Stmt::Func(f) => {
                    self.function(f, &c.name)?;
                }
                Stmt::Class(_) | Stmt::Load(_) => {
                    return Err(LowerError::Invalid {
                        context: format!("class `{}`", c.name),
                        message: "nested classes and loads are not supported".into(),
                    })
                }
                _ => {}
            }
        }
        let stmts: Vec<&Stmt> = c.body.iter().filter(|s| !matches!(s, Stmt::Func(_))).collect();
        let mut declared = self.globals.clone();
        declared.extend(inherited.unwrap_or_default());
        let body = self.block(&stmts, Some(&c.name), &mut declared, &format!("class `{}`", c.name))?;
        self.out.classes.push(IrClass { name: c.name.clone(), parents: c.parents.clone(), domains, body });
        Ok(declared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    #[test]
    fn fact_function_listing_matches_table() {
        let p = parse_program("@add(a)to(b){ b=b+a; }").unwrap();
        let ir = lower(&p).unwrap();
        let f = &ir.functions[0];
        let codes: Vec<u8> = f.code.iter().map(|i| i.code).collect();
        assert_eq!(codes, vec![1, 4, 4, 2, 6, 1, 4, 4, 5, 2, 6]);
        let flags: Vec<[u8; 4]> = f.code.iter().map(TacInstr::flags).collect();
        assert_eq!(
            flags,
            vec![
                [0, 0, 0, 0],
                [2, 2, 2, 0],
                [3, 0, 2, 2],
                [0, 0, 0, 0],
                [0, 1, 2, 0],
                [0, 0, 0, 0],
                [2, 2, 2, 0],
                [2, 0, 2, 2],
                [0, 0, 0, 0],
                [0, 0, 0, 0],
                [0, 0, 0, 0]
            ]
        );
        assert_eq!(f.code[2].lhs.to_string(), "add_ARG_to_ARG_");
        assert_eq!(f.code[7].rhs, Operand::Temp(7));
        assert_eq!(f.code[10].rhs, Operand::Label(6));
    }

    #[test]
    fn new_is_a_single_row_without_segment() {
        let ir = lower(&parse_program("new:x=0;").unwrap()).unwrap();
        assert_eq!(extract_query_segments(&ir).len(), 0);
        match &ir.top[0] {
            IrItem::Code(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].op, Op::Assign);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn query_segment() {
        let ir = lower(&parse_program("new:x=0; 1+$x==2;").unwrap()).unwrap();
        let segs = extract_query_segments(&ir);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].instrs.len(), 2);
        assert_eq!(segs[0].instrs[1].op, Op::Bin(BinOp::Eq));
        assert!(!segs[0].is_ground());
    }

    #[test]
    fn undeclared_identifier() {
        let e = lower(&parse_program("y + 1 --> screen;").unwrap()).unwrap_err();
        assert!(matches!(e, LowerError::Undeclared { ref name, .. } if name == "y"), "{e}");
    }
}
