//! Source rendering. Output re-parses to a structurally equal tree.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

impl Display for Prefix {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prefix::None => "",
            Prefix::Dollar => "$",
            Prefix::Hash => "#",
        })
    }
}

fn child(f: &mut Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_parts(f: &mut Formatter<'_>, parts: &[CallPart]) -> fmt::Result {
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            f.write_char(' ')?;
        }
        match p {
            CallPart::Word(w) => f.write_str(w)?,
            CallPart::Args(args) => {
                f.write_char('(')?;
                for (j, a) in args.iter().enumerate() {
                    if j > 0 {
                        f.write_char(',')?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')?;
            }
        }
    }
    Ok(())
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) if *n < 0.0 || (*n == 0.0 && n.is_sign_negative()) => write!(f, "({n})"),
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Var { name, prefix } => write!(f, "{prefix}{name}"),
            Expr::Member { object, field } => write!(f, "{object}.{field}"),
            Expr::Neg(e) => {
                f.write_char('-')?;
                child(f, e, e.precedence() < 5)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                let (lp, rp) = if *op == BinOp::Pow {
                    (lhs.precedence() <= p, rhs.precedence() < 5)
                } else {
                    (lhs.precedence() < p, rhs.precedence() <= p && !matches!(**rhs, Expr::Neg(_)))
                };
                child(f, lhs, lp)?;
                f.write_str(op.symbol())?;
                child(f, rhs, rp)
            }
            Expr::Call(parts) => write_parts(f, parts),
        }
    }
}

impl Display for NamePattern {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match (&self.expr, self.braced) {
            (Expr::Call(parts), false) => write_parts(f, parts),
            (e, _) => write!(f, "{{{e}}}"),
        }
    }
}

fn indent(f: &mut Formatter<'_>, depth: usize) -> fmt::Result {
    for _ in 0..depth {
        f.write_str("    ")?;
    }
    Ok(())
}

fn write_stmt(f: &mut Formatter<'_>, s: &Stmt, depth: usize) -> fmt::Result {
    indent(f, depth)?;
    match s {
        Stmt::Load(n) => writeln!(f, "#load({n});"),
        Stmt::Class(c) => {
            write!(f, "class: {}", c.name)?;
            if !c.parents.is_empty() {
                write!(f, " << {}", c.parents.join(", "))?;
            }
            writeln!(f, " {{")?;
            for s in &c.body {
                write_stmt(f, s, depth + 1)?;
            }
            indent(f, depth)?;
            writeln!(f, "}}")
        }
        Stmt::Func(d) => {
            if d.is_expr {
                f.write_str("expr:")?;
            }
            f.write_char('@')?;
            if let Some(p) = &d.pcp {
                f.write_char('(')?;
                for (i, r) in p.0.iter().enumerate() {
                    if i > 0 {
                        f.write_char(',')?;
                    }
                    write!(f, "{r}")?;
                }
                f.write_char(')')?;
            }
            writeln!(f, "{} {{", d.pattern)?;
            for s in &d.body {
                write_stmt(f, s, depth + 1)?;
            }
            indent(f, depth)?;
            f.write_char('}')?;
            for q in &d.queries {
                write!(f, " => @{q};")?;
            }
            f.write_char('\n')
        }
        Stmt::New(defs) => {
            f.write_str("new: ")?;
            for (i, (n, e)) in defs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{n} = {e}")?;
            }
            writeln!(f, ";")
        }
        Stmt::Assign { target, value } => match target {
            LValue::Var(n) => writeln!(f, "{n} = {value};"),
            LValue::Member { object, field } => writeln!(f, "{object}.{field} = {value};"),
        },
        Stmt::Return(e) => writeln!(f, "return: {e};"),
        Stmt::Output { value, sink } => writeln!(f, "{value} --> {sink};"),
        Stmt::Instantiate { class, name } => writeln!(f, "{class} : {name};"),
        Stmt::Expr(e) => writeln!(f, "{e};"),
    }
}

impl Display for Stmt {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_stmt(f, self, 0)
    }
}

impl Display for Program {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for s in &self.stmts {
            write_stmt(f, s, 0)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::frontend::{parse_expr, parse_program};

    #[test]
    fn minimal_parentheses() {
        for src in ["a-(b-c)", "(a-b)-c", "a^b^c", "(a^b)^c", "-(a+b)", "(-a)^2", "a*-b", "-a^2", "1*$x^2+4*x==100"] {
            let e = parse_expr(src).unwrap();
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
        assert_eq!(parse_expr("(a-b)-c").unwrap().to_string(), "a-b-c");
    }

    #[test]
    fn program_round_trip() {
        let src = "#load(io);\nclass: Q {\n exp:@(-2,0,0){$a==b}{ return:a-b==0; }\n}\nclass: Main << Q { new:x=1; 1*$x^2+4*x==100; };\nMain:m;\nm.x-->screen;\n@(a) kg costs{return:a;}=>@($a) kg given costs;";
        let p = parse_program(src).unwrap();
        let printed = p.to_string();
        assert_eq!(parse_program(&printed).unwrap(), p, "{printed}");
    }
}
