//! Recursive-descent parser. The accepted grammar is documented in
//! `docs/grammar.md`.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

const KEYWORDS: [&str; 5] = ["new", "return", "class", "expr", "exp"];

pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    parse_named(source, "main")
}

/// Parse `source`; `name` becomes the program's source name (its file domain).
pub fn parse_named(source: &str, name: &str) -> Result<Program, ParseError> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks, pos: 0 };
    let stmts = p.items(false)?;
    Ok(Program { source_name: name.to_string(), stmts })
}

/// Parse a single expression (used by tests and tooling).
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    p.expect(&Tok::Eof)?;
    Ok(e)
}

pub fn classify_function(decl: &FunctionDecl) -> Result<FunctionKind, String> {
    let undetermined: Vec<&str> = decl.undetermined().map(|p| p.name.as_str()).collect();
    let has_return = decl.return_expr().is_some();
    if decl.is_expr {
        if !decl.queries.is_empty() {
            return Err("'expr' modifier cannot be combined with query components".into());
        }
        if !has_return {
            return Err("'expr' on an inverse fact function: rule body must return an expression".into());
        }
        if decl.body.len() != 1 {
            return Err("rule function body must consist of a single 'return:' statement".into());
        }
        let ret = decl.return_expr().expect("checked");
        let mut unknown = None;
        ret.walk(&mut |e| {
            if let Expr::Var { name, .. } = e {
                if decl.param(name).is_none() && unknown.is_none() {
                    unknown = Some(name.clone());
                }
            }
        });
        if let Some(n) = unknown {
            return Err(format!("rule returns `{n}`, which is not a slot of its name pattern"));
        }
        return Ok(FunctionKind::Rule);
    }
    if !decl.queries.is_empty() {
        if !undetermined.is_empty() {
            return Err("constraint component must contain only determined variables".into());
        }
        for q in &decl.queries {
            let qp = pattern_params(&q.expr)?;
            let dollars = qp.iter().filter(|p| p.prefix == Prefix::Dollar).count();
            if dollars != 1 {
                return Err(format!(
                    "query component `{}` must have exactly one undetermined slot",
                    q.signature()
                ));
            }
            if let Some(p) = qp.iter().find(|p| decl.param(&p.name).is_none()) {
                return Err(format!(
                    "query component slot `{}` does not appear in the constraint component",
                    p.name
                ));
            }
        }
        return Ok(FunctionKind::ConstraintQueryGroup);
    }
    match undetermined.len() {
        0 => Ok(FunctionKind::ForwardFact),
        1 => Ok(FunctionKind::InverseFact),
        _ => Err(format!(
            "inverse fact functions with several undetermined slots ({}) are not supported",
            undetermined.join(", ")
        )),
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (l, c) = self.here();
        Err(ParseError::new(l, c, msg))
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected {t}, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {t}")),
        }
    }

    /// One or more identifiers joined by single spaces (class names).
    fn words(&mut self) -> Result<String, ParseError> {
        let mut w = vec![self.ident()?];
        while let Tok::Ident(s) = self.peek().clone() {
            self.bump();
            w.push(s);
        }
        Ok(w.join(" "))
    }

    fn keyword_colon(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw) && *self.peek_at(1) == Tok::Colon
    }

    fn items(&mut self, in_class: bool) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof if !in_class => return Ok(out),
                Tok::RBrace if in_class => return Ok(out),
                Tok::Eof => return self.err("unexpected end of input inside class body"),
                Tok::Semi => {
                    self.bump();
                }
                _ => out.push(self.item()?),
            }
        }
    }

    fn item(&mut self) -> Result<Stmt, ParseError> {
        if *self.peek() == Tok::Hash {
            self.bump();
            let kw = self.ident()?;
            if kw != "load" {
                return self.err(format!("unknown directive `#{kw}`"));
            }
            self.expect(&Tok::LParen)?;
            let name = self.words()?;
            self.expect(&Tok::RParen)?;
            self.eat(&Tok::Semi);
            return Ok(Stmt::Load(name));
        }
        if self.keyword_colon("class") {
            self.bump();
            self.bump();
            let name = self.words()?;
            let mut parents = Vec::new();
            if self.eat(&Tok::Inherit) {
                parents.push(self.words()?);
                while self.eat(&Tok::Comma) {
                    parents.push(self.words()?);
                }
            }
            self.expect(&Tok::LBrace)?;
            let body = self.items(true)?;
            self.expect(&Tok::RBrace)?;
            self.eat(&Tok::Semi);
            return Ok(Stmt::Class(ClassDecl { name, parents, body }));
        }
        if self.keyword_colon("expr") || self.keyword_colon("exp") {
            self.bump();
            self.bump();
            return self.function(true).map(Stmt::Func);
        }
        if *self.peek() == Tok::At {
            return self.function(false).map(Stmt::Func);
        }
        if self.keyword_colon("new") {
            self.bump();
            self.bump();
            let mut defs = Vec::new();
            loop {
                let name = self.ident()?;
                self.expect(&Tok::Assign)?;
                defs.push((name, self.expr()?));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::Semi)?;
            return Ok(Stmt::New(defs));
        }
        if self.keyword_colon("return") {
            self.bump();
            self.bump();
            let e = self.expr()?;
            self.expect(&Tok::Semi)?;
            return Ok(Stmt::Return(e));
        }
        if let Some(stmt) = self.try_instantiate()? {
            return Ok(stmt);
        }
        self.expr_stmt()
    }

    fn try_instantiate(&mut self) -> Result<Option<Stmt>, ParseError> {
        let mut k = 0;
        while matches!(self.peek_at(k), Tok::Ident(_)) {
            k += 1;
        }
        let shape = k > 0
            && *self.peek_at(k) == Tok::Colon
            && matches!(self.peek_at(k + 1), Tok::Ident(_))
            && *self.peek_at(k + 2) == Tok::Semi;
        if !shape {
            return Ok(None);
        }
        if let Tok::Ident(first) = self.peek() {
            if KEYWORDS.contains(&first.as_str()) {
                return self.err(format!("unexpected keyword `{first}`"));
            }
        }
        let class = self.words()?;
        self.expect(&Tok::Colon)?;
        let name = self.ident()?;
        self.expect(&Tok::Semi)?;
        Ok(Some(Stmt::Instantiate { class, name }))
    }

    fn expr_stmt(&mut self) -> Result<Stmt, ParseError> {
        let (line, col) = self.here();
        let e = self.expr()?;
        let stmt = if self.eat(&Tok::Assign) {
            let target = match e {
                Expr::Var { name, prefix: Prefix::None } => LValue::Var(name),
                Expr::Member { object, field } => LValue::Member { object, field },
                _ => return Err(ParseError::new(line, col, "invalid assignment target")),
            };
            let value = self.expr()?;
            Stmt::Assign { target, value }
        } else {
            Stmt::Expr(e)
        };
        if self.eat(&Tok::Output) {
            let sink = self.ident()?;
            let value = match stmt {
                Stmt::Expr(e) => e,
                _ => return Err(ParseError::new(line, col, "cannot redirect an assignment")),
            };
            self.expect(&Tok::Semi)?;
            return Ok(Stmt::Output { value, sink });
        }
        self.expect(&Tok::Semi)?;
        Ok(stmt)
    }

    fn looks_like_pcp(&self) -> bool {
        if *self.peek() != Tok::LParen {
            return false;
        }
        let mut k = 1;
        loop {
            if *self.peek_at(k) == Tok::Minus {
                k += 1;
            }
            if !matches!(self.peek_at(k), Tok::Num(_)) {
                return false;
            }
            k += 1;
            match self.peek_at(k) {
                Tok::Comma => k += 1,
                Tok::RParen => return true,
                _ => return false,
            }
        }
    }

    fn function(&mut self, is_expr: bool) -> Result<FunctionDecl, ParseError> {
        let (line, col) = self.here();
        self.expect(&Tok::At)?;
        let pcp = if self.looks_like_pcp() {
            let (pl, pc) = self.here();
            self.bump();
            let mut v = Vec::new();
            loop {
                let neg = self.eat(&Tok::Minus);
                match self.bump() {
                    Tok::Num(n) => v.push(if neg { -n } else { n }),
                    _ => unreachable!("checked by looks_like_pcp"),
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
            if v.iter().all(|r| *r == 0.0) {
                return Err(ParseError::new(pl, pc, "process-control prompt has no nonzero entry"));
            }
            Some(Pcp(v))
        } else {
            None
        };
        let pattern = self.name_pattern(true)?;
        self.expect(&Tok::LBrace)?;
        let body = self.items(true)?;
        self.expect(&Tok::RBrace)?;
        let mut queries = Vec::new();
        while self.eat(&Tok::Arrow) {
            self.expect(&Tok::At)?;
            queries.push(self.name_pattern(false)?);
            self.expect(&Tok::Semi)?;
        }
        let params = pattern_params(&pattern.expr).map_err(|m| ParseError::new(line, col, m))?;
        let mut decl = FunctionDecl {
            pattern,
            params,
            body,
            kind: FunctionKind::ForwardFact,
            pcp,
            is_expr,
            queries,
            line,
            col,
        };
        decl.kind = classify_function(&decl).map_err(|m| ParseError::new(line, col, m))?;
        Ok(decl)
    }

    /// Either `{ expr }` or a mixfix sequence of words and `(slot, ...)` groups.
    fn name_pattern(&mut self, before_body: bool) -> Result<NamePattern, ParseError> {
        if before_body && *self.peek() == Tok::LBrace {
            self.bump();
            let expr = self.expr()?;
            self.expect(&Tok::RBrace)?;
            return Ok(NamePattern { expr, braced: true });
        }
        let mut parts = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(w) => {
                    self.bump();
                    parts.push(CallPart::Word(w));
                }
                Tok::LParen => {
                    self.bump();
                    let mut slots = Vec::new();
                    loop {
                        let prefix = if self.eat(&Tok::Dollar) {
                            Prefix::Dollar
                        } else if self.eat(&Tok::Hash) {
                            Prefix::Hash
                        } else {
                            Prefix::None
                        };
                        let name = self.ident()?;
                        slots.push(Expr::Var { name, prefix });
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen)?;
                    parts.push(CallPart::Args(slots));
                }
                _ => break,
            }
        }
        if !parts.iter().any(|p| matches!(p, CallPart::Word(_))) {
            return self.err("function name must contain at least one word");
        }
        Ok(NamePattern { expr: Expr::Call(parts), braced: false })
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.eq()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.eq()?;
            lhs = Expr::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn eq(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.additive()?;
        while self.eat(&Tok::EqEq) {
            let rhs = self.additive()?;
            lhs = Expr::bin(BinOp::Eq, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.juxtaposition()?;
        if self.eat(&Tok::Caret) {
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    /// A maximal run of words and parenthesized groups. A lone word is a
    /// variable, a lone group is a parenthesized expression, and anything
    /// longer is a mixfix call.
    fn juxtaposition(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Num(n) = *self.peek() {
            self.bump();
            return Ok(Expr::Num(n));
        }
        let (line, col) = self.here();
        let mut parts: Vec<CallPart> = Vec::new();
        let mut prefixed: Option<Expr> = None;
        loop {
            match self.peek().clone() {
                Tok::Dollar | Tok::Hash => {
                    let prefix = if self.bump() == Tok::Dollar { Prefix::Dollar } else { Prefix::Hash };
                    let name = self.ident()?;
                    if !parts.is_empty() || prefixed.is_some() {
                        return Err(ParseError::new(line, col, "prefixed variable cannot be part of a call name"));
                    }
                    prefixed = Some(Expr::Var { name, prefix });
                }
                Tok::Ident(w) => {
                    if prefixed.is_some() {
                        return self.err("prefixed variable cannot be part of a call name");
                    }
                    self.bump();
                    if parts.is_empty() && *self.peek() == Tok::Dot {
                        self.bump();
                        let field = self.ident()?;
                        return Ok(Expr::Member { object: w, field });
                    }
                    parts.push(CallPart::Word(w));
                }
                Tok::LParen => {
                    if prefixed.is_some() {
                        return self.err("prefixed variable cannot be applied");
                    }
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.expr()?);
                    }
                    self.expect(&Tok::RParen)?;
                    parts.push(CallPart::Args(args));
                }
                _ => break,
            }
        }
        if let Some(v) = prefixed {
            return Ok(v);
        }
        match parts.len() {
            0 => Err(ParseError::new(line, col, format!("expected expression, found {}", self.peek()))),
            1 => match parts.pop().expect("len 1") {
                CallPart::Word(name) => Ok(Expr::Var { name, prefix: Prefix::None }),
                CallPart::Args(mut a) if a.len() == 1 => Ok(a.pop().expect("len 1")),
                CallPart::Args(_) => Err(ParseError::new(line, col, "tuples are not supported")),
            },
            _ if !parts.iter().any(|p| matches!(p, CallPart::Word(_))) => {
                Err(ParseError::new(line, col, "call name must contain at least one word"))
            }
            _ => Ok(Expr::Call(parts)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CODE1: &str = r#"
@add(a)to(b){ //Fact function 1, forward function
    b=b+a;
}
@add(a,b){  //Fact function 2, forward function
    return:a+b;
}
@{a+$x==b}{  //Fact function 3, inverse function
    x=b-a;
}
@{a+$x}{  //Fact function 4, inverse function
    x=ans-a;
}
new:x=0;
1+$x==2;  //Call the fact function 3
"#;

    #[test]
    fn code1_shape() {
        let p = parse_program(CODE1).unwrap();
        let kinds: Vec<_> = p.functions().map(|f| f.kind).collect();
        assert_eq!(
            kinds,
            vec![
                FunctionKind::ForwardFact,
                FunctionKind::ForwardFact,
                FunctionKind::InverseFact,
                FunctionKind::InverseFact
            ]
        );
        assert_eq!(p.statements().filter(|s| matches!(s, Stmt::New(_))).count(), 1);
        let queries: Vec<_> = p
            .statements()
            .filter(|s| matches!(s, Stmt::Expr(e) if e.has_logic_var()))
            .collect();
        assert_eq!(queries.len(), 1);
        let f1 = p.functions().next().unwrap();
        assert_eq!(f1.pattern.signature(), "add_ARG_to_ARG_");
    }

    #[test]
    fn empty_source() {
        let p = parse_program("").unwrap();
        assert_eq!(p.classes().count(), 0);
        assert_eq!(p.stmts.len(), 0);
    }

    #[test]
    fn inverse_fact_with_one_dollar_slot() {
        let p = parse_program("@{a+$x==b}{x=b-a;}").unwrap();
        let f = p.functions().next().unwrap();
        assert_eq!(f.kind, FunctionKind::InverseFact);
        assert_eq!(f.undetermined().count(), 1);
    }

    #[test]
    fn classify_forms() {
        let p = parse_program("@add(a,b){return:a+b;}").unwrap();
        assert_eq!(p.functions().next().unwrap().kind, FunctionKind::ForwardFact);
        let p = parse_program("expr:@{ln(a*b)}{ return:ln(a)+ln(b); }").unwrap();
        assert_eq!(p.functions().next().unwrap().kind, FunctionKind::Rule);
        let p = parse_program(
            "@(a) kg of apples at (b) per kg costs{ return:a*b; }=>@($a) kg of apples at (b) per kg given costs;",
        )
        .unwrap();
        let f = p.functions().next().unwrap();
        assert_eq!(f.kind, FunctionKind::ConstraintQueryGroup);
        assert_eq!(f.queries[0].signature(), "_ARG_kg_of_apples_at_ARG_per_kg_given_costs");
    }

    #[test]
    fn all_zero_pcp_rejected() {
        let e = parse_program("@(0,0){a+$x}{x=ans-a;}").unwrap_err();
        assert!(e.message.contains("no nonzero"), "{e}");
        assert_eq!((e.line, e.col), (1, 2));
    }

    #[test]
    fn expr_on_inverse_fact_rejected() {
        let e = parse_program("expr:@{a+$x==b}{x=b-a;}").unwrap_err();
        assert!(e.message.contains("inverse fact"), "{e}");
    }

    #[test]
    fn multiple_undetermined_slots_rejected() {
        assert!(parse_program("@{$a+$x==b}{x=b;}").is_err());
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_program("new:x=0;\nx = (1 + ;").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.col, 10);
    }

    #[test]
    fn precedence_and_mixfix() {
        let e = parse_expr("1*$x^2+4*x==100").unwrap();
        assert_eq!(e.to_string(), "1*$x^2+4*x==100");
        let e = parse_expr("-x^2").unwrap();
        assert!(matches!(e, Expr::Neg(_)));
        let e = parse_expr("speed ($v) at angle (π/3) given distance == 1000").unwrap();
        match e {
            Expr::Binary { op: BinOp::Eq, lhs, .. } => match *lhs {
                Expr::Call(parts) => assert_eq!(call_signature(&parts), "speed_ARG_at_angle_ARG_given_distance"),
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pcp_vs_leading_slot() {
        let p = parse_program("exp:@(-2,0,0){$a==b}{ return:a-b==0; }").unwrap();
        let f = p.functions().next().unwrap();
        assert_eq!(f.pcp, Some(Pcp(vec![-2.0, 0.0, 0.0])));
        assert_eq!(f.kind, FunctionKind::Rule);
    }
}
