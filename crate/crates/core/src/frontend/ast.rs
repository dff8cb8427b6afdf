//! Syntax tree for the supported COOL subset.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Determinacy marker on an identifier: none, `$` (undetermined) or `#` (either).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Prefix {
    #[default]
    None,
    Dollar,
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    And,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Eq => "==",
            BinOp::And => "&&",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::And => 1,
            BinOp::Eq => 2,
            BinOp::Add | BinOp::Sub => 3,
            BinOp::Mul | BinOp::Div => 4,
            BinOp::Pow => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CallPart {
    Word(String),
    Args(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var { name: String, prefix: Prefix },
    Neg(Box<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// A mixfix invocation such as `add(1)to(2)` or `speed ($v) at angle (t) given distance`.
    Call(Vec<CallPart>),
    Member { object: String, field: String },
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var { name: name.to_string(), prefix: Prefix::None }
    }

    pub fn logic(name: &str) -> Expr {
        Expr::Var { name: name.to_string(), prefix: Prefix::Dollar }
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => 5,
            _ => 7,
        }
    }

    /// Visit every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) => e.walk(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Call(parts) => {
                for p in parts {
                    if let CallPart::Args(args) = p {
                        for a in args {
                            a.walk(f);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Names carrying a `$` prefix anywhere in the expression.
    pub fn dollar_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var { name, prefix: Prefix::Dollar } = e {
                out.insert(name.clone());
            }
        });
        out
    }

    pub fn has_logic_var(&self) -> bool {
        !self.dollar_names().is_empty()
    }
}

/// Normalized signature of a mixfix call: literal words joined by `_`, each
/// argument slot rendered as `_ARG_` (`add(a)to(b)` → `add_ARG_to_ARG_`).
pub fn call_signature(parts: &[CallPart]) -> String {
    let mut s = String::new();
    for part in parts {
        match part {
            CallPart::Word(w) => {
                if !s.is_empty() && !s.ends_with('_') {
                    s.push('_');
                }
                s.push_str(w);
            }
            CallPart::Args(args) => {
                for _ in args {
                    if !s.ends_with('_') {
                        s.push('_');
                    }
                    s.push_str("ARG_");
                }
            }
        }
    }
    s
}

pub fn call_args(parts: &[CallPart]) -> impl Iterator<Item = &Expr> {
    parts.iter().flat_map(|p| match p {
        CallPart::Args(a) => a.as_slice(),
        CallPart::Word(_) => &[],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LValue {
    Var(String),
    Member { object: String, field: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Load(String),
    Class(ClassDecl),
    Func(FunctionDecl),
    /// `new: x = e, y = e2;`
    New(Vec<(String, Expr)>),
    Assign { target: LValue, value: Expr },
    Return(Expr),
    /// `e --> sink;`
    Output { value: Expr, sink: String },
    /// `ClassName : instance;`
    Instantiate { class: String, name: String },
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDecl {
    pub name: String,
    pub parents: Vec<String>,
    pub body: Vec<Stmt>,
}

/// Process-control prompt: a reward per solution step, zero meaning "not invokable".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pcp(pub Vec<f64>);

impl Pcp {
    /// Step and reward at which the function fires when the process is at
    /// `step` (1-based): the smallest nonzero index `i >= step`.
    pub fn fire(&self, step: usize) -> Option<(usize, f64)> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, r)| (i + 1, *r))
            .find(|&(i, r)| i >= step && r != 0.0)
    }

    /// Largest step with a nonzero entry.
    pub fn final_step(&self) -> Option<usize> {
        self.0.iter().rposition(|r| *r != 0.0).map(|i| i + 1)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionKind {
    ForwardFact,
    InverseFact,
    Rule,
    ConstraintQueryGroup,
}

/// A function name: either a mixfix word/slot sequence or an expression
/// pattern written in braces. Both are stored as an expression tree whose
/// identifiers are parameter slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamePattern {
    pub expr: Expr,
    pub braced: bool,
}

impl NamePattern {
    pub fn signature(&self) -> String {
        match (&self.expr, self.braced) {
            (Expr::Call(parts), false) => call_signature(parts),
            (e, _) => format!("{{{e}}}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub prefix: Prefix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub pattern: NamePattern,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub kind: FunctionKind,
    pub pcp: Option<Pcp>,
    pub is_expr: bool,
    pub queries: Vec<NamePattern>,
    pub line: usize,
    pub col: usize,
}

/// Structural equality; source positions are ignored.
impl PartialEq for FunctionDecl {
    fn eq(&self, o: &Self) -> bool {
        self.pattern == o.pattern
            && self.params == o.params
            && self.body == o.body
            && self.kind == o.kind
            && self.pcp == o.pcp
            && self.is_expr == o.is_expr
            && self.queries == o.queries
    }
}

impl FunctionDecl {
    pub fn undetermined(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.prefix == Prefix::Dollar)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn uses_ans(&self) -> bool {
        let mut found = false;
        visit_stmts_exprs(&self.body, &mut |e| {
            e.walk(&mut |n| {
                if matches!(n, Expr::Var { name, .. } if name == "ans") {
                    found = true;
                }
            })
        });
        found
    }

    pub fn return_expr(&self) -> Option<&Expr> {
        self.body.iter().find_map(|s| match s {
            Stmt::Return(e) => Some(e),
            _ => None,
        })
    }
}

pub fn visit_stmts_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for s in stmts {
        match s {
            Stmt::New(defs) => defs.iter().for_each(|(_, e)| f(e)),
            Stmt::Assign { value, .. } | Stmt::Return(value) | Stmt::Output { value, .. } => f(value),
            Stmt::Expr(e) => f(e),
            Stmt::Class(c) => visit_stmts_exprs(&c.body, f),
            Stmt::Func(d) => visit_stmts_exprs(&d.body, f),
            Stmt::Load(_) | Stmt::Instantiate { .. } => {}
        }
    }
}

/// Collect pattern parameters in order of first appearance, merging prefixes.
pub fn pattern_params(pattern: &Expr) -> Result<Vec<Param>, String> {
    let mut params: Vec<Param> = Vec::new();
    let mut err = None;
    pattern.walk(&mut |e| {
        if let Expr::Var { name, prefix } = e {
            match params.iter_mut().find(|p| &p.name == name) {
                None => params.push(Param { name: name.clone(), prefix: *prefix }),
                Some(p) => match (p.prefix, *prefix) {
                    (_, Prefix::None) => {}
                    (Prefix::None, q) => p.prefix = q,
                    (a, b) if a == b => {}
                    _ => err = Some(format!("parameter `{name}` marked both `$` and `#`")),
                },
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(params),
    }
}

/// Sorted set of knowledge-domain names (file and class names).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct DomainSet(pub BTreeSet<String>);

impl DomainSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DomainSet(names.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn insert(&mut self, name: impl Into<String>) -> bool {
        self.0.insert(name.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.0.iter()
    }

    pub fn union(&self, other: &DomainSet) -> DomainSet {
        DomainSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection_len(&self, other: &DomainSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &DomainSet) -> usize {
        self.0.union(&other.0).count()
    }

    pub fn difference_len(&self, other: &DomainSet) -> usize {
        self.0.difference(&other.0).count()
    }

    pub fn symmetric_difference_len(&self, other: &DomainSet) -> usize {
        self.0.symmetric_difference(&other.0).count()
    }

    pub fn is_subset(&self, other: &DomainSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &DomainSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    /// Jaccard similarity; two empty sets count as identical.
    pub fn jaccard(&self, other: &DomainSet) -> f64 {
        let u = self.union_len(other);
        if u == 0 {
            1.0
        } else {
            self.intersection_len(other) as f64 / u as f64
        }
    }

    /// Canonical filesystem-safe key: sorted names joined with `+`.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|n| {
                n.chars()
                    .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for DomainSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Program {
    pub source_name: String,
    pub stmts: Vec<Stmt>,
}

impl Program {
    pub fn classes(&self) -> impl Iterator<Item = &ClassDecl> {
        self.stmts.iter().filter_map(|s| match s {
            Stmt::Class(c) => Some(c),
            _ => None,
        })
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.stmts.iter().filter_map(|s| match s {
            Stmt::Func(f) => Some(f),
            _ => None,
        })
    }

    pub fn loads(&self) -> impl Iterator<Item = &str> {
        self.stmts.iter().filter_map(|s| match s {
            Stmt::Load(l) => Some(l.as_str()),
            _ => None,
        })
    }

    /// Top-level statements that are neither declarations nor loads.
    pub fn statements(&self) -> impl Iterator<Item = &Stmt> {
        self.stmts
            .iter()
            .filter(|s| !matches!(s, Stmt::Class(_) | Stmt::Func(_) | Stmt::Load(_)))
    }
}
