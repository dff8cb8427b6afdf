//! Three-address intermediate representation.

pub mod addr;
pub mod dump;
pub mod encode;
pub mod lower;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::frontend::{BinOp, CallPart, DomainSet, Expr, FunctionKind, Param, Pcp, Prefix};

pub use addr::{address_between, range_between, AddrError, HierAddr};
pub use encode::{encode_state, Vocabulary};
pub use lower::{extract_query_segments, lower, LowerError};

pub type FuncId = usize;

/// Code types as they appear in the instruction table.
pub mod code {
    pub const LABEL: u8 = 1;
    pub const END: u8 = 2;
    pub const OUTPUT: u8 = 3;
    pub const OP: u8 = 4;
    pub const RETURN: u8 = 5;
    pub const DECL: u8 = 6;
}

/// Declaration attribute constants stored in the `@` row.
pub mod attr {
    pub const FORWARD: f64 = 100.0;
    pub const INVERSE: f64 = 101.0;
    pub const RULE: f64 = 102.0;
    pub const GROUP: f64 = 103.0;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapePart {
    Word(String),
    Group(usize),
}

/// Call signature plus the word/argument-group layout needed to rebuild the call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallSig {
    pub text: String,
    pub shape: Vec<ShapePart>,
}

impl CallSig {
    pub fn from_parts(parts: &[CallPart]) -> CallSig {
        let shape = parts
            .iter()
            .map(|p| match p {
                CallPart::Word(w) => ShapePart::Word(w.clone()),
                CallPart::Args(a) => ShapePart::Group(a.len()),
            })
            .collect();
        CallSig { text: crate::frontend::call_signature(parts), shape }
    }

    pub fn arity(&self) -> usize {
        self.shape
            .iter()
            .map(|p| match p {
                ShapePart::Group(n) => *n,
                ShapePart::Word(_) => 0,
            })
            .sum()
    }

    pub fn rebuild(&self, mut args: impl Iterator<Item = Expr>) -> Expr {
        let parts = self
            .shape
            .iter()
            .map(|p| match p {
                ShapePart::Word(w) => CallPart::Word(w.clone()),
                ShapePart::Group(n) => CallPart::Args((0..*n).map(|_| args.next().expect("arity")).collect()),
            })
            .collect();
        Expr::Call(parts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Operand {
    #[default]
    None,
    Const(f64),
    /// Determined variable; `obj.field` for members.
    Var(String),
    /// Undetermined (`$`) variable.
    LogicVar(String),
    Temp(u32),
    Label(u32),
    Sig(CallSig),
    Ans,
}

impl Operand {
    /// Attribute flag: 0 unused/temp/label, 1 constant, 2 variable, 3 signature.
    pub fn flag(&self) -> u8 {
        match self {
            Operand::None | Operand::Temp(_) | Operand::Label(_) => 0,
            Operand::Const(_) => 1,
            Operand::Var(_) | Operand::LogicVar(_) | Operand::Ans => 2,
            Operand::Sig(_) => 3,
        }
    }

    pub fn class_id(&self) -> u32 {
        match self {
            Operand::None => 0,
            Operand::Const(_) => 1,
            Operand::Var(_) => 2,
            Operand::LogicVar(_) => 3,
            Operand::Temp(_) => 4,
            Operand::Label(_) => 5,
            Operand::Sig(_) => 6,
            Operand::Ans => 7,
        }
    }

    pub fn temp(&self) -> Option<u32> {
        match self {
            Operand::Temp(t) => Some(*t),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::None => Ok(()),
            Operand::Const(n) => write!(f, "{n}"),
            Operand::Var(v) => f.write_str(v),
            Operand::LogicVar(v) => write!(f, "${v}"),
            Operand::Temp(t) | Operand::Label(t) => write!(f, "{t}"),
            Operand::Sig(s) => f.write_str(&s.text),
            Operand::Ans => f.write_str("ans"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Op {
    #[default]
    None,
    Bin(BinOp),
    Neg,
    Comma,
    Call,
    Assign,
    Decl,
    Output,
    New,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::None => "",
            Op::Bin(b) => b.symbol(),
            Op::Neg => "NEG",
            Op::Comma => "COMMA",
            Op::Call => "CALL",
            Op::Assign => "=",
            Op::Decl => "@",
            Op::Output => "-->",
            Op::New => "NEW",
        }
    }

    pub fn id(self) -> u32 {
        match self {
            Op::None => 0,
            Op::Bin(BinOp::Add) => 1,
            Op::Bin(BinOp::Sub) => 2,
            Op::Bin(BinOp::Mul) => 3,
            Op::Bin(BinOp::Div) => 4,
            Op::Bin(BinOp::Pow) => 5,
            Op::Bin(BinOp::Eq) => 6,
            Op::Bin(BinOp::And) => 7,
            Op::Neg => 8,
            Op::Comma => 9,
            Op::Call => 10,
            Op::Assign => 11,
            Op::Decl => 12,
            Op::Output => 13,
            Op::New => 14,
        }
    }
}

/// What an instruction is bound to after grounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binding {
    /// Determined arithmetic or builtin function, evaluated directly.
    Builtin,
    /// A user fact function; `args` maps each slot to the operand it matched.
    Func { func: FuncId, args: Vec<(String, Operand)> },
    /// Interior node of a pattern bound at the given root address.
    Covered(HierAddr),
    /// `lhs == rhs` solved by passing the determined side as `ans` to the other.
    Equate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacInstr {
    pub code: u8,
    pub lhs: Operand,
    pub rhs: Operand,
    pub op: Op,
    pub result: Operand,
    pub addr: HierAddr,
    pub binding: Option<Binding>,
}

impl TacInstr {
    pub fn new(code: u8, lhs: Operand, rhs: Operand, op: Op, result: Operand) -> Self {
        TacInstr { code, lhs, rhs, op, result, addr: HierAddr::top(1), binding: None }
    }

    pub fn flags(&self) -> [u8; 4] {
        let op = if self.op == Op::None { 0 } else { 2 };
        [self.lhs.flag(), self.rhs.flag(), op, self.result.flag()]
    }

    pub fn is_bound(&self) -> bool {
        self.binding.is_some()
    }
}

/// A node of an expression tree viewed through TAC: an instruction index or a leaf operand.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Instr(usize),
    Leaf(Operand),
}

/// A query: one expression statement containing undetermined variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrSegment {
    pub id: usize,
    /// Class whose body contains the query, if any.
    pub context: Option<String>,
    pub instrs: Vec<TacInstr>,
    /// Exclusive address bounds available to splices.
    pub lo: HierAddr,
    pub hi: HierAddr,
    pub next_temp: u32,
    pub line: usize,
}

impl IrSegment {
    pub fn is_ground(&self) -> bool {
        self.instrs.iter().all(TacInstr::is_bound)
    }

    pub fn root(&self) -> Option<usize> {
        self.instrs.len().checked_sub(1)
    }

    pub fn producer(&self, temp: u32) -> Option<usize> {
        self.instrs.iter().position(|i| i.result == Operand::Temp(temp))
    }

    pub fn node_of(&self, op: &Operand) -> Node {
        match op {
            Operand::Temp(t) => match self.producer(*t) {
                Some(i) => Node::Instr(i),
                None => Node::Leaf(op.clone()),
            },
            _ => Node::Leaf(op.clone()),
        }
    }

    /// Operand children of an instruction that are themselves expression nodes.
    pub fn children(&self, i: usize) -> Vec<Node> {
        let ins = &self.instrs[i];
        match ins.op {
            Op::Neg => vec![self.node_of(&ins.lhs)],
            Op::Call => match ins.rhs {
                Operand::None => vec![],
                ref r => vec![self.node_of(r)],
            },
            _ => vec![self.node_of(&ins.lhs), self.node_of(&ins.rhs)],
        }
    }

    /// Index range of the contiguous block holding the subtree rooted at `i`.
    pub fn block(&self, i: usize) -> Range<usize> {
        let mut lo = i;
        for c in self.children(i) {
            if let Node::Instr(j) = c {
                lo = lo.min(self.block(j).start);
            }
        }
        lo..i + 1
    }

    /// Flattened argument nodes of a CALL instruction.
    pub fn call_args(&self, i: usize) -> Vec<Node> {
        fn flatten(seg: &IrSegment, n: Node, out: &mut Vec<Node>) {
            match n {
                Node::Instr(j) if seg.instrs[j].op == Op::Comma => {
                    flatten(seg, seg.node_of(&seg.instrs[j].lhs), out);
                    flatten(seg, seg.node_of(&seg.instrs[j].rhs), out);
                }
                other => out.push(other),
            }
        }
        let mut out = Vec::new();
        if self.instrs[i].rhs != Operand::None {
            flatten(self, self.node_of(&self.instrs[i].rhs), &mut out);
        }
        out
    }

    /// Instructions forming the argument-list plumbing of a CALL.
    pub fn comma_instrs(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.node_of(&self.instrs[i].rhs)];
        while let Some(n) = stack.pop() {
            if let Node::Instr(j) = n {
                if self.instrs[j].op == Op::Comma {
                    out.push(j);
                    stack.push(self.node_of(&self.instrs[j].lhs));
                    stack.push(self.node_of(&self.instrs[j].rhs));
                }
            }
        }
        out
    }

    pub fn has_logic(&self, n: &Node) -> bool {
        match n {
            Node::Leaf(Operand::LogicVar(_)) => true,
            Node::Leaf(_) => false,
            Node::Instr(i) => self.children_deep(*i).iter().any(|c| self.has_logic(c)),
        }
    }

    fn children_deep(&self, i: usize) -> Vec<Node> {
        if self.instrs[i].op == Op::Call {
            self.call_args(i)
        } else {
            self.children(i)
        }
    }

    /// Expression-level children (call arguments flattened).
    pub fn expr_children(&self, i: usize) -> Vec<Node> {
        self.children_deep(i)
    }

    pub fn to_expr(&self, n: &Node) -> Expr {
        match n {
            Node::Leaf(op) => leaf_expr(op),
            Node::Instr(i) => {
                let ins = &self.instrs[*i];
                match ins.op {
                    Op::Bin(b) => Expr::bin(
                        b,
                        self.to_expr(&self.node_of(&ins.lhs)),
                        self.to_expr(&self.node_of(&ins.rhs)),
                    ),
                    Op::Neg => Expr::Neg(Box::new(self.to_expr(&self.node_of(&ins.lhs)))),
                    Op::Call => match &ins.lhs {
                        Operand::Sig(sig) => {
                            let args: Vec<Expr> = self.call_args(*i).iter().map(|a| self.to_expr(a)).collect();
                            sig.rebuild(args.into_iter())
                        }
                        _ => Expr::Num(f64::NAN),
                    },
                    _ => Expr::Num(f64::NAN),
                }
            }
        }
    }

    pub fn root_expr(&self) -> Option<Expr> {
        self.root().map(|r| self.to_expr(&Node::Instr(r)))
    }
}

pub fn leaf_expr(op: &Operand) -> Expr {
    match op {
        Operand::Const(n) => Expr::Num(*n),
        Operand::Var(v) => match v.split_once('.') {
            Some((o, f)) => Expr::Member { object: o.to_string(), field: f.to_string() },
            None => Expr::var(v),
        },
        Operand::LogicVar(v) => Expr::Var { name: v.clone(), prefix: Prefix::Dollar },
        Operand::Ans => Expr::var("ans"),
        _ => Expr::Num(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrFunction {
    pub id: FuncId,
    pub signature: String,
    pub domain: String,
    pub kind: FunctionKind,
    pub pcp: Option<Pcp>,
    pub pattern: Expr,
    pub params: Vec<Param>,
    /// For query components: the constraint component they invert.
    pub query_of: Option<FuncId>,
    pub uses_ans: bool,
    /// Rule replacement expression.
    pub rule_return: Option<Expr>,
    /// Full listing (header and body).
    pub code: Vec<TacInstr>,
    /// Index range of body rows inside `code`.
    pub body: Range<usize>,
    pub line: usize,
}

impl IrFunction {
    pub fn param_prefix(&self, name: &str) -> Option<Prefix> {
        self.params.iter().find(|p| p.name == name).map(|p| p.prefix)
    }

    pub fn unknown(&self) -> Option<&str> {
        self.params.iter().find(|p| p.prefix == Prefix::Dollar).map(|p| p.name.as_str())
    }

    /// Query components and `ans`-consuming inverse facts receive their target value from outside.
    pub fn takes_ans(&self) -> bool {
        self.query_of.is_some() || (self.kind == FunctionKind::InverseFact && self.uses_ans)
    }

    pub fn is_forward_callable(&self) -> bool {
        matches!(self.kind, FunctionKind::ForwardFact)
            || (self.kind == FunctionKind::ConstraintQueryGroup && self.query_of.is_none())
    }

    pub fn body_code(&self) -> &[TacInstr] {
        &self.code[self.body.clone()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IrItem {
    Code(Vec<TacInstr>),
    Query(IrSegment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrClass {
    pub name: String,
    pub parents: Vec<String>,
    pub domains: DomainSet,
    pub body: Vec<IrItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IrProgram {
    pub source_name: String,
    pub functions: Vec<IrFunction>,
    pub classes: Vec<IrClass>,
    pub top: Vec<IrItem>,
    pub top_domains: DomainSet,
}

impl IrProgram {
    pub fn class(&self, name: &str) -> Option<&IrClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn domains_for(&self, context: Option<&str>) -> &DomainSet {
        match context.and_then(|c| self.class(c)) {
            Some(c) => &c.domains,
            None => &self.top_domains,
        }
    }

    /// Every query segment in program order.
    pub fn segments(&self) -> impl Iterator<Item = &IrSegment> {
        self.top
            .iter()
            .chain(self.classes.iter().flat_map(|c| c.body.iter()))
            .filter_map(|i| match i {
                IrItem::Query(s) => Some(s),
                IrItem::Code(_) => None,
            })
    }

    pub fn segments_mut(&mut self) -> impl Iterator<Item = &mut IrSegment> {
        self.top
            .iter_mut()
            .chain(self.classes.iter_mut().flat_map(|c| c.body.iter_mut()))
            .filter_map(|i| match i {
                IrItem::Query(s) => Some(s),
                IrItem::Code(_) => None,
            })
    }

    pub fn is_ground(&self) -> bool {
        self.segments().all(IrSegment::is_ground)
    }

    /// Forward-callable functions by signature, restricted to `domains`.
    pub fn forward_by_signature(&self, sig: &str, domains: &DomainSet) -> Option<&IrFunction> {
        self.functions
            .iter()
            .find(|f| f.signature == sig && f.is_forward_callable() && domains.contains(&f.domain))
    }

    pub fn signature_index(&self) -> BTreeMap<&str, Vec<FuncId>> {
        let mut m: BTreeMap<&str, Vec<FuncId>> = BTreeMap::new();
        for f in &self.functions {
            m.entry(f.signature.as_str()).or_default().push(f.id);
        }
        m
    }
}
