//! Interpreter for ground IR.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::frontend::{BinOp, FunctionKind, Prefix};
use crate::grounder::{builtin_name, deduce_eval_order};
use crate::ir::{code, Binding, FuncId, IrFunction, IrItem, IrProgram, IrSegment, Node, Op, Operand, TacInstr};

const MAX_DEPTH: usize = 256;
const EQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Tuple(Vec<Value>),
    Obj(usize),
}

impl Value {
    fn num(&self, at: &str) -> Result<f64, RuntimeError> {
        match self {
            Value::Num(n) => Ok(*n),
            _ => Err(RuntimeError::Type { expected: "number", at: at.to_string() }),
        }
    }

    fn flatten(self) -> Vec<Value> {
        match self {
            Value::Tuple(v) => v,
            v => vec![v],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("{at}: division by zero")]
    DivisionByZero { at: String },
    #[error("{at}: even root of a negative number")]
    EvenRootOfNegative { at: String },
    #[error("{at}: {message}")]
    Domain { message: String, at: String },
    #[error("{at}: unbound identifier `{name}`")]
    Unbound { name: String, at: String },
    #[error("{at}: expected a {expected}")]
    Type { expected: &'static str, at: String },
    #[error("{at}: no function `{signature}` is invokable here")]
    NoFunction { signature: String, at: String },
    #[error("{at}: no value supplied for `ans`")]
    MissingAns { at: String },
    #[error("{at}: query is not ground")]
    NotGround { at: String },
    #[error("{at}: no solution found numerically")]
    Unsolved { at: String },
    #[error("{at}: constraint violated ({lhs} != {rhs})")]
    ConstraintViolated { lhs: f64, rhs: f64, at: String },
    #[error("{at}: call depth limit exceeded")]
    Depth { at: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputLine {
    pub sink: String,
    pub value: f64,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Instance {
    pub class: String,
    pub vars: HashMap<String, Value>,
}

/// Global bindings, object instances and the collected output.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    pub globals: HashMap<String, Value>,
    pub instances: Vec<Instance>,
    pub output: Vec<OutputLine>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn screen(&self) -> impl Iterator<Item = &OutputLine> {
        self.output.iter().filter(|l| l.sink == "screen")
    }

    /// Numeric global or `object.field` value.
    pub fn get(&self, name: &str) -> Option<f64> {
        let v = match name.split_once('.') {
            Some((o, f)) => match self.globals.get(o) {
                Some(Value::Obj(id)) => self.instances[*id].vars.get(f),
                _ => None,
            },
            None => self.globals.get(name),
        };
        match v {
            Some(Value::Num(n)) => Some(*n),
            _ => None,
        }
    }
}

/// `%.10g`-style rendering.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.9e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_zeros(&s)
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

struct Frame {
    locals: Option<HashMap<String, Value>>,
    instance: Option<usize>,
    context: Option<String>,
    last: Option<Value>,
    returned: Option<Option<Value>>,
    depth: usize,
    at: String,
}

impl Frame {
    fn top() -> Self {
        Frame { locals: None, instance: None, context: None, last: None, returned: None, depth: 0, at: "top level".into() }
    }
}

pub struct Executor<'a> {
    ir: &'a IrProgram,
    pub env: Environment,
}

pub fn execute(ir: &IrProgram) -> Result<Environment, RuntimeError> {
    let mut ex = Executor::new(ir);
    ex.run()?;
    Ok(ex.env)
}

/// Invoke one fact function directly: forward functions take every
/// parameter, inverse functions take the determined ones plus `ans`.
pub fn call_fact_function(ir: &IrProgram, f: FuncId, args: &[(&str, f64)], ans: Option<f64>) -> Result<f64, RuntimeError> {
    let mut ex = Executor::new(ir);
    let mut fr = Frame::top();
    let args: Vec<(String, Value)> = args.iter().map(|(k, v)| (k.to_string(), Value::Num(*v))).collect();
    ex.invoke(&mut fr, f, args, ans)
}

impl<'a> Executor<'a> {
    pub fn new(ir: &'a IrProgram) -> Self {
        Executor { ir, env: Environment::new() }
    }

    pub fn run(&mut self) -> Result<(), RuntimeError> {
        let mut fr = Frame::top();
        let ir = self.ir;
        self.run_items(&ir.top, &mut fr)
    }

    fn run_items(&mut self, items: &[IrItem], fr: &mut Frame) -> Result<(), RuntimeError> {
        for item in items {
            match item {
                IrItem::Code(rows) => {
                    self.run_rows(rows, fr)?;
                }
                IrItem::Query(seg) => self.run_segment(seg, fr)?,
            }
        }
        Ok(())
    }

    fn lookup(&self, fr: &Frame, name: &str) -> Option<Value> {
        if let Some((o, f)) = name.split_once('.') {
            return match self.lookup(fr, o) {
                Some(Value::Obj(id)) => self.env.instances[id].vars.get(f).cloned(),
                _ => None,
            };
        }
        if let Some(v) = fr.locals.as_ref().and_then(|l| l.get(name)) {
            return Some(v.clone());
        }
        if let Some(v) = fr.instance.and_then(|id| self.env.instances[id].vars.get(name)) {
            return Some(v.clone());
        }
        if let Some(v) = self.env.globals.get(name) {
            return Some(v.clone());
        }
        match name {
            "π" | "pi" => Some(Value::Num(std::f64::consts::PI)),
            "e" => Some(Value::Num(std::f64::consts::E)),
            _ => None,
        }
    }

    fn store(&mut self, fr: &mut Frame, name: &str, v: Value) -> Result<(), RuntimeError> {
        fr.last = Some(v.clone());
        if let Some((o, f)) = name.split_once('.') {
            return match self.lookup(fr, o) {
                Some(Value::Obj(id)) => {
                    self.env.instances[id].vars.insert(f.to_string(), v);
                    Ok(())
                }
                _ => Err(RuntimeError::Type { expected: "object", at: fr.at.clone() }),
            };
        }
        if let Some(l) = fr.locals.as_mut() {
            l.insert(name.to_string(), v);
        } else if let Some(id) = fr.instance {
            self.env.instances[id].vars.insert(name.to_string(), v);
        } else {
            self.env.globals.insert(name.to_string(), v);
        }
        Ok(())
    }

    fn operand(&self, fr: &Frame, temps: &HashMap<u32, Value>, o: &Operand) -> Result<Value, RuntimeError> {
        match o {
            Operand::Const(c) => Ok(Value::Num(*c)),
            Operand::Var(n) | Operand::LogicVar(n) => {
                self.lookup(fr, n).ok_or_else(|| RuntimeError::Unbound { name: n.clone(), at: fr.at.clone() })
            }
            Operand::Ans => {
                self.lookup(fr, "ans").ok_or_else(|| RuntimeError::MissingAns { at: fr.at.clone() })
            }
            Operand::Temp(t) => temps
                .get(t)
                .cloned()
                .ok_or_else(|| RuntimeError::Unbound { name: format!("temporary {t}"), at: fr.at.clone() }),
            _ => Err(RuntimeError::Type { expected: "value operand", at: fr.at.clone() }),
        }
    }

    /// Straight-line rows; returns the explicit return value when one was executed.
    fn run_rows(&mut self, rows: &[TacInstr], fr: &mut Frame) -> Result<(), RuntimeError> {
        let mut temps: HashMap<u32, Value> = HashMap::new();
        for r in rows {
            match (r.code, r.op) {
                (code::RETURN, _) => {
                    let v = match r.lhs {
                        Operand::None => None,
                        ref o => Some(self.operand(fr, &temps, o)?),
                    };
                    fr.returned = Some(v);
                    return Ok(());
                }
                (code::OUTPUT, _) => {
                    let v = self.operand(fr, &temps, &r.lhs)?.num(&fr.at)?;
                    let sink = match &r.rhs {
                        Operand::Var(s) => s.clone(),
                        _ => "screen".into(),
                    };
                    log::debug!("{sink} <- {v}");
                    self.env.output.push(OutputLine { sink, value: v, text: format_number(v) });
                }
                (_, Op::New) => {
                    let (class, name) = match (&r.lhs, &r.result) {
                        (Operand::Sig(s), Operand::Var(n)) => (s.text.clone(), n.clone()),
                        _ => return Err(RuntimeError::Type { expected: "class instantiation", at: fr.at.clone() }),
                    };
                    let id = self.instantiate(&class, fr.depth)?;
                    self.store(fr, &name, Value::Obj(id))?;
                }
                (_, Op::Assign) => {
                    let v = self.operand(fr, &temps, &r.rhs)?;
                    if let Operand::Var(n) = &r.lhs {
                        self.store(fr, n, v)?;
                    }
                }
                (code::OP, Op::Call) => {
                    let sig = match &r.lhs {
                        Operand::Sig(s) => s.text.clone(),
                        _ => return Err(RuntimeError::Type { expected: "call signature", at: fr.at.clone() }),
                    };
                    let args = match r.rhs {
                        Operand::None => vec![],
                        ref o => self.operand(fr, &temps, o)?.flatten(),
                    };
                    let v = self.call_by_signature(fr, &sig, args)?;
                    if let Some(t) = r.result.temp() {
                        temps.insert(t, Value::Num(v));
                    }
                }
                (code::OP, op) if op != Op::None => {
                    let l = self.operand(fr, &temps, &r.lhs)?;
                    let v = match op {
                        Op::Comma => {
                            let mut v = l.flatten();
                            v.push(self.operand(fr, &temps, &r.rhs)?);
                            Value::Tuple(v)
                        }
                        Op::Neg => Value::Num(-l.num(&fr.at)?),
                        Op::Bin(b) => {
                            let rv = self.operand(fr, &temps, &r.rhs)?.num(&fr.at)?;
                            Value::Num(binary(b, l.num(&fr.at)?, rv, &fr.at)?)
                        }
                        _ => continue,
                    };
                    if let Some(t) = r.result.temp() {
                        temps.insert(t, v);
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn instantiate(&mut self, class: &str, depth: usize) -> Result<usize, RuntimeError> {
        let id = self.env.instances.len();
        self.env.instances.push(Instance { class: class.to_string(), vars: HashMap::new() });
        let mut order = Vec::new();
        self.linearize(class, &mut order);
        for c in order {
            let ir = self.ir;
            let body = &ir.class(&c).expect("linearized class exists").body;
            let mut fr = Frame {
                locals: None,
                instance: Some(id),
                context: Some(c.clone()),
                last: None,
                returned: None,
                depth,
                at: format!("class `{c}`"),
            };
            self.run_items(body, &mut fr)?;
        }
        Ok(id)
    }

    /// Ancestors first, each once.
    fn linearize(&self, class: &str, out: &mut Vec<String>) {
        if out.iter().any(|c| c == class) {
            return;
        }
        if let Some(c) = self.ir.class(class) {
            for p in &c.parents {
                self.linearize(p, out);
            }
            out.push(class.to_string());
        }
    }

    fn call_by_signature(&mut self, fr: &mut Frame, sig: &str, args: Vec<Value>) -> Result<f64, RuntimeError> {
        if let Some(b) = builtin_name(sig) {
            let x = args.first().ok_or_else(|| RuntimeError::Type { expected: "argument", at: fr.at.clone() })?;
            return builtin(b, x.num(&fr.at)?, &fr.at);
        }
        let d = self.ir.domains_for(fr.context.as_deref());
        let f = self
            .ir
            .forward_by_signature(sig, d)
            .or_else(|| self.ir.functions.iter().find(|f| f.signature == sig && f.is_forward_callable()))
            .ok_or_else(|| RuntimeError::NoFunction { signature: sig.to_string(), at: fr.at.clone() })?;
        let named = f.params.iter().map(|p| p.name.clone()).zip(args).collect();
        self.invoke(fr, f.id, named, None)
    }

    /// Run a function body in a fresh frame.
    fn invoke(&mut self, caller: &mut Frame, fid: FuncId, args: Vec<(String, Value)>, ans: Option<f64>) -> Result<f64, RuntimeError> {
        let f: &IrFunction = &self.ir.functions[fid];
        let at = format!("function `{}`", f.signature);
        if caller.depth + 1 > MAX_DEPTH {
            return Err(RuntimeError::Depth { at });
        }
        if let Some(c) = f.query_of {
            let ans = ans.ok_or_else(|| RuntimeError::MissingAns { at: at.clone() })?;
            return self.solve_query(caller, f, c, args, ans);
        }
        let mut locals: HashMap<String, Value> = args.into_iter().collect();
        if let Some(a) = ans {
            locals.insert("ans".into(), Value::Num(a));
        }
        let unknown = f.unknown().map(str::to_string);
        for p in &f.params {
            if p.prefix != Prefix::Dollar && !locals.contains_key(&p.name) {
                return Err(RuntimeError::Unbound { name: p.name.clone(), at });
            }
        }
        let mut fr = Frame {
            locals: Some(locals),
            instance: caller.instance,
            context: Some(f.domain.clone()).filter(|d| self.ir.class(d).is_some()).or_else(|| caller.context.clone()),
            last: None,
            returned: None,
            depth: caller.depth + 1,
            at,
        };
        let ir = self.ir;
        self.run_rows(ir.functions[fid].body_code(), &mut fr)?;
        let v = match (fr.returned.take().flatten(), &unknown) {
            (Some(v), _) => v,
            (None, Some(u)) if f.kind == FunctionKind::InverseFact => fr
                .locals
                .as_ref()
                .and_then(|l| l.get(u).cloned())
                .ok_or_else(|| RuntimeError::Unbound { name: u.clone(), at: fr.at.clone() })?,
            (None, _) => fr.last.take().ok_or_else(|| RuntimeError::Type { expected: "result value", at: fr.at.clone() })?,
        };
        v.num(&fr.at)
    }

    /// Solve `constraint(args, unknown) == ans` for the query's undetermined slot.
    fn solve_query(
        &mut self,
        caller: &mut Frame,
        q: &IrFunction,
        constraint: FuncId,
        args: Vec<(String, Value)>,
        ans: f64,
    ) -> Result<f64, RuntimeError> {
        let at = format!("query component `{}`", q.signature);
        let unknown = q.unknown().ok_or_else(|| RuntimeError::Type { expected: "undetermined slot", at: at.clone() })?.to_string();
        let start = match args.iter().find(|(k, _)| *k == unknown) {
            Some((_, Value::Num(n))) => *n,
            _ => 0.0,
        };
        let known: Vec<(String, Value)> = args.into_iter().filter(|(k, _)| *k != unknown).collect();
        let mut g = |x: f64| -> Option<f64> {
            let mut a = known.clone();
            a.push((unknown.clone(), Value::Num(x)));
            self.invoke(caller, constraint, a, None).ok().map(|y| y - ans).filter(|y| y.is_finite())
        };
        bracket_and_bisect(&mut g, start).ok_or(RuntimeError::Unsolved { at })
    }

    fn run_segment(&mut self, seg: &IrSegment, fr: &mut Frame) -> Result<(), RuntimeError> {
        let query = seg.root_expr().map(|e| e.to_string()).unwrap_or_default();
        let at = format!("query `{query}` at {}", seg.instrs.first().map(|i| i.addr.to_string()).unwrap_or_default());
        if !seg.is_ground() {
            return Err(RuntimeError::NotGround { at });
        }
        let saved = std::mem::replace(&mut fr.at, at.clone());
        let res = self.solve_segment(seg, fr);
        fr.at = saved;
        res
    }

    fn solve_segment(&mut self, seg: &IrSegment, fr: &mut Frame) -> Result<(), RuntimeError> {
        let mut memo: HashMap<usize, Value> = HashMap::new();
        let mut calls: Vec<(usize, bool)> = Vec::new();
        for (i, ins) in seg.instrs.iter().enumerate() {
            match &ins.binding {
                Some(Binding::Equate) => calls.push((i, true)),
                Some(Binding::Func { func, .. }) => {
                    let f = &self.ir.functions[*func];
                    calls.push((i, !f.is_forward_callable()));
                }
                _ => {}
            }
        }
        let mut pending: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, inverse) in deduce_eval_order(&calls, |c| c.1) {
            if !inverse {
                let v = self.eval_node(seg, fr, &Node::Instr(i), &mut memo)?;
                memo.insert(i, v);
                continue;
            }
            let ins = &seg.instrs[i];
            match &ins.binding {
                Some(Binding::Equate) => {
                    let (l, r) = (seg.node_of(&ins.lhs), seg.node_of(&ins.rhs));
                    let (det, target) = if seg.has_logic(&l) { (r, l) } else { (l, r) };
                    let v = self.eval_node(seg, fr, &det, &mut memo)?.num(&fr.at)?;
                    if let Node::Instr(j) = target {
                        pending.insert(j, v);
                    }
                }
                Some(Binding::Func { func, args }) => {
                    let f = &self.ir.functions[*func];
                    let ans = pending.get(&i).copied();
                    if f.takes_ans() && ans.is_none() {
                        return Err(RuntimeError::MissingAns { at: fr.at.clone() });
                    }
                    let unknown = f.unknown().unwrap_or_default().to_string();
                    let mut vals = Vec::new();
                    let mut target = None;
                    for (name, op) in args {
                        let node = seg.node_of(op);
                        if *name == unknown {
                            if let Node::Leaf(Operand::LogicVar(v)) = &node {
                                if let Some(cur) = self.lookup(fr, v) {
                                    vals.push((name.clone(), cur));
                                }
                            }
                            target = Some(node);
                        } else {
                            vals.push((name.clone(), self.eval_node(seg, fr, &node, &mut memo)?));
                        }
                    }
                    let u = self.invoke(fr, *func, vals, ans)?;
                    match target {
                        Some(Node::Leaf(Operand::LogicVar(v))) => self.store(fr, &v, Value::Num(u))?,
                        Some(Node::Instr(j)) => {
                            pending.insert(j, u);
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        self.check_root(seg, fr)
    }

    /// Value of a determined node (builtin arithmetic or forward call).
    fn eval_node(&mut self, seg: &IrSegment, fr: &mut Frame, n: &Node, memo: &mut HashMap<usize, Value>) -> Result<Value, RuntimeError> {
        let i = match n {
            Node::Leaf(o) => return self.operand(fr, &HashMap::new(), o),
            Node::Instr(i) => *i,
        };
        if let Some(v) = memo.get(&i) {
            return Ok(v.clone());
        }
        let ins = &seg.instrs[i];
        let v = match &ins.binding {
            Some(Binding::Func { func, args }) => {
                let mut vals = Vec::new();
                for (name, op) in args {
                    vals.push((name.clone(), self.eval_node(seg, fr, &seg.node_of(op), memo)?));
                }
                Value::Num(self.invoke(fr, *func, vals, None)?)
            }
            _ => self.eval_structural(seg, fr, i, memo)?,
        };
        memo.insert(i, v.clone());
        Ok(v)
    }

    fn sub_value(&mut self, seg: &IrSegment, fr: &mut Frame, o: &Operand, memo: &mut HashMap<usize, Value>) -> Result<Value, RuntimeError> {
        match seg.node_of(o) {
            Node::Leaf(o) => self.operand(fr, &HashMap::new(), &o),
            Node::Instr(j) => match memo.get(&j) {
                Some(v) => Ok(v.clone()),
                None => self.eval_structural(seg, fr, j, memo),
            },
        }
    }

    /// Evaluate by operator alone, ignoring bindings.
    fn eval_structural(&mut self, seg: &IrSegment, fr: &mut Frame, i: usize, memo: &mut HashMap<usize, Value>) -> Result<Value, RuntimeError> {
        let ins = &seg.instrs[i];
        Ok(match ins.op {
            Op::Bin(b) => {
                let l = self.sub_value(seg, fr, &ins.lhs, memo)?.num(&fr.at)?;
                let r = self.sub_value(seg, fr, &ins.rhs, memo)?.num(&fr.at)?;
                Value::Num(binary(b, l, r, &fr.at)?)
            }
            Op::Neg => Value::Num(-self.sub_value(seg, fr, &ins.lhs, memo)?.num(&fr.at)?),
            Op::Comma => {
                let mut v = self.sub_value(seg, fr, &ins.lhs, memo)?.flatten();
                v.push(self.sub_value(seg, fr, &ins.rhs, memo)?);
                Value::Tuple(v)
            }
            Op::Call => {
                let sig = match &ins.lhs {
                    Operand::Sig(s) => s.text.clone(),
                    _ => return Err(RuntimeError::Type { expected: "call signature", at: fr.at.clone() }),
                };
                let args = match ins.rhs {
                    Operand::None => vec![],
                    ref o => self.sub_value(seg, fr, o, memo)?.flatten(),
                };
                let query = self.ir.functions.iter().find(|f| f.signature == sig && f.query_of.is_some());
                match query {
                    Some(q) if builtin_name(&sig).is_none() => {
                        let c = q.query_of.expect("query component");
                        let named = q.params.iter().map(|p| p.name.clone()).zip(args).collect();
                        Value::Num(self.invoke(fr, c, named, None)?)
                    }
                    _ => Value::Num(self.call_by_signature(fr, &sig, args)?),
                }
            }
            _ => return Err(RuntimeError::Type { expected: "expression", at: fr.at.clone() }),
        })
    }

    /// Check a solved equation; silently skipped when a side has no forward meaning.
    fn check_root(&mut self, seg: &IrSegment, fr: &mut Frame) -> Result<(), RuntimeError> {
        let Some(r) = seg.root() else { return Ok(()) };
        let ins = &seg.instrs[r];
        if ins.op != Op::Bin(BinOp::Eq) {
            return Ok(());
        }
        let mut memo = HashMap::new();
        let l = self.sub_value(seg, fr, &ins.lhs, &mut memo).ok();
        let rv = self.sub_value(seg, fr, &ins.rhs, &mut memo).ok();
        if let (Some(Value::Num(l)), Some(Value::Num(rv))) = (l, rv) {
            if (l - rv).abs() > EQ_TOL * 1f64.max(l.abs()).max(rv.abs()) {
                return Err(RuntimeError::ConstraintViolated { lhs: l, rhs: rv, at: fr.at.clone() });
            }
        }
        Ok(())
    }
}

fn binary(op: BinOp, l: f64, r: f64, at: &str) -> Result<f64, RuntimeError> {
    Ok(match op {
        BinOp::Add => l + r,
        BinOp::Sub => l - r,
        BinOp::Mul => l * r,
        BinOp::Div => {
            if r == 0.0 {
                return Err(RuntimeError::DivisionByZero { at: at.to_string() });
            }
            l / r
        }
        BinOp::Pow => {
            if l < 0.0 && r.fract() != 0.0 {
                return Err(RuntimeError::EvenRootOfNegative { at: at.to_string() });
            }
            l.powf(r)
        }
        BinOp::Eq => ((l - r).abs() <= EQ_TOL * 1f64.max(l.abs()).max(r.abs())) as u8 as f64,
        BinOp::And => (l != 0.0 && r != 0.0) as u8 as f64,
    })
}

fn builtin(name: &str, x: f64, at: &str) -> Result<f64, RuntimeError> {
    let domain = |m: &str| Err(RuntimeError::Domain { message: m.to_string(), at: at.to_string() });
    Ok(match name {
        "ln" | "log" if x <= 0.0 => return domain("logarithm of a non-positive number"),
        "ln" => x.ln(),
        "log" => x.log10(),
        "exp" => x.exp(),
        "sin" => x.sin(),
        "cos" => x.cos(),
        "tan" => x.tan(),
        "sqrt" if x < 0.0 => return Err(RuntimeError::EvenRootOfNegative { at: at.to_string() }),
        "sqrt" => x.sqrt(),
        "abs" => x.abs(),
        _ => return domain("unknown builtin"),
    })
}

/// Root of `g` near `start`: widen a bracket outward (positive side first),
/// then bisect to machine precision.
pub fn bracket_and_bisect(g: &mut dyn FnMut(f64) -> Option<f64>, start: f64) -> Option<f64> {
    let g0 = g(start)?;
    if g0 == 0.0 {
        return Some(start);
    }
    let mut h = 1e-3 * start.abs().max(1.0);
    let (mut prev_hi, mut prev_lo) = ((start, g0), (start, g0));
    let mut bracket = None;
    for _ in 0..200 {
        let hi = start + h;
        if let Some(gh) = g(hi) {
            if gh == 0.0 {
                return Some(hi);
            }
            if gh.signum() != prev_hi.1.signum() {
                bracket = Some((prev_hi, (hi, gh)));
                break;
            }
            prev_hi = (hi, gh);
        }
        let lo = start - h;
        if let Some(gl) = g(lo) {
            if gl == 0.0 {
                return Some(lo);
            }
            if gl.signum() != prev_lo.1.signum() {
                bracket = Some(((lo, gl), prev_lo));
                break;
            }
            prev_lo = (lo, gl);
        }
        h *= 1.6;
    }
    let ((mut a, mut ga), (mut b, _)) = bracket?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let gm = g(m)?;
        if gm == 0.0 {
            return Some(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => f.write_str(&format_number(*n)),
            Value::Tuple(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(", "))
            }
            Value::Obj(id) => write!(f, "<object {id}>"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bddb::NoAgent;
    use crate::frontend::parse_program;
    use crate::grounder::{ground_program, GroundConfig};
    use crate::ir::lower;

    fn run(src: &str) -> Environment {
        let ir = lower(&parse_program(src).unwrap()).unwrap();
        let g = ground_program(&ir, &NoAgent, &GroundConfig::default()).unwrap();
        execute(&g.program).unwrap()
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(101.0), "101");
        assert_eq!(format_number(8.198039027185570), "8.198039027");
        assert_eq!(format_number(50.0 / 3.0), "16.66666667");
        assert_eq!(format_number(-0.5), "-0.5");
        assert_eq!(format_number(1.5e-7), "1.5e-7");
        assert_eq!(format_number(0.0), "0");
    }

    #[test]
    fn forward_table_program() {
        let env = run("@add(a)to(b){ b=b+a; } new:y=add(1)to(100); y-->screen;");
        assert_eq!(env.get("y"), Some(101.0));
        assert_eq!(env.screen().next().unwrap().text, "101");
    }

    #[test]
    fn inverse_fact_on_equation() {
        let env = run("@{a+$x==b}{ x=b-a; } new:x=0; 1+$x==2;");
        assert_eq!(env.get("x"), Some(1.0));
    }

    #[test]
    fn inverse_with_ans() {
        let env = run("@{a+$x}{ x=ans-a; } new:x=0; 1+$x==2;");
        assert_eq!(env.get("x"), Some(1.0));
    }

    #[test]
    fn chained_inverses_run_outermost_first() {
        let src = "@{a*$x}{ x=ans/a; } @{$x-a}{ x=ans+a; } new:x=0; 2*($x-3)==10;";
        let env = run(src);
        assert_eq!(env.get("x"), Some(8.0));
    }

    #[test]
    fn runtime_errors() {
        let ir = lower(&parse_program("new:a=0; new:b=1/a;").unwrap()).unwrap();
        assert!(matches!(execute(&ir), Err(RuntimeError::DivisionByZero { .. })));
        let ir = lower(&parse_program("new:a=-4; new:b=a^0.5;").unwrap()).unwrap();
        assert!(matches!(execute(&ir), Err(RuntimeError::EvenRootOfNegative { .. })));
        let ir = lower(&parse_program("new:x=0; 1+$x==2;").unwrap()).unwrap();
        assert!(matches!(execute(&ir), Err(RuntimeError::NotGround { .. })));
    }

    #[test]
    fn direct_calls() {
        let ir = lower(&parse_program("@add(a,b){ return:a+b; } @{a+$x}{ x=ans-a; }").unwrap()).unwrap();
        assert_eq!(call_fact_function(&ir, 0, &[("a", 2.0), ("b", 3.0)], None).unwrap(), 5.0);
        assert_eq!(call_fact_function(&ir, 1, &[("a", 1.0)], Some(2.0)).unwrap(), 1.0);
    }

    #[test]
    fn bisection_prefers_positive_side() {
        let mut g = |x: f64| Some(x * x - 4.0);
        let r = bracket_and_bisect(&mut g, 0.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let mut h = |x: f64| Some(3.0 * x - 50.0);
        assert!((bracket_and_bisect(&mut h, 0.0).unwrap() - 50.0 / 3.0).abs() < 1e-12);
        let mut none = |_: f64| Some(1.0);
        assert!(bracket_and_bisect(&mut none, 0.0).is_none());
    }
}
