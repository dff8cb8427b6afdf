//! Compile-time grounding of query segments into fact-function invocations.

pub mod matching;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bddb::{self, emit_modeling_data, ModelingBatch, ParamError, PolicySource, SearchParams, SearchSpace, SearchStats};
use crate::frontend::{DomainSet, Expr, FunctionKind};
use crate::ir::lower::lower_expr;
use crate::ir::{
    encode_state, range_between, Binding, FuncId, HierAddr, IrFunction, IrProgram, IrSegment, Node, Op, Operand,
    Vocabulary,
};
use matching::{interior_free, match_at, substitute, Mode};

/// Builtin single-argument functions evaluated directly.
pub const BUILTIN_FUNCTIONS: [&str; 8] = ["ln", "log", "exp", "sin", "cos", "tan", "sqrt", "abs"];

pub fn builtin_name(sig: &str) -> Option<&'static str> {
    BUILTIN_FUNCTIONS.iter().copied().find(|b| sig.strip_prefix(b) == Some("_ARG_"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    ApplyRule,
    BindFact,
    Equate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub kind: ActionKind,
    pub func: Option<FuncId>,
    pub root: HierAddr,
    pub root_index: usize,
    /// Prompt reward at the step where the action fires.
    pub r_p: f64,
    /// Step the process moves to, and the entry's prompt when it came from one.
    pub step: usize,
    pub pcp_fired: bool,
    pub slots: BTreeMap<String, Node>,
    pub interior: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ParentLink {
    pub state: GroundingState,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct GroundingState {
    pub segment: IrSegment,
    pub step: usize,
    pub depth: usize,
    /// Final prescribed step of the most recent prompt-governed action.
    pub pcp_final: Option<usize>,
    pub parent: Option<Arc<ParentLink>>,
}

impl GroundingState {
    pub fn actions_path(&self) -> Vec<Action> {
        let mut out = Vec::new();
        let mut cur = self.parent.clone();
        while let Some(p) = cur {
            out.push(p.action.clone());
            cur = p.state.parent.clone();
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundConfig {
    pub search: SearchParams,
    pub pcp: bool,
    /// Prompt reward of functions without a prompt vector.
    pub default_reward: f64,
    /// Reward of every action when prompts are disabled.
    pub uniform_reward: f64,
    pub vocab_size: u32,
}

impl Default for GroundConfig {
    fn default() -> Self {
        GroundConfig {
            search: SearchParams::default(),
            pcp: true,
            default_reward: 1.0,
            uniform_reward: -1.0,
            vocab_size: 256,
        }
    }
}

pub fn is_ground(s: &IrSegment) -> bool {
    s.is_ground()
}

/// Forward calls keep their order, inverse calls follow in reverse order.
pub fn deduce_eval_order<T: Clone>(calls: &[T], is_inverse: impl Fn(&T) -> bool) -> Vec<T> {
    let mut out: Vec<T> = calls.iter().filter(|c| !is_inverse(c)).cloned().collect();
    out.extend(calls.iter().rev().filter(|c| is_inverse(c)).cloned());
    out
}

pub struct GroundingSpace<'a> {
    pub ir: &'a IrProgram,
    pub domains: DomainSet,
    pub cfg: &'a GroundConfig,
    vocab: Vocabulary,
}

impl<'a> GroundingSpace<'a> {
    pub fn new(ir: &'a IrProgram, domains: DomainSet, cfg: &'a GroundConfig) -> Self {
        GroundingSpace { ir, domains, cfg, vocab: Vocabulary::new(cfg.vocab_size) }
    }

    fn invokable(&self, f: &IrFunction) -> bool {
        self.domains.contains(&f.domain)
    }

    /// Bind every logic-free instruction: arithmetic and builtins directly,
    /// user calls to a forward function of the same signature.
    pub fn normalize(&self, seg: &mut IrSegment) {
        for i in 0..seg.instrs.len() {
            if seg.instrs[i].binding.is_some() || seg.has_logic(&Node::Instr(i)) {
                continue;
            }
            let b = match (&seg.instrs[i].op, &seg.instrs[i].lhs) {
                (Op::Call, Operand::Sig(sig)) => {
                    if builtin_name(&sig.text).is_some() {
                        Some(Binding::Builtin)
                    } else {
                        self.ir
                            .functions
                            .iter()
                            .find(|f| f.signature == sig.text && f.is_forward_callable() && self.invokable(f))
                            .map(|f| {
                                let args = seg.call_args(i);
                                Binding::Func {
                                    func: f.id,
                                    args: f
                                        .params
                                        .iter()
                                        .zip(args.iter())
                                        .map(|(p, a)| (p.name.clone(), node_operand(seg, a)))
                                        .collect(),
                                }
                            })
                    }
                }
                _ => Some(Binding::Builtin),
            };
            seg.instrs[i].binding = b;
        }
    }

    pub fn initial_state(&self, seg: &IrSegment) -> GroundingState {
        let mut seg = seg.clone();
        self.normalize(&mut seg);
        GroundingState { segment: seg, step: 1, depth: 0, pcp_final: None, parent: None }
    }

    fn prompt(&self, f: Option<&IrFunction>, step: usize) -> Option<(f64, usize, bool)> {
        if !self.cfg.pcp {
            return Some((self.cfg.uniform_reward, step, false));
        }
        match f.and_then(|f| f.pcp.as_ref()) {
            Some(p) => p.fire(step).map(|(i, r)| (r, i, true)),
            None => Some((self.cfg.default_reward, step, false)),
        }
    }

    pub fn enumerate_actions(&self, s: &GroundingState) -> Vec<Action> {
        let seg = &s.segment;
        let mut out = Vec::new();
        for i in 0..seg.instrs.len() {
            let ins = &seg.instrs[i];
            if ins.binding.is_some() || !seg.has_logic(&Node::Instr(i)) {
                continue;
            }
            if ins.op == Op::Bin(crate::frontend::BinOp::Eq) && self.equate_ok(seg, i) {
                if let Some((r_p, step, _)) = self.prompt(None, s.step) {
                    out.push(Action {
                        kind: ActionKind::Equate,
                        func: None,
                        root: ins.addr.clone(),
                        root_index: i,
                        r_p,
                        step,
                        pcp_fired: false,
                        slots: BTreeMap::new(),
                        interior: vec![i],
                    });
                }
            }
            for f in &self.ir.functions {
                if !self.invokable(f) {
                    continue;
                }
                let kind = match f.kind {
                    FunctionKind::Rule => ActionKind::ApplyRule,
                    FunctionKind::InverseFact => ActionKind::BindFact,
                    FunctionKind::ConstraintQueryGroup if f.query_of.is_some() => ActionKind::BindFact,
                    _ => continue,
                };
                let mode = if kind == ActionKind::ApplyRule { Mode::Rule } else { Mode::Fact };
                let m = match match_at(seg, &f.pattern, &f.params, i, mode) {
                    Some(m) => m,
                    None => continue,
                };
                if kind == ActionKind::ApplyRule {
                    let block = seg.block(i);
                    let clean = seg.instrs[block.clone()]
                        .iter()
                        .all(|x| matches!(x.binding, None | Some(Binding::Builtin)));
                    let ret = f.rule_return.as_ref();
                    let leaf_at_root = i + 1 == seg.instrs.len()
                        && ret.is_some_and(|r| matches!(r, Expr::Var { .. } | Expr::Num(_) | Expr::Member { .. }));
                    if !clean || ret.is_none() || leaf_at_root {
                        continue;
                    }
                } else if !interior_free(seg, &m) {
                    continue;
                }
                if let Some((r_p, step, fired)) = self.prompt(Some(f), s.step) {
                    out.push(Action {
                        kind,
                        func: Some(f.id),
                        root: ins.addr.clone(),
                        root_index: i,
                        r_p,
                        step,
                        pcp_fired: fired,
                        slots: m.slots,
                        interior: m.interior,
                    });
                }
            }
        }
        out
    }

    /// `L == R` where one side is bound to a function taking `ans` and the other is determined.
    fn equate_ok(&self, seg: &IrSegment, i: usize) -> bool {
        let ins = &seg.instrs[i];
        let (l, r) = (seg.node_of(&ins.lhs), seg.node_of(&ins.rhs));
        let takes = |n: &Node| match n {
            Node::Instr(j) => match &seg.instrs[*j].binding {
                Some(Binding::Func { func, .. }) => self.ir.functions[*func].takes_ans(),
                _ => false,
            },
            _ => false,
        };
        (takes(&l) && !seg.has_logic(&r)) || (takes(&r) && !seg.has_logic(&l))
    }

    pub fn apply_action(&self, s: &GroundingState, a: &Action) -> GroundingState {
        let mut seg = s.segment.clone();
        match a.kind {
            ActionKind::Equate => {
                seg.instrs[a.root_index].binding = Some(Binding::Equate);
            }
            ActionKind::BindFact => {
                let f = &self.ir.functions[a.func.expect("fact action has a function")];
                let args = f
                    .params
                    .iter()
                    .filter_map(|p| a.slots.get(&p.name).map(|n| (p.name.clone(), node_operand(&seg, n))))
                    .collect();
                for &j in &a.interior {
                    seg.instrs[j].binding = Some(Binding::Covered(a.root.clone()));
                }
                seg.instrs[a.root_index].binding = Some(Binding::Func { func: f.id, args });
            }
            ActionKind::ApplyRule => {
                let f = &self.ir.functions[a.func.expect("rule action has a function")];
                let slots: BTreeMap<String, Expr> =
                    a.slots.iter().map(|(k, n)| (k.clone(), s.segment.to_expr(n))).collect();
                let replacement = substitute(f.rule_return.as_ref().expect("rule return"), &slots);
                splice(&mut seg, a.root_index, &replacement);
                self.normalize(&mut seg);
            }
        }
        let pcp_final = if a.pcp_fired {
            a.func.and_then(|f| self.ir.functions[f].pcp.as_ref()).and_then(|p| p.final_step())
        } else {
            s.pcp_final
        };
        GroundingState {
            segment: seg,
            step: a.step,
            depth: s.depth + 1,
            pcp_final,
            parent: Some(Arc::new(ParentLink { state: s.clone(), action: a.clone() })),
        }
    }

    pub fn state_success(&self, s: &GroundingState) -> bool {
        s.segment.is_ground() && (!self.cfg.pcp || s.pcp_final.is_none_or(|f| f == s.step))
    }
}

fn node_operand(seg: &IrSegment, n: &Node) -> Operand {
    match n {
        Node::Leaf(o) => o.clone(),
        Node::Instr(j) => seg.instrs[*j].result.clone(),
    }
}

/// Replace the subtree rooted at `root` by `replacement`, keeping every
/// address outside the subtree and the root's result temp.
pub fn splice(seg: &mut IrSegment, root: usize, replacement: &Expr) {
    let block = seg.block(root);
    let old_result = seg.instrs[root].result.clone();
    let logic = replacement.dollar_names();
    let mut rows = Vec::new();
    let mut next = seg.next_temp;
    let value = lower_expr(replacement, &logic, &mut rows, &mut next);
    seg.next_temp = next;
    let prev = if block.start > 0 { seg.instrs[block.start - 1].addr.clone() } else { seg.lo.clone() };
    let after = if block.end < seg.instrs.len() { seg.instrs[block.end].addr.clone() } else { seg.hi.clone() };
    if rows.is_empty() {
        // leaf replacement: redirect the consumer to the operand
        for ins in seg.instrs.iter_mut().skip(block.end) {
            for o in [&mut ins.lhs, &mut ins.rhs] {
                if *o == old_result {
                    *o = value.clone();
                }
            }
        }
    } else {
        let new_root = rows.last().expect("nonempty").result.clone();
        for r in rows.iter_mut() {
            for o in [&mut r.lhs, &mut r.rhs, &mut r.result] {
                if *o == new_root {
                    *o = old_result.clone();
                }
            }
        }
        let addrs = range_between(&prev, &after, rows.len()).expect("block bounds leave room");
        for (r, a) in rows.iter_mut().zip(addrs) {
            r.addr = a;
        }
    }
    seg.instrs.splice(block, rows);
}

impl SearchSpace for GroundingSpace<'_> {
    type State = GroundingState;
    type Action = Action;
    type Key = String;

    fn actions(&self, s: &GroundingState) -> Vec<Action> {
        self.enumerate_actions(s)
    }

    fn reward(&self, a: &Action) -> f64 {
        a.r_p
    }

    fn root(&self, _: &GroundingState, a: &Action) -> usize {
        a.root_index
    }

    fn apply(&self, s: &GroundingState, a: &Action) -> GroundingState {
        self.apply_action(s, a)
    }

    fn is_success(&self, s: &GroundingState) -> bool {
        self.state_success(s)
    }

    fn key(&self, s: &GroundingState) -> String {
        state_key(s)
    }

    fn encode(&self, s: &GroundingState) -> Vec<u32> {
        encode_state(&s.segment, &self.vocab)
    }

    fn positions(&self, s: &GroundingState) -> usize {
        s.segment.instrs.len()
    }
}

/// Structural identity of a state: tree shape, bindings and process position,
/// independent of addresses and temp numbering.
pub fn state_key(s: &GroundingState) -> String {
    fn node(seg: &IrSegment, n: &Node, out: &mut String) {
        match n {
            Node::Leaf(o) => {
                let _ = match o {
                    Operand::Const(c) => write!(out, "{c}"),
                    Operand::Var(v) => write!(out, "{v}"),
                    Operand::LogicVar(v) => write!(out, "${v}"),
                    other => write!(out, "{other:?}"),
                };
            }
            Node::Instr(i) => {
                let ins = &seg.instrs[*i];
                out.push('(');
                if let Operand::Sig(s) = &ins.lhs {
                    out.push_str(&s.text);
                } else {
                    out.push_str(ins.op.symbol());
                }
                for c in seg.expr_children(*i) {
                    out.push(' ');
                    node(seg, &c, out);
                }
                out.push(')');
                let _ = match &ins.binding {
                    None => Ok(()),
                    Some(Binding::Builtin) => write!(out, "b"),
                    Some(Binding::Equate) => write!(out, "e"),
                    Some(Binding::Covered(_)) => write!(out, "c"),
                    Some(Binding::Func { func, args }) => {
                        let _ = write!(out, "f{func}[");
                        for (k, v) in args {
                            let _ = write!(out, "{k}=");
                            node(seg, &seg.node_of(v), out);
                            out.push(';');
                        }
                        write!(out, "]")
                    }
                };
            }
        }
    }
    let mut out = String::new();
    if let Some(r) = s.segment.root() {
        node(&s.segment, &Node::Instr(r), &mut out);
    }
    let _ = write!(out, "@{}/{:?}", s.step, s.pcp_final);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub kind: ActionKind,
    pub function: Option<String>,
    pub step: usize,
    pub r_p: f64,
    /// Prompt vector of the function when its prompt fired.
    pub prompt: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment: usize,
    pub query: String,
    pub success: bool,
    pub actions: Vec<ActionSummary>,
    pub stats: SearchStats,
}

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("cannot ground query `{query}`: {reason} ({expanded} states expanded)")]
    Failed { segment: usize, query: String, reason: String, expanded: usize, report: Box<SegmentReport> },
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Clone)]
pub struct GroundResult {
    pub program: IrProgram,
    pub batches: Vec<ModelingBatch>,
    pub reports: Vec<SegmentReport>,
}

pub fn ground_program(ir: &IrProgram, agent: &dyn PolicySource, cfg: &GroundConfig) -> Result<GroundResult, GroundError> {
    cfg.search.validate()?;
    let segments: Vec<IrSegment> = ir.segments().cloned().collect();
    let mut grounded = Vec::with_capacity(segments.len());
    let mut batches = Vec::new();
    let mut reports = Vec::new();
    for seg in &segments {
        let d = ir.domains_for(seg.context.as_deref()).clone();
        let space = GroundingSpace::new(ir, d.clone(), cfg);
        let s0 = space.initial_state(seg);
        let query = seg.root_expr().map(|e| e.to_string()).unwrap_or_default();
        let out = bddb::search(&space, s0, &d, agent, &cfg.search)?;
        let summarize = |path: &[Action]| -> Vec<ActionSummary> {
            path.iter()
                .map(|a| ActionSummary {
                    kind: a.kind,
                    function: a.func.map(|f| ir.functions[f].signature.clone()),
                    step: a.step,
                    r_p: a.r_p,
                    prompt: a
                        .func
                        .filter(|_| a.pcp_fired)
                        .and_then(|f| ir.functions[f].pcp.as_ref())
                        .map(|p| p.0.clone()),
                })
                .collect()
        };
        let actions: Vec<Action> = out.path.iter().map(|p| p.action.clone()).collect();
        let report = SegmentReport {
            segment: seg.id,
            query: query.clone(),
            success: out.success,
            actions: summarize(&actions),
            stats: out.stats.clone(),
        };
        let final_state = match (out.success, out.final_state) {
            (true, Some(s)) => s,
            _ => {
                let reason = if out.stats.expanded >= cfg.search.budget {
                    "search budget exhausted".to_string()
                } else {
                    "no applicable function leads to a ground form".to_string()
                };
                return Err(GroundError::Failed {
                    segment: seg.id,
                    query,
                    reason,
                    expanded: out.stats.expanded,
                    report: Box::new(report),
                });
            }
        };
        let mut used = DomainSet::new();
        for a in &actions {
            if let Some(f) = a.func {
                used.insert(ir.functions[f].domain.clone());
            }
        }
        if !out.path.is_empty() {
            batches.push(emit_modeling_data(&out.path, used));
        }
        grounded.push(final_state.segment);
        reports.push(report);
    }
    let mut program = ir.clone();
    for (slot, g) in program.segments_mut().zip(grounded) {
        *slot = g;
    }
    Ok(GroundResult { program, batches, reports })
}
