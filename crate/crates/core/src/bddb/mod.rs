//! Best-first search over an action-value queue with discounted history and
//! full backtracking.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::hash::Hash;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::DomainSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub gamma: f64,
    pub lambda: f64,
    /// Lookahead length of the future-reward term; inert while `gamma` is 0.
    pub lookahead: usize,
    pub q_base: f64,
    pub k_ra: f64,
    pub r_a_base: f64,
    pub k_o0: f64,
    pub k_o1: f64,
    pub k_o2: f64,
    pub budget: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            gamma: 0.0,
            lambda: 0.8,
            lookahead: 0,
            q_base: 0.0,
            k_ra: 0.5,
            r_a_base: 0.1,
            k_o0: 0.5,
            k_o1: 0.1,
            k_o2: 1.5,
            budget: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("gamma > 0 is not supported: future rewards cannot be known during grounding")]
    UnsupportedGamma,
    #[error("parameter `{0}` out of range: {1}")]
    Range(&'static str, f64),
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.gamma > 0.0 {
            return Err(ParamError::UnsupportedGamma);
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ParamError::Range("gamma", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ParamError::Range("lambda", self.lambda));
        }
        if !(self.k_ra > 0.0 && self.k_ra <= 1.0) {
            return Err(ParamError::Range("k_ra", self.k_ra));
        }
        for (name, v) in [("r_a_base", self.r_a_base), ("k_o0", self.k_o0), ("k_o1", self.k_o1), ("k_o2", self.k_o2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ParamError::Range(name, v));
            }
        }
        if self.budget == 0 {
            return Err(ParamError::Range("budget", 0.0));
        }
        Ok(())
    }
}

/// Immediate reward mixing the prompt reward `r_p` with the agent's policy value.
pub fn compute_reward(r_p: f64, pi: f64, ac: f64, ci: f64, t: usize, p: &SearchParams) -> f64 {
    let k = ac * ci;
    let r_a = (p.k_ra * r_p.abs()).max(p.r_a_base);
    let o = if t == 0 { p.k_o0 } else { -p.k_o1 * p.k_o2.powi(t as i32) };
    (1.0 - k) * ((r_p - r_a) * (1.0 - k) + r_a) + k * pi * r_a + o
}

pub fn compute_action_value(r: f64, q_prev: f64, t: usize, p: &SearchParams) -> f64 {
    if t == 0 {
        r + p.lambda * p.q_base
    } else {
        r + p.lambda * q_prev
    }
}

/// Agent reply for one state: a distribution over instruction positions plus
/// accuracy and confidence factors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub pi: Vec<f64>,
    pub ac: f64,
    pub ci: f64,
}

pub trait PolicySource {
    fn predict(&self, tokens: &[u32], positions: usize, d: &DomainSet) -> Prediction;

    fn enabled(&self) -> bool {
        true
    }
}

/// Agent switched off: empty policy, no influence on rewards.
pub struct NoAgent;

impl PolicySource for NoAgent {
    fn predict(&self, _: &[u32], _: usize, _: &DomainSet) -> Prediction {
        Prediction::default()
    }

    fn enabled(&self) -> bool {
        false
    }
}

pub trait SearchSpace {
    type State: Clone;
    type Action: Clone;
    type Key: Eq + Hash + Clone;

    fn actions(&self, s: &Self::State) -> Vec<Self::Action>;
    /// Prompt reward of an action.
    fn reward(&self, a: &Self::Action) -> f64;
    /// Instruction position of the action's root.
    fn root(&self, s: &Self::State, a: &Self::Action) -> usize;
    fn apply(&self, s: &Self::State, a: &Self::Action) -> Self::State;
    fn is_success(&self, s: &Self::State) -> bool;
    fn key(&self, s: &Self::State) -> Self::Key;
    fn encode(&self, s: &Self::State) -> Vec<u32>;
    fn positions(&self, s: &Self::State) -> usize;
}

thread_local! {
    static EXPANSIONS: Cell<u64> = const { Cell::new(0) };
    static PREDICTIONS: Cell<u64> = const { Cell::new(0) };
}

/// Search expansions and agent predictions performed on this thread.
pub fn counters() -> (u64, u64) {
    (EXPANSIONS.with(Cell::get), PREDICTIONS.with(Cell::get))
}

pub fn reset_counters() {
    EXPANSIONS.with(|c| c.set(0));
    PREDICTIONS.with(|c| c.set(0));
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    pub duplicates: usize,
    pub max_depth: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PathStep<A> {
    pub action: A,
    /// Encoding of the state the action was taken from.
    pub tokens: Vec<u32>,
    pub root: usize,
    /// Agent policy value at the root, 0 when the agent is off.
    pub pi: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<S, A, K> {
    pub success: bool,
    pub final_state: Option<S>,
    pub path: Vec<PathStep<A>>,
    pub stats: SearchStats,
    /// Keys of newly reached states in expansion order.
    pub trace: Vec<K>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingRecord {
    pub state_tokens: Vec<u32>,
    pub root: usize,
    pub delta_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingBatch {
    pub records: Vec<ModelingRecord>,
    pub domains: DomainSet,
}

/// Records `(s_i, root(a_i), 1 - π_i)` along a success path; `used` are the
/// domains of the functions the path invoked.
pub fn emit_modeling_data<A>(path: &[PathStep<A>], used: DomainSet) -> ModelingBatch {
    ModelingBatch {
        records: path
            .iter()
            .map(|s| ModelingRecord {
                state_tokens: s.tokens.clone(),
                root: s.root,
                delta_pi: (1.0 - s.pi).clamp(0.0, 1.0),
            })
            .collect(),
        domains: used,
    }
}

struct Entry {
    q: f64,
    seq: u64,
    node: usize,
    action: usize,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        self.q.total_cmp(&o.q).then_with(|| o.seq.cmp(&self.seq))
    }
}

struct SearchNode<S, A> {
    state: S,
    parent: Option<(usize, usize)>,
    depth: usize,
    actions: Vec<A>,
    pred: Prediction,
    tokens: Vec<u32>,
}

pub fn search<X: SearchSpace>(
    space: &X,
    s0: X::State,
    d: &DomainSet,
    agent: &dyn PolicySource,
    params: &SearchParams,
) -> Result<SearchOutcome<X::State, X::Action, X::Key>, ParamError> {
    params.validate()?;
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut trace = Vec::new();
    let mut nodes: Vec<SearchNode<X::State, X::Action>> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<X::Key> = HashSet::new();
    let mut seq = 0u64;

    seen.insert(space.key(&s0));
    if space.is_success(&s0) {
        stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(SearchOutcome { success: true, final_state: Some(s0), path: vec![], stats, trace });
    }

    let mut open = |state: X::State,
                    parent: Option<(usize, usize)>,
                    depth: usize,
                    q_prev: f64,
                    nodes: &mut Vec<SearchNode<X::State, X::Action>>,
                    heap: &mut BinaryHeap<Entry>| {
        let actions = space.actions(&state);
        let tokens = space.encode(&state);
        let pred = if agent.enabled() && !actions.is_empty() {
            PREDICTIONS.with(|c| c.set(c.get() + 1));
            agent.predict(&tokens, space.positions(&state), d)
        } else {
            Prediction::default()
        };
        let id = nodes.len();
        for (k, a) in actions.iter().enumerate() {
            let pi = pred.pi.get(space.root(&state, a)).copied().unwrap_or(0.0);
            let r = compute_reward(space.reward(a), pi, pred.ac, pred.ci, depth, params);
            let q = compute_action_value(r, q_prev, depth, params);
            heap.push(Entry { q, seq, node: id, action: k });
            seq += 1;
        }
        nodes.push(SearchNode { state, parent, depth, actions, pred, tokens });
    };

    open(s0, None, 0, params.q_base, &mut nodes, &mut heap);

    while let Some(e) = heap.pop() {
        if stats.expanded >= params.budget {
            break;
        }
        stats.expanded += 1;
        EXPANSIONS.with(|c| c.set(c.get() + 1));
        let (child, depth) = {
            let n = &nodes[e.node];
            (space.apply(&n.state, &n.actions[e.action]), n.depth + 1)
        };
        stats.generated += 1;
        let key = space.key(&child);
        if !seen.insert(key.clone()) {
            stats.duplicates += 1;
            continue;
        }
        stats.max_depth = stats.max_depth.max(depth);
        trace.push(key);
        if space.is_success(&child) {
            let path = rebuild_path(space, &nodes, (e.node, e.action));
            stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            return Ok(SearchOutcome { success: true, final_state: Some(child), path, stats, trace });
        }
        open(child, Some((e.node, e.action)), depth, e.q, &mut nodes, &mut heap);
    }
    stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(SearchOutcome { success: false, final_state: None, path: vec![], stats, trace })
}

fn rebuild_path<X: SearchSpace>(
    space: &X,
    nodes: &[SearchNode<X::State, X::Action>],
    last: (usize, usize),
) -> Vec<PathStep<X::Action>> {
    let mut out = Vec::new();
    let mut cur = Some(last);
    while let Some((ni, ai)) = cur {
        let n = &nodes[ni];
        let a = n.actions[ai].clone();
        let root = space.root(&n.state, &a);
        out.push(PathStep {
            pi: n.pred.pi.get(root).copied().unwrap_or(0.0),
            tokens: n.tokens.clone(),
            root,
            action: a,
        });
        cur = n.parent;
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> SearchParams {
        SearchParams::default()
    }

    #[test]
    fn reward_worked_cases() {
        let mut q = p();
        q.k_o0 = 0.5;
        assert!((compute_reward(2.0, 0.0, 0.0, 0.0, 0, &q) - 2.5).abs() < 1e-12);
        q.r_a_base = 0.0;
        assert!((compute_reward(2.0, 1.0, 1.0, 1.0, 0, &q) - 1.5).abs() < 1e-12);
        q.k_o1 = 0.1;
        q.k_o2 = 2.0;
        assert!((compute_reward(1.0, 0.0, 0.0, 0.0, 2, &q) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn action_value_cases() {
        let mut q = p();
        q.lambda = 0.9;
        assert_eq!(compute_action_value(2.5, 123.0, 0, &q), 2.5);
        q.lambda = 0.5;
        assert_eq!(compute_action_value(1.0, 2.0, 3, &q), 2.0);
        q.lambda = 0.0;
        assert_eq!(compute_action_value(1.7, 9.0, 4, &q), 1.7);
    }

    #[test]
    fn gamma_rejected() {
        let q = SearchParams { gamma: 0.5, ..p() };
        assert_eq!(q.validate(), Err(ParamError::UnsupportedGamma));
    }

    /// Counter chain 0 -> 1 -> 2 -> 3 with a single action per state.
    struct Chain;
    impl SearchSpace for Chain {
        type State = u32;
        type Action = ();
        type Key = u32;
        fn actions(&self, s: &u32) -> Vec<()> {
            if *s < 3 {
                vec![()]
            } else {
                vec![]
            }
        }
        fn reward(&self, _: &()) -> f64 {
            1.0
        }
        fn root(&self, _: &u32, _: &()) -> usize {
            0
        }
        fn apply(&self, s: &u32, _: &()) -> u32 {
            s + 1
        }
        fn is_success(&self, s: &u32) -> bool {
            *s == 3
        }
        fn key(&self, s: &u32) -> u32 {
            *s
        }
        fn encode(&self, _: &u32) -> Vec<u32> {
            vec![]
        }
        fn positions(&self, _: &u32) -> usize {
            1
        }
    }

    #[test]
    fn chain_needs_three_expansions() {
        let out = search(&Chain, 0, &DomainSet::new(), &NoAgent, &p()).unwrap();
        assert!(out.success);
        assert_eq!(out.stats.expanded, 3);
        assert_eq!(out.path.len(), 3);
        let batch = emit_modeling_data(&out.path, DomainSet::new());
        assert!(batch.records.iter().all(|r| r.delta_pi == 1.0));
    }

    #[test]
    fn budget_exhaustion() {
        let q = SearchParams { budget: 2, ..p() };
        let out = search(&Chain, 0, &DomainSet::new(), &NoAgent, &q).unwrap();
        assert!(!out.success);
        assert_eq!(out.stats.expanded, 2);
    }
}
