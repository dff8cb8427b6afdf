//! Compilation experiments over a corpus: success rate, grounding states and
//! timings per configuration, plus the learning curve of the agent.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::agent::store::DataStore;
use crate::agent::{Agent, AgentError};
use crate::bddb::{NoAgent, PolicySource};
use crate::config::Config;
use crate::driver::{compile_source, read_source, CompileError};
use crate::executor::execute;
use crate::grounder::GroundError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One corpus entry.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub source: String,
    pub dir: Option<PathBuf>,
}

impl Case {
    pub fn new(name: impl Into<String>, source: impl Into<String>) -> Self {
        Case { name: name.into(), source: source.into(), dir: None }
    }
}

/// Every `.cool` file of `dir`, sorted by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<Case>, ExperimentError> {
    let io = |source| ExperimentError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(dir).map_err(io)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "cool")).collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ExperimentError::EmptyCorpus(dir.display().to_string()));
    }
    let mut out = Vec::new();
    for p in paths {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("main").to_string();
        out.push(Case { name, source: read_source(&p)?, dir: p.parent().map(Path::to_path_buf) });
    }
    Ok(out)
}

/// Outcome of compiling (and executing) one case.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub success: bool,
    pub states: usize,
    pub ground_ms: f64,
    pub exec_ms: Option<f64>,
}

/// Compile one case; modeling data goes to `store` when given.
pub fn attempt(case: &Case, agent: &dyn PolicySource, cfg: &Config, store: Option<&DataStore>) -> Result<Attempt, ExperimentError> {
    let g = cfg.ground_config();
    match compile_source(&case.source, &case.name, case.dir.as_deref(), agent, &g) {
        Ok(c) => {
            if let Some(s) = store {
                for b in &c.batches {
                    s.record_batch(b).map_err(AgentError::from)?;
                }
            }
            let t = Instant::now();
            let ran = execute(&c.program);
            let exec_ms = t.elapsed().as_secs_f64() * 1e3;
            if let Err(e) = &ran {
                log::warn!("{}: {e}", case.name);
            }
            Ok(Attempt { success: ran.is_ok(), states: c.states_expanded(), ground_ms: c.ground_ms, exec_ms: Some(exec_ms) })
        }
        Err(CompileError::Ground { source: GroundError::Failed { expanded, .. }, .. }) => {
            Ok(Attempt { success: false, states: expanded, ground_ms: 0.0, exec_ms: None })
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub suite: String,
    pub config: String,
    pub p_suc: f64,
    pub mean_states: f64,
    pub mean_ground_ms: f64,
    pub mean_exec_ms: f64,
    pub a_pi: Option<f64>,
    pub a_indom: Option<f64>,
}

pub const CSV_HEADER: &str = "suite,config,p_suc,mean_states,mean_ground_ms,mean_exec_ms,a_pi,a_indom";

impl Row {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        format!(
            "{},{},{:.4},{:.2},{:.3},{:.3},{},{}",
            self.suite,
            self.config,
            self.p_suc,
            self.mean_states,
            self.mean_ground_ms,
            self.mean_exec_ms,
            opt(self.a_pi),
            opt(self.a_indom)
        )
    }
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean stored accuracies over the agent's models.
pub fn agent_accuracy(agent: &Agent) -> (Option<f64>, Option<f64>) {
    let models: Vec<_> = agent.registry().iter().filter_map(|d| agent.model(d).ok()).collect();
    if models.is_empty() {
        return (None, None);
    }
    (Some(mean(models.iter().map(|m| m.a_pi))), Some(mean(models.iter().map(|m| m.a_indom))))
}

/// Aggregate one configuration over a corpus.
pub fn run_config(suite: &str, label: &str, cases: &[Case], cfg: &Config, agent: Option<&Agent>) -> Result<Row, ExperimentError> {
    if cases.is_empty() {
        return Err(ExperimentError::EmptyCorpus(suite.to_string()));
    }
    let policy: &dyn PolicySource = match agent {
        Some(a) if cfg.agent_on => a,
        _ => &NoAgent,
    };
    let attempts = cases.iter().map(|c| attempt(c, policy, cfg, None)).collect::<Result<Vec<_>, _>>()?;
    let (a_pi, a_indom) = match agent {
        Some(a) if cfg.agent_on => agent_accuracy(a),
        _ => (None, None),
    };
    Ok(Row {
        suite: suite.to_string(),
        config: label.to_string(),
        p_suc: attempts.iter().filter(|a| a.success).count() as f64 / attempts.len() as f64,
        mean_states: mean(attempts.iter().map(|a| a.states as f64)),
        mean_ground_ms: mean(attempts.iter().map(|a| a.ground_ms)),
        mean_exec_ms: mean(attempts.iter().filter_map(|a| a.exec_ms)),
        a_pi,
        a_indom,
    })
}

/// Standard configuration matrix: prompts on/off crossed with agent on/off.
pub fn config_matrix(base: &Config, with_agent: bool) -> Vec<(String, Config)> {
    let mut out = Vec::new();
    for (name, pcp, agent) in [("pcp", true, false), ("uniform", false, false), ("pcp+agent", true, true), ("agent", false, true)] {
        if agent && !with_agent {
            continue;
        }
        out.push((name.to_string(), Config { pcp, agent_on: agent, collect: false, ..base.clone() }));
    }
    out
}

pub fn run_suite(suite: &str, cases: &[Case], base: &Config, agent: Option<&Agent>) -> Result<Vec<Row>, ExperimentError> {
    config_matrix(base, agent.is_some_and(|a| !a.registry().is_empty()))
        .iter()
        .map(|(label, cfg)| run_config(suite, label, cases, cfg, agent))
        .collect()
}

/// One point of the learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub states: usize,
    pub a_pi: Option<f64>,
    pub a_indom: Option<f64>,
}

/// Learning mode: compile each case with the agent consulted and data
/// collected, then train. A new data cycle opens every `cycle_len` compilations.
pub fn learn(cases: &[Case], cfg: &Config, agent: &Agent, store: &DataStore, cycle_len: usize) -> Result<Vec<CurvePoint>, ExperimentError> {
    let mut curve = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let a = attempt(case, agent, cfg, Some(store))?;
        agent.train(store)?;
        if cycle_len > 0 && (i + 1) % cycle_len == 0 {
            store.advance_cycle().map_err(AgentError::from)?;
        }
        let (a_pi, a_indom) = agent_accuracy(agent);
        curve.push(CurvePoint { k: i + 1, states: a.states, a_pi, a_indom });
    }
    Ok(curve)
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("k,states,a_pi,a_indom\n");
    for p in curve {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", p.k, p.states, opt(p.a_pi), opt(p.a_indom)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, Family};

    fn cases(f: Family, n: usize) -> Vec<Case> {
        generate(f, n, 5).into_iter().map(|p| Case::new(p.name, p.source)).collect()
    }

    #[test]
    fn solvable_suite_succeeds() {
        let rows = run_suite("linear", &cases(Family::Linear, 10), &Config::default(), None).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.p_suc == 1.0));
        assert!(rows[0].mean_states <= rows[1].mean_states);
        assert!(to_csv(&rows).starts_with(CSV_HEADER));
    }

    #[test]
    fn tiny_budget_fails() {
        let mut cfg = Config::default();
        cfg.search.budget = 1;
        let row = run_config("log", "b1", &cases(Family::LogLaws, 5), &cfg, None).unwrap();
        assert_eq!(row.p_suc, 0.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(run_config("x", "y", &[], &Config::default(), None), Err(ExperimentError::EmptyCorpus(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(ExperimentError::EmptyCorpus(_))));
    }
}
