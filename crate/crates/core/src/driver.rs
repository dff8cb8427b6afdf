//! Source-to-ground-IR pipeline with `#load` resolution.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::bddb::{ModelingBatch, PolicySource};
use crate::executor::{execute, Environment, RuntimeError};
use crate::frontend::{parse_named, ParseError, Program};
use crate::grounder::{ground_program, GroundConfig, GroundError, SegmentReport};
use crate::ir::lower::lower_with_libraries;
use crate::ir::{IrProgram, LowerError};

/// Libraries that exist without a file on disk.
pub const BUILTIN_LIBRARIES: [&str; 1] = ["io"];

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{path}: file not found")]
    NotFound { path: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{file}: {source}")]
    Lower { file: String, source: LowerError },
    #[error("{file}: {source}")]
    Ground { file: String, source: GroundError },
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub program: IrProgram,
    pub batches: Vec<ModelingBatch>,
    pub reports: Vec<SegmentReport>,
    pub ground_ms: f64,
}

impl Compiled {
    pub fn states_expanded(&self) -> usize {
        self.reports.iter().map(|r| r.stats.expanded).sum()
    }
}

pub fn read_source(path: &Path) -> Result<String, CompileError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CompileError::NotFound { path: path.display().to_string() },
        _ => CompileError::Io { path: path.display().to_string(), source: e },
    })
}

/// Parse every library reachable through `#load`, depth first, each once.
pub fn load_libraries(main: &Program, dir: Option<&Path>) -> Result<Vec<Program>, CompileError> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    seen.insert(main.source_name.clone());
    let mut out = Vec::new();
    let mut stack: Vec<String> = main.loads().map(str::to_string).collect();
    stack.reverse();
    while let Some(name) = stack.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        let lib = if BUILTIN_LIBRARIES.contains(&name.as_str()) {
            Program { source_name: name.clone(), stmts: vec![] }
        } else {
            let path: PathBuf = dir.unwrap_or(Path::new(".")).join(format!("{name}.cool"));
            let src = read_source(&path)?;
            parse_named(&src, &name).map_err(|e| e.with_file(path.display().to_string()))?
        };
        let mut more: Vec<String> = lib.loads().map(str::to_string).collect();
        more.reverse();
        stack.extend(more);
        out.push(lib);
    }
    Ok(out)
}

pub fn lower_source(src: &str, name: &str, dir: Option<&Path>) -> Result<IrProgram, CompileError> {
    let main = parse_named(src, name).map_err(|e| e.with_file(format!("{name}.cool")))?;
    let libs = load_libraries(&main, dir)?;
    lower_with_libraries(&main, &libs).map_err(|source| CompileError::Lower { file: name.to_string(), source })
}

pub fn compile_source(
    src: &str,
    name: &str,
    dir: Option<&Path>,
    agent: &dyn PolicySource,
    cfg: &GroundConfig,
) -> Result<Compiled, CompileError> {
    let ir = lower_source(src, name, dir)?;
    let t = Instant::now();
    let g = ground_program(&ir, agent, cfg).map_err(|source| CompileError::Ground { file: name.to_string(), source })?;
    Ok(Compiled { program: g.program, batches: g.batches, reports: g.reports, ground_ms: t.elapsed().as_secs_f64() * 1e3 })
}

pub fn compile_file(path: &Path, agent: &dyn PolicySource, cfg: &GroundConfig) -> Result<Compiled, CompileError> {
    let src = read_source(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("main");
    compile_source(&src, name, path.parent(), agent, cfg)
}

/// Compile and execute, returning the final environment.
pub fn run_source(src: &str, name: &str, agent: &dyn PolicySource, cfg: &GroundConfig) -> Result<Environment, RunError> {
    let c = compile_source(src, name, None, agent, cfg)?;
    Ok(execute(&c.program)?)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("runtime error: {0}")]
    Runtime(#[from] RuntimeError),
}

/// Ground IR artifact written next to the source file.
pub fn artifact_path(source: &Path) -> PathBuf {
    source.with_extension("tac.json")
}

pub fn save_artifact(path: &Path, ir: &IrProgram) -> std::io::Result<()> {
    let json = serde_json::to_string(ir).map_err(std::io::Error::other)?;
    std::fs::write(path, json)
}

pub fn load_artifact(path: &Path) -> std::io::Result<IrProgram> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bddb::NoAgent;

    #[test]
    fn io_is_builtin_and_missing_library_fails() {
        let p = parse_named("#load(io);", "m").unwrap();
        assert_eq!(load_libraries(&p, None).unwrap()[0].source_name, "io");
        let p = parse_named("#load(nowhere_to_be_found);", "m").unwrap();
        assert!(matches!(load_libraries(&p, None), Err(CompileError::NotFound { .. })));
    }

    #[test]
    fn library_functions_take_library_domain() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("algebra.cool"), "@{a+$x==b}{ x=b-a; }").unwrap();
        let src = "#load(algebra); new:x=0; 1+$x==2; x-->screen;";
        let c = compile_source(src, "m", Some(dir.path()), &NoAgent, &GroundConfig::default()).unwrap();
        assert_eq!(c.program.functions[0].domain, "algebra");
        assert_eq!(execute(&c.program).unwrap().get("x"), Some(1.0));
        let bare = compile_source("new:x=0; 1+$x==2;", "m", Some(dir.path()), &NoAgent, &GroundConfig::default());
        assert!(matches!(bare, Err(CompileError::Ground { .. })));
    }

    #[test]
    fn artifact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = compile_source("new:x=0; 1+$x==2;", "m", None, &NoAgent, &GroundConfig::default());
        assert!(c.is_err());
        let src = "@{a+$x==b}{ x=b-a; } new:x=0; 1+$x==2;";
        let c = compile_source(src, "m", None, &NoAgent, &GroundConfig::default()).unwrap();
        let p = dir.path().join("m.tac.json");
        save_artifact(&p, &c.program).unwrap();
        assert_eq!(load_artifact(&p).unwrap(), c.program);
    }
}
