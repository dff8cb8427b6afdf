//! `coolc`: compile, run, train the agent and benchmark.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cool_core::agent::model::Model;
use cool_core::agent::store::DataStore;
use cool_core::agent::Agent;
use cool_core::bddb::{NoAgent, PolicySource};
use cool_core::config::{Config, ENV_PREFIX, KEYS};
use cool_core::corpus::{generate, write_suite, Family};
use cool_core::driver::{artifact_path, compile_file, load_artifact, save_artifact};
use cool_core::executor::execute;
use cool_core::experiment::{curve_csv, learn, load_corpus, run_suite, to_csv, Case};

#[derive(Parser)]
#[command(name = "coolc", version, about = "Compiler and runtime for a constraint object-oriented logic language")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ground a program and write its artifact next to the source.
    Compile {
        file: PathBuf,
        #[arg(long)]
        no_agent: bool,
        #[arg(long)]
        no_pcp: bool,
        #[arg(long, value_enum, value_name = "on|off")]
        collect: Option<Switch>,
    },
    /// Execute a compiled program (compiling first when needed).
    Run { file: PathBuf },
    /// Agent lifecycle.
    Agent {
        #[command(subcommand)]
        cmd: AgentCmd,
    },
    /// Compile a corpus under several configurations and write a CSV report.
    Bench {
        /// Corpus directory, or a problem family: linear, log-laws, quadratic, projectile.
        suite: String,
        #[arg(long, value_name = "REPORT")]
        out: PathBuf,
        /// Problems generated when `suite` names a family.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Learning-mode compilations before the evaluation rows.
        #[arg(long, default_value_t = 0)]
        learn: usize,
        /// Learning-mode compilations per data cycle.
        #[arg(long, default_value_t = 10)]
        cycle_len: usize,
    },
    /// Write a generated problem corpus.
    Corpus {
        family: String,
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// List config keys with their environment variables.
    Keys,
}

#[derive(Subcommand)]
enum AgentCmd {
    /// Train every domain with new data.
    Train,
    /// Train, then start a new data cycle.
    Cycle,
    /// Show stored data and models.
    Stats,
}

fn open_agent(cfg: &Config) -> Result<Agent> {
    Agent::open(&cfg.model_dir, cfg.agent.clone()).context("opening model directory")
}

fn compile_cmd(cfg: &Config, file: &Path) -> Result<()> {
    let agent = if cfg.agent_on { Some(open_agent(cfg)?) } else { None };
    let policy: &dyn PolicySource = match &agent {
        Some(a) => a,
        None => &NoAgent,
    };
    let c = compile_file(file, policy, &cfg.ground_config())?;
    let out = artifact_path(file);
    save_artifact(&out, &c.program).with_context(|| format!("{}: cannot write artifact", out.display()))?;
    if cfg.collect {
        let store = DataStore::open(&cfg.data_dir);
        for b in &c.batches {
            store.record_batch(b)?;
        }
    }
    println!(
        "compiled {}: {} queries, {} states, {:.1} ms -> {}",
        file.display(),
        c.reports.len(),
        c.states_expanded(),
        c.ground_ms,
        out.display()
    );
    Ok(())
}

fn is_fresh(artifact: &Path, source: &Path) -> bool {
    let m = |p: &Path| std::fs::metadata(p).and_then(|m| m.modified()).ok();
    matches!((m(artifact), m(source)), (Some(a), Some(s)) if a >= s)
}

fn run_cmd(cfg: &Config, file: &Path) -> Result<()> {
    let art = artifact_path(file);
    let program = if is_fresh(&art, file) {
        load_artifact(&art).with_context(|| format!("{}: unreadable artifact", art.display()))?
    } else {
        log::info!("no up-to-date artifact for {}; compiling without the agent", file.display());
        compile_file(file, &NoAgent, &cfg.ground_config())?.program
    };
    let env = execute(&program)?;
    for line in env.screen() {
        println!("{}", line.text);
    }
    Ok(())
}

fn agent_cmd(cfg: &Config, cmd: AgentCmd) -> Result<()> {
    let store = DataStore::open(&cfg.data_dir);
    let agent = open_agent(cfg)?;
    match cmd {
        AgentCmd::Train | AgentCmd::Cycle => {
            let (reports, next) = match cmd {
                AgentCmd::Cycle => {
                    let (r, n) = agent.cycle(&store)?;
                    (r, Some(n))
                }
                _ => (agent.train(&store)?, None),
            };
            if reports.is_empty() {
                println!("nothing to train");
            }
            for r in reports {
                println!(
                    "{}: {} train / {} test samples, A_pi {:.3}, A_indom {:.3}{}",
                    r.key,
                    r.train_samples,
                    r.test_samples,
                    r.a_pi,
                    r.a_indom,
                    if r.created { " (new)" } else { "" }
                );
            }
            if let Some(n) = next {
                println!("data cycle is now {n}");
            }
        }
        AgentCmd::Stats => {
            let idx = store.index()?;
            println!("data cycle {}", idx.cycle);
            for (key, e) in &idx.entries {
                let total: usize = e.files.iter().map(|f| f.records).sum();
                let used: usize = e.files.iter().map(|f| f.watermark).sum();
                println!("  data {key}: {total} records ({used} trained) in {} batches", e.batches);
            }
            for d in agent.registry() {
                let m: Model = agent.model(&d)?;
                println!("  model {}: A_pi {:.3}, A_indom {:.3}, in-domain head {}", d.key(), m.a_pi, m.a_indom, if m.indom_valid { "trained" } else { "untrained" });
            }
        }
    }
    Ok(())
}

fn suite_cases(suite: &str, count: usize, seed: u64) -> Result<(String, Vec<Case>)> {
    let p = Path::new(suite);
    if p.is_dir() {
        let name = p.file_name().and_then(|s| s.to_str()).unwrap_or(suite).to_string();
        return Ok((name, load_corpus(p)?));
    }
    let fam: Family = match suite.parse() {
        Ok(f) => f,
        Err(_) => bail!("{suite}: not a corpus directory or problem family"),
    };
    Ok((fam.name().to_string(), generate(fam, count, seed).into_iter().map(|p| Case::new(p.name, p.source)).collect()))
}

fn bench_cmd(cfg: &Config, suite: &str, out: &Path, count: usize, learn_n: usize, cycle_len: usize) -> Result<()> {
    let (name, cases) = suite_cases(suite, count, cfg.agent.seed)?;
    let agent = open_agent(cfg)?;
    if learn_n > 0 {
        let (_, train) = suite_cases(suite, learn_n, cfg.agent.seed.wrapping_add(1))?;
        let store = DataStore::open(&cfg.data_dir);
        let curve = learn(&train[..learn_n.min(train.len())], &Config { agent_on: true, ..cfg.clone() }, &agent, &store, cycle_len)?;
        let curve_path = out.with_extension("curve.csv");
        std::fs::write(&curve_path, curve_csv(&curve)).with_context(|| format!("{}: cannot write", curve_path.display()))?;
        println!("learning curve -> {}", curve_path.display());
    }
    let rows = run_suite(&name, &cases, cfg, Some(&agent))?;
    std::fs::write(out, to_csv(&rows)).with_context(|| format!("{}: cannot write report", out.display()))?;
    for r in &rows {
        println!("{}", r.csv());
    }
    Ok(())
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = Config::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Compile { file, no_agent, no_pcp, collect } => {
            cfg.agent_on &= !no_agent;
            cfg.pcp &= !no_pcp;
            if let Some(c) = collect {
                cfg.collect = matches!(c, Switch::On);
            }
            compile_cmd(&cfg, &file)
        }
        Cmd::Run { file } => run_cmd(&cfg, &file),
        Cmd::Agent { cmd } => agent_cmd(&cfg, cmd),
        Cmd::Bench { suite, out, count, learn, cycle_len } => bench_cmd(&cfg, &suite, &out, count, learn, cycle_len),
        Cmd::Corpus { family, dir, count } => {
            let fam: Family = family.parse().map_err(anyhow::Error::msg)?;
            let paths = write_suite(&dir, &generate(fam, count, cfg.agent.seed))?;
            println!("wrote {} problems to {}", paths.len(), dir.display());
            Ok(())
        }
        Cmd::Keys => {
            for (k, doc) in KEYS {
                println!("{k:<15} {ENV_PREFIX}{:<15} {doc}", k.to_ascii_uppercase());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
