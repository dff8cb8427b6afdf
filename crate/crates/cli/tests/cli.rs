use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn programs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for f in ["code1.cool", "code3.cool", "code5.cool"] {
            fs::copy(programs().join(f), dir.path().join(f)).unwrap();
        }
        fs::write(
            dir.path().join("cool.conf"),
            format!("data_dir = {}\nmodel_dir = {}\nhidden = 8\nepochs = 10\n", dir.path().join("data").display(), dir.path().join("models").display()),
        )
        .unwrap();
        Sandbox { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_coolc"));
        for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("COOL_")) {
            cmd.env_remove(k);
        }
        cmd.current_dir(self.dir.path()).arg("--config").arg(self.path("cool.conf")).args(args).output().unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn count_files(p: &Path) -> usize {
    if !p.exists() {
        return 0;
    }
    fs::read_dir(p).unwrap().map(|e| e.unwrap().path()).map(|p| if p.is_dir() { 1 + count_files(&p) } else { 1 }).sum()
}

#[test]
fn compile_then_run_prints_root() {
    let s = Sandbox::new();
    let c = s.run(&["compile", "code5.cool"]);
    assert!(c.status.success(), "{}", stderr(&c));
    assert!(s.path("code5.tac.json").exists());
    let r = s.run(&["run", "code5.cool"]);
    assert!(r.status.success(), "{}", stderr(&r));
    let x: f64 = stdout(&r).trim().parse().unwrap();
    assert!((x - 8.1980390272).abs() < 1e-8);
}

#[test]
fn run_without_artifact_compiles_in_memory() {
    let s = Sandbox::new();
    let r = s.run(&["run", "code3.cool"]);
    assert!(r.status.success(), "{}", stderr(&r));
    let lines: Vec<f64> = stdout(&r).lines().map(|l| l.parse().unwrap()).collect();
    assert!((lines[0] - 50.0 / 3.0).abs() < 1e-6);
    assert!((lines[1] - 80.8290).abs() < 1e-3);
}

#[test]
fn missing_file_fails() {
    let s = Sandbox::new();
    let o = s.run(&["compile", "missing.cool"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("file not found"));
}

#[test]
fn unknown_flag_and_bad_config_fail() {
    let s = Sandbox::new();
    assert!(!s.run(&["compile", "code1.cool", "--bogus"]).status.success());
    let conf = fs::read_to_string(s.path("cool.conf")).unwrap();
    fs::write(s.path("cool.conf"), format!("{conf}gamma = 0.5\n")).unwrap();
    let o = s.run(&["compile", "code1.cool"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
    fs::write(s.path("cool.conf"), format!("{conf}colour = red\n")).unwrap();
    let o = s.run(&["compile", "code1.cool"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown config key"));
}

#[test]
fn collect_off_writes_nothing_to_data_dir() {
    let s = Sandbox::new();
    fs::create_dir_all(s.path("data")).unwrap();
    for f in ["code1.cool", "code3.cool", "code5.cool"] {
        assert!(s.run(&["compile", f, "--collect=off"]).status.success());
    }
    assert_eq!(count_files(&s.path("data")), 0);
    assert!(s.run(&["compile", "code5.cool"]).status.success());
    assert!(count_files(&s.path("data")) > 0);
}

#[test]
fn uniform_regime_expands_more_states() {
    let s = Sandbox::new();
    assert!(s.run(&["corpus", "log-laws", "corpus", "--count", "3"]).status.success());
    let states = |args: &[&str]| -> usize {
        let o = s.run(args);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        let i = out.find(" states").unwrap();
        out[..i].rsplit(' ').next().unwrap().parse().unwrap()
    };
    let mut guided = 0;
    let mut uniform = 0;
    for i in 0..3 {
        let f = format!("corpus/log-laws-{i:03}.cool");
        guided += states(&["compile", &f, "--collect=off"]);
        uniform += states(&["compile", &f, "--no-agent", "--no-pcp", "--collect=off"]);
    }
    assert!(uniform > guided, "{uniform} vs {guided}");
}

#[test]
fn agent_lifecycle() {
    let s = Sandbox::new();
    for _ in 0..5 {
        assert!(s.run(&["compile", "code5.cool"]).status.success());
    }
    let t = s.run(&["agent", "cycle"]);
    assert!(t.status.success(), "{}", stderr(&t));
    assert!(stdout(&t).contains("Quadratic_Equation_Solver"));
    assert!(stdout(&t).contains("data cycle is now 2"));
    assert!(s.path("models/Quadratic_Equation_Solver.bin").exists());
    assert!(stdout(&s.run(&["agent", "train"])).contains("nothing to train"));
    let st = stdout(&s.run(&["agent", "stats"]));
    assert!(st.contains("data cycle 2") && st.contains("model Quadratic_Equation_Solver"), "{st}");
    // a trained agent still compiles correctly
    assert!(s.run(&["compile", "code5.cool", "--collect=off"]).status.success());
    let x: f64 = stdout(&s.run(&["run", "code5.cool"])).trim().parse().unwrap();
    assert!((x - 8.1980390272).abs() < 1e-8);
}

#[test]
fn bench_writes_csv_report() {
    let s = Sandbox::new();
    let o = s.run(&["bench", "linear", "--out", "report.csv", "--count", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(s.path("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("suite,config,p_suc,mean_states,mean_ground_ms,mean_exec_ms,a_pi,a_indom"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("linear,") && r.split(',').nth(2) == Some("1.0000")));
    let o = s.run(&["bench", "nowhere", "--out", "r.csv"]);
    assert!(!o.status.success());
}

#[test]
fn bench_learning_mode_adds_agent_rows() {
    let s = Sandbox::new();
    let o = s.run(&["bench", "log-laws", "--out", "r.csv", "--count", "4", "--learn", "6", "--cycle-len", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(s.path("r.csv")).unwrap().lines().count(), 5);
    let curve = fs::read_to_string(s.path("r.curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 7);
}

#[test]
fn keys_lists_env_names() {
    let s = Sandbox::new();
    let out = stdout(&s.run(&["keys"]));
    assert!(out.contains("COOL_SEED") && out.contains("COOL_BUDGET"));
}
