//! Flat `key = value` configuration with `COOL_<KEY>` environment overrides.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::agent::AgentParams;
use crate::bddb::SearchParams;
use crate::grounder::GroundConfig;

pub const ENV_PREFIX: &str = "COOL_";

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("gamma", "future-reward discount; only 0 is supported"),
    ("lambda", "history discount in [0, 1]"),
    ("lookahead", "future-reward lookahead length"),
    ("q_base", "action value before the first step"),
    ("k_ra", "agent reward scale in (0, 1]"),
    ("r_a_base", "minimum agent reward"),
    ("k_o0", "first-step offset"),
    ("k_o1", "later-step offset scale"),
    ("k_o2", "later-step offset growth"),
    ("budget", "maximum expanded states per segment"),
    ("pcp", "use prompt vectors (on/off)"),
    ("agent", "consult the neural agent (on/off)"),
    ("collect", "store modeling data (on/off)"),
    ("default_reward", "prompt reward of functions without prompts"),
    ("uniform_reward", "reward of every action with prompts off"),
    ("split", "fraction of batches used for training"),
    ("n_max", "maximum oversampling copies"),
    ("delta_tol", "policy error below which records are not oversampled"),
    ("window", "old cycles used by attrition undersampling"),
    ("psi", "attrition rate per cycle"),
    ("phi", "negatives per positive"),
    ("eps", "weight of the in-domain loss"),
    ("eta", "fraction of collaborators kept by confidence"),
    ("skl_max", "divergence threshold for outsider models"),
    ("zeta", "cosine threshold for donor models"),
    ("capacity", "models kept in memory"),
    ("grace", "accesses a new model is protected from eviction"),
    ("epochs", "training epochs per cycle"),
    ("lr", "learning rate"),
    ("embed", "token embedding width"),
    ("hidden", "recurrent hidden width"),
    ("seed", "seed for every random choice"),
    ("data_dir", "modeling-data directory"),
    ("model_dir", "model directory"),
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{at}: unknown config key `{key}`")]
    UnknownKey { at: String, key: String },
    #[error("{at}: bad value `{value}` for `{key}`: {reason}")]
    BadValue { at: String, key: String, value: String, reason: String },
    #[error("{at}: expected `key = value`")]
    Syntax { at: String },
    #[error("config violation: {0}")]
    Invalid(String),
    #[error("{0}: cannot read config file")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub search: SearchParams,
    pub agent: AgentParams,
    pub pcp: bool,
    pub agent_on: bool,
    pub collect: bool,
    pub default_reward: f64,
    pub uniform_reward: f64,
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        let g = GroundConfig::default();
        Config {
            search: g.search,
            agent: AgentParams::default(),
            pcp: g.pcp,
            agent_on: true,
            collect: true,
            default_reward: g.default_reward,
            uniform_reward: g.uniform_reward,
            data_dir: PathBuf::from(".cool/data"),
            model_dir: PathBuf::from(".cool/models"),
        }
    }
}

fn parse<T: FromStr>(at: &str, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        at: at.to_string(),
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_switch(at: &str, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::BadValue {
            at: at.to_string(),
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected on/off".into(),
        }),
    }
}

impl Config {
    /// Set one key; `at` locates the setting for diagnostics.
    pub fn set(&mut self, key: &str, value: &str, at: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let (s, a) = (&mut self.search, &mut self.agent);
        match key {
            "gamma" => s.gamma = parse(at, key, v)?,
            "lambda" => s.lambda = parse(at, key, v)?,
            "lookahead" => s.lookahead = parse(at, key, v)?,
            "q_base" => s.q_base = parse(at, key, v)?,
            "k_ra" => s.k_ra = parse(at, key, v)?,
            "r_a_base" => s.r_a_base = parse(at, key, v)?,
            "k_o0" => s.k_o0 = parse(at, key, v)?,
            "k_o1" => s.k_o1 = parse(at, key, v)?,
            "k_o2" => s.k_o2 = parse(at, key, v)?,
            "budget" => s.budget = parse(at, key, v)?,
            "pcp" => self.pcp = parse_switch(at, key, v)?,
            "agent" => self.agent_on = parse_switch(at, key, v)?,
            "collect" => self.collect = parse_switch(at, key, v)?,
            "default_reward" => self.default_reward = parse(at, key, v)?,
            "uniform_reward" => self.uniform_reward = parse(at, key, v)?,
            "split" => a.split = parse(at, key, v)?,
            "n_max" => a.n_max = parse(at, key, v)?,
            "delta_tol" => a.delta_tol = parse(at, key, v)?,
            "window" => a.window = parse(at, key, v)?,
            "psi" => a.psi = parse(at, key, v)?,
            "phi" => a.phi = parse(at, key, v)?,
            "eps" => a.eps = parse(at, key, v)?,
            "eta" => a.eta = parse(at, key, v)?,
            "skl_max" => a.skl_max = parse(at, key, v)?,
            "zeta" => a.zeta = parse(at, key, v)?,
            "capacity" => a.capacity = parse(at, key, v)?,
            "grace" => a.grace = parse(at, key, v)?,
            "epochs" => a.epochs = parse(at, key, v)?,
            "lr" => a.lr = parse(at, key, v)?,
            "embed" => a.embed = parse(at, key, v)?,
            "hidden" => a.hidden = parse(at, key, v)?,
            "seed" => a.seed = parse(at, key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "model_dir" => self.model_dir = PathBuf::from(v),
            _ => return Err(ConfigError::UnknownKey { at: at.to_string(), key: key.to_string() }),
        }
        Ok(())
    }

    /// Apply file text on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let at = format!("{origin}:{}", i + 1);
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else { return Err(ConfigError::Syntax { at }) };
            self.set(k.trim(), v, &at)?;
        }
        Ok(())
    }

    /// Apply `COOL_<KEY>` variables. Unrelated `COOL_` variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = vars.into_iter().collect();
        vars.sort();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = rest.to_ascii_lowercase();
            if KEYS.iter().any(|(k, _)| *k == key) {
                self.set(&key, &value, &name)?;
            }
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the environment.
    pub fn load(file: Option<&Path>) -> Result<Config, ConfigError> {
        let mut c = Config::default();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).map_err(|_| ConfigError::Io(p.display().to_string()))?;
            c.apply_text(&text, &p.display().to_string())?;
        }
        c.apply_env(std::env::vars())?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.agent.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn ground_config(&self) -> GroundConfig {
        GroundConfig {
            search: self.search.clone(),
            pcp: self.pcp,
            default_reward: self.default_reward,
            uniform_reward: self.uniform_reward,
            vocab_size: self.agent.vocab as u32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable() {
        for (k, _) in KEYS {
            let mut c = Config::default();
            let v = match *k {
                "pcp" | "agent" | "collect" => "off",
                "data_dir" | "model_dir" => "x",
                "budget" | "lookahead" | "n_max" | "window" | "capacity" | "grace" | "epochs" | "embed" | "hidden" | "seed" => "7",
                _ => "0.25",
            };
            c.set(k, v, "test").unwrap();
            assert_ne!(c, Config::default(), "{k}");
        }
    }

    #[test]
    fn file_text_and_errors() {
        let mut c = Config::default();
        c.apply_text("# comment\nbudget = 7\n\nagent = off  # trailing\n", "f").unwrap();
        assert_eq!(c.search.budget, 7);
        assert!(!c.agent_on);
        assert!(matches!(c.apply_text("bogus = 1", "f"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(c.apply_text("budget 7", "f"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(c.apply_text("budget = x", "f"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn env_overrides_and_validation() {
        let mut c = Config::default();
        c.apply_env([("COOL_SEED".to_string(), "42".to_string()), ("COOL_HOME".to_string(), "/".to_string())]).unwrap();
        assert_eq!(c.agent.seed, 42);
        c.search.gamma = 0.5;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }
}
