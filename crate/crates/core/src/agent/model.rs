//! Per-domain models with stored accuracies and on-disk format.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{Dataset, Sample};
use super::nn::{fit, Example, Net, NetOutput};
use crate::frontend::DomainSet;

pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed model file: {reason}")]
    Format { path: String, reason: String },
    #[error("no stored model for domain `{0}`")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub domains: DomainSet,
    pub net: Net,
    pub a_indom: f64,
    pub a_pi: f64,
    /// False until trained with at least one negative sample.
    pub indom_valid: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    domains: DomainSet,
    cfg: super::nn::NetConfig,
    a_indom: f64,
    a_pi: f64,
    indom_valid: bool,
    params: usize,
}

impl Model {
    pub fn new(domains: DomainSet, net: Net) -> Self {
        Model { domains, net, a_indom: 0.0, a_pi: 0.0, indom_valid: false }
    }

    pub fn predict(&self, tokens: &[u32]) -> NetOutput {
        self.net.forward(tokens)
    }

    /// Identical samples are merged into one weighted example.
    pub fn train(&mut self, g: &Dataset, eps: f64, epochs: usize, lr: f64) -> Vec<f64> {
        if g.is_empty() {
            log::warn!("empty training dataset for {}; nothing to do", self.domains.key());
            return vec![];
        }
        let mut counts: BTreeMap<&Sample, f64> = BTreeMap::new();
        for s in &g.samples {
            *counts.entry(s).or_default() += 1.0;
        }
        let batch: Vec<Example> = counts
            .iter()
            .map(|(s, w)| Example { tokens: &s.tokens, root: s.root, indom: s.indom, weight: *w })
            .collect();
        let hist = fit(&mut self.net, &batch, eps, epochs, lr);
        if g.negatives() > 0 {
            self.indom_valid = true;
        }
        hist
    }

    /// Accuracies on a test dataset; `A_InDom` only changes when negatives are present.
    pub fn evaluate(&mut self, g: &Dataset) -> (f64, f64) {
        let (mut hit_in, mut hit_pi, mut pos) = (0usize, 0usize, 0usize);
        for s in &g.samples {
            let out = self.net.forward(&s.tokens);
            let label = if s.indom { 1.0 } else { 0.0 };
            if (label - out.indom).abs() < 0.5 {
                hit_in += 1;
            }
            if let (true, Some(r)) = (s.indom, s.root) {
                pos += 1;
                if argmax(&out.pi) == Some(r) {
                    hit_pi += 1;
                }
            }
        }
        if g.negatives() > 0 {
            self.a_indom = hit_in as f64 / g.len() as f64;
        }
        if pos > 0 {
            self.a_pi = hit_pi as f64 / pos as f64;
        }
        (self.a_indom, self.a_pi)
    }

    pub fn path_in(dir: &Path, domains: &DomainSet) -> PathBuf {
        dir.join(format!("{}.bin", domains.key()))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, ModelError> {
        let path = Self::path_in(dir, &self.domains);
        let io = |source| ModelError::Io { path: path.display().to_string(), source };
        fs::create_dir_all(dir).map_err(io)?;
        let header = Header {
            domains: self.domains.clone(),
            cfg: self.net.cfg,
            a_indom: self.a_indom,
            a_pi: self.a_pi,
            indom_valid: self.indom_valid,
            params: self.net.theta.len(),
        };
        let h = serde_json::to_vec(&header).expect("header serializes");
        let mut bytes = Vec::with_capacity(5 + h.len() + 8 * self.net.theta.len());
        bytes.push(FORMAT_VERSION);
        bytes.extend_from_slice(&(h.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&h);
        for v in &self.net.theta {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension("bin.tmp");
        fs::write(&tmp, bytes).map_err(|source| ModelError::Io { path: tmp.display().to_string(), source })?;
        fs::rename(&tmp, &path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        Ok(path)
    }

    pub fn load(dir: &Path, domains: &DomainSet) -> Result<Model, ModelError> {
        let path = Self::path_in(dir, domains);
        if !path.exists() {
            return Err(ModelError::NotFound(domains.key()));
        }
        Self::load_path(&path)
    }

    pub fn load_path(path: &Path) -> Result<Model, ModelError> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        let bad = |reason: &str| ModelError::Format { path: path.display().to_string(), reason: reason.to_string() };
        if bytes.first() != Some(&FORMAT_VERSION) {
            return Err(bad("unsupported format version"));
        }
        let hlen = u32::from_le_bytes(bytes.get(1..5).ok_or_else(|| bad("truncated"))?.try_into().expect("4 bytes")) as usize;
        let header: Header =
            serde_json::from_slice(bytes.get(5..5 + hlen).ok_or_else(|| bad("truncated header"))?).map_err(|e| bad(&e.to_string()))?;
        let body = &bytes[5 + hlen..];
        if body.len() != 8 * header.params || header.params != header.cfg.param_count() {
            return Err(bad("parameter count mismatch"));
        }
        let theta = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Model {
            domains: header.domains,
            net: Net { cfg: header.cfg, theta },
            a_indom: header.a_indom,
            a_pi: header.a_pi,
            indom_valid: header.indom_valid,
        })
    }
}

pub fn argmax(v: &[f64]) -> Option<usize> {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::nn::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Model {
        let cfg = NetConfig { vocab: 80, embed: 2, hidden: 3 };
        Model::new(DomainSet::from_names(["A"]), Net::xavier(cfg, &mut ChaCha8Rng::seed_from_u64(1)))
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = model();
        m.a_pi = 0.75;
        m.save(dir.path()).unwrap();
        assert_eq!(Model::load(dir.path(), &m.domains).unwrap(), m);
        assert!(matches!(Model::load(dir.path(), &DomainSet::from_names(["Z"])), Err(ModelError::NotFound(_))));
        let p = Model::path_in(dir.path(), &m.domains);
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = 9;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(Model::load(dir.path(), &m.domains), Err(ModelError::Format { .. })));
    }

    #[test]
    fn indom_accuracy_needs_negatives() {
        let mut m = model();
        m.a_indom = 0.42;
        let pos = Dataset { samples: vec![Sample { tokens: vec![2; 10], root: Some(0), indom: true }] };
        m.evaluate(&pos);
        assert_eq!(m.a_indom, 0.42);
        assert!(m.a_pi == 0.0 || m.a_pi == 1.0);
        m.train(&pos, 0.3, 3, 0.01);
        assert!(!m.indom_valid);
        let mixed = Dataset {
            samples: vec![pos.samples[0].clone(), Sample { tokens: vec![9; 10], root: None, indom: false }],
        };
        m.train(&mixed, 0.3, 3, 0.01);
        assert!(m.indom_valid);
    }

    #[test]
    fn argmax_first_of_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
