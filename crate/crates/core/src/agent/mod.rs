//! Neural policy agent: trace storage, dataset construction, models and
//! multi-model policy synthesis.

pub mod collab;
pub mod dataset;
pub mod expand;
pub mod model;
pub mod nn;
pub mod policy;
pub mod pool;
pub mod store;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bddb::{PolicySource, Prediction};
use crate::frontend::DomainSet;
use dataset::{all_positives, build_dataset, Dataset, Split};
use model::{Model, ModelError};
use nn::{Net, NetConfig};
use policy::Candidate;
use pool::LruPool;
use store::{DataStore, StoreError};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    /// Fraction of batches used for training.
    pub split: f64,
    pub n_max: usize,
    pub delta_tol: f64,
    /// Old cycles consulted by attrition undersampling.
    pub window: usize,
    pub psi: f64,
    pub phi: f64,
    /// Weight of the in-domain loss.
    pub eps: f64,
    pub eta: f64,
    pub skl_max: f64,
    pub zeta: f64,
    pub capacity: usize,
    pub grace: u64,
    pub epochs: usize,
    pub lr: f64,
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            split: 0.8,
            n_max: 5,
            delta_tol: 0.1,
            window: 4,
            psi: 0.5,
            phi: 0.3,
            eps: 0.3,
            eta: 0.8,
            skl_max: 1.0,
            zeta: 0.0,
            capacity: 8,
            grace: 3,
            epochs: 60,
            lr: 0.01,
            vocab: 256,
            embed: 8,
            hidden: 64,
            seed: 0,
        }
    }
}

impl AgentParams {
    pub fn net_config(&self) -> NetConfig {
        NetConfig { vocab: self.vocab, embed: self.embed, hidden: self.hidden }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = [
            ("split", self.split),
            ("delta_tol", self.delta_tol),
            ("psi", self.psi),
            ("phi", self.phi),
            ("eps", self.eps),
            ("eta", self.eta),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(AgentError::Params(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.delta_tol >= 1.0 {
            return Err(AgentError::Params("delta_tol must be below 1".into()));
        }
        if self.split == 0.0 || self.eta == 0.0 {
            return Err(AgentError::Params("split and eta must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.zeta) {
            return Err(AgentError::Params(format!("zeta must lie in [-1, 1], got {}", self.zeta)));
        }
        if self.skl_max < 0.0 || self.lr <= 0.0 {
            return Err(AgentError::Params("skl_max must be non-negative and lr positive".into()));
        }
        if self.capacity == 0 || self.hidden == 0 || self.embed == 0 || self.vocab == 0 {
            return Err(AgentError::Params("capacity and network sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid agent parameter: {0}")]
    Params(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Outcome of training one domain model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub key: String,
    pub created: bool,
    pub donors: Vec<DomainSet>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub final_loss: Option<f64>,
    pub a_pi: f64,
    pub a_indom: f64,
}

pub struct Agent {
    params: AgentParams,
    model_dir: PathBuf,
    registry: Mutex<Vec<DomainSet>>,
    pool: Mutex<LruPool<Model>>,
}

fn key_hash(key: &str) -> u64 {
    key.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

impl Agent {
    /// Open the model directory, registering every stored model.
    pub fn open(model_dir: impl Into<PathBuf>, params: AgentParams) -> Result<Agent, AgentError> {
        params.validate()?;
        let model_dir = model_dir.into();
        let mut registry = Vec::new();
        match fs::read_dir(&model_dir) {
            Ok(entries) => {
                let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
                paths.sort();
                for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "bin")) {
                    let m = Model::load_path(&p)?;
                    registry.push(m.domains);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(AgentError::Io { path: model_dir.display().to_string(), source }),
        }
        let pool = LruPool::new(params.capacity, params.grace);
        Ok(Agent { params, model_dir, registry: Mutex::new(registry), pool: Mutex::new(pool) })
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn model_dir(&self) -> &Path {
        &self.model_dir
    }

    pub fn registry(&self) -> Vec<DomainSet> {
        self.registry.lock().expect("registry lock").clone()
    }

    /// Loaded model for `d`, through the pool.
    pub fn model(&self, d: &DomainSet) -> Result<Model, AgentError> {
        let mut pool = self.pool.lock().expect("pool lock");
        Ok(pool.access(&d.key(), || Model::load(&self.model_dir, d))?.clone())
    }

    fn candidates(&self, tokens: &[u32], d: &DomainSet) -> Vec<Candidate> {
        let chosen = collab::select_collaborators(d, &self.registry());
        let mut pool = self.pool.lock().expect("pool lock");
        let mut out = Vec::new();
        for dom in chosen {
            let m = match pool.access(&dom.key(), || Model::load(&self.model_dir, &dom)) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("skipping model {}: {e}", dom.key());
                    continue;
                }
            };
            let o = m.predict(tokens);
            let (indom, a_indom) = if m.indom_valid { (o.indom, m.a_indom) } else { (m.domains.jaccard(d), m.domains.jaccard(d)) };
            out.push(Candidate { domains: m.domains.clone(), pi: o.pi, a_pi: m.a_pi, indom, a_indom });
        }
        out
    }

    fn rng_for(&self, key: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.params.seed ^ key_hash(key))
    }

    /// Train every domain with unused records.
    pub fn train(&self, store: &DataStore) -> Result<Vec<TrainReport>, AgentError> {
        let mut reports = Vec::new();
        for (key, domains) in store.keys()? {
            let Some(data) = store.load(&key)? else { continue };
            if data.records.iter().all(|r| r.2) {
                continue;
            }
            reports.push(self.train_domain(store, &key, &domains)?);
        }
        Ok(reports)
    }

    fn train_domain(&self, store: &DataStore, key: &str, domains: &DomainSet) -> Result<TrainReport, AgentError> {
        let p = &self.params;
        let mut rng = self.rng_for(key);
        let known = self.registry().contains(domains);
        let (mut model, donors) = if known {
            (self.model(domains)?, vec![])
        } else {
            let (m, donors) = self.expand(store, domains, &mut rng)?;
            (m, donors)
        };
        let train = build_dataset(store, key, p, Split::Train, &mut rng)?;
        let test = build_dataset(store, key, p, Split::Test, &mut rng)?;
        let hist = model.train(&train, p.eps, p.epochs, p.lr);
        if !test.is_empty() {
            model.evaluate(&test);
        } else {
            log::warn!("no test samples for {key}; accuracies unchanged");
        }
        model.save(&self.model_dir)?;
        store.mark_trained(key)?;
        {
            let mut reg = self.registry.lock().expect("registry lock");
            if !reg.contains(domains) {
                reg.push(domains.clone());
            }
        }
        self.pool.lock().expect("pool lock").update(key, model.clone());
        log::info!("trained {key}: {} train / {} test samples, A_pi {:.3}", train.len(), test.len(), model.a_pi);
        Ok(TrainReport {
            key: key.to_string(),
            created: !known,
            donors,
            train_samples: train.len(),
            test_samples: test.len(),
            final_loss: hist.last().copied(),
            a_pi: model.a_pi,
            a_indom: model.a_indom,
        })
    }

    /// New model for `target`: donor initialisation, then pretraining on the
    /// data of its strict sub-domains.
    fn expand(&self, store: &DataStore, target: &DomainSet, rng: &mut ChaCha8Rng) -> Result<(Model, Vec<DomainSet>), AgentError> {
        let p = &self.params;
        let cfg = p.net_config();
        let picked = collab::select_donors(target, &self.registry());
        let mut donors = Vec::new();
        for d in &picked {
            donors.push(self.model(d)?);
        }
        let refs: Vec<&Model> = donors.iter().collect();
        let (net, used): (Net, _) = expand::init_from_donors(target, &refs, p.zeta, cfg, rng);
        let mut model = Model::new(target.clone(), net);
        let mut pre = Dataset::default();
        for (key, d) in store.keys()? {
            if d != *target && d.is_subset(target) {
                pre.samples.extend(all_positives(store, &key, 1.0 - p.split, Split::Train)?.samples);
            }
        }
        if !pre.is_empty() {
            model.train(&pre, p.eps, p.epochs, p.lr);
        }
        Ok((model, used))
    }

    /// Train, then open a new data cycle.
    pub fn cycle(&self, store: &DataStore) -> Result<(Vec<TrainReport>, u32), AgentError> {
        let reports = self.train(store)?;
        let next = store.advance_cycle()?;
        Ok((reports, next))
    }
}

impl PolicySource for Agent {
    fn predict(&self, tokens: &[u32], positions: usize, d: &DomainSet) -> Prediction {
        let cands = self.candidates(tokens, d);
        policy::synthesize(&cands, d, self.params.eta, self.params.skl_max, positions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bddb::{ModelingBatch, ModelingRecord};

    fn small() -> AgentParams {
        AgentParams { hidden: 4, embed: 3, epochs: 20, lr: 0.05, ..Default::default() }
    }

    fn batch(names: &[&str], root: usize, tok: u32) -> ModelingBatch {
        ModelingBatch {
            records: (0..3).map(|i| ModelingRecord { state_tokens: vec![tok + i; 15], root, delta_pi: 1.0 }).collect(),
            domains: DomainSet::from_names(names.iter().copied()),
        }
    }

    #[test]
    fn defaults_validate() {
        assert!(AgentParams::default().validate().is_ok());
        assert!(AgentParams { psi: 1.5, ..Default::default() }.validate().is_err());
        assert!(AgentParams { capacity: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn train_creates_and_reopens_models() {
        let dir = tempfile::tempdir().unwrap();
        let store = DataStore::open(dir.path().join("data"));
        for i in 0..5 {
            store.record_batch(&batch(&["A"], 1, 10 + i)).unwrap();
            store.record_batch(&batch(&["B"], 2, 40 + i)).unwrap();
        }
        let agent = Agent::open(dir.path().join("models"), small()).unwrap();
        assert!(agent.predict(&[1; 15], 3, &DomainSet::from_names(["A"])).pi.is_empty());
        let reports = agent.train(&store).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| r.created && r.test_samples > 0));
        assert!(agent.train(&store).unwrap().is_empty());
        let again = Agent::open(dir.path().join("models"), small()).unwrap();
        assert_eq!(again.registry().len(), 2);
        let p = again.predict(&[11; 15], 3, &DomainSet::from_names(["A"]));
        assert_eq!(p.pi.len(), 3);
        assert!((p.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn union_domain_expands_from_donors() {
        let dir = tempfile::tempdir().unwrap();
        let store = DataStore::open(dir.path().join("data"));
        store.record_batch(&batch(&["A"], 1, 10)).unwrap();
        let agent = Agent::open(dir.path().join("models"), small()).unwrap();
        agent.cycle(&store).unwrap();
        store.record_batch(&batch(&["A", "B"], 1, 20)).unwrap();
        let reports = agent.train(&store).unwrap();
        assert_eq!(reports[0].donors, vec![DomainSet::from_names(["A"])]);
    }
}
