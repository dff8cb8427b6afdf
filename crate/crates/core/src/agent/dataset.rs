//! Composite datasets: oversampled new records, attrition-undersampled old
//! cycles, and negatives drawn from disjoint domains.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::store::{is_test_batch, DataStore, StoreError};
use super::AgentParams;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub tokens: Vec<u32>,
    /// Action root for positives; stripped on negatives.
    pub root: Option<usize>,
    pub indom: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn positives(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.indom)
    }

    pub fn negatives(&self) -> usize {
        self.samples.iter().filter(|s| !s.indom).count()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Copies of a new record with policy error `delta`:
/// `max(ceil(n_max·(δ−δ_tol)/(1−δ_tol)), 0)`.
pub fn oversample_count(delta: f64, n_max: usize, tol: f64) -> usize {
    let x = n_max as f64 * (delta - tol) / (1.0 - tol);
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Old samples kept from cycle `t`: `ceil(ψ^(m−t)·min(|new|, |old_t|))`.
pub fn saur_count(psi: f64, age: u32, n_new: usize, n_old: usize) -> usize {
    let x = psi.powi(age as i32) * n_new.min(n_old) as f64;
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Negatives for `n_pos` positives: `floor(φ·n_pos)`.
pub fn negative_count(phi: f64, n_pos: usize) -> usize {
    (phi * n_pos as f64 + 1e-9).floor() as usize
}

fn in_split(batch: usize, split: Split, test_ratio: f64) -> bool {
    is_test_batch(batch, test_ratio) == (split == Split::Test)
}

pub fn build_dataset(
    store: &DataStore,
    key: &str,
    p: &AgentParams,
    split: Split,
    rng: &mut impl Rng,
) -> Result<Dataset, StoreError> {
    let Some(data) = store.load(key)? else { return Ok(Dataset::default()) };
    let m = store.cycle()?;
    let test_ratio = 1.0 - p.split;
    let mine: Vec<_> = data.records.iter().filter(|(_, r, _)| in_split(r.batch, split, test_ratio)).collect();
    let new: Vec<_> = mine.iter().filter(|(c, _, used)| *c == m && !used).collect();

    let mut samples = Vec::new();
    for (_, r, _) in &new {
        let copies = match split {
            Split::Train => oversample_count(r.delta_pi, p.n_max, p.delta_tol),
            Split::Test => 1,
        };
        for _ in 0..copies {
            samples.push(Sample { tokens: r.state_tokens.clone(), root: Some(r.root), indom: true });
        }
    }
    for t in m.saturating_sub(p.window as u32).max(1)..m {
        let old: Vec<_> = mine.iter().filter(|(c, _, _)| *c == t).collect();
        let k = saur_count(p.psi, m - t, new.len(), old.len()).min(old.len());
        for i in sample(rng, old.len(), k).into_iter() {
            let r = &old[i].1;
            samples.push(Sample { tokens: r.state_tokens.clone(), root: Some(r.root), indom: true });
        }
    }

    let want = negative_count(p.phi, samples.len());
    if want > 0 {
        let mut pool: BTreeSet<Vec<u32>> = BTreeSet::new();
        for (other, domains) in store.keys()? {
            if other == key || !domains.is_disjoint(&data.domains) {
                continue;
            }
            if let Some(d) = store.load(&other)? {
                pool.extend(
                    d.records.iter().filter(|(_, r, _)| in_split(r.batch, split, test_ratio)).map(|(_, r, _)| r.state_tokens.clone()),
                );
            }
        }
        let pool: Vec<Vec<u32>> = pool.into_iter().collect();
        let k = want.min(pool.len());
        for i in sample(rng, pool.len(), k).into_iter() {
            samples.push(Sample { tokens: pool[i].clone(), root: None, indom: false });
        }
    }
    Ok(Dataset { samples })
}

/// Every stored record of `key` in `split` as one positive, trained or not.
pub fn all_positives(store: &DataStore, key: &str, test_ratio: f64, split: Split) -> Result<Dataset, StoreError> {
    let Some(data) = store.load(key)? else { return Ok(Dataset::default()) };
    let samples = data
        .records
        .iter()
        .filter(|(_, r, _)| in_split(r.batch, split, test_ratio))
        .map(|(_, r, _)| Sample { tokens: r.state_tokens.clone(), root: Some(r.root), indom: true })
        .collect();
    Ok(Dataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversampling_examples() {
        assert_eq!(oversample_count(0.2, 5, 0.2), 0);
        assert_eq!(oversample_count(0.6, 5, 0.2), 3);
        assert_eq!(oversample_count(1.0, 5, 0.2), 5);
        assert_eq!(oversample_count(0.0, 5, 0.2), 0);
    }

    #[test]
    fn attrition_and_negatives() {
        assert_eq!(saur_count(0.5, 2, 100, 300), 25);
        assert_eq!(saur_count(0.5, 1, 0, 300), 0);
        assert_eq!(negative_count(0.2, 50), 10);
        assert_eq!(negative_count(0.3, 10), 3);
    }
}
