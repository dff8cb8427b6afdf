//! Initial parameters for a new domain model from existing ones.

use rand::Rng;

use super::model::Model;
use super::nn::{cosine, Net, NetConfig};
use crate::frontend::DomainSet;

/// Jaccard-weighted mean of donor parameters. Donors whose parameters point
/// away from the most similar donor (cosine below `zeta`) are left out.
/// Falls back to Xavier when there are no usable donors.
pub fn init_from_donors(target: &DomainSet, donors: &[&Model], zeta: f64, cfg: NetConfig, rng: &mut impl Rng) -> (Net, Vec<DomainSet>) {
    if donors.iter().any(|m| m.net.cfg != cfg) {
        log::warn!("donor shape mismatch for {}; using random initialisation", target.key());
        return (Net::xavier(cfg, rng), vec![]);
    }
    let mut scored: Vec<(f64, &Model)> = donors.iter().map(|m| (m.domains.jaccard(target), *m)).filter(|(c, _)| *c > 0.0).collect();
    if scored.is_empty() {
        return (Net::xavier(cfg, rng), vec![]);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = &scored[0].1.net.theta;
    let used: Vec<(f64, &Model)> = scored.iter().copied().filter(|(_, m)| cosine(&m.net.theta, top) >= zeta).collect();
    let total: f64 = used.iter().map(|u| u.0).sum();
    let mut theta = vec![0.0; cfg.param_count()];
    for (c, m) in &used {
        let w = c / total;
        for (t, v) in theta.iter_mut().zip(&m.net.theta) {
            *t += w * v;
        }
    }
    (Net { cfg, theta }, used.iter().map(|u| u.1.domains.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CFG: NetConfig = NetConfig { vocab: 40, embed: 2, hidden: 2 };

    fn donor(names: &[&str], seed: u64) -> Model {
        Model::new(DomainSet::from_names(names.iter().copied()), Net::xavier(CFG, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    #[test]
    fn single_donor_is_copied() {
        let a = donor(&["A"], 3);
        let (net, used) = init_from_donors(&DomainSet::from_names(["A", "B"]), &[&a], 0.0, CFG, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(net.theta, a.net.theta);
        assert_eq!(used, vec![a.domains.clone()]);
    }

    #[test]
    fn weighted_by_jaccard() {
        let a = donor(&["A"], 3);
        let b = donor(&["B", "C"], 4);
        let t = DomainSet::from_names(["A", "B", "C"]);
        let (net, _) = init_from_donors(&t, &[&a, &b], -1.0, CFG, &mut ChaCha8Rng::seed_from_u64(0));
        let (ca, cb) = (1.0 / 3.0, 2.0 / 3.0);
        for i in 0..net.theta.len() {
            let want = (ca * a.net.theta[i] + cb * b.net.theta[i]) / (ca + cb);
            assert!((net.theta[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dissimilar_donors_are_filtered() {
        let a = donor(&["A"], 3);
        let mut b = donor(&["B", "C"], 4);
        b.net.theta = a.net.theta.iter().map(|v| -v).collect();
        let t = DomainSet::from_names(["A", "B", "C"]);
        let (net, used) = init_from_donors(&t, &[&a, &b], 0.0, CFG, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(used, vec![b.domains.clone()]);
        assert_eq!(net.theta, b.net.theta);
    }

    #[test]
    fn no_donor_or_shape_mismatch_is_random() {
        let t = DomainSet::from_names(["A"]);
        let (_, used) = init_from_donors(&t, &[], 0.0, CFG, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(used.is_empty());
        let other = Model::new(t.clone(), Net::xavier(NetConfig { vocab: 40, embed: 2, hidden: 3 }, &mut ChaCha8Rng::seed_from_u64(1)));
        let (net, used) = init_from_donors(&t, &[&other], 0.0, CFG, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(used.is_empty());
        assert_eq!(net.cfg, CFG);
    }
}
