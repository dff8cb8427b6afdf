//! Combining the outputs of several domain models into one prediction.

use crate::bddb::Prediction;
use crate::frontend::DomainSet;

/// One collaborating model's reply for a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub domains: DomainSet,
    pub pi: Vec<f64>,
    pub a_pi: f64,
    pub indom: f64,
    pub a_indom: f64,
}

impl Candidate {
    fn confidence(&self) -> f64 {
        self.indom * self.a_indom
    }

    fn weight(&self) -> f64 {
        self.a_pi * self.confidence()
    }
}

/// Symmetric KL divergence `(KL(p‖q) + KL(q‖p)) / 2`, clamping zeros.
pub fn sym_kl(p: &[f64], q: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-12;
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (a, b) = (a.max(FLOOR), b.max(FLOOR));
            (a - b) * (a / b).ln()
        })
        .sum::<f64>()
        / 2.0
}

/// Weighted mean of candidate policies; equal weights when all weights vanish.
pub fn mean_policy(cands: &[&Candidate], len: usize) -> Vec<f64> {
    let mut total: f64 = cands.iter().map(|c| c.weight()).sum();
    let equal = total <= 0.0;
    if equal {
        total = cands.len() as f64;
    }
    let mut out = vec![0.0; len];
    if cands.is_empty() {
        return out;
    }
    for c in cands {
        let w = if equal { 1.0 } else { c.weight() } / total;
        for (o, p) in out.iter_mut().zip(&c.pi) {
            *o += w * p;
        }
    }
    out
}

/// Keep the `ceil(η·n)` most confident candidates, then drop models outside
/// `d` whose policy diverges from the current mean by more than `skl_max`,
/// repeating until nothing changes. Returns surviving indices in input order.
pub fn select_survivors(cands: &[Candidate], d: &DomainSet, eta: f64, skl_max: f64) -> Vec<usize> {
    if cands.is_empty() {
        return vec![];
    }
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[b].confidence().total_cmp(&cands[a].confidence()));
    let keep = ((eta * cands.len() as f64 - 1e-9).ceil() as usize).clamp(1, cands.len());
    let mut alive: Vec<usize> = order[..keep].to_vec();
    alive.sort_unstable();
    let len = cands.iter().map(|c| c.pi.len()).max().unwrap_or(0);
    loop {
        let refs: Vec<&Candidate> = alive.iter().map(|&i| &cands[i]).collect();
        let bar = mean_policy(&refs, len);
        let next: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&i| cands[i].domains.is_subset(d) || sym_kl(&cands[i].pi, &bar) <= skl_max)
            .collect();
        if next.len() == alive.len() || next.is_empty() {
            return if next.is_empty() { alive } else { next };
        }
        alive = next;
    }
}

/// Final policy, collaborative confidence and accuracy over the survivors.
pub fn synthesize(cands: &[Candidate], d: &DomainSet, eta: f64, skl_max: f64, positions: usize) -> Prediction {
    let alive = select_survivors(cands, d, eta, skl_max);
    if alive.is_empty() {
        return Prediction::default();
    }
    let refs: Vec<&Candidate> = alive.iter().map(|&i| &cands[i]).collect();
    let pi = mean_policy(&refs, positions);
    let sum_a: f64 = refs.iter().map(|c| c.a_indom).sum();
    let sum_conf: f64 = refs.iter().map(|c| c.confidence()).sum();
    let sum_w: f64 = refs.iter().map(|c| c.weight()).sum();
    Prediction {
        pi,
        ci: if sum_a > 0.0 { sum_conf / sum_a } else { 0.0 },
        ac: if sum_conf > 0.0 { sum_w / sum_conf } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(names: &[&str], pi: &[f64], a_pi: f64, indom: f64, a_indom: f64) -> Candidate {
        Candidate { domains: DomainSet::from_names(names.iter().copied()), pi: pi.to_vec(), a_pi, indom, a_indom }
    }

    #[test]
    fn symkl_basics() {
        assert_eq!(sym_kl(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        let a = sym_kl(&[0.9, 0.1], &[0.1, 0.9]);
        assert!((a - 0.8 * 9f64.ln()).abs() < 1e-12);
        assert_eq!(a, sym_kl(&[0.1, 0.9], &[0.9, 0.1]));
        // direct KL summation
        let kl = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
        let (p, q) = ([0.5, 0.5], [0.9, 0.1]);
        let want = (kl(&p, &q) + kl(&q, &p)) / 2.0;
        assert!((sym_kl(&p, &q) - want).abs() < 1e-12);
        assert!((sym_kl(&p, &q) - 0.4395).abs() < 1e-4);
    }

    #[test]
    fn single_model_passes_through() {
        let c = cand(&["A"], &[0.2, 0.8], 0.9, 0.7, 0.5);
        let p = synthesize(&[c], &DomainSet::from_names(["A"]), 0.8, 1.0, 2);
        assert_eq!(p.pi, vec![0.2, 0.8]);
        assert!((p.ci - 0.7).abs() < 1e-12);
        assert!((p.ac - 0.9).abs() < 1e-12);
    }

    #[test]
    fn outsider_with_divergent_policy_is_dropped() {
        let d = DomainSet::from_names(["A"]);
        let cs = vec![
            cand(&["A"], &[0.9, 0.1], 0.9, 0.9, 0.9),
            cand(&["A"], &[0.85, 0.15], 0.9, 0.9, 0.9),
            cand(&["B", "A"], &[0.05, 0.95], 0.9, 0.9, 0.9),
        ];
        assert_eq!(select_survivors(&cs, &d, 1.0, 0.3), vec![0, 1]);
        // models inside d are never dropped for divergence
        let d2 = DomainSet::from_names(["A", "B"]);
        assert_eq!(select_survivors(&cs, &d2, 1.0, 0.3), vec![0, 1, 2]);
    }

    #[test]
    fn low_confidence_models_are_cut_by_eta() {
        let d = DomainSet::from_names(["A", "B"]);
        let cs = vec![
            cand(&["A"], &[1.0, 0.0], 1.0, 0.1, 1.0),
            cand(&["B"], &[0.0, 1.0], 1.0, 0.9, 1.0),
        ];
        assert_eq!(select_survivors(&cs, &d, 0.5, 1.0), vec![1]);
    }
}
