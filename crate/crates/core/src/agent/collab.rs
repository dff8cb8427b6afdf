//! Choosing which existing domain models to combine.

use std::cmp::Ordering;

use crate::frontend::DomainSet;

/// Exhaustive search up to this many registry entries, greedy beyond.
const EXHAUSTIVE_LIMIT: usize = 16;

fn union(sets: &[&DomainSet]) -> DomainSet {
    sets.iter().fold(DomainSet::new(), |acc, s| acc.union(s))
}

/// Lexicographic score for collaborator sets; smaller is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CollabScore {
    uncovered: usize,
    inside: usize,
    size: usize,
}

impl CollabScore {
    fn of(d: &DomainSet, chosen: &[&DomainSet]) -> Self {
        CollabScore {
            uncovered: d.difference_len(&union(chosen)),
            inside: chosen.iter().filter(|c| c.is_subset(d)).count(),
            size: chosen.len(),
        }
    }

    fn cmp(&self, o: &Self) -> Ordering {
        // fraction inside/size, larger first; the empty set counts as 1
        let frac = |s: &Self| if s.size == 0 { (1, 1) } else { (s.inside, s.size) };
        let (a, b) = (frac(self), frac(o));
        self.uncovered
            .cmp(&o.uncovered)
            .then_with(|| (b.0 * a.1).cmp(&(a.0 * b.1)))
            .then_with(|| self.size.cmp(&o.size))
    }
}

fn best_subset<S: Copy>(n: usize, score: impl Fn(&[usize]) -> S, cmp: impl Fn(&S, &S) -> Ordering) -> Vec<usize> {
    if n <= EXHAUSTIVE_LIMIT {
        let mut best: Option<(S, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let s = score(&idx);
            if best.as_ref().is_none_or(|(b, _)| cmp(&s, b) == Ordering::Less) {
                best = Some((s, idx));
            }
        }
        return best.map(|b| b.1).unwrap_or_default();
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut cur = score(&chosen);
    loop {
        let mut step = None;
        for i in (0..n).filter(|i| !chosen.contains(i)) {
            let mut c = chosen.clone();
            c.push(i);
            let s = score(&c);
            if cmp(&s, &cur) == Ordering::Less && step.as_ref().is_none_or(|(b, _)| cmp(&s, b) == Ordering::Less) {
                step = Some((s, i));
            }
        }
        match step {
            Some((s, i)) => {
                chosen.push(i);
                cur = s;
            }
            None => return chosen,
        }
    }
}

/// Models covering `d` as fully as possible, preferring models inside `d`,
/// then fewer models.
pub fn select_collaborators(d: &DomainSet, registry: &[DomainSet]) -> Vec<DomainSet> {
    let idx = best_subset(
        registry.len(),
        |ix| CollabScore::of(d, &ix.iter().map(|&i| &registry[i]).collect::<Vec<_>>()),
        CollabScore::cmp,
    );
    idx.into_iter().map(|i| registry[i].clone()).collect()
}

/// Existing models whose union is closest to `target` (symmetric difference),
/// then fewest models.
pub fn select_donors(target: &DomainSet, registry: &[DomainSet]) -> Vec<DomainSet> {
    let idx = best_subset(
        registry.len(),
        |ix| {
            let u = union(&ix.iter().map(|&i| &registry[i]).collect::<Vec<_>>());
            (target.symmetric_difference_len(&u), ix.len())
        },
        |a: &(usize, usize), b| a.cmp(b),
    );
    idx.into_iter().map(|i| registry[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(names: &[&str]) -> DomainSet {
        DomainSet::from_names(names.iter().copied())
    }

    #[test]
    fn collaborator_examples() {
        let reg = vec![ds(&["A"]), ds(&["B"]), ds(&["A", "B"])];
        assert_eq!(select_collaborators(&ds(&["A", "B"]), &reg), vec![ds(&["A", "B"])]);
        assert_eq!(select_collaborators(&ds(&["A", "B"]), &[ds(&["A"])]), vec![ds(&["A"])]);
        assert!(select_collaborators(&ds(&["A"]), &[]).is_empty());
        assert!(select_collaborators(&ds(&["A"]), &[ds(&["C"])]).is_empty());
    }

    #[test]
    fn donor_examples() {
        let reg = vec![ds(&["A"]), ds(&["B"]), ds(&["A", "B"])];
        assert_eq!(select_donors(&ds(&["A", "B"]), &reg), vec![ds(&["A", "B"])]);
        assert!(select_donors(&ds(&["Z"]), &reg).is_empty());
    }
}
