use proptest::prelude::*;

use cool_core::agent::collab::{select_collaborators, select_donors};
use cool_core::agent::dataset::{negative_count, oversample_count, saur_count};
use cool_core::agent::policy::{mean_policy, select_survivors, sym_kl, Candidate};
use cool_core::agent::pool::LruPool;
use cool_core::agent::store::is_test_batch;
use cool_core::bddb::{compute_reward, SearchParams};
use cool_core::frontend::DomainSet;
use cool_core::grounder::deduce_eval_order;

const NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

fn domain_set(mask: u8) -> DomainSet {
    DomainSet::from_names(NAMES.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| *n))
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let t: f64 = v.iter().sum();
        v.into_iter().map(|x| x / t).collect()
    })
}

fn ceil_div(a: u128, b: u128) -> u128 {
    a.div_ceil(b)
}

proptest! {
    #[test]
    fn oversampling_matches_integer_oracle(n_max in 0usize..20, d in 0u32..=100, tol in 0u32..100) {
        // n_max·(d−tol)/(100−tol), ceiled, floored at zero
        let want = if d <= tol { 0 } else { ceil_div(n_max as u128 * (d - tol) as u128, (100 - tol) as u128) as usize };
        prop_assert_eq!(oversample_count(d as f64 / 100.0, n_max, tol as f64 / 100.0), want);
    }

    #[test]
    fn saur_matches_integer_oracle(psi in 0u32..=100, age in 0u32..6, n_new in 0usize..500, n_old in 0usize..500) {
        let m = n_new.min(n_old) as u128;
        let want = ceil_div((psi as u128).pow(age) * m, 100u128.pow(age)) as usize;
        prop_assert_eq!(saur_count(psi as f64 / 100.0, age, n_new, n_old), want);
    }

    #[test]
    fn negatives_match_integer_oracle(phi in 0u32..=100, n in 0usize..10_000) {
        prop_assert_eq!(negative_count(phi as f64 / 100.0, n), phi as usize * n / 100);
    }

    #[test]
    fn test_batches_track_ratio(r in 0u32..=100, n in 0usize..400) {
        let count = (0..n).filter(|&b| is_test_batch(b, r as f64 / 100.0)).count();
        prop_assert_eq!(count, n * r as usize / 100);
    }

    #[test]
    fn sym_kl_is_symmetric_and_nonnegative(p in distribution(6), q in distribution(6)) {
        let a = sym_kl(&p, &q);
        prop_assert!(a >= 0.0);
        prop_assert!((a - sym_kl(&q, &p)).abs() < 1e-12);
        prop_assert!(sym_kl(&p, &p).abs() < 1e-15);
    }

    #[test]
    fn mean_policy_stays_a_distribution(ps in prop::collection::vec((distribution(4), 0.0f64..1.0), 1..6)) {
        let cands: Vec<Candidate> = ps
            .into_iter()
            .map(|(pi, w)| Candidate { domains: DomainSet::new(), pi, a_pi: w, indom: 1.0, a_indom: 1.0 })
            .collect();
        let refs: Vec<&Candidate> = cands.iter().collect();
        let m = mean_policy(&refs, 4);
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(m.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn survivors_are_a_fixpoint(
        ms in prop::collection::vec((1u8..32, distribution(3), 0.1f64..1.0, 0.1f64..1.0), 1..7),
        d in 1u8..32,
        skl in 0.05f64..2.0,
    ) {
        let d = domain_set(d);
        let cands: Vec<Candidate> = ms
            .into_iter()
            .map(|(m, pi, indom, acc)| Candidate { domains: domain_set(m), pi, a_pi: acc, indom, a_indom: acc })
            .collect();
        let alive = select_survivors(&cands, &d, 1.0, skl);
        prop_assert!(!alive.is_empty());
        // insiders are never dropped for divergence
        for (i, c) in cands.iter().enumerate() {
            if c.domains.is_subset(&d) {
                prop_assert!(alive.contains(&i));
            }
        }
        let kept: Vec<Candidate> = alive.iter().map(|&i| cands[i].clone()).collect();
        prop_assert_eq!(select_survivors(&kept, &d, 1.0, skl), (0..kept.len()).collect::<Vec<_>>());
    }

    #[test]
    fn collaborators_come_from_registry(reg in prop::collection::vec(1u8..32, 0..10), d in 0u8..32) {
        let reg: Vec<DomainSet> = reg.into_iter().map(domain_set).collect();
        let d = domain_set(d);
        let chosen = select_collaborators(&d, &reg);
        prop_assert!(chosen.iter().all(|c| reg.contains(c)));
        // anything the registry covers is covered by the choice
        let reachable: Vec<&str> = NAMES.iter().copied().filter(|n| d.contains(n) && reg.iter().any(|m| m.contains(n))).collect();
        for n in reachable {
            prop_assert!(chosen.iter().any(|c| c.contains(n)));
        }
        prop_assert!(select_donors(&d, &reg).iter().all(|c| reg.contains(c)));
    }

    #[test]
    fn pool_respects_capacity(cap in 1usize..6, grace in 0u64..5, keys in prop::collection::vec(0u8..10, 0..60)) {
        let mut pool: LruPool<u8> = LruPool::new(cap, grace);
        for k in keys {
            let v = *pool.access::<()>(&k.to_string(), || Ok(k)).unwrap();
            prop_assert_eq!(v, k);
            prop_assert!(pool.len() <= cap);
            prop_assert!(pool.contains(&k.to_string()));
        }
    }

    #[test]
    fn eval_order_splits_forward_and_inverse(calls in prop::collection::vec((any::<bool>(), 0u16..1000), 0..40)) {
        let out = deduce_eval_order(&calls, |c| c.0);
        let fwd: Vec<_> = calls.iter().filter(|c| !c.0).cloned().collect();
        let mut inv: Vec<_> = calls.iter().filter(|c| c.0).cloned().collect();
        inv.reverse();
        prop_assert_eq!(out, [fwd, inv].concat());
    }

    #[test]
    fn reward_without_agent_is_prompt_plus_offset(r_p in -5.0f64..5.0, pi in 0.0f64..1.0, t in 0usize..6) {
        let p = SearchParams::default();
        let o = if t == 0 { p.k_o0 } else { -p.k_o1 * p.k_o2.powi(t as i32) };
        prop_assert!((compute_reward(r_p, pi, 0.0, 0.7, t, &p) - (r_p + o)).abs() < 1e-12);
        // full trust ignores the prompt except through r_a
        let r_a = (p.k_ra * r_p.abs()).max(p.r_a_base);
        prop_assert!((compute_reward(r_p, pi, 1.0, 1.0, t, &p) - (pi * r_a + o)).abs() < 1e-12);
    }
}
