use proptest::prelude::*;

use stakesim_core::analytics::{gini, hhi, nakamoto_coefficient, StakeDistribution};
use stakesim_core::chain::ChurnParams;
use stakesim_core::queue::{estimate_wait, simulate_queue, ChurnTable, Direction, DEFAULT_MAX_TIERS};
use stakesim_core::units::{EntityId, Gwei};

fn table() -> ChurnTable {
    ChurnTable::build(ChurnParams::default(), DEFAULT_MAX_TIERS).unwrap()
}

fn dist(stakes: &[u64]) -> StakeDistribution {
    StakeDistribution::from_stakes(stakes.iter().enumerate().map(|(i, s)| (EntityId::new(format!("e{i:03}")), Gwei(*s))))
}

fn stakes() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..1_000_000_000_000, 1..40)
}

/// Pairwise-difference Gini, independent of the rank formula used in the crate.
fn gini_pairwise(stakes: &[u64]) -> f64 {
    let n = stakes.len() as f64;
    let mean = stakes.iter().map(|s| *s as f64).sum::<f64>() / n;
    let mut sum = 0.0;
    for a in stakes {
        for b in stakes {
            sum += (*a as f64 - *b as f64).abs();
        }
    }
    sum / (2.0 * n * n * mean)
}

proptest! {
    #[test]
    fn metrics_scale_invariant(s in stakes(), k in 1u64..1000) {
        let a = dist(&s);
        let b = dist(&s.iter().map(|x| x * k).collect::<Vec<_>>());
        prop_assert_eq!(nakamoto_coefficient(&a, 0.5).unwrap(), nakamoto_coefficient(&b, 0.5).unwrap());
        prop_assert!((hhi(&a).unwrap() - hhi(&b).unwrap()).abs() < 1e-6);
        prop_assert!((gini(&a).unwrap() - gini(&b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn metrics_permutation_invariant(s in stakes(), seed in any::<u64>()) {
        let mut shuffled = s.clone();
        // deterministic Fisher–Yates driven by the seed
        let mut x = seed | 1;
        for i in (1..shuffled.len()).rev() {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            shuffled.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let (a, b) = (dist(&s), dist(&shuffled));
        prop_assert_eq!(nakamoto_coefficient(&a, 0.5).unwrap(), nakamoto_coefficient(&b, 0.5).unwrap());
        prop_assert!((hhi(&a).unwrap() - hhi(&b).unwrap()).abs() < 1e-9);
        prop_assert!((gini(&a).unwrap() - gini(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn merge_monotone(s in prop::collection::vec(1u64..1_000_000_000_000, 2..40), i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>(), t in 0.01f64..0.99) {
        let (a, b) = (i.index(s.len()), j.index(s.len()));
        prop_assume!(a != b);
        let mut merged: Vec<u64> = s.clone();
        merged[a] += merged[b];
        merged.remove(b);
        let (d0, d1) = (dist(&s), dist(&merged));
        prop_assert!(nakamoto_coefficient(&d1, t).unwrap() <= nakamoto_coefficient(&d0, t).unwrap());
        prop_assert!(hhi(&d1).unwrap() >= hhi(&d0).unwrap() - 1e-9);
    }

    #[test]
    fn gini_matches_pairwise_oracle(s in stakes()) {
        let g = gini(&dist(&s)).unwrap();
        prop_assert!((g - gini_pairwise(&s)).abs() < 1e-9);
        prop_assert!((0.0..1.0).contains(&g));
    }

    #[test]
    fn hhi_bounds(s in stakes()) {
        let h = hhi(&dist(&s)).unwrap();
        let n = s.len() as f64;
        prop_assert!(h <= 10_000.0 + 1e-9);
        prop_assert!(h >= 10_000.0 / n - 1e-6);
    }

    #[test]
    fn estimate_monotone_in_queue(active in 262_144u64..2_000_000, q in 0u64..400_000, extra in 0u64..100_000) {
        let t = table();
        let a = estimate_wait(active, q, &t, Direction::Entry).unwrap();
        let b = estimate_wait(active, q + extra, &t, Direction::Entry).unwrap();
        prop_assert!(b.churn_time_days >= a.churn_time_days);
    }

    #[test]
    fn estimate_non_increasing_in_active(active in 262_144u64..2_000_000, more in 0u64..200_000, q in 0u64..400_000) {
        let t = table();
        prop_assume!(active + more < 2_293_760);
        let a = estimate_wait(active, q, &t, Direction::Entry).unwrap();
        let b = estimate_wait(active + more, q, &t, Direction::Entry).unwrap();
        prop_assert!(b.churn_time_days <= a.churn_time_days + 1e-9);
    }

    #[test]
    fn estimate_unit_identities(active in 262_144u64..2_293_760, q in 0u64..500_000, exit in any::<bool>()) {
        let dir = if exit { Direction::Exit } else { Direction::Entry };
        let t = table();
        let e = estimate_wait(active, q, &t, dir).unwrap();
        prop_assert_eq!(e.wait_secs, (e.churn_time_days * 86_400.0).round() as u64);
        prop_assert_eq!(e.wait_days, e.wait_secs / 86_400);
        if q > 0 {
            let lo = *t.epoch_churn().first().unwrap() as f64;
            let hi = *t.epoch_churn().last().unwrap() as f64;
            prop_assert!(e.ave_churn >= lo && e.ave_churn <= hi);
        } else {
            prop_assert_eq!(e.ave_churn, e.curr_churn as f64);
        }
    }

    #[test]
    fn estimate_close_to_drain(active in 262_144u64..1_500_000, q in 0u64..300_000, exit in any::<bool>()) {
        let dir = if exit { Direction::Exit } else { Direction::Entry };
        let t = table();
        let e = estimate_wait(active, q, &t, dir).unwrap();
        let epochs = simulate_queue(active, q, &t, dir).unwrap();
        prop_assert!((e.churn_time_days - epochs as f64 / 225.0).abs() <= 1.0);
    }
}
