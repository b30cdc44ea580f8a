//! Allocation invariants and an exhaustive reference for small patch counts.

use mmsc_core::allocation::{allocate, PatchScores, RateTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// True if some feasible assignment is at least the plan's level everywhere
/// and strictly higher somewhere.
fn dominated(levels: &[u8], rates: &[u32], budget: u64) -> bool {
    let p = levels.len();
    let l = rates.len();
    let mut cur = vec![0usize; p];
    loop {
        let total: u64 = cur.iter().map(|&c| rates[c] as u64).sum();
        if total <= budget {
            let ge = cur.iter().zip(levels).all(|(&c, &g)| c >= g as usize);
            let gt = cur.iter().zip(levels).any(|(&c, &g)| c > g as usize);
            if ge && gt {
                return true;
            }
        }
        let mut k = 0;
        loop {
            if k == p {
                return false;
            }
            cur[k] += 1;
            if cur[k] < l {
                break;
            }
            cur[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn no_feasible_assignment_dominates_the_greedy_plan() {
    let table = RateTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..60 {
        let p = rng.gen_range(1..=5);
        let scores: Vec<f32> = (0..p).map(|_| rng.gen_range(0..4) as f32 / 3.0).collect();
        let budget = rng.gen_range(0..=192 * p as u64 + 10);
        let plan = allocate(&PatchScores::new(scores.clone()), &table, budget);
        assert!(
            !dominated(plan.levels(), table.rates(), budget),
            "scores {scores:?} budget {budget} levels {:?}",
            plan.levels()
        );
    }
}

#[test]
fn dominance_check_detects_a_wasteful_plan() {
    // [1, 0] under B = 24 leaves room to lift the second patch to level 1
    assert!(dominated(&[1, 0], &[0, 12, 24, 48, 192], 24));
    assert!(!dominated(&[2, 0], &[0, 12, 24, 48, 192], 24));
}

fn instance() -> impl Strategy<Value = (Vec<f32>, u64)> {
    prop::collection::vec(
        prop::sample::select(vec![0.0f32, 0.25, 0.5, 0.75, 1.0]),
        1..40,
    )
    .prop_flat_map(|s| {
        let full = 192 * s.len() as u64;
        (Just(s), 0..=full + 50)
    })
}

proptest! {
    #[test]
    fn plan_is_feasible((scores, budget) in instance()) {
        let plan = allocate(&PatchScores::new(scores), &RateTable::default(), budget);
        let sum: u64 = (0..plan.len()).map(|i| plan.rate_of(i) as u64).sum();
        prop_assert_eq!(sum, plan.total());
        prop_assert!(plan.total() <= budget);
    }

    #[test]
    fn higher_score_never_gets_lower_rate((scores, budget) in instance()) {
        let plan = allocate(&PatchScores::new(scores.clone()), &RateTable::default(), budget);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(plan.rate_of(i) >= plan.rate_of(j));
                }
            }
        }
    }

    #[test]
    fn no_single_upgrade_fits_the_leftover((scores, budget) in instance()) {
        let table = RateTable::default();
        let plan = allocate(&PatchScores::new(scores), &table, budget);
        for &l in plan.levels() {
            if l < table.max_level() {
                let step = (table.rate(l + 1) - table.rate(l)) as u64;
                prop_assert!(step > plan.leftover());
            }
        }
    }

    #[test]
    fn total_spend_matches_a_budget_at_or_above_full(scores in prop::collection::vec(0f32..1.0, 1..30), extra in 0u64..1000) {
        let table = RateTable::default();
        let full = table.full_payload(scores.len());
        let plan = allocate(&PatchScores::new(scores), &table, full + extra);
        prop_assert_eq!(plan.total(), full);
        prop_assert!(plan.levels().iter().all(|&l| l == table.max_level()));
    }

    #[test]
    fn allocation_ignores_score_scale((scores, budget) in instance(), k in 0.1f32..10.0) {
        let table = RateTable::default();
        let a = allocate(&PatchScores::new(scores.clone()), &table, budget);
        let b = allocate(&PatchScores::new(scores.iter().map(|s| s * k).collect()), &table, budget);
        prop_assert_eq!(a.levels(), b.levels());
    }
}
