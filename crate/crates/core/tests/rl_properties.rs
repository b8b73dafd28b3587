use htcopt::genome::{self, EpsilonPolicy, GenomeSpec, RlParameterSet};
use htcopt::rl::{action_estimate, end_of_day_epsilon, EpsilonState, RewardHistory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn policy() -> impl Strategy<Value = RlParameterSet> {
    any::<u64>().prop_map(|s| {
        genome::sample(&GenomeSpec::rl_default(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap()
    })
}

proptest! {
    #[test]
    fn epsilon_stays_in_unit_interval(params in policy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eps = EpsilonState::new(&params);
        let mut day = 0;
        for _ in 0..500 {
            if rng.gen_bool(0.1) {
                day += 1;
                end_of_day_epsilon(&params, &mut eps, day);
            } else {
                eps.record(rng.gen_range(-1.0..=1.0), &params);
            }
            prop_assert!((0.0..=1.0).contains(&eps.current), "{}", eps.current);
        }
    }

    #[test]
    fn window_never_exceeds_history(limit in -1i64..30, rewards in prop::collection::vec(-1.0f64..1.0, 0..100)) {
        let mut h = RewardHistory::new(limit);
        for (i, &r) in rewards.iter().enumerate() {
            h.push(r);
            let expected = if limit < 0 { i + 1 } else { (i + 1).min(limit as usize) };
            prop_assert_eq!(h.len(), expected);
        }
    }

    #[test]
    fn plain_estimate_is_window_mean(limit in 1i64..30, rewards in prop::collection::vec(-1.0f64..1.0, 1..100)) {
        let mut h = RewardHistory::new(limit);
        for &r in &rewards {
            h.push(r);
        }
        let window = &rewards[rewards.len().saturating_sub(limit as usize)..];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        prop_assert!((action_estimate(&h, false) - mean).abs() < 1e-12);
        let g = action_estimate(&h, true);
        let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
    }

    #[test]
    fn days_policy_ignores_rewards(day in 0i64..1000, rewards in prop::collection::vec(-1.0f64..1.0, 0..20)) {
        let params = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Days,
            ranges: [10, 100, 500],
            epsilon_levels: [0.9, 0.5, 0.1],
            ..Default::default()
        };
        let mut eps = EpsilonState::new(&params);
        for r in rewards {
            eps.record(r, &params);
        }
        let expected = if day <= 10 { 0.9 } else if day <= 100 { 0.5 } else { 0.1 };
        prop_assert_eq!(end_of_day_epsilon(&params, &mut eps, day).0, expected);
    }
}
