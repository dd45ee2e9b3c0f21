use proptest::prelude::*;

use modcash::benchmarks::{make_problem, FUNCTION_IDS};
use modcash::engine::run;
use modcash::metrics::{aht, ert, kendall_tau, log_budget_grid, prediction_error, resample_min_ert};
use modcash::space::{CandidatePair, ModuleConfiguration};

fn times(budget: u64) -> impl Strategy<Value = Vec<Option<u64>>> {
    prop::collection::vec(prop::option::weighted(0.7, 1..=budget), 1..40)
}

proptest! {
    #[test]
    fn ert_bounds((budget, ts) in (1u64..10_000).prop_flat_map(|b| (Just(b), times(b)))) {
        let e = ert(&ts, budget).unwrap();
        let successes: Vec<f64> = ts.iter().flatten().map(|&t| t as f64).collect();
        match e {
            None => prop_assert!(successes.is_empty()),
            Some(e) => {
                let mean = successes.iter().sum::<f64>() / successes.len() as f64;
                prop_assert!(e >= mean - 1e-9);
                prop_assert!(e <= budget as f64 * ts.len() as f64 / successes.len() as f64 + 1e-9);
                if successes.len() == ts.len() {
                    prop_assert_eq!(e, aht(&ts, budget as f64).unwrap());
                }
            }
        }
    }

    #[test]
    fn aht_grows_with_penalty((budget, ts) in (1u64..10_000).prop_flat_map(|b| (Just(b), times(b))), extra in 0.0f64..1e5) {
        let base = aht(&ts, budget as f64).unwrap();
        prop_assert!(aht(&ts, budget as f64 + extra).unwrap() >= base);
    }

    #[test]
    fn resampled_minimum_is_an_ert_of_some_subsample(
        (budget, per) in (10u64..1000).prop_flat_map(|b| (Just(b), prop::collection::vec(prop::collection::vec(prop::option::weighted(0.6, 1..=b), 5..10), 1..4))),
        seed in any::<u64>(),
    ) {
        let m = resample_min_ert(&per, 3, 5, budget, seed).unwrap();
        if let Some(m) = m {
            // at least one success among 3 runs per instance: ERT of a subsample is bounded by this
            let n = (3 * per.len()) as f64;
            prop_assert!(m >= 1.0 && m <= n * budget as f64);
        }
    }

    #[test]
    fn kendall_symmetric_and_bounded(xy in prop::collection::vec((0u8..5, 0u8..5), 2..30)) {
        let x: Vec<f64> = xy.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = xy.iter().map(|p| f64::from(p.1)).collect();
        let a = kendall_tau(&x, &y).unwrap();
        let b = kendall_tau(&y, &x).unwrap();
        prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        if !a.is_nan() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
            let self_tau = kendall_tau(&x, &x).unwrap();
            prop_assert!((self_tau - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_grid_increasing(max in 1u64..10_000_000, per in 1usize..60) {
        let g = log_budget_grid(max, per);
        prop_assert_eq!(g[0], 1);
        prop_assert_eq!(*g.last().unwrap(), max);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn prediction_error_zero_on_agreement(v in 1.0f64..1e6) {
        prop_assert_eq!(prediction_error(v, v).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_respect_budget_and_are_reproducible(id in 0i64..4608, fid in prop::sample::select(FUNCTION_IDS.to_vec()), seed in any::<u64>(), budget in 1u64..1500) {
        let pair = CandidatePair::with_defaults(ModuleConfiguration::from_id(id).unwrap(), 5);
        let p = make_problem(fid, 1, 5).unwrap();
        let target = p.target_for(1e-8);
        let a = run(pair, &p, target, budget, seed);
        prop_assert!(a.evaluations <= budget);
        if let Some(t) = a.hitting_time {
            prop_assert!(t <= a.evaluations);
            prop_assert!(a.best_f <= target);
        }
        // the trace is strictly improving and ends at the best value
        prop_assert!(a.trace.windows(2).all(|w| w[0].0 < w[1].0 && w[1].1 < w[0].1));
        prop_assert_eq!(a.trace.last().map(|t| t.1), Some(a.best_f));
        let b = run(pair, &p, target, budget, seed);
        prop_assert_eq!(a, b);
    }
}
