use std::collections::HashSet;
use std::time::Instant;

use modcash::ego::{
    all_failure_sentinel, expected_improvement, fit_forest, propose, tune_ego, AcquisitionSettings, EgoSettings,
    ForestSettings,
};
use modcash::evaluator::RunEvaluator;
use modcash::exec::Exec;
use modcash::space::{CandidatePair, ModuleConfiguration, SearchSpace};

/// Instant synthetic evaluator: hitting time grows with the distance of the
/// learning rates from a fixed point and with the number of active modules.
struct Bowl;

impl RunEvaluator for Bowl {
    fn n_instances(&self) -> usize {
        5
    }
    fn run_budget(&self) -> u64 {
        1000
    }
    fn hitting_time(&self, pair: &CandidatePair, instance: usize, seed: u64) -> Option<u64> {
        let h = pair.hyper;
        let d = (h.c1 - 0.2).powi(2) + (h.cc - 0.6).powi(2) + (h.c_mu - 0.3).powi(2);
        let modules: u32 = pair.config.activations().iter().map(|&a| u32::from(a)).sum();
        let t = 50.0 + 2000.0 * d + 10.0 * f64::from(modules) + (seed % 7) as f64 + instance as f64;
        (t < 1000.0).then_some(t as u64)
    }
}

#[test]
fn full_budget_gives_exactly_1000_evaluations_quickly() {
    let start = Instant::now();
    let res = tune_ego(&SearchSpace::full(), &Bowl, 25_000, 25, &EgoSettings::default(), 3).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(res.evaluations, 1000);
    assert_eq!(res.runs_spent, 25_000);
    let keys: HashSet<_> = res.audit.iter().map(|e| e.pair.key()).collect();
    assert_eq!(keys.len(), 1000, "duplicate proposals");
    assert!(elapsed < 90.0, "took {elapsed:.1}s");
    let best = res.audit.iter().map(|e| e.ert).fold(f64::INFINITY, f64::min);
    assert_eq!(res.predicted_ert, best);
}

#[test]
fn proposals_improve_on_the_initial_design() {
    let res = tune_ego(&SearchSpace::full(), &Bowl, 2500, 25, &EgoSettings::default(), 11).unwrap();
    assert_eq!(res.evaluations, 100);
    let init = EgoSettings::default().initial_size(100);
    assert_eq!(init, 25);
    let design_best = res.audit[..init].iter().map(|e| e.ert).fold(f64::INFINITY, f64::min);
    assert!(res.predicted_ert < design_best);
}

#[test]
fn deterministic_and_mode_independent() {
    let s = EgoSettings { exec: Exec::Sequential, ..Default::default() };
    let p = EgoSettings { exec: Exec::Parallel, ..Default::default() };
    let a = tune_ego(&SearchSpace::full(), &Bowl, 500, 10, &s, 5).unwrap();
    let b = tune_ego(&SearchSpace::full(), &Bowl, 500, 10, &p, 5).unwrap();
    assert_eq!(a, b);
}

struct NeverHits;

impl RunEvaluator for NeverHits {
    fn n_instances(&self) -> usize {
        2
    }
    fn run_budget(&self) -> u64 {
        100
    }
    fn hitting_time(&self, _: &CandidatePair, _: usize, _: u64) -> Option<u64> {
        None
    }
}

#[test]
fn all_failures_use_the_sentinel() {
    let res = tune_ego(&SearchSpace::full(), &NeverHits, 50, 5, &EgoSettings::default(), 1).unwrap();
    assert_eq!(all_failure_sentinel(100, 5), 1000.0);
    assert!(res.audit.iter().all(|e| e.all_failed && e.ert == 1000.0));
    assert_eq!(res.best, res.audit[0].pair);
}

#[test]
fn budget_below_three_evaluations_is_rejected() {
    assert!(tune_ego(&SearchSpace::full(), &Bowl, 74, 25, &EgoSettings::default(), 1).is_err());
    assert!(tune_ego(&SearchSpace::full(), &Bowl, 75, 25, &EgoSettings::default(), 1).is_ok());
}

#[test]
fn runs_are_spread_round_robin() {
    let res = tune_ego(&SearchSpace::full(), &Bowl, 60, 6, &EgoSettings::default(), 2).unwrap();
    for e in &res.audit {
        assert_eq!(e.instances, vec![0, 1, 2, 3, 4, 0]);
        assert_eq!(e.seeds.len(), 6);
    }
}

#[test]
fn proposal_lands_in_the_improvement_peak() {
    // archive: poor everywhere except a cluster around cmu = 0.8, c1 = 0.1
    let space = SearchSpace::frozen_modules(ModuleConfiguration::default());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let grid = [0.05, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9];
    for &c1 in &grid {
        for &cmu in &grid {
            if c1 + cmu > 1.0 {
                continue;
            }
            let pair = space.make_pair([0; 11], [c1, 0.5, cmu]);
            let near = (c1 - 0.1).abs() < 0.1 && (cmu - 0.75).abs() < 0.1;
            xs.push(pair.features().to_vec());
            ys.push(if near { 1.0 } else { 10.0 });
        }
    }
    let model = fit_forest(&xs, &ys, &space.categorical_mask(), &ForestSettings::default(), 4, Exec::Sequential).unwrap();
    let mut hits = 0;
    for seed in 0..10 {
        let p = propose(&model, &space, 1.0, &[], &HashSet::new(), 1, &AcquisitionSettings::default(), seed);
        let h = p[0].hyper;
        if h.c1 < 0.3 && h.c_mu > 0.55 {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10 proposals in the peak");
}

#[test]
fn ei_is_nonnegative_and_monotone_in_mean() {
    for &s in &[0.0, 0.1, 1.0, 5.0] {
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let m = -5.0 + 0.2 * k as f64;
            let v = expected_improvement(m, s, 0.0);
            assert!(v >= 0.0);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }
}
