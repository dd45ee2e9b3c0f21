use std::collections::{BTreeMap, HashMap};

use modcash::evaluator::RunEvaluator;
use modcash::exec::Exec;
use modcash::racing::{initial_candidates, tune_racing, RacingSettings};
use modcash::space::{CandidatePair, Hyperparameters, ModuleConfiguration, SearchSpace};

/// Constant cost per value of the restart module.
struct ConstantCosts {
    costs: [u64; 3],
    instances: usize,
}

impl RunEvaluator for ConstantCosts {
    fn n_instances(&self) -> usize {
        self.instances
    }
    fn run_budget(&self) -> u64 {
        1000
    }
    fn hitting_time(&self, pair: &CandidatePair, _instance: usize, _seed: u64) -> Option<u64> {
        Some(self.costs[pair.config.module(11) as usize])
    }
}

fn restart_only_space() -> SearchSpace {
    let mut modules: [Vec<u8>; 11] = Default::default();
    for (k, m) in modules.iter_mut().enumerate() {
        *m = if k == 10 { vec![0, 1, 2] } else { vec![0] };
    }
    SearchSpace::new(modules, (0.1, 0.1), (0.5, 0.5), (0.2, 0.2)).unwrap()
}

#[test]
fn constant_costs_pick_cheapest_in_every_seed() {
    let eval = ConstantCosts { costs: [20, 10, 30], instances: 5 };
    let space = restart_only_space();
    for seed in 0..20 {
        let r = tune_racing(&space, &eval, 300, &RacingSettings::default(), seed).unwrap();
        assert_eq!(r.best.config.module(11), 1, "seed {seed}");
        assert_eq!(r.predicted, 10.0);
        assert!(r.runs_spent <= 300);
        assert_eq!(r.audit.len() as u64, r.runs_spent);
    }
}

#[test]
fn capping_fires_after_minimum_instances() {
    let eval = ConstantCosts { costs: [10, 100, 100], instances: 5 };
    let space = restart_only_space();
    let settings = RacingSettings::default();
    let r = tune_racing(&space, &eval, 400, &settings, 3).unwrap();
    let capped: Vec<_> = r.audit.iter().filter(|e| e.capped).collect();
    assert!(!capped.is_empty());
    for e in capped {
        assert_eq!(e.instance + 1, settings.capping_min_instances);
        let later = r
            .audit
            .iter()
            .filter(|x| x.race == e.race && x.candidate == e.candidate && x.instance > e.instance)
            .count();
        assert_eq!(later, 0);
    }
}

#[test]
fn collapsed_space_returns_its_point() {
    let pair = CandidatePair::new(
        ModuleConfiguration::from_id(17).unwrap(),
        Hyperparameters::new(0.1, 0.3, 0.2).unwrap(),
    )
    .unwrap();
    let space = SearchSpace::single_point(pair);
    let eval = ConstantCosts { costs: [5, 5, 5], instances: 3 };
    let r = tune_racing(&space, &eval, 100, &RacingSettings::default(), 1).unwrap();
    assert_eq!(r.best, pair);
    assert!(r.runs_spent <= 100);
    assert!(tune_racing(&space, &eval, 3, &RacingSettings::default(), 1).is_err());
}

/// Hitting time depends on the pair and the seed, so results can be compared
/// across execution modes.
struct Noisy;

impl RunEvaluator for Noisy {
    fn n_instances(&self) -> usize {
        4
    }
    fn run_budget(&self) -> u64 {
        500
    }
    fn hitting_time(&self, pair: &CandidatePair, instance: usize, seed: u64) -> Option<u64> {
        let base = 50.0 + 400.0 * (pair.hyper.c1 - 0.3).abs() + 30.0 * pair.config.module(3) as f64;
        let noise = (seed % 97) as f64 + 5.0 * instance as f64;
        let t = base + noise;
        (t < 500.0).then_some(t as u64)
    }
}

#[test]
fn accounting_elitism_and_determinism() {
    let space = SearchSpace::full();
    let mut settings = RacingSettings { exec: Exec::Sequential, ..Default::default() };
    let a = tune_racing(&space, &Noisy, 3000, &settings, 11).unwrap();
    settings.exec = Exec::Parallel;
    let b = tune_racing(&space, &Noisy, 3000, &settings, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.audit.len() as u64, a.runs_spent);
    assert!(a.runs_spent <= 3000);
    assert!(a.races >= 2);
    // each (candidate, instance) is run at most once
    let mut seen = HashMap::new();
    for e in &a.audit {
        assert!(seen.insert((e.candidate, e.instance), e.race).is_none());
    }
    // the returned pair was evaluated
    assert!(a.audit.iter().any(|e| e.pair == a.best));
    // a candidate first evaluated in an earlier race that is still run later was an elite;
    // its history must be a prefix of the instance stream
    let mut per_candidate: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &a.audit {
        per_candidate.entry(e.candidate).or_default().push(e.instance);
    }
    for inst in per_candidate.values() {
        let mut sorted = inst.clone();
        sorted.sort();
        assert_eq!(sorted, (0..sorted.len()).collect::<Vec<_>>());
    }
}

#[test]
fn initial_sample_is_valid_and_reproducible() {
    let space = SearchSpace::full();
    let a = initial_candidates(&space, 333, 4);
    assert_eq!(a.len(), 333);
    assert!(a.iter().all(|p| space.contains(p)));
    assert_eq!(a, initial_candidates(&space, 333, 4));
}
