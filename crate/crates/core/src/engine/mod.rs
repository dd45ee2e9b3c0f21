//! Modular CMA-ES: ask/tell state, the run loop and configuration switching.

pub mod sampling;
mod strategy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::CandidatePair;

pub use strategy::{
    compute_weights, default_lambda, default_mu_eff, init_es, EsState, Population, RestartLedger,
    BOX_HALF_WIDTH, EIGEN_FLOOR, INITIAL_SIGMA,
};

/// A minimisation problem the engine can drive.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// Evaluate a point of length `dim()`.
    fn value(&self, x: &[f64]) -> f64;
    fn fid(&self) -> u32 {
        0
    }
    fn instance(&self) -> u32 {
        0
    }
    /// Known optimal value, when there is one.
    fn optimum(&self) -> Option<f64> {
        None
    }
}

/// Outcome of one optimizer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fid: u32,
    pub instance: u32,
    pub dim: usize,
    #[serde(flatten)]
    pub pair: CandidatePair,
    pub seed: u64,
    pub budget: u64,
    pub target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_opt: Option<f64>,
    /// 1-based index of the first evaluation at or below `target`.
    pub hitting_time: Option<u64>,
    pub best_f: f64,
    pub evaluations: u64,
    /// `(evaluation, f)` at every improvement of the best-so-far value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<(u64, f64)>,
}

impl RunRecord {
    pub fn success(&self) -> bool {
        self.hitting_time.is_some()
    }

    /// First evaluation at which the best-so-far value reached `target`,
    /// reconstructed from the improvement trace.
    pub fn hitting_time_for(&self, target: f64) -> Option<u64> {
        self.trace.iter().find(|(_, f)| *f <= target).map(|&(e, _)| e)
    }

    pub fn without_trace(mut self) -> Self {
        self.trace.clear();
        self
    }
}

/// Run `pair` on `problem` until the target is hit or `budget` evaluations are spent.
pub fn run(pair: CandidatePair, problem: &dyn Objective, target: f64, budget: u64, seed: u64) -> RunRecord {
    let mut state = init_es(pair, problem.dim(), seed).with_budget(budget);
    drive(&mut state, problem, target, budget, None, seed)
}

/// Run `first` until the best value reaches `splitpoint`, then continue with
/// `second` on the same search distribution. Evaluations are counted across
/// both phases.
pub fn switch_run(
    first: CandidatePair,
    second: CandidatePair,
    splitpoint: f64,
    problem: &dyn Objective,
    target: f64,
    budget: u64,
    seed: u64,
) -> Result<RunRecord> {
    if splitpoint.is_nan() || splitpoint < target {
        return Err(Error::InvalidSplitpoint { splitpoint, target });
    }
    let mut state = init_es(first, problem.dim(), seed).with_budget(budget);
    Ok(drive(&mut state, problem, target, budget, Some((second, splitpoint)), seed))
}

fn drive(
    state: &mut EsState,
    problem: &dyn Objective,
    target: f64,
    budget: u64,
    mut switch: Option<(CandidatePair, f64)>,
    seed: u64,
) -> RunRecord {
    let pair = *state.pair();
    let mut best = f64::INFINITY;
    let mut hit = None;
    let mut trace = Vec::new();

    'run: loop {
        let cfg = state.pair().config;
        let pop = state.ask();
        let stop_on_pairs = cfg.mirrored() || cfg.pairwise();
        // sequential selection stops once an offspring beats the best parent,
        // after at least mu evaluations and never inside a mirrored pair
        let parent_best = if cfg.sequential() { state.best_parent_fitness() } else { None };
        let mut improved = false;
        let mut fitness = Vec::with_capacity(pop.len());
        for (i, x) in pop.x.iter().enumerate() {
            if state.evaluations_used >= budget {
                break 'run;
            }
            let f = problem.value(x.as_slice());
            state.evaluations_used += 1;
            fitness.push(f);
            if f < best {
                best = f;
                trace.push((state.evaluations_used, f));
            }
            if f <= target {
                hit = Some(state.evaluations_used);
                break 'run;
            }
            if let Some(pb) = parent_best {
                improved |= f < pb;
                if improved && i + 1 >= state.mu && (!stop_on_pairs || i % 2 == 1) {
                    break;
                }
            }
        }
        state
            .tell(&pop, &fitness)
            .expect("population and fitness are built together");
        let gen_best = fitness.iter().cloned().fold(f64::INFINITY, f64::min);
        state.note_generation_best(gen_best);
        if let Some((next, split)) = switch {
            if best <= split {
                state.reconfigure(next);
                switch = None;
            }
        }
        if state.evaluations_used >= budget {
            break;
        }
        // without restarts a stale run keeps going; only a degenerate one stops early
        if state.stagnated() && !state.restart() && state.degenerate() {
            break;
        }
    }

    RunRecord {
        fid: problem.fid(),
        instance: problem.instance(),
        dim: problem.dim(),
        pair,
        seed,
        budget,
        target,
        f_opt: problem.optimum(),
        hitting_time: hit,
        best_f: best,
        evaluations: state.evaluations_used,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Hyperparameters, ModuleConfiguration};

    struct Sphere(usize);

    impl Objective for Sphere {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().map(|v| v * v).sum()
        }
    }

    fn default_pair(id: i64) -> CandidatePair {
        CandidatePair::with_defaults(ModuleConfiguration::from_id(id).unwrap(), 5)
    }

    #[test]
    fn easy_target_hit_within_first_generation() {
        let r = run(default_pair(0), &Sphere(5), 1e9, 1000, 3);
        assert!(r.hitting_time.unwrap() <= 8);
        assert_eq!(r.hitting_time, Some(1));
    }

    #[test]
    fn single_evaluation_budget() {
        let r = run(default_pair(0), &Sphere(5), -1.0, 1, 3);
        assert_eq!(r.hitting_time, None);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn best_so_far_strictly_decreasing() {
        let r = run(default_pair(0), &Sphere(5), 1e-8, 10_000, 1);
        assert!(r.success());
        assert!(r.trace.windows(2).all(|w| w[1].1 < w[0].1 && w[1].0 > w[0].0));
        assert!(r.best_f <= 1e-8);
    }

    #[test]
    fn deterministic() {
        for id in [0, 1, 2, 594, 3458, 4607] {
            let a = run(default_pair(id), &Sphere(5), 1e-8, 3000, 9);
            let b = run(default_pair(id), &Sphere(5), 1e-8, 3000, 9);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn budget_never_exceeded() {
        for id in (0..4608).step_by(211) {
            let r = run(default_pair(id), &Sphere(5), -1.0, 700, id as u64);
            assert!(r.evaluations <= 700, "config {id}");
            assert_eq!(r.hitting_time, None);
        }
    }

    #[test]
    fn restarts_use_full_budget() {
        // IPOP never hits a negative target, so it keeps restarting until the budget runs out
        let r = run(default_pair(1), &Sphere(5), -1.0, 5000, 2);
        assert_eq!(r.evaluations, 5000);
    }

    #[test]
    fn switch_identity_cases() {
        let a = default_pair(0);
        let b = default_pair(2304 + 3);
        let p = Sphere(5);
        for seed in 0..5 {
            let plain = run(a, &p, 1e-8, 5000, seed);
            assert_eq!(switch_run(a, a, 1e-2, &p, 1e-8, 5000, seed).unwrap(), plain);
            assert_eq!(switch_run(a, b, 1e-8, &p, 1e-8, 5000, seed).unwrap(), plain);
            let switched = switch_run(a, b, 1e-2, &p, 1e-8, 5000, seed).unwrap();
            let at_split = plain.hitting_time_for(1e-2).unwrap();
            assert!(switched.hitting_time.unwrap() >= at_split);
        }
        assert!(matches!(
            switch_run(a, b, 1e-9, &p, 1e-8, 100, 0),
            Err(Error::InvalidSplitpoint { .. })
        ));
    }

    #[test]
    fn record_json_shape() {
        let pair = CandidatePair::new(
            ModuleConfiguration::from_id(7).unwrap(),
            Hyperparameters::new(0.1, 0.2, 0.3).unwrap(),
        )
        .unwrap();
        let r = run(pair, &Sphere(5), -1.0, 3, 1).without_trace();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["fid", "instance", "confid", "c1", "cc", "cmu", "seed", "budget", "target", "best_f"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["hitting_time"].is_null());
        assert_eq!(v["confid"], 7);
        let back: RunRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
