//! Sources of optimizer run outcomes for the tuners.

use crate::benchmarks::Problem;
use crate::engine::{run, RunRecord};
use crate::space::CandidatePair;

/// Failed runs cost this multiple of the run budget.
pub const FAILURE_PENALTY_FACTOR: u64 = 2;

/// Anything that can report the hitting time of one seeded run of a pair on
/// one of a fixed list of instances.
pub trait RunEvaluator: Sync {
    fn n_instances(&self) -> usize;
    /// Evaluation budget of a single run.
    fn run_budget(&self) -> u64;
    fn hitting_time(&self, pair: &CandidatePair, instance: usize, seed: u64) -> Option<u64>;
}

/// Cost of one run: the hitting time, or `2B` when the target was missed.
pub fn run_cost(hitting_time: Option<u64>, budget: u64) -> f64 {
    match hitting_time {
        Some(t) => t.min(budget) as f64,
        None => (FAILURE_PENALTY_FACTOR * budget) as f64,
    }
}

/// Real optimizer runs on a list of benchmark instances.
#[derive(Clone, Debug)]
pub struct ProblemSet {
    pub problems: Vec<Problem>,
    pub targets: Vec<f64>,
    pub budget: u64,
}

impl ProblemSet {
    /// `precision` above each instance's optimum as the target.
    pub fn new(problems: Vec<Problem>, precision: f64, budget: u64) -> Self {
        let targets = problems.iter().map(|p| p.target_for(precision)).collect();
        Self { problems, targets, budget }
    }

    pub fn record(&self, pair: &CandidatePair, instance: usize, seed: u64) -> RunRecord {
        run(*pair, &self.problems[instance], self.targets[instance], self.budget, seed)
    }
}

impl RunEvaluator for ProblemSet {
    fn n_instances(&self) -> usize {
        self.problems.len()
    }

    fn run_budget(&self) -> u64 {
        self.budget
    }

    fn hitting_time(&self, pair: &CandidatePair, instance: usize, seed: u64) -> Option<u64> {
        self.record(pair, instance, seed).hitting_time
    }
}
