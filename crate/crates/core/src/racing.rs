//! Elitist iterated racing with adaptive capping over the joint space.
//!
//! Budget and costs are counted in optimizer runs. Each race evaluates its
//! candidates instance by instance along a shared instance stream, drops
//! candidates that a Welch t-test finds significantly worse than the current
//! best, and keeps up to five elites whose results carry over to the next
//! race. New candidates are mutated from the elites with a shrinking spread.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{contract, Result};
use crate::evaluator::{run_cost, RunEvaluator};
use crate::exec::Exec;
use crate::seed::{derive, domain};
use crate::space::{CandidatePair, SearchSpace, MODULE_COUNT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RacingSettings {
    /// Instances seen before the first elimination test.
    pub first_test: usize,
    /// Instances between two tests.
    pub each_test: usize,
    pub alpha: f64,
    pub max_elites: usize,
    pub initial_candidates: usize,
    pub min_new_candidates: usize,
    /// Planned number of races used to split the budget.
    pub planned_races: usize,
    /// Per-race multiplicative decay of the mutation spread and switch rate.
    pub decay: f64,
    pub initial_switch_rate: f64,
    pub capping: bool,
    /// Instances a challenger must see before it can be capped.
    pub capping_min_instances: usize,
    pub exec: Exec,
}

impl Default for RacingSettings {
    fn default() -> Self {
        Self {
            first_test: 5,
            each_test: 1,
            alpha: 0.05,
            max_elites: 5,
            initial_candidates: 333,
            min_new_candidates: 20,
            planned_races: 5,
            decay: 0.85,
            initial_switch_rate: 0.3,
            capping: true,
            capping_min_instances: 4,
            exec: Exec::default(),
        }
    }
}

impl RacingSettings {
    /// Smallest budget that can run one race of two candidates up to the first test.
    pub fn minimum_budget(&self) -> u64 {
        2 * self.first_test as u64
    }

    fn validate(&self) -> Result<()> {
        if self.first_test == 0 || self.each_test == 0 || self.max_elites == 0 {
            return Err(contract("racing: first_test, each_test and max_elites must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(contract("racing: alpha must lie in (0, 1)"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(contract("racing: decay must lie in (0, 1)"));
        }
        if self.initial_candidates < 2 {
            return Err(contract("racing: at least two initial candidates are needed"));
        }
        Ok(())
    }
}

/// One optimizer run performed by the racing tuner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RacingAuditEntry {
    pub race: usize,
    pub candidate: usize,
    #[serde(flatten)]
    pub pair: CandidatePair,
    /// Position in the instance stream.
    pub instance: usize,
    /// Index into the evaluator's instance list.
    pub problem: usize,
    pub seed: u64,
    pub hitting_time: Option<u64>,
    pub cost: f64,
    /// This run pushed the candidate over the elites' median and ended its race.
    pub capped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RacingResult {
    pub best: CandidatePair,
    /// Candidate index of `best` in the audit log.
    pub best_candidate: usize,
    /// Mean penalized cost of the best elite over all of its instances.
    pub predicted: f64,
    pub runs_spent: u64,
    pub races: usize,
    pub audit: Vec<RacingAuditEntry>,
}

impl RacingResult {
    pub fn distinct_confids(&self) -> usize {
        distinct_confids(self.audit.iter().map(|e| e.pair))
    }

    /// Hitting times of every run of the best candidate.
    pub fn best_hitting_times(&self) -> Vec<Option<u64>> {
        self.audit.iter().filter(|e| e.candidate == self.best_candidate).map(|e| e.hitting_time).collect()
    }

    pub fn distinct_candidates(&self) -> usize {
        self.audit.iter().map(|e| e.candidate).collect::<HashSet<_>>().len()
    }
}

pub(crate) fn distinct_confids(pairs: impl Iterator<Item = CandidatePair>) -> usize {
    pairs.map(|p| p.config.id()).collect::<HashSet<_>>().len()
}

/// `n` uniform draws over the space.
pub fn initial_candidates(space: &SearchSpace, n: usize, seed: u64) -> Vec<CandidatePair> {
    space.sample_uniform_n(n, seed)
}

/// Offspring of `parent`: real axes get Gaussian noise with standard
/// deviation `spread[i]`, redrawn until inside the bounds; each module
/// leaves the parent value with probability `switch_rate`, uniformly to
/// one of the other allowed values.
pub fn mutate_candidate<R: Rng + ?Sized>(
    parent: &CandidatePair,
    space: &SearchSpace,
    spread: [f64; 3],
    switch_rate: f64,
    rng: &mut R,
) -> CandidatePair {
    let mut modules = parent.config.activations();
    for (k, slot) in modules.iter_mut().enumerate().take(MODULE_COUNT) {
        let values = space.module_values(k);
        if values.len() > 1 && rng.random::<f64>() < switch_rate {
            let others: Vec<u8> = values.iter().copied().filter(|v| v != slot).collect();
            if !others.is_empty() {
                *slot = others[rng.random_range(0..others.len())];
            }
        }
    }
    let h = parent.hyper;
    let mut reals = [h.c1, h.cc, h.c_mu];
    for (i, v) in reals.iter_mut().enumerate() {
        let (lo, hi) = space.real_bounds(i);
        let centre = *v;
        for _ in 0..100 {
            let draw = centre + spread[i] * rng.sample::<f64, _>(StandardNormal);
            if (lo..=hi).contains(&draw) {
                *v = draw;
                break;
            }
        }
    }
    space.make_pair(modules, reals)
}

/// Welch t-test elimination. `costs[i]` are the paired observations of
/// candidate `i`; returns the indices of survivors. The candidate with the
/// lowest mean always survives; with fewer than two observations nobody is
/// removed.
pub fn eliminate(costs: &[Vec<f64>], alpha: f64) -> Vec<usize> {
    let all: Vec<usize> = (0..costs.len()).collect();
    if costs.len() < 2 || costs.iter().any(|c| c.len() < 2) {
        return all;
    }
    let stats: Vec<(f64, f64, f64)> = costs.iter().map(|c| mean_var(c)).collect();
    let best = (0..costs.len())
        .min_by(|&a, &b| stats[a].0.total_cmp(&stats[b].0).then(a.cmp(&b)))
        .unwrap_or(0);
    all.into_iter()
        .filter(|&i| i == best || !significantly_worse(stats[i], stats[best], alpha))
        .collect()
}

fn mean_var(c: &[f64]) -> (f64, f64, f64) {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var, n)
}

/// One-sided Welch test of `a` having a larger mean than `b`.
fn significantly_worse(a: (f64, f64, f64), b: (f64, f64, f64), alpha: f64) -> bool {
    let (ma, va, na) = a;
    let (mb, vb, nb) = b;
    if ma <= mb {
        return false;
    }
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return true;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => 1.0 - dist.cdf(t) < alpha,
        Err(_) => false,
    }
}

#[derive(Clone, Debug)]
struct Candidate {
    pair: CandidatePair,
    /// Cost per instance-stream position.
    costs: Vec<Option<f64>>,
}

impl Candidate {
    fn cost(&self, k: usize) -> Option<f64> {
        self.costs.get(k).copied().flatten()
    }

    fn set_cost(&mut self, k: usize, c: f64) {
        if self.costs.len() <= k {
            self.costs.resize(k + 1, None);
        }
        self.costs[k] = Some(c);
    }

    fn history(&self) -> usize {
        self.costs.iter().take_while(|c| c.is_some()).count()
    }

    fn mean_over(&self, steps: usize) -> f64 {
        let vals: Vec<f64> = (0..steps).filter_map(|k| self.cost(k)).collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    fn mean_all(&self) -> f64 {
        self.mean_over(self.history())
    }
}

/// Maps instance-stream positions to evaluator instances: each block of
/// `n` positions is a seeded permutation of the instance list.
struct InstanceStream {
    n: usize,
    seed: u64,
}

impl InstanceStream {
    fn problem(&self, k: usize) -> usize {
        let block = k / self.n;
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.seed, &[block as u64]));
        order.shuffle(&mut rng);
        order[k % self.n]
    }
}

/// Run iterated racing on `space` with `total_budget` optimizer runs.
pub fn tune_racing(
    space: &SearchSpace,
    evaluator: &dyn RunEvaluator,
    total_budget: u64,
    settings: &RacingSettings,
    seed: u64,
) -> Result<RacingResult> {
    settings.validate()?;
    if evaluator.n_instances() == 0 {
        return Err(contract("racing needs at least one instance"));
    }
    if total_budget < settings.minimum_budget() {
        return Err(contract(format!(
            "racing budget {total_budget} is below the minimum race cost {}",
            settings.minimum_budget()
        )));
    }
    let budget = evaluator.run_budget();
    let stream = InstanceStream { n: evaluator.n_instances(), seed: derive(seed, &[domain::RACING, 0]) };
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[domain::RACING, 1]));
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut elites: Vec<usize> = Vec::new();
    let mut audit = Vec::new();
    let mut spent = 0u64;
    let mut race = 0usize;

    loop {
        let remaining = total_budget - spent;
        if remaining < settings.first_test as u64 {
            break;
        }
        let races_left = settings.planned_races.saturating_sub(race).max(1) as u64;
        let race_budget = remaining / races_left;
        let spread_scale = 0.5 * settings.decay.powi(race as i32);
        let switch_rate = settings.initial_switch_rate * settings.decay.powi(race as i32);

        // new candidates, deduplicated against elites and each other
        let mut seen: HashSet<_> = elites.iter().map(|&e| candidates[e].pair.key()).collect();
        let wanted = if race == 0 {
            settings.initial_candidates.min((race_budget / settings.first_test as u64) as usize)
        } else {
            let per = (settings.first_test + race.min(5)) as u64;
            ((race_budget / per) as usize)
                .saturating_sub(elites.len())
                .max(settings.min_new_candidates)
        };
        let mut fresh = Vec::new();
        let mut attempts = 0;
        while fresh.len() < wanted && attempts < 20 * wanted.max(1) {
            attempts += 1;
            let pair = if race == 0 {
                space.sample_uniform(&mut rng)
            } else {
                let parent = pick_parent(&elites, &mut rng);
                let spread = [0, 1, 2].map(|i| {
                    let (lo, hi) = space.real_bounds(i);
                    (hi - lo) * spread_scale
                });
                mutate_candidate(&candidates[parent].pair, space, spread, switch_rate, &mut rng)
            };
            if seen.insert(pair.key()) {
                fresh.push(pair);
            }
        }
        if fresh.is_empty() && race > 0 {
            break;
        }
        let mut alive: Vec<usize> = elites.clone();
        for pair in fresh {
            candidates.push(Candidate { pair, costs: Vec::new() });
            alive.push(candidates.len() - 1);
        }
        let elite_history = elites.iter().map(|&e| candidates[e].history()).max().unwrap_or(0);
        let elite_set: HashSet<usize> = elites.iter().copied().collect();

        let mut race_spent = 0u64;
        let mut step = 0usize;
        loop {
            let enough_steps = step >= settings.first_test;
            if enough_steps && alive.len() <= settings.max_elites {
                break;
            }
            let pending: Vec<usize> =
                alive.iter().copied().filter(|&c| candidates[c].cost(step).is_none()).collect();
            let cost = pending.len() as u64;
            // the first test is always reached if the total budget allows it
            if cost > total_budget - spent || (enough_steps && race_spent + cost > race_budget) {
                break;
            }
            let problem = stream.problem(step);
            let outcomes = settings.exec.map(&pending, |&c| {
                let run_seed = derive(seed, &[domain::RACING, c as u64, step as u64]);
                (run_seed, evaluator.hitting_time(&candidates[c].pair, problem, run_seed))
            });
            let first_new_entry = audit.len();
            for (&c, (run_seed, t)) in pending.iter().zip(outcomes) {
                let cost = run_cost(t, budget);
                candidates[c].set_cost(step, cost);
                audit.push(RacingAuditEntry {
                    race,
                    candidate: c,
                    pair: candidates[c].pair,
                    instance: step,
                    problem,
                    seed: run_seed,
                    hitting_time: t,
                    cost,
                    capped: false,
                });
            }
            spent += cost;
            race_spent += cost;
            step += 1;

            // adaptive capping against the elites' median mean cost
            if settings.capping && !elites.is_empty() && step >= settings.capping_min_instances {
                let mut elite_means: Vec<f64> =
                    elites.iter().map(|&e| candidates[e].mean_over(step)).collect();
                elite_means.sort_by(f64::total_cmp);
                let median = median_sorted(&elite_means);
                let capped: Vec<usize> = alive
                    .iter()
                    .copied()
                    .filter(|c| !elite_set.contains(c) && candidates[*c].mean_over(step) > median)
                    .collect();
                for c in &capped {
                    if let Some(entry) = audit[first_new_entry..].iter_mut().find(|e| e.candidate == *c) {
                        entry.capped = true;
                    }
                }
                alive.retain(|c| !capped.contains(c));
            }

            // statistical elimination
            if step >= settings.first_test && (step - settings.first_test) % settings.each_test == 0 {
                let costs: Vec<Vec<f64>> = alive
                    .iter()
                    .map(|&c| (0..step).map(|k| candidates[c].cost(k).unwrap_or(f64::INFINITY)).collect())
                    .collect();
                let survivors: HashSet<usize> = eliminate(&costs, settings.alpha).into_iter().collect();
                let protected = step < elite_history;
                alive = alive
                    .iter()
                    .enumerate()
                    .filter(|(i, c)| survivors.contains(i) || (protected && elite_set.contains(c)))
                    .map(|(_, &c)| c)
                    .collect();
            }
        }

        if race_spent == 0 {
            break;
        }
        let ranked_steps = step.max(1);
        alive.sort_by(|&a, &b| {
            candidates[a]
                .mean_over(ranked_steps)
                .total_cmp(&candidates[b].mean_over(ranked_steps))
                .then(a.cmp(&b))
        });
        alive.truncate(settings.max_elites);
        if !alive.is_empty() {
            elites = alive;
        }
        race += 1;
        if elites.is_empty() {
            break;
        }
    }

    let best = *elites
        .first()
        .ok_or_else(|| contract("racing finished without evaluating any candidate"))?;
    Ok(RacingResult {
        best: candidates[best].pair,
        best_candidate: best,
        predicted: candidates[best].mean_all(),
        runs_spent: spent,
        races: race,
        audit,
    })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rank-weighted choice among elites (best elite most likely).
fn pick_parent<R: Rng + ?Sized>(elites: &[usize], rng: &mut R) -> usize {
    let n = elites.len();
    let total = n * (n + 1) / 2;
    let mut ticket = rng.random_range(0..total);
    for (rank, &e) in elites.iter().enumerate() {
        let weight = n - rank;
        if ticket < weight {
            return e;
        }
        ticket -= weight;
    }
    elites[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Hyperparameters, ModuleConfiguration};

    #[test]
    fn elimination_examples() {
        assert_eq!(eliminate(&[vec![5.0; 6], vec![5.0; 6], vec![5.0; 6]], 0.05), vec![0, 1, 2]);
        assert_eq!(eliminate(&[vec![10.0; 6], vec![1000.0; 6]], 0.05), vec![0]);
        assert_eq!(eliminate(&[vec![3.0; 6]], 0.05), vec![0]);
        assert_eq!(eliminate(&[vec![1.0], vec![9.0]], 0.05), vec![0, 1]);
        let noisy = [vec![10.0, 12.0, 9.0, 11.0, 10.0], vec![11.0, 9.0, 12.0, 10.0, 10.5]];
        assert_eq!(eliminate(&noisy, 0.05), vec![0, 1]);
    }

    #[test]
    fn welch_against_hand_computation() {
        // t = 2.5 / sqrt(2/5 + 2/5), df = 8 -> one-sided p about 0.0065
        let a = vec![11.0, 13.0, 12.5, 14.0, 12.0];
        let b = vec![10.0, 9.0, 11.0, 9.5, 10.5];
        assert_eq!(eliminate(&[a.clone(), b.clone()], 0.05), vec![1]);
        assert_eq!(eliminate(&[a, b], 0.001), vec![0, 1]);
    }

    #[test]
    fn mutation_limits() {
        let space = SearchSpace::full();
        let parent = CandidatePair::new(
            ModuleConfiguration::from_id(1234).unwrap(),
            Hyperparameters::new(0.2, 0.4, 0.3).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let child = mutate_candidate(&parent, &space, [0.0; 3], 0.0, &mut rng);
            assert_eq!(child, parent);
        }
        for _ in 0..100 {
            let child = mutate_candidate(&parent, &space, [0.5; 3], 0.3, &mut rng);
            assert!(space.contains(&child));
        }
    }

    #[test]
    fn parent_choice_prefers_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let elites = [7, 8, 9];
        let mut counts = [0; 3];
        for _ in 0..6000 {
            counts[pick_parent(&elites, &mut rng) - 7] += 1;
        }
        assert!(counts[0] > counts[1] && counts[1] > counts[2]);
        assert!((counts[0] as f64 / 6000.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn stream_blocks_are_permutations() {
        let s = InstanceStream { n: 5, seed: 3 };
        for block in 0..4 {
            let mut seen: Vec<usize> = (0..5).map(|i| s.problem(block * 5 + i)).collect();
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        }
    }
}
