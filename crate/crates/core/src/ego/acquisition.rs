//! Expected improvement and its maximization over the mixed space.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::forest::ForestModel;
use crate::space::{CandidatePair, SearchSpace, MODULE_COUNT};

/// Expected improvement of a Gaussian prediction below `best` (minimization).
/// With zero spread this is the hinge `max(best - mean, 0)`.
pub fn expected_improvement(mean: f64, spread: f64, best: f64) -> f64 {
    let gap = best - mean;
    if spread <= 0.0 || !spread.is_finite() {
        return gap.max(0.0);
    }
    let z = gap / spread;
    let n = Normal::standard();
    (gap * n.cdf(z) + spread * n.pdf(z)).max(0.0)
}

/// Settings of the mixed-integer evolution strategy maximizing EI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSettings {
    pub population: usize,
    pub generations: usize,
    /// Per-module resampling probability; `0` means `1/11`.
    pub categorical_rate: f64,
    /// Initial real step size relative to the axis width.
    pub initial_step: f64,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        Self { population: 20, generations: 50, categorical_rate: 0.0, initial_step: 0.2 }
    }
}

#[derive(Clone, Copy)]
struct Individual {
    pair: CandidatePair,
    steps: [f64; 3],
    score: f64,
}

/// Up to `n_points` distinct pairs with the highest expected improvement
/// found by a (mu + lambda) strategy. Pairs whose key is in `exclude` are
/// never returned. `starts` seed the initial population before uniform draws.
#[allow(clippy::too_many_arguments)]
pub fn propose(
    model: &ForestModel,
    space: &SearchSpace,
    best: f64,
    starts: &[CandidatePair],
    exclude: &HashSet<(u16, u64, u64, u64)>,
    n_points: usize,
    settings: &AcquisitionSettings,
    seed: u64,
) -> Vec<CandidatePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pop = settings.population.max(2);
    let rate = if settings.categorical_rate > 0.0 { settings.categorical_rate } else { 1.0 / MODULE_COUNT as f64 };
    let tau_global = 1.0 / (2.0 * 3.0f64).sqrt();
    let tau_local = 1.0 / (2.0 * 3.0f64.sqrt()).sqrt();
    let widths: [f64; 3] = std::array::from_fn(|i| {
        let (lo, hi) = space.real_bounds(i);
        hi - lo
    });
    let score = |pair: &CandidatePair| {
        let (mean, spread) = model.predict(&pair.features());
        expected_improvement(mean, spread, best)
    };
    let fresh = |pair: CandidatePair, steps: [f64; 3]| Individual { pair, steps, score: score(&pair) };
    let initial_steps: [f64; 3] = std::array::from_fn(|i| settings.initial_step * widths[i]);

    let mut parents: Vec<Individual> = starts.iter().take(pop).map(|&p| fresh(p, initial_steps)).collect();
    while parents.len() < pop {
        let p = space.sample_uniform(&mut rng);
        parents.push(fresh(p, initial_steps));
    }
    let mut found: Vec<Individual> = Vec::new();
    let mut found_keys = HashSet::new();
    let mut remember = |ind: &Individual, found: &mut Vec<Individual>| {
        let key = ind.pair.key();
        if !exclude.contains(&key) && found_keys.insert(key) {
            found.push(*ind);
        }
    };
    for ind in &parents {
        remember(ind, &mut found);
    }

    for _ in 0..settings.generations {
        let mut offspring = Vec::with_capacity(pop);
        for _ in 0..pop {
            let a = parents[rng.random_range(0..parents.len())];
            let b = parents[rng.random_range(0..parents.len())];
            let mut modules = a.pair.config.activations();
            let other = b.pair.config.activations();
            for (k, slot) in modules.iter_mut().enumerate() {
                if rng.random::<bool>() {
                    *slot = other[k];
                }
                let values = space.module_values(k);
                if values.len() > 1 && rng.random::<f64>() < rate {
                    let alternatives: Vec<u8> = values.iter().copied().filter(|v| v != slot).collect();
                    *slot = alternatives[rng.random_range(0..alternatives.len())];
                }
            }
            let ha = a.pair.hyper;
            let hb = b.pair.hyper;
            let xa = [ha.c1, ha.cc, ha.c_mu];
            let xb = [hb.c1, hb.cc, hb.c_mu];
            let global: f64 = rng.sample(StandardNormal);
            let mut reals = [0.0; 3];
            let mut steps = [0.0; 3];
            for i in 0..3 {
                let (lo, hi) = space.real_bounds(i);
                let local: f64 = rng.sample(StandardNormal);
                let base_step = 0.5 * (a.steps[i] + b.steps[i]);
                steps[i] = (base_step * (tau_global * global + tau_local * local).exp())
                    .clamp(1e-6 * widths[i].max(1e-12), widths[i].max(1e-12));
                let centre = if rng.random::<bool>() { xa[i] } else { xb[i] };
                let mut v = centre + steps[i] * rng.sample::<f64, _>(StandardNormal);
                // reflect into the box
                if hi > lo {
                    let span = hi - lo;
                    let mut t = (v - lo).rem_euclid(2.0 * span);
                    if t > span {
                        t = 2.0 * span - t;
                    }
                    v = lo + t;
                } else {
                    v = lo;
                }
                reals[i] = v;
            }
            let child = fresh(space.make_pair(modules, reals), steps);
            remember(&child, &mut found);
            offspring.push(child);
        }
        parents.extend(offspring);
        parents.sort_by(|x, y| y.score.total_cmp(&x.score));
        parents.truncate(pop);
    }

    found.sort_by(|x, y| y.score.total_cmp(&x.score));
    found.into_iter().take(n_points).map(|i| i.pair).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_cases() {
        assert_eq!(expected_improvement(1.0, 0.0, 3.0), 2.0);
        assert_eq!(expected_improvement(4.0, 0.0, 3.0), 0.0);
        // z = 0: spread * phi(0)
        let v = expected_improvement(2.0, 1.0, 2.0);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!(expected_improvement(2.0, 2.0, 2.0) > v);
        assert!(expected_improvement(1.0, 1.0, 2.0) > v);
    }
}
