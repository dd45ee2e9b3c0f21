//! Sequential model-based tuning: a random-forest surrogate of the log ERT
//! and expected-improvement proposals over the joint space.
//!
//! Budget is counted in optimizer runs; every tuner evaluation of a pair
//! costs `runs_per_eval` runs spread round-robin over the instances.

pub mod acquisition;
pub mod forest;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use acquisition::{expected_improvement, propose, AcquisitionSettings};
pub use forest::{fit_forest, ForestModel, ForestSettings, Tree};

use crate::error::{contract, Result};
use crate::evaluator::{RunEvaluator, FAILURE_PENALTY_FACTOR};
use crate::exec::Exec;
use crate::metrics::ert;
use crate::seed::{derive, domain};
use crate::space::{sample_lhs, CandidatePair, SearchSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgoSettings {
    /// Upper limit of the initial Latin hypercube design.
    pub initial_design: usize,
    /// Share of the evaluations spent on the initial design when the
    /// budget is too small for the full design.
    pub initial_fraction: f64,
    pub forest: ForestSettings,
    pub acquisition: AcquisitionSettings,
    pub exec: Exec,
}

impl Default for EgoSettings {
    fn default() -> Self {
        Self {
            initial_design: 250,
            initial_fraction: 0.25,
            forest: ForestSettings::default(),
            acquisition: AcquisitionSettings::default(),
            exec: Exec::default(),
        }
    }
}

impl EgoSettings {
    /// Size of the initial design for `n_evals` tuner evaluations.
    pub fn initial_size(&self, n_evals: usize) -> usize {
        let scaled = (n_evals as f64 * self.initial_fraction).floor() as usize;
        self.initial_design.min(scaled.max(2)).min(n_evals.saturating_sub(1))
    }
}

/// One tuner evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoAuditEntry {
    pub index: usize,
    #[serde(flatten)]
    pub pair: CandidatePair,
    pub instances: Vec<usize>,
    pub seeds: Vec<u64>,
    pub hitting_times: Vec<Option<u64>>,
    /// Observed ERT, or the all-failure sentinel.
    pub ert: f64,
    pub all_failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoResult {
    pub best: CandidatePair,
    /// Tuner-side ERT of `best`.
    pub predicted_ert: f64,
    pub runs_spent: u64,
    pub evaluations: usize,
    pub audit: Vec<EgoAuditEntry>,
}

impl EgoResult {
    pub fn distinct_confids(&self) -> usize {
        crate::racing::distinct_confids(self.audit.iter().map(|e| e.pair))
    }
}

/// ERT recorded for a pair that never hit the target.
pub fn all_failure_sentinel(run_budget: u64, runs_per_eval: usize) -> f64 {
    (FAILURE_PENALTY_FACTOR * run_budget) as f64 * runs_per_eval as f64
}

/// Smallest run budget `tune_ego` accepts.
pub fn minimum_budget(runs_per_eval: usize) -> u64 {
    3 * runs_per_eval as u64
}

pub fn tune_ego(
    space: &SearchSpace,
    evaluator: &dyn RunEvaluator,
    total_budget: u64,
    runs_per_eval: usize,
    settings: &EgoSettings,
    seed: u64,
) -> Result<EgoResult> {
    if runs_per_eval == 0 {
        return Err(contract("ego: runs_per_eval must be positive"));
    }
    if evaluator.n_instances() == 0 {
        return Err(contract("ego needs at least one instance"));
    }
    if total_budget < minimum_budget(runs_per_eval) {
        return Err(contract(format!(
            "ego budget {total_budget} is below {} (three evaluations of {runs_per_eval} runs)",
            minimum_budget(runs_per_eval)
        )));
    }
    let n_evals = (total_budget / runs_per_eval as u64) as usize;
    let n_init = settings.initial_size(n_evals);
    let mask = space.categorical_mask();
    let run_budget = evaluator.run_budget();
    let sentinel = all_failure_sentinel(run_budget, runs_per_eval);

    let evaluate = |index: usize, pair: CandidatePair| -> Result<EgoAuditEntry> {
        let instances: Vec<usize> = (0..runs_per_eval).map(|r| r % evaluator.n_instances()).collect();
        let seeds: Vec<u64> =
            (0..runs_per_eval).map(|r| derive(seed, &[domain::EGO, index as u64, r as u64])).collect();
        let hitting_times = settings
            .exec
            .map_range(runs_per_eval, |r| evaluator.hitting_time(&pair, instances[r], seeds[r]));
        let observed = ert(&hitting_times, run_budget)?;
        Ok(EgoAuditEntry {
            index,
            pair,
            instances,
            seeds,
            hitting_times,
            ert: observed.unwrap_or(sentinel),
            all_failed: observed.is_none(),
        })
    };

    let design = sample_lhs(space, n_init, derive(seed, &[domain::EGO, u64::MAX]))?;
    let mut audit = Vec::with_capacity(n_evals);
    let mut keys = HashSet::new();
    for pair in design {
        keys.insert(pair.key());
        audit.push(evaluate(audit.len(), pair)?);
    }

    while audit.len() < n_evals {
        let xs: Vec<Vec<f64>> = audit.iter().map(|e| e.pair.features().to_vec()).collect();
        let ys: Vec<f64> = audit.iter().map(|e| e.ert.ln()).collect();
        let step = audit.len() as u64;
        let model = fit_forest(&xs, &ys, &mask, &settings.forest, derive(seed, &[domain::EGO, u64::MAX - 1, step]), settings.exec)?;
        let best_log = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut ranked: Vec<&EgoAuditEntry> = audit.iter().collect();
        ranked.sort_by(|a, b| a.ert.total_cmp(&b.ert));
        let starts: Vec<CandidatePair> =
            ranked.iter().take(settings.acquisition.population / 2).map(|e| e.pair).collect();
        let proposal = propose(
            &model,
            space,
            best_log,
            &starts,
            &keys,
            1,
            &settings.acquisition,
            derive(seed, &[domain::EGO, u64::MAX - 2, step]),
        );
        let Some(pair) = proposal.into_iter().next().or_else(|| {
            space
                .sample_uniform_n(100, derive(seed, &[domain::EGO, u64::MAX - 3, step]))
                .into_iter()
                .find(|p| !keys.contains(&p.key()))
        }) else {
            break;
        };
        keys.insert(pair.key());
        audit.push(evaluate(audit.len(), pair)?);
    }

    let best = audit
        .iter()
        .min_by(|a, b| a.ert.total_cmp(&b.ert).then(a.index.cmp(&b.index)))
        .expect("at least one evaluation");
    Ok(EgoResult {
        best: best.pair,
        predicted_ert: best.ert,
        runs_spent: (audit.len() * runs_per_eval) as u64,
        evaluations: audit.len(),
        audit,
    })
}
