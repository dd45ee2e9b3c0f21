//! Hitting-time estimators, ECDFs, rankings and rank correlation.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::RunRecord;
use crate::error::{contract, Result};

/// Aggregate of a set of runs sharing one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErtSummary {
    pub n_runs: usize,
    pub n_success: usize,
    /// `None` when no run succeeded.
    pub ert: Option<f64>,
    /// Penalized average hitting time with failures counted as `penalty`.
    pub aht: f64,
    pub penalty: f64,
}

impl ErtSummary {
    /// Summarise hitting times with budget `budget` and failure penalty `penalty`.
    pub fn from_times(times: &[Option<u64>], budget: u64, penalty: f64) -> Result<Self> {
        Ok(Self {
            n_runs: times.len(),
            n_success: times.iter().filter(|t| t.is_some()).count(),
            ert: ert(times, budget)?,
            aht: aht(times, penalty)?,
            penalty,
        })
    }

    /// ERT, with an undefined value mapped to `+inf`.
    pub fn ert_or_inf(&self) -> f64 {
        self.ert.unwrap_or(f64::INFINITY)
    }

    pub fn success_rate(&self) -> f64 {
        self.n_success as f64 / self.n_runs as f64
    }
}

fn check_times(times: &[Option<u64>], limit: f64, what: &str) -> Result<()> {
    if times.is_empty() {
        return Err(contract("no hitting times given"));
    }
    if let Some(t) = times.iter().flatten().find(|&&t| t as f64 > limit) {
        return Err(contract(format!("hitting time {t} exceeds the {what} {limit}")));
    }
    Ok(())
}

/// Expected running time: budget-capped evaluations over all runs divided by
/// the number of successful runs. `None` when nothing succeeded.
pub fn ert(times: &[Option<u64>], budget: u64) -> Result<Option<f64>> {
    if budget == 0 {
        return Err(contract("budget must be positive"));
    }
    check_times(times, budget as f64, "budget")?;
    let successes = times.iter().filter(|t| t.is_some()).count();
    if successes == 0 {
        return Ok(None);
    }
    let total: f64 = times.iter().map(|t| t.unwrap_or(budget).min(budget) as f64).sum();
    Ok(Some(total / successes as f64))
}

/// Average hitting time with failures replaced by `penalty`.
pub fn aht(times: &[Option<u64>], penalty: f64) -> Result<f64> {
    check_times(times, penalty, "penalty")?;
    let total: f64 = times.iter().map(|t| t.map_or(penalty, |v| (v as f64).min(penalty))).sum();
    Ok(total / times.len() as f64)
}

/// Evaluation at which `record` first reached `target`. Records without a
/// trace only answer for targets at or above their own target, and then
/// with their own hitting time, an upper bound.
pub fn hit_time(record: &RunRecord, target: f64) -> Option<u64> {
    if !record.trace.is_empty() {
        return record.hitting_time_for(target);
    }
    if target >= record.target {
        record.hitting_time
    } else {
        None
    }
}

/// Fraction of `(run, target)` pairs hit within each budget of `budgets`.
pub fn ecdf(records: &[RunRecord], targets: &[f64], budgets: &[u64]) -> Vec<(u64, f64)> {
    let pairs = (records.len() * targets.len()) as f64;
    let mut hits: Vec<u64> = records
        .iter()
        .flat_map(|r| targets.iter().filter_map(move |&t| hit_time(r, t)))
        .collect();
    hits.sort_unstable();
    budgets
        .iter()
        .map(|&b| {
            let count = hits.partition_point(|&h| h <= b);
            (b, if pairs > 0.0 { count as f64 / pairs } else { 0.0 })
        })
        .collect()
}

/// Like [`ecdf`], but with targets given as precisions above each record's
/// optimum (`f_opt + precision`; records without a known optimum use the
/// precision as an absolute target).
pub fn ecdf_precisions(records: &[RunRecord], precisions: &[f64], budgets: &[u64]) -> Vec<(u64, f64)> {
    let pairs = (records.len() * precisions.len()) as f64;
    let mut hits: Vec<u64> = records
        .iter()
        .flat_map(|r| {
            let base = r.f_opt.unwrap_or(0.0);
            precisions.iter().filter_map(move |&p| hit_time(r, base + p))
        })
        .collect();
    hits.sort_unstable();
    budgets
        .iter()
        .map(|&b| {
            let count = hits.partition_point(|&h| h <= b);
            (b, if pairs > 0.0 { count as f64 / pairs } else { 0.0 })
        })
        .collect()
}

/// `n` precisions log-spaced from `10^hi` down to `10^lo`.
pub fn log_precision_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![10f64.powf(lo)];
    }
    (0..n).map(|k| 10f64.powf(hi + (lo - hi) * k as f64 / (n - 1) as f64)).collect()
}

/// Log-spaced budgets from 1 to `max_budget` with `per_decade` points per decade.
pub fn log_budget_grid(max_budget: u64, per_decade: usize) -> Vec<u64> {
    let max = max_budget.max(1);
    let steps = ((max as f64).log10() * per_decade as f64).ceil() as usize;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|k| 10f64.powf(k as f64 / per_decade as f64).round() as u64)
        .map(|b| b.clamp(1, max))
        .collect();
    grid.push(max);
    grid.dedup();
    grid
}

/// Points per decade of the default ECDF budget grid.
pub const ECDF_POINTS_PER_DECADE: usize = 51;

/// Kendall's tau-b between two score vectors (ties allowed), computed with
/// Knight's merge-sort algorithm. Returns NaN when either vector is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(contract(format!("kendall_tau: lengths {} and {} differ", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(contract("kendall_tau needs at least two items"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(contract("kendall_tau: NaN score"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let tie_pairs = |eq: &dyn Fn(usize, usize) -> bool, order: &[usize]| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for w in order.windows(2) {
            if eq(w[0], w[1]) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let x_ties = tie_pairs(&|a, b| x[a] == x[b], &idx);
    let joint_ties = tie_pairs(&|a, b| x[a] == x[b] && y[a] == y[b], &idx);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys);
    let order: Vec<usize> = (0..n).collect();
    let y_ties = tie_pairs(&|a, b| ys[a] == ys[b], &order);

    let total = (n * (n - 1) / 2) as f64;
    let numerator = total - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * swaps as f64;
    let denominator = ((total - x_ties as f64) * (total - y_ties as f64)).sqrt();
    Ok(if denominator == 0.0 { f64::NAN } else { numerator / denominator })
}

/// Sort `v` ascending and return the number of strictly inverted pairs.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Kendall's tau between two orderings (best first) of the same item set.
pub fn kendall_tau_orders<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(contract("rankings have different lengths"));
    }
    let pos_b: BTreeMap<&T, usize> = b.iter().enumerate().map(|(i, t)| (t, i)).collect();
    if pos_b.len() != b.len() {
        return Err(contract("ranking contains duplicate items"));
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (i, item) in a.iter().enumerate() {
        let j = pos_b
            .get(item)
            .ok_or_else(|| contract("rankings cover different item sets"))?;
        xs.push(i as f64);
        ys.push(*j as f64);
    }
    kendall_tau(&xs, &ys)
}

/// Relative absolute gap between a predicted and a verified cost.
pub fn prediction_error(predicted: f64, verified: f64) -> Result<f64> {
    signed_prediction_error(predicted, verified).map(f64::abs)
}

/// `(predicted - verified) / verified`; negative when the prediction is optimistic.
pub fn signed_prediction_error(predicted: f64, verified: f64) -> Result<f64> {
    if !predicted.is_finite() || !verified.is_finite() || verified <= 0.0 {
        return Err(contract(format!(
            "prediction error needs finite values and a positive verified cost (got {predicted}, {verified})"
        )));
    }
    Ok((predicted - verified) / verified)
}

/// One row of a [`Ranking`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry<K> {
    pub rank: usize,
    pub key: K,
    pub ert: Option<f64>,
    pub n_success: usize,
}

/// Entries ordered by ERT (undefined last), then success count descending,
/// then key ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking<K> {
    pub entries: Vec<RankEntry<K>>,
}

impl<K: Clone> Ranking<K> {
    pub fn keys(&self) -> Vec<K> {
        self.entries.iter().map(|e| e.key.clone()).collect()
    }
}

pub fn rank_variants<K: Ord + Clone>(summaries: &BTreeMap<K, ErtSummary>) -> Ranking<K> {
    let mut rows: Vec<(&K, &ErtSummary)> = summaries.iter().collect();
    rows.sort_by(|(ka, a), (kb, b)| {
        a.ert_or_inf()
            .total_cmp(&b.ert_or_inf())
            .then(b.n_success.cmp(&a.n_success))
            .then(ka.cmp(kb))
    });
    Ranking {
        entries: rows
            .into_iter()
            .enumerate()
            .map(|(i, (k, s))| RankEntry { rank: i + 1, key: k.clone(), ert: s.ert, n_success: s.n_success })
            .collect(),
    }
}

/// Minimum ERT over `repeats` subsamples of `k` runs per instance drawn
/// without replacement. `None` when every subsample has zero successes.
pub fn resample_min_ert(
    per_instance: &[Vec<Option<u64>>],
    k: usize,
    repeats: usize,
    budget: u64,
    seed: u64,
) -> Result<Option<f64>> {
    if per_instance.is_empty() || repeats == 0 || k == 0 {
        return Err(contract("resample_min_ert needs instances, k >= 1 and repeats >= 1"));
    }
    let shortest = per_instance.iter().map(Vec::len).min().unwrap_or(0);
    if k > shortest {
        return Err(contract(format!("cannot draw {k} runs from an instance with {shortest}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    let mut pooled = Vec::with_capacity(k * per_instance.len());
    for _ in 0..repeats {
        pooled.clear();
        for times in per_instance {
            pooled.extend(sample(&mut rng, times.len(), k).into_iter().map(|i| times[i]));
        }
        if let Some(e) = ert(&pooled, budget)? {
            best = Some(best.map_or(e, |b| b.min(e)));
        }
    }
    Ok(best)
}
