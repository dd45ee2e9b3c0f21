//! Post-hoc analysis of run logs: ECDF curves, per-instance rankings with
//! their Kendall correlation matrix, and rankings per function.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{LoggedRun, Stage};
use crate::engine::RunRecord;
use crate::error::{Error, Result};
use crate::evaluator::FAILURE_PENALTY_FACTOR;
use crate::metrics::{
    ecdf_precisions, kendall_tau, log_budget_grid, log_precision_grid, rank_variants, ErtSummary, Ranking,
    ECDF_POINTS_PER_DECADE,
};

/// Identity of a pair in the logs: ConfID and the bit patterns of c1, cc, cmu.
pub type PairKey = (u16, u64, u64, u64);

fn pair_key(r: &RunRecord) -> PairKey {
    r.pair.key()
}

/// Default ECDF targets: 51 precisions from 1e2 down to 1e-8.
pub fn default_precisions() -> Vec<f64> {
    log_precision_grid(2.0, -8.0, 51)
}

fn summaries(records: &[&RunRecord]) -> Result<BTreeMap<PairKey, ErtSummary>> {
    let mut times: BTreeMap<PairKey, (Vec<Option<u64>>, u64)> = BTreeMap::new();
    for r in records {
        let entry = times.entry(pair_key(r)).or_default();
        entry.0.push(r.hitting_time);
        entry.1 = entry.1.max(r.budget);
    }
    times
        .into_iter()
        .map(|(k, (t, b))| Ok((k, ErtSummary::from_times(&t, b, (FAILURE_PENALTY_FACTOR * b) as f64)?)))
        .collect()
}

/// Per-instance rankings of one function and the Kendall tau-b matrix
/// between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnalysis {
    pub fid: u32,
    pub instances: Vec<u32>,
    pub rankings: Vec<Ranking<PairKey>>,
    /// Symmetric with unit diagonal; `NaN` where fewer than two shared pairs
    /// or no variation make tau undefined.
    pub matrix: Vec<Vec<f64>>,
}

/// Rank pairs by ERT on every instance and correlate the rankings.
pub fn instance_analysis(records: &[RunRecord]) -> Result<Vec<InstanceAnalysis>> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut by_fid: BTreeMap<u32, BTreeMap<u32, Vec<&RunRecord>>> = BTreeMap::new();
    for r in records {
        by_fid.entry(r.fid).or_default().entry(r.instance).or_default().push(r);
    }
    let mut out = Vec::new();
    for (fid, per_instance) in by_fid {
        let instances: Vec<u32> = per_instance.keys().copied().collect();
        let sums: Vec<BTreeMap<PairKey, ErtSummary>> =
            per_instance.values().map(|rs| summaries(rs)).collect::<Result<_>>()?;
        let n = instances.len();
        let mut matrix = vec![vec![f64::NAN; n]; n];
        for a in 0..n {
            matrix[a][a] = 1.0;
            for b in a + 1..n {
                let shared: Vec<&PairKey> = sums[a].keys().filter(|k| sums[b].contains_key(k)).collect();
                let tau = if shared.len() < 2 {
                    f64::NAN
                } else {
                    let x: Vec<f64> = shared.iter().map(|k| sums[a][k].ert_or_inf()).collect();
                    let y: Vec<f64> = shared.iter().map(|k| sums[b][k].ert_or_inf()).collect();
                    kendall_tau(&x, &y)?
                };
                matrix[a][b] = tau;
                matrix[b][a] = tau;
            }
        }
        out.push(InstanceAnalysis { fid, instances, rankings: sums.iter().map(rank_variants).collect(), matrix });
    }
    Ok(out)
}

/// One point of an ECDF curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfRow {
    pub fid: u32,
    pub stage: Stage,
    /// Empty for the pooled enumeration curve.
    pub confid: Option<u16>,
    pub c1: Option<f64>,
    pub cc: Option<f64>,
    pub cmu: Option<f64>,
    pub budget: u64,
    pub fraction: f64,
}

/// ECDF curves: one per function, stage and pair, with the enumeration
/// stage pooled into a single curve per function.
pub fn ecdf_rows(runs: &[LoggedRun], precisions: &[f64]) -> Vec<EcdfRow> {
    type Group = (u32, Stage, Option<PairKey>);
    let mut groups: BTreeMap<Group, Vec<RunRecord>> = BTreeMap::new();
    for r in runs {
        let key = if r.stage == Stage::Enumeration { None } else { Some(pair_key(&r.record)) };
        groups.entry((r.record.fid, r.stage, key)).or_default().push(r.record.clone());
    }
    let mut rows = Vec::new();
    for ((fid, stage, key), records) in groups {
        let max_budget = records.iter().map(|r| r.budget).max().unwrap_or(1);
        let grid = log_budget_grid(max_budget, ECDF_POINTS_PER_DECADE);
        let pair = key.map(|_| records[0].pair);
        for (budget, fraction) in ecdf_precisions(&records, precisions, &grid) {
            rows.push(EcdfRow {
                fid,
                stage,
                confid: pair.map(|p| p.config.id().get()),
                c1: pair.map(|p| p.hyper.c1),
                cc: pair.map(|p| p.hyper.cc),
                cmu: pair.map(|p| p.hyper.c_mu),
                budget,
                fraction,
            });
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KendallRow {
    pub fid: u32,
    pub instance_a: u32,
    pub instance_b: u32,
    pub tau: f64,
}

pub fn kendall_rows(analyses: &[InstanceAnalysis]) -> Vec<KendallRow> {
    let mut rows = Vec::new();
    for a in analyses {
        for (i, &ia) in a.instances.iter().enumerate() {
            for (j, &ib) in a.instances.iter().enumerate() {
                rows.push(KendallRow { fid: a.fid, instance_a: ia, instance_b: ib, tau: a.matrix[i][j] });
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub fid: u32,
    pub stage: Stage,
    pub rank: usize,
    pub confid: u16,
    pub c1: f64,
    pub cc: f64,
    pub cmu: f64,
    pub n_runs: usize,
    pub n_success: usize,
    pub ert: Option<f64>,
}

/// ERT ranking of every pair pooled over instances, per function and stage.
pub fn ranking_rows(runs: &[LoggedRun]) -> Result<Vec<RankingRow>> {
    let mut groups: BTreeMap<(u32, Stage), Vec<&RunRecord>> = BTreeMap::new();
    let mut pairs: BTreeMap<PairKey, crate::space::CandidatePair> = BTreeMap::new();
    for r in runs {
        groups.entry((r.record.fid, r.stage)).or_default().push(&r.record);
        pairs.entry(pair_key(&r.record)).or_insert(r.record.pair);
    }
    let mut rows = Vec::new();
    for ((fid, stage), records) in groups {
        let sums = summaries(&records)?;
        for e in rank_variants(&sums).entries {
            let p = pairs[&e.key];
            rows.push(RankingRow {
                fid,
                stage,
                rank: e.rank,
                confid: p.config.id().get(),
                c1: p.hyper.c1,
                cc: p.hyper.cc,
                cmu: p.hyper.c_mu,
                n_runs: sums[&e.key].n_runs,
                n_success: e.n_success,
                ert: e.ert,
            });
        }
    }
    Ok(rows)
}

/// All analysis tables of a log.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub ecdf: Vec<EcdfRow>,
    pub kendall: Vec<KendallRow>,
    pub ranking: Vec<RankingRow>,
}

pub fn analyze(runs: &[LoggedRun], precisions: &[f64]) -> Result<Analysis> {
    if runs.is_empty() {
        return Err(Error::NoRecords);
    }
    // rankings across instances compare like with like: prefer enumeration data
    let stages: BTreeSet<Stage> = runs.iter().map(|r| r.stage).collect();
    let basis: Vec<RunRecord> = runs
        .iter()
        .filter(|r| !stages.contains(&Stage::Enumeration) || r.stage == Stage::Enumeration)
        .map(|r| r.record.clone())
        .collect();
    Ok(Analysis {
        ecdf: ecdf_rows(runs, precisions),
        kendall: kendall_rows(&instance_analysis(&basis)?),
        ranking: ranking_rows(runs)?,
    })
}
