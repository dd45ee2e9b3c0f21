//! Experiment drivers: complete enumeration, the two sequential methods
//! (select a variant, then tune its learning rates), the two integrated
//! tuners over the joint space, verification and the follow-up studies.
//!
//! All budgets are counted in optimizer runs. Every stage draws its seeds
//! from the master seed and a stage tag, so verification runs never reuse a
//! tuning seed and results do not depend on the execution mode.

pub mod analysis;
pub mod output;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{is_multimodal, make_problem, FUNCTION_IDS};
use crate::ego::{self, tune_ego, EgoSettings};
use crate::engine::RunRecord;
use crate::error::{contract, Error, Result};
use crate::evaluator::{ProblemSet, FAILURE_PENALTY_FACTOR};
use crate::exec::Exec;
use crate::metrics::{ert, prediction_error, rank_variants, signed_prediction_error, ErtSummary};
use crate::racing::{tune_racing, RacingSettings};
use crate::seed::{derive, domain};
use crate::space::{CandidatePair, ConfId, ModuleConfiguration, SearchSpace};

pub use analysis::{analyze, instance_analysis, InstanceAnalysis};
pub use output::{run_experiment, write_outputs};

/// Stand-in list of ten frequently used variants for the standard set:
/// the default CMA-ES and nine named module combinations.
pub const COMMON_IDS: [u16; 10] = [0, 1, 2, 3, 594, 1152, 2304, 2306, 3457, 3458];

/// Size of the standard set and its rank windows.
pub const STANDARD_SET_SIZE: usize = 30;
const TOP_COUNT: usize = 10;
const MIDDLE_RANKS: (usize, usize) = (200, 210);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NaiveSequential,
    StandardSequential,
    IntegratedRacing,
    IntegratedEgo,
    EnumerationOnly,
}

impl Method {
    pub fn needs_tuner_budget(self) -> bool {
        self != Method::EnumerationOnly
    }

    pub fn needs_enumeration(self) -> bool {
        matches!(self, Method::NaiveSequential | Method::StandardSequential | Method::EnumerationOnly)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationSpec {
    /// Configurations to enumerate; all 4,608 when absent.
    #[serde(default)]
    pub configs: Option<Vec<u16>>,
    #[serde(default = "default_runs_per_instance")]
    pub runs_per_instance: usize,
}

impl Default for EnumerationSpec {
    fn default() -> Self {
        Self { configs: None, runs_per_instance: default_runs_per_instance() }
    }
}

fn default_runs_per_instance() -> usize {
    5
}
fn default_fids() -> Vec<u32> {
    vec![1]
}
fn default_instances() -> Vec<u32> {
    (1..=5).collect()
}
fn default_dim() -> usize {
    5
}
fn default_verification_runs() -> usize {
    50
}
fn default_runs_per_eval() -> usize {
    25
}
fn default_common_ids() -> Vec<u16> {
    COMMON_IDS.to_vec()
}

/// One experiment, as read from a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub method: Method,
    #[serde(default = "default_fids")]
    pub fids: Vec<u32>,
    #[serde(default = "default_instances")]
    pub instances: Vec<u32>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Evaluations per optimizer run.
    pub run_budget: u64,
    /// Optimizer runs available to the tuner; per variant for the
    /// standard sequential method.
    #[serde(default)]
    pub tuner_budget: Option<u64>,
    #[serde(default = "default_verification_runs")]
    pub verification_runs: usize,
    /// Target precision; 1e-8 on unimodal and 1e-1 on multimodal functions when absent.
    #[serde(default)]
    pub precision: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Runs per tuner evaluation of the model-based tuner.
    #[serde(default = "default_runs_per_eval")]
    pub runs_per_eval: usize,
    #[serde(default)]
    pub enumeration: EnumerationSpec,
    #[serde(default = "default_common_ids")]
    pub common_ids: Vec<u16>,
    /// Explicit variant set for the standard sequential method, replacing
    /// the rank-based selection.
    #[serde(default)]
    pub standard_set: Option<Vec<u16>>,
    #[serde(default)]
    pub racing: RacingSettings,
    #[serde(default)]
    pub ego: EgoSettings,
    #[serde(default)]
    pub exec: Exec,
    /// Also verify the default CMA-ES with the verification seeds.
    #[serde(default)]
    pub verify_default: bool,
}

impl ExperimentSpec {
    /// Desk-scale defaults for `method`.
    pub fn new(method: Method, run_budget: u64, tuner_budget: Option<u64>) -> Self {
        Self {
            method,
            fids: default_fids(),
            instances: default_instances(),
            dim: default_dim(),
            run_budget,
            tuner_budget,
            verification_runs: default_verification_runs(),
            precision: None,
            seed: 0,
            runs_per_eval: default_runs_per_eval(),
            enumeration: EnumerationSpec::default(),
            common_ids: default_common_ids(),
            standard_set: None,
            racing: RacingSettings::default(),
            ego: EgoSettings::default(),
            exec: Exec::default(),
            verify_default: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.fids.is_empty() {
            return bad("fids: at least one function id is required".into());
        }
        if let Some(f) = self.fids.iter().find(|f| !FUNCTION_IDS.contains(f)) {
            return bad(format!("fids: unsupported function id {f}"));
        }
        if self.instances.is_empty() {
            return bad("instances: at least one instance is required".into());
        }
        if self.dim < 2 {
            return bad(format!("dim: must be at least 2, got {}", self.dim));
        }
        if self.run_budget == 0 {
            return bad("run_budget: must be positive".into());
        }
        if self.verification_runs == 0 {
            return bad("verification_runs: must be at least 1".into());
        }
        if self.runs_per_eval == 0 {
            return bad("runs_per_eval: must be at least 1".into());
        }
        if self.enumeration.runs_per_instance == 0 {
            return bad("enumeration.runs_per_instance: must be at least 1".into());
        }
        if let Some(p) = self.precision {
            if !(p > 0.0 && p.is_finite()) {
                return bad(format!("precision: must be positive and finite, got {p}"));
            }
        }
        let id_lists = [
            ("enumeration.configs", self.enumeration.configs.as_deref()),
            ("common_ids", Some(self.common_ids.as_slice())),
            ("standard_set", self.standard_set.as_deref()),
        ];
        for (name, ids) in id_lists {
            if let Some(ids) = ids {
                if let Some(&id) = ids.iter().find(|&&id| ConfId::new(i64::from(id)).is_err()) {
                    return bad(format!("{name}: invalid configuration id {id} (allowed 0..=4607)"));
                }
                if name != "common_ids" && ids.is_empty() {
                    return bad(format!("{name}: must not be empty"));
                }
            }
        }
        if self.method.needs_tuner_budget() {
            let Some(budget) = self.tuner_budget else {
                return bad(format!("tuner_budget: required for method {:?}", self.method));
            };
            let minimum = match self.method {
                Method::IntegratedRacing => self.racing.minimum_budget(),
                _ => ego::minimum_budget(self.runs_per_eval),
            };
            if budget < minimum {
                return bad(format!("tuner_budget: {budget} is below the method minimum {minimum}"));
            }
        }
        Ok(())
    }

    pub fn precision_for(&self, fid: u32) -> f64 {
        self.precision.unwrap_or(if is_multimodal(fid) { 1e-1 } else { 1e-8 })
    }

    pub fn problem_set(&self, fid: u32) -> Result<ProblemSet> {
        let problems = self
            .instances
            .iter()
            .map(|&i| make_problem(fid, i, self.dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemSet::new(problems, self.precision_for(fid), self.run_budget))
    }

    fn function_seed(&self, fid: u32) -> u64 {
        derive(self.seed, &[u64::from(fid)])
    }

    fn racing_settings(&self) -> RacingSettings {
        RacingSettings { exec: self.exec, ..self.racing.clone() }
    }

    fn ego_settings(&self) -> EgoSettings {
        EgoSettings { exec: self.exec, ..self.ego.clone() }
    }

    fn enumeration_ids(&self) -> Vec<ConfId> {
        match &self.enumeration.configs {
            Some(ids) => ids.iter().map(|&i| ConfId::new(i64::from(i)).expect("validated")).collect(),
            None => ConfId::all().collect(),
        }
    }
}

/// Optimizer runs consumed by each stage of a method.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLedger {
    pub enumeration: u64,
    pub tuning: u64,
    pub verification: u64,
    /// Verification of the default CMA-ES, when requested.
    pub baseline: u64,
}

impl RunLedger {
    pub fn total(&self) -> u64 {
        self.enumeration + self.tuning + self.verification + self.baseline
    }

    fn add(&mut self, other: &RunLedger) {
        self.enumeration += other.enumeration;
        self.tuning += other.tuning;
        self.verification += other.verification;
        self.baseline += other.baseline;
    }
}

/// Outcome of a method on one function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionResult {
    pub fid: u32,
    pub best: CandidatePair,
    /// The tuner's own ERT estimate of `best`; `None` if it saw no success.
    pub predicted_ert: Option<f64>,
    pub verified: ErtSummary,
    pub prediction_error: Option<f64>,
    pub signed_prediction_error: Option<f64>,
    pub runs: RunLedger,
    /// Distinct variants evaluated by the tuner.
    pub distinct_confids: usize,
    /// Tuner evaluations (model-based) or candidates (racing).
    pub tuner_points: usize,
    /// The tuner's own hitting times for `best`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tuner_times: Vec<Option<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_verified: Option<ErtSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub functions: Vec<FunctionResult>,
    pub runs: RunLedger,
}

impl MethodResult {
    pub fn runs_spent(&self) -> u64 {
        self.runs.total()
    }
}

/// Pipeline stage that produced a run record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Enumeration,
    Verification,
    Baseline,
    #[serde(other)]
    Other,
}

/// One line of `runs.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedRun {
    #[serde(default = "other_stage")]
    pub stage: Stage,
    #[serde(flatten)]
    pub record: RunRecord,
}

fn other_stage() -> Stage {
    Stage::Other
}

/// One row of `ert_table.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErtRow {
    pub fid: u32,
    pub stage: Stage,
    pub confid: u16,
    pub c1: f64,
    pub cc: f64,
    pub cmu: f64,
    pub n_runs: usize,
    pub n_success: usize,
    pub ert: Option<f64>,
    pub aht: f64,
}

impl ErtRow {
    fn new(fid: u32, stage: Stage, pair: &CandidatePair, s: &ErtSummary) -> Self {
        Self {
            fid,
            stage,
            confid: pair.config.id().get(),
            c1: pair.hyper.c1,
            cc: pair.hyper.cc,
            cmu: pair.hyper.c_mu,
            n_runs: s.n_runs,
            n_success: s.n_success,
            ert: s.ert,
            aht: s.aht,
        }
    }
}

/// Everything a method produced: the summary plus the logs behind it.
#[derive(Clone, Debug, Default)]
pub struct MethodRun {
    pub result: Option<MethodResult>,
    pub records: Vec<LoggedRun>,
    /// Tuner audit lines, one JSON object per tuner run or evaluation.
    pub audit: Vec<serde_json::Value>,
    pub ert_rows: Vec<ErtRow>,
}

impl MethodRun {
    pub fn result(&self) -> &MethodResult {
        self.result.as_ref().expect("method run without result")
    }
}

fn penalty(budget: u64) -> f64 {
    (FAILURE_PENALTY_FACTOR * budget) as f64
}

/// Seed of verification run `r`.
pub fn verification_seed(seed: u64, r: usize) -> u64 {
    derive(seed, &[domain::VERIFY, r as u64])
}

/// `n_runs` fresh runs of `pair`, assigned round-robin over the instances.
pub fn verify_records(
    pair: &CandidatePair,
    problems: &ProblemSet,
    n_runs: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<RunRecord>> {
    if n_runs == 0 {
        return Err(contract("verification needs at least one run"));
    }
    if problems.problems.is_empty() {
        return Err(contract("verification needs at least one instance"));
    }
    let n = problems.problems.len();
    Ok(exec.map_range(n_runs, |r| problems.record(pair, r % n, verification_seed(seed, r))))
}

/// ERT summary of `n_runs` verification runs.
pub fn verify(pair: &CandidatePair, problems: &ProblemSet, n_runs: usize, seed: u64, exec: Exec) -> Result<ErtSummary> {
    let records = verify_records(pair, problems, n_runs, seed, exec)?;
    summarize(&records, problems.budget)
}

fn summarize(records: &[RunRecord], budget: u64) -> Result<ErtSummary> {
    let times: Vec<Option<u64>> = records.iter().map(|r| r.hitting_time).collect();
    ErtSummary::from_times(&times, budget, penalty(budget))
}

/// Default-hyperparameter runs of every id: `runs_per_instance` per
/// instance. Returns the per-variant summaries and the runs (without traces).
pub fn enumerate_static(
    configs: &[ConfId],
    problems: &ProblemSet,
    runs_per_instance: usize,
    seed: u64,
    exec: Exec,
) -> Result<(BTreeMap<ConfId, ErtSummary>, Vec<RunRecord>)> {
    if configs.is_empty() {
        return Err(contract("enumeration needs at least one configuration"));
    }
    if runs_per_instance == 0 || problems.problems.is_empty() {
        return Err(contract("enumeration needs instances and at least one run per instance"));
    }
    let dim = problems.problems[0].dim;
    let n_inst = problems.problems.len();
    let per_config = n_inst * runs_per_instance;
    let jobs: Vec<(ConfId, usize, usize)> = configs
        .iter()
        .flat_map(|&c| (0..n_inst).flat_map(move |i| (0..runs_per_instance).map(move |r| (c, i, r))))
        .collect();
    let records = exec.map(&jobs, |&(c, i, r)| {
        let pair = CandidatePair::with_defaults(ModuleConfiguration::from_id(i64::from(c.get())).expect("valid id"), dim);
        let s = derive(seed, &[domain::ENUMERATE, u64::from(c.get()), i as u64, r as u64]);
        problems.record(&pair, i, s).without_trace()
    });
    let mut summaries = BTreeMap::new();
    for (k, &c) in configs.iter().enumerate() {
        let chunk = &records[k * per_config..(k + 1) * per_config];
        summaries.insert(c, summarize(chunk, problems.budget)?);
    }
    Ok((summaries, records))
}

/// The 30-variant standard set: the 10 best, the 10 ranked 200 to 209 and
/// the common list, deduplicated and backfilled from rank 211 onward.
pub fn select_standard_set(summaries: &BTreeMap<ConfId, ErtSummary>, common_ids: &[ConfId]) -> Result<Vec<ConfId>> {
    if summaries.len() < MIDDLE_RANKS.1 {
        return Err(contract(format!(
            "standard set needs at least {} ranked variants, got {}",
            MIDDLE_RANKS.1,
            summaries.len()
        )));
    }
    let ranked = rank_variants(summaries).keys();
    let mut set: Vec<ConfId> = Vec::with_capacity(STANDARD_SET_SIZE);
    let push = |id: ConfId, set: &mut Vec<ConfId>| {
        if !set.contains(&id) && set.len() < STANDARD_SET_SIZE {
            set.push(id);
        }
    };
    for &id in ranked.iter().take(TOP_COUNT) {
        push(id, &mut set);
    }
    for &id in &ranked[MIDDLE_RANKS.0 - 1..MIDDLE_RANKS.1 - 1] {
        push(id, &mut set);
    }
    for &id in common_ids {
        push(id, &mut set);
    }
    for &id in &ranked[MIDDLE_RANKS.1..] {
        if set.len() == STANDARD_SET_SIZE {
            break;
        }
        push(id, &mut set);
    }
    Ok(set)
}

fn predicted_errors(predicted: Option<f64>, verified: &ErtSummary) -> (Option<f64>, Option<f64>) {
    match (predicted, verified.ert) {
        (Some(p), Some(v)) => (prediction_error(p, v).ok(), signed_prediction_error(p, v).ok()),
        _ => (None, None),
    }
}

struct Tuned {
    pair: CandidatePair,
    predicted: Option<f64>,
    runs: u64,
    distinct: usize,
    points: usize,
    times: Vec<Option<u64>>,
    audit: Vec<serde_json::Value>,
}

fn tag_audit<T: Serialize>(fid: u32, tuner: &str, variant: Option<u16>, entries: &[T]) -> Vec<serde_json::Value> {
    entries
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).expect("audit entries serialize");
            if let Some(obj) = v.as_object_mut() {
                obj.insert("fid".into(), fid.into());
                obj.insert("tuner".into(), tuner.into());
                if let Some(c) = variant {
                    obj.insert("tuned_variant".into(), c.into());
                }
            }
            v
        })
        .collect()
}

fn run_ego(spec: &ExperimentSpec, fid: u32, space: &SearchSpace, problems: &ProblemSet, budget: u64, seed: u64, variant: Option<u16>) -> Result<Tuned> {
    let res = tune_ego(space, problems, budget, spec.runs_per_eval, &spec.ego_settings(), seed)?;
    let best_entry = res.audit.iter().find(|e| e.pair == res.best);
    Ok(Tuned {
        pair: res.best,
        predicted: best_entry.filter(|e| !e.all_failed).map(|e| e.ert),
        runs: res.runs_spent,
        distinct: res.distinct_confids(),
        points: res.evaluations,
        times: best_entry.map(|e| e.hitting_times.clone()).unwrap_or_default(),
        audit: tag_audit(fid, "ego", variant, &res.audit),
    })
}

fn run_racing(spec: &ExperimentSpec, fid: u32, problems: &ProblemSet, budget: u64, seed: u64) -> Result<Tuned> {
    let res = tune_racing(&SearchSpace::full(), problems, budget, &spec.racing_settings(), seed)?;
    let predicted = ert(&res.best_hitting_times(), problems.budget)?;
    Ok(Tuned {
        pair: res.best,
        predicted,
        runs: res.runs_spent,
        distinct: res.distinct_confids(),
        points: res.distinct_candidates(),
        times: res.best_hitting_times(),
        audit: tag_audit(fid, "racing", None, &res.audit),
    })
}

/// Tuner seed for a variant-restricted tuning run, shared by both
/// sequential methods so they see identical tuning data.
fn variant_tuning_seed(fid_seed: u64, id: ConfId) -> u64 {
    derive(fid_seed, &[domain::EGO, u64::from(id.get())])
}

struct FunctionOutcome {
    result: FunctionResult,
    records: Vec<LoggedRun>,
    audit: Vec<serde_json::Value>,
    rows: Vec<ErtRow>,
}

fn logged(stage: Stage, records: Vec<RunRecord>) -> Vec<LoggedRun> {
    records.into_iter().map(|record| LoggedRun { stage, record }).collect()
}

fn run_function(spec: &ExperimentSpec, fid: u32) -> Result<FunctionOutcome> {
    let problems = spec.problem_set(fid)?;
    let fid_seed = spec.function_seed(fid);
    let mut ledger = RunLedger::default();
    let mut records = Vec::new();
    let mut audit = Vec::new();
    let mut rows = Vec::new();

    let mut enumeration = None;
    if spec.method.needs_enumeration() {
        let ids = spec.enumeration_ids();
        let (summaries, runs) =
            enumerate_static(&ids, &problems, spec.enumeration.runs_per_instance, fid_seed, spec.exec)?;
        ledger.enumeration = runs.len() as u64;
        for (id, s) in &summaries {
            let pair = CandidatePair::with_defaults(ModuleConfiguration::from_id(i64::from(id.get()))?, spec.dim);
            rows.push(ErtRow::new(fid, Stage::Enumeration, &pair, s));
        }
        records.extend(logged(Stage::Enumeration, runs));
        enumeration = Some(summaries);
    }
    let tuner_budget = spec.tuner_budget.unwrap_or(0);

    // candidates: (pair, tuner-side ERT) to verify; the best verified one wins
    let mut candidates: Vec<(CandidatePair, Option<f64>, Vec<Option<u64>>)> = Vec::new();
    let mut distinct = 0;
    let mut points = 0;
    match spec.method {
        Method::EnumerationOnly => {
            let summaries = enumeration.as_ref().expect("enumerated");
            let top = rank_variants(summaries).entries[0].clone();
            let pair = CandidatePair::with_defaults(ModuleConfiguration::from_id(i64::from(top.key.get()))?, spec.dim);
            let times = records
                .iter()
                .filter(|r| r.record.pair.config.id() == top.key)
                .map(|r| r.record.hitting_time)
                .collect();
            candidates.push((pair, top.ert, times));
        }
        Method::NaiveSequential | Method::StandardSequential => {
            let summaries = enumeration.as_ref().expect("enumerated");
            let ranked = rank_variants(summaries).keys();
            let variants: Vec<ConfId> = if spec.method == Method::NaiveSequential {
                vec![ranked[0]]
            } else if let Some(ids) = &spec.standard_set {
                ids.iter().map(|&i| ConfId::new(i64::from(i))).collect::<Result<_>>()?
            } else {
                let common: Vec<ConfId> =
                    spec.common_ids.iter().map(|&i| ConfId::new(i64::from(i))).collect::<Result<_>>()?;
                select_standard_set(summaries, &common)?
            };
            let mut explored = std::collections::HashSet::new();
            for id in variants {
                let config = ModuleConfiguration::from_id(i64::from(id.get()))?;
                let space = SearchSpace::frozen_modules(config);
                let tuned = run_ego(spec, fid, &space, &problems, tuner_budget, variant_tuning_seed(fid_seed, id), Some(id.get()))?;
                ledger.tuning += tuned.runs;
                points += tuned.points;
                explored.insert(id);
                audit.extend(tuned.audit);
                candidates.push((tuned.pair, tuned.predicted, tuned.times));
            }
            distinct = explored.len();
        }
        Method::IntegratedEgo | Method::IntegratedRacing => {
            let tuned = if spec.method == Method::IntegratedEgo {
                run_ego(spec, fid, &SearchSpace::full(), &problems, tuner_budget, derive(fid_seed, &[domain::EGO]), None)?
            } else {
                run_racing(spec, fid, &problems, tuner_budget, derive(fid_seed, &[domain::RACING]))?
            };
            ledger.tuning += tuned.runs;
            distinct = tuned.distinct;
            points = tuned.points;
            audit.extend(tuned.audit);
            candidates.push((tuned.pair, tuned.predicted, tuned.times));
        }
    }

    let mut best: Option<(CandidatePair, Option<f64>, Vec<Option<u64>>, ErtSummary)> = None;
    for (pair, predicted, times) in candidates {
        let runs = verify_records(&pair, &problems, spec.verification_runs, fid_seed, spec.exec)?;
        ledger.verification += runs.len() as u64;
        let summary = summarize(&runs, problems.budget)?;
        rows.push(ErtRow::new(fid, Stage::Verification, &pair, &summary));
        records.extend(logged(Stage::Verification, runs));
        let better = best.as_ref().is_none_or(|(_, _, _, b)| {
            summary.ert_or_inf().total_cmp(&b.ert_or_inf()).then(summary.aht.total_cmp(&b.aht)).is_lt()
        });
        if better {
            best = Some((pair, predicted, times, summary));
        }
    }
    let (pair, predicted, tuner_times, verified) = best.expect("at least one candidate");

    let default_verified = if spec.verify_default {
        let default = CandidatePair::with_defaults(ModuleConfiguration::default_variant(), spec.dim);
        let runs = verify_records(&default, &problems, spec.verification_runs, fid_seed, spec.exec)?;
        ledger.baseline += runs.len() as u64;
        let summary = summarize(&runs, problems.budget)?;
        rows.push(ErtRow::new(fid, Stage::Baseline, &default, &summary));
        records.extend(logged(Stage::Baseline, runs));
        Some(summary)
    } else {
        None
    };

    let (abs_err, signed_err) = predicted_errors(predicted, &verified);
    Ok(FunctionOutcome {
        result: FunctionResult {
            fid,
            best: pair,
            predicted_ert: predicted,
            verified,
            prediction_error: abs_err,
            signed_prediction_error: signed_err,
            runs: ledger,
            distinct_confids: distinct,
            tuner_points: points,
            tuner_times,
            default_verified,
        },
        records,
        audit,
        rows,
    })
}

/// Run `spec.method` on every function of the spec.
pub fn execute(spec: &ExperimentSpec) -> Result<MethodRun> {
    spec.validate()?;
    let mut run = MethodRun::default();
    let mut functions = Vec::new();
    let mut ledger = RunLedger::default();
    for &fid in &spec.fids {
        let outcome = run_function(spec, fid)?;
        ledger.add(&outcome.result.runs);
        functions.push(outcome.result);
        run.records.extend(outcome.records);
        run.audit.extend(outcome.audit);
        run.ert_rows.extend(outcome.rows);
    }
    run.result = Some(MethodResult { method: spec.method, functions, runs: ledger });
    Ok(run)
}

fn with_method(spec: &ExperimentSpec, method: Method) -> ExperimentSpec {
    ExperimentSpec { method, ..spec.clone() }
}

pub fn run_naive_sequential(spec: &ExperimentSpec) -> Result<MethodRun> {
    execute(&with_method(spec, Method::NaiveSequential))
}

pub fn run_standard_sequential(spec: &ExperimentSpec) -> Result<MethodRun> {
    execute(&with_method(spec, Method::StandardSequential))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuner {
    Racing,
    Ego,
}

pub fn run_integrated(spec: &ExperimentSpec, tuner: Tuner) -> Result<MethodRun> {
    let method = match tuner {
        Tuner::Racing => Method::IntegratedRacing,
        Tuner::Ego => Method::IntegratedEgo,
    };
    execute(&with_method(spec, method))
}

fn integrated_tuner(spec: &ExperimentSpec) -> Result<Tuner> {
    match spec.method {
        Method::IntegratedRacing => Ok(Tuner::Racing),
        Method::IntegratedEgo => Ok(Tuner::Ego),
        m => Err(Error::Config(format!("method: {m:?} is not an integrated tuner"))),
    }
}

/// One tuner run of a budget sweep or stability study, verified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub tuner_budget: u64,
    pub repeat: usize,
    pub seed: u64,
    pub fid: u32,
    pub best: CandidatePair,
    pub predicted_ert: Option<f64>,
    pub verified: ErtSummary,
    pub prediction_error: Option<f64>,
    pub signed_prediction_error: Option<f64>,
    /// Hitting times of the verification runs, in run order.
    pub verified_times: Vec<Option<u64>>,
    pub runs: RunLedger,
}

fn repeat_results(spec: &ExperimentSpec, budget: u64, repeat: usize, seed: u64) -> Result<Vec<RepeatResult>> {
    let inner = ExperimentSpec { tuner_budget: Some(budget), seed, ..spec.clone() };
    let run = execute(&inner)?;
    Ok(run
        .result()
        .functions
        .iter()
        .map(|f| RepeatResult {
            tuner_budget: budget,
            repeat,
            seed,
            fid: f.fid,
            best: f.best,
            predicted_ert: f.predicted_ert,
            verified: f.verified.clone(),
            prediction_error: f.prediction_error,
            signed_prediction_error: f.signed_prediction_error,
            verified_times: run
                .records
                .iter()
                .filter(|r| r.stage == Stage::Verification && r.record.fid == f.fid)
                .map(|r| r.record.hitting_time)
                .collect(),
            runs: f.runs,
        })
        .collect())
}

/// `repeats` independent integrated-tuner runs per budget, each verified.
pub fn budget_sweep(spec: &ExperimentSpec, budgets: &[u64], repeats: usize) -> Result<Vec<RepeatResult>> {
    integrated_tuner(spec)?;
    if budgets.is_empty() || repeats == 0 {
        return Err(contract("budget sweep needs budgets and at least one repeat"));
    }
    let mut out = Vec::new();
    for &b in budgets {
        for r in 0..repeats {
            out.extend(repeat_results(spec, b, r, derive(spec.seed, &[domain::SWEEP, b, r as u64]))?);
        }
    }
    Ok(out)
}

/// `repeats` independent runs of the spec's integrated tuner, each verified.
pub fn stability_study(spec: &ExperimentSpec, repeats: usize) -> Result<Vec<RepeatResult>> {
    integrated_tuner(spec)?;
    if repeats < 2 {
        return Err(contract("stability study needs at least two repeats"));
    }
    let budget = spec.tuner_budget.ok_or_else(|| Error::Config("tuner_budget: required".into()))?;
    let mut out = Vec::new();
    for r in 0..repeats {
        out.extend(repeat_results(spec, budget, r, derive(spec.seed, &[domain::STABILITY, r as u64]))?);
    }
    Ok(out)
}
