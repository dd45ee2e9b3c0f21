use std::collections::{BTreeMap, HashSet};

use modcash::evaluator::ProblemSet;
use modcash::exec::Exec;
use modcash::metrics::ErtSummary;
use modcash::pipelines::output::{read_runs, write_analysis, ERT_TABLE_FILE, KENDALL_FILE, SUMMARY_FILE};
use modcash::pipelines::{
    budget_sweep, enumerate_static, execute, instance_analysis, run_experiment, select_standard_set, stability_study,
    verify, verify_records, ExperimentSpec, Method, Stage, COMMON_IDS,
};
use modcash::benchmarks::make_problem;
use modcash::space::{CandidatePair, ConfId, ModuleConfiguration};

fn sphere(instances: &[u32], budget: u64) -> ProblemSet {
    let problems = instances.iter().map(|&i| make_problem(1, i, 5).unwrap()).collect();
    ProblemSet::new(problems, 1e-8, budget)
}

fn id(i: i64) -> ConfId {
    ConfId::new(i).unwrap()
}

#[test]
fn enumeration_counts_and_determinism() {
    let set = sphere(&[1], 10_000);
    let (s, runs) = enumerate_static(&[id(0)], &set, 5, 1, Exec::Parallel).unwrap();
    assert_eq!(s[&id(0)].n_runs, 5);
    assert_eq!(runs.len(), 5);
    let set5 = sphere(&[1, 2, 3, 4, 5], 10_000);
    let (a, _) = enumerate_static(&[id(0), id(3)], &set5, 5, 9, Exec::Parallel).unwrap();
    let (b, _) = enumerate_static(&[id(0), id(3)], &set5, 5, 9, Exec::Sequential).unwrap();
    assert_eq!(a[&id(3)].n_runs, 25);
    assert_eq!(a, b);
    assert!(enumerate_static(&[], &set5, 5, 9, Exec::Parallel).is_err());
}

fn fake_summaries(n: usize) -> BTreeMap<ConfId, ErtSummary> {
    (0..n)
        .map(|i| {
            // rank r + 1 for id r
            let e = 100.0 + i as f64;
            (id(i as i64), ErtSummary { n_runs: 1, n_success: 1, ert: Some(e), aht: e, penalty: 1e6 })
        })
        .collect()
}

#[test]
fn standard_set_selection() {
    let common: Vec<ConfId> = (1000..1010).map(id).collect();
    let set = select_standard_set(&fake_summaries(300), &common).unwrap();
    assert_eq!(set.len(), 30);
    let expected: Vec<ConfId> = (0..10).chain(199..209).map(|i| id(i)).chain(common.iter().copied()).collect();
    assert_eq!(set, expected);

    // overlap: common list repeats three top variants, backfill from rank 211
    let overlapping: Vec<ConfId> = [0, 1, 2].into_iter().chain(1000..1007).map(id).collect();
    let set = select_standard_set(&fake_summaries(300), &overlapping).unwrap();
    assert_eq!(set.len(), 30);
    assert_eq!(set.iter().collect::<HashSet<_>>().len(), 30);
    assert_eq!(&set[27..], &[id(210), id(211), id(212)]);

    assert!(select_standard_set(&fake_summaries(209), &common).is_err());
    assert!(COMMON_IDS.contains(&0));
}

#[test]
fn verification_round_robin_and_reproducible() {
    let set = sphere(&[1, 2, 3], 10_000);
    let pair = CandidatePair::with_defaults(ModuleConfiguration::default(), 5);
    let recs = verify_records(&pair, &set, 7, 3, Exec::Parallel).unwrap();
    let per: Vec<u32> = recs.iter().map(|r| r.instance).collect();
    assert_eq!(per, vec![1, 2, 3, 1, 2, 3, 1]);
    let a = verify(&pair, &set, 7, 3, Exec::Parallel).unwrap();
    let b = verify(&pair, &set, 7, 3, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_runs, 7);
}

fn desk(method: Method) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(method, 2000, Some(100));
    s.instances = vec![1, 2];
    s.verification_runs = 6;
    s.runs_per_eval = 5;
    s.enumeration.configs = Some(vec![0, 1, 3, 2304]);
    s.enumeration.runs_per_instance = 2;
    s.standard_set = Some(vec![0, 1, 3]);
    s.racing.initial_candidates = 20;
    s
}

#[test]
fn ledgers_add_up() {
    for method in [
        Method::EnumerationOnly,
        Method::NaiveSequential,
        Method::StandardSequential,
        Method::IntegratedRacing,
        Method::IntegratedEgo,
    ] {
        let spec = desk(method);
        let run = execute(&spec).unwrap();
        let res = run.result();
        let f = &res.functions[0];
        let enum_runs = run.records.iter().filter(|r| r.stage == Stage::Enumeration).count() as u64;
        let ver_runs = run.records.iter().filter(|r| r.stage == Stage::Verification).count() as u64;
        assert_eq!(f.runs.enumeration, enum_runs, "{method:?}");
        assert_eq!(f.runs.verification, ver_runs, "{method:?}");
        assert_eq!(f.verified.n_runs, 6);
        assert_eq!(res.runs_spent(), f.runs.total());
        match method {
            Method::EnumerationOnly => assert_eq!(f.runs.tuning, 0),
            Method::StandardSequential => {
                assert!(f.runs.tuning <= 3 * 100);
                assert_eq!(ver_runs, 18);
            }
            _ => assert!(f.runs.tuning <= 100 && f.runs.tuning > 0, "{method:?}"),
        }
        if matches!(method, Method::IntegratedEgo | Method::IntegratedRacing) {
            let audit_ids: HashSet<u64> = run.audit.iter().map(|v| v["confid"].as_u64().unwrap()).collect();
            assert_eq!(f.distinct_confids, audit_ids.len());
            // verification seeds never appear among tuning seeds
            let tuning_seeds: HashSet<u64> = run
                .audit
                .iter()
                .flat_map(|v| match &v["seeds"] {
                    serde_json::Value::Array(a) => a.iter().map(|s| s.as_u64().unwrap()).collect::<Vec<_>>(),
                    _ => vec![v["seed"].as_u64().unwrap()],
                })
                .collect();
            assert!(run.records.iter().all(|r| !tuning_seeds.contains(&r.record.seed)));
        }
    }
}

#[test]
fn standard_never_worse_than_naive_on_shared_data() {
    let mut spec = desk(Method::NaiveSequential);
    spec.standard_set = None;
    spec.enumeration.configs = None;
    spec.enumeration.runs_per_instance = 1;
    spec.instances = vec![1];
    spec.run_budget = 300;
    spec.tuner_budget = Some(15);
    spec.verification_runs = 3;
    let naive = execute(&spec).unwrap();
    spec.method = Method::StandardSequential;
    let standard = execute(&spec).unwrap();
    let n = &naive.result().functions[0];
    let s = &standard.result().functions[0];
    assert!(s.verified.ert_or_inf() <= n.verified.ert_or_inf());
    assert_eq!(s.distinct_confids, 30);
}

#[test]
fn experiment_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = desk(Method::EnumerationOnly);
    spec.enumeration.configs = Some(vec![0, 5]);
    run_experiment(&spec, dir.path()).unwrap();
    let table = std::fs::read_to_string(dir.path().join(ERT_TABLE_FILE)).unwrap();
    let enum_rows = table.lines().filter(|l| l.contains(",enumeration,")).count();
    assert_eq!(enum_rows, 2);
    assert!(table.starts_with("fid,stage,confid,c1,cc,cmu,n_runs,n_success,ert,aht"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["method"], "enumeration_only");

    let runs = read_runs(&dir.path().join("runs.jsonl")).unwrap();
    assert_eq!(runs.len(), 2 * 2 * 2 + 6);
    let out = tempfile::tempdir().unwrap();
    write_analysis(out.path(), &runs, &[1e-8]).unwrap();
    let first = std::fs::read(out.path().join(KENDALL_FILE)).unwrap();
    write_analysis(out.path(), &runs, &[1e-8]).unwrap();
    assert_eq!(first, std::fs::read(out.path().join(KENDALL_FILE)).unwrap());
}

#[test]
fn instance_matrix_properties() {
    let set = sphere(&[1, 2, 3], 3000);
    let ids: Vec<ConfId> = [0, 1, 2, 3, 9, 18].into_iter().map(id).collect();
    let (_, runs) = enumerate_static(&ids, &set, 3, 4, Exec::Parallel).unwrap();
    let a = &instance_analysis(&runs).unwrap()[0];
    assert_eq!(a.instances, vec![1, 2, 3]);
    for i in 0..3 {
        assert_eq!(a.matrix[i][i], 1.0);
        for j in 0..3 {
            assert!(a.matrix[i][j].to_bits() == a.matrix[j][i].to_bits());
        }
    }
    // duplicated instance data correlates perfectly
    let mut dup = runs.clone();
    dup.extend(runs.iter().filter(|r| r.instance == 1).map(|r| {
        let mut r = r.clone();
        r.instance = 9;
        r
    }));
    let a = &instance_analysis(&dup).unwrap()[0];
    let i1 = a.instances.iter().position(|&i| i == 1).unwrap();
    let i9 = a.instances.iter().position(|&i| i == 9).unwrap();
    assert!((a.matrix[i1][i9] - 1.0).abs() < 1e-12);

    let single: Vec<_> = runs.iter().filter(|r| r.instance == 2).cloned().collect();
    assert_eq!(instance_analysis(&single).unwrap()[0].matrix, vec![vec![1.0]]);
    assert!(instance_analysis(&[]).is_err());
}

#[test]
fn sweep_and_stability_accounting() {
    let mut spec = desk(Method::IntegratedEgo);
    spec.verification_runs = 4;
    let sweep = budget_sweep(&spec, &[50, 100], 2).unwrap();
    assert_eq!(sweep.len(), 4);
    for r in &sweep {
        assert_eq!(r.verified_times.len(), 4);
        assert!(r.runs.tuning <= r.tuner_budget);
    }
    let stab = stability_study(&spec, 2).unwrap();
    assert_eq!(stab.len(), 2);
    assert!(stability_study(&spec, 1).is_err());
    assert!(budget_sweep(&desk(Method::NaiveSequential), &[50], 1).is_err());
}

#[test]
fn spec_validation() {
    let ok = r#"{"method": "integrated_ego", "run_budget": 1000, "tuner_budget": 250}"#;
    assert!(ExperimentSpec::from_json(ok).is_ok());
    let missing = r#"{"method": "integrated_ego", "run_budget": 1000}"#;
    let err = ExperimentSpec::from_json(missing).unwrap_err().to_string();
    assert!(err.contains("tuner_budget"), "{err}");
    let no_run_budget = r#"{"method": "enumeration_only"}"#;
    assert!(ExperimentSpec::from_json(no_run_budget).unwrap_err().to_string().contains("run_budget"));
    let unknown = r#"{"method": "enumeration_only", "run_budget": 10, "budgt": 3}"#;
    assert!(ExperimentSpec::from_json(unknown).unwrap_err().to_string().contains("budgt"));
    let bad_id = r#"{"method": "enumeration_only", "run_budget": 10, "enumeration": {"configs": [4608]}}"#;
    assert!(ExperimentSpec::from_json(bad_id).is_err());
    let spec = ExperimentSpec::new(Method::IntegratedEgo, 10_000, Some(2500));
    assert_eq!(spec.precision_for(1), 1e-8);
    assert_eq!(spec.precision_for(20), 1e-1);
}
