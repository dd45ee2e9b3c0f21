//! Result files: `runs.jsonl`, `tuner_audit.jsonl`, `ert_table.csv`,
//! `ecdf.csv`, `kendall.csv`, `ranking.csv` and `method_summary.json`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::analysis::{analyze, default_precisions, Analysis};
use super::{execute, ExperimentSpec, LoggedRun, MethodResult, MethodRun, RepeatResult};
use crate::error::{Error, Result};

pub const RUNS_FILE: &str = "runs.jsonl";
pub const AUDIT_FILE: &str = "tuner_audit.jsonl";
pub const ERT_TABLE_FILE: &str = "ert_table.csv";
pub const ECDF_FILE: &str = "ecdf.csv";
pub const KENDALL_FILE: &str = "kendall.csv";
pub const RANKING_FILE: &str = "ranking.csv";
pub const SUMMARY_FILE: &str = "method_summary.json";

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path).map_err(csv_error)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_error)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a run log; blank lines are skipped.
pub fn read_runs(path: &Path) -> Result<Vec<LoggedRun>> {
    let reader = BufReader::new(File::open(path)?);
    let mut runs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let run: LoggedRun = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("{}: line {}: {e}", path.display(), n + 1)))?;
        runs.push(run);
    }
    Ok(runs)
}

/// Write `ecdf.csv`, `kendall.csv` and `ranking.csv` for a log.
pub fn write_analysis(dir: &Path, runs: &[LoggedRun], precisions: &[f64]) -> Result<Analysis> {
    fs::create_dir_all(dir)?;
    let analysis = analyze(runs, precisions)?;
    write_csv(
        &dir.join(ECDF_FILE),
        &analysis.ecdf,
        &["fid", "stage", "confid", "c1", "cc", "cmu", "budget", "fraction"],
    )?;
    write_csv(&dir.join(KENDALL_FILE), &analysis.kendall, &["fid", "instance_a", "instance_b", "tau"])?;
    write_csv(
        &dir.join(RANKING_FILE),
        &analysis.ranking,
        &["fid", "stage", "rank", "confid", "c1", "cc", "cmu", "n_runs", "n_success", "ert"],
    )?;
    Ok(analysis)
}

/// Write every result file of a finished method run.
pub fn write_outputs(dir: &Path, run: &MethodRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(RUNS_FILE), &run.records)?;
    write_jsonl(&dir.join(AUDIT_FILE), &run.audit)?;
    write_csv(
        &dir.join(ERT_TABLE_FILE),
        &run.ert_rows,
        &["fid", "stage", "confid", "c1", "cc", "cmu", "n_runs", "n_success", "ert", "aht"],
    )?;
    let summary: &MethodResult = run.result();
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(summary)? + "\n")?;
    write_analysis(dir, &run.records, &default_precisions())?;
    Ok(())
}

/// Execute `spec` and write its result files under `dir`.
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<MethodRun> {
    let run = execute(spec)?;
    write_outputs(dir, &run)?;
    Ok(run)
}

#[derive(Serialize)]
struct HittingTimeRow {
    tuner_budget: u64,
    repeat: usize,
    fid: u32,
    run: usize,
    hitting_time: Option<u64>,
}

/// `<name>.jsonl` with one result per line and `<name>_times.csv` with the
/// verification hitting-time distributions.
pub fn write_repeats(dir: &Path, name: &str, results: &[RepeatResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(format!("{name}.jsonl")), results)?;
    let rows: Vec<HittingTimeRow> = results
        .iter()
        .flat_map(|r| {
            r.verified_times.iter().enumerate().map(move |(run, &t)| HittingTimeRow {
                tuner_budget: r.tuner_budget,
                repeat: r.repeat,
                fid: r.fid,
                run,
                hitting_time: t,
            })
        })
        .collect();
    write_csv(
        &dir.join(format!("{name}_times.csv")),
        &rows,
        &["tuner_budget", "repeat", "fid", "run", "hitting_time"],
    )
}
