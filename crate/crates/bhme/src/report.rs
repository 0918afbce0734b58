//! CSV and JSON exports of training traces and selection sweeps.

use std::path::{Path, PathBuf};

use bhme_core::engine::TrainingTrace;
use bhme_core::selection::{model_weights, OckhamPoint, SelectionEntry, SelectionReport, TopologySummary};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::{fmt_f64, write_csv};

pub const TRACE_SCHEMA: &str = "bhme-trace v1";
pub const RUNS_SCHEMA: &str = "bhme-runs v1";
pub const OCKHAM_SCHEMA: &str = "bhme-ockham v1";
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `iteration,bound,inverse_temperature`, iterations counted from 1.
pub fn write_trace(trace: &TrainingTrace, path: &Path) -> Result<()> {
    let rows = trace
        .bound_history
        .iter()
        .zip(&trace.temperature_history)
        .enumerate()
        .map(|(k, (l, s))| vec![(k + 1).to_string(), fmt_f64(*l), fmt_f64(*s)]);
    write_csv(path, Some(TRACE_SCHEMA), &headers(&["iteration", "bound", "inverse_temperature"]), rows)
}

/// One row per run, in topology then restart order.
pub fn write_runs(report: &SelectionReport, path: &Path) -> Result<()> {
    let rows = report.entries.iter().map(|e| {
        vec![
            e.topology_id.to_string(),
            e.num_experts.to_string(),
            e.topology.clone(),
            e.restart.to_string(),
            e.seed.to_string(),
            opt(e.final_bound),
            e.converged.to_string(),
            e.iterations.to_string(),
            e.failure.clone().unwrap_or_default(),
        ]
    });
    let h = headers(&[
        "topology_id",
        "num_experts",
        "topology",
        "restart",
        "seed",
        "final_bound",
        "converged",
        "iterations",
        "failure",
    ]);
    write_csv(path, Some(RUNS_SCHEMA), &h, rows)
}

/// Best bound per expert count; empty where every run failed.
pub fn write_ockham(curve: &[OckhamPoint], path: &Path) -> Result<()> {
    let rows = curve.iter().map(|p| vec![p.num_experts.to_string(), opt(p.best_bound)]);
    write_csv(path, Some(OCKHAM_SCHEMA), &headers(&["num_experts", "best_bound"]), rows)
}

#[derive(Serialize)]
struct TopologyWeight {
    topology_id: usize,
    weight: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    best: &'a SelectionEntry,
    topologies: &'a [TopologySummary],
    ockham_curve: &'a [OckhamPoint],
    failed_topologies: &'a [usize],
    /// `exp(L − max L)` per topology.
    weights: Vec<TopologyWeight>,
}

pub fn write_summary(report: &SelectionReport, path: &Path) -> Result<()> {
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        best: report.best_entry(),
        topologies: &report.topologies,
        ockham_curve: &report.ockham_curve,
        failed_topologies: &report.failed_topologies,
        weights: model_weights(report)
            .into_iter()
            .map(|(topology_id, weight)| TopologyWeight { topology_id, weight })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::numerical(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `<prefix>.runs.csv`, `<prefix>.summary.json`, `<prefix>.ockham.csv`.
pub fn report_paths(prefix: &Path) -> [PathBuf; 3] {
    let with = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    [with(".runs.csv"), with(".summary.json"), with(".ockham.csv")]
}

/// Writes all three report files and returns their paths.
pub fn write_report(report: &SelectionReport, prefix: &Path) -> Result<[PathBuf; 3]> {
    let paths = report_paths(prefix);
    write_runs(report, &paths[0])?;
    write_summary(report, &paths[1])?;
    write_ockham(&report.ockham_curve, &paths[2])?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bhme_core::selection::assemble_report;

    fn entry(id: usize, m: usize, restart: usize, bound: Option<f64>) -> SelectionEntry {
        SelectionEntry {
            topology_id: id,
            num_experts: m,
            topology: if m == 2 { "(e,e)".into() } else { "((e,e),e)".into() },
            restart,
            seed: 7 + restart as u64,
            final_bound: bound,
            converged: bound.is_some(),
            iterations: 12,
            failure: bound.is_none().then(|| "numerical failure at iteration 3: q_v".to_string()),
        }
    }

    #[test]
    fn runs_and_ockham_files_have_expected_shape() {
        let report = assemble_report(vec![
            entry(1, 2, 0, Some(-4.5)),
            entry(1, 2, 1, None),
            entry(2, 3, 0, Some(-3.25)),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_report(&report, &dir.path().join("toy")).unwrap();
        let runs = std::fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = runs.lines().collect();
        assert_eq!(lines[0], "# bhme-runs v1");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,2,\"(e,e)\",0,7,-4.5,true,12,");
        assert!(lines[3].contains(",,false,12,numerical failure"));
        let ockham = std::fs::read_to_string(&paths[2]).unwrap();
        assert_eq!(ockham, "# bhme-ockham v1\nnum_experts,best_bound\n2,-4.5\n3,-3.25\n");
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&paths[1]).unwrap()).unwrap();
        assert_eq!(summary["best"]["topology_id"], 2);
        assert_eq!(summary["weights"][1]["weight"], 1.0);
    }

    #[test]
    fn trace_rows_are_numbered_from_one() {
        let trace = TrainingTrace {
            bound_history: vec![-3.0, -2.5],
            temperature_history: vec![2.0, 1.0],
            converged: true,
            iterations_run: 2,
            failure: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace(&trace, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "# bhme-trace v1\niteration,bound,inverse_temperature\n1,-3.0,2.0\n2,-2.5,1.0\n"
        );
    }
}
