//! Architecture selection by the final lower bound.
//!
//! A sweep trains every topology with several random restarts. Runs are
//! independent: [`plan_sweep`] lists them with their seeds, [`run_one`]
//! trains one, and [`assemble_report`] collects the outcomes in canonical
//! order, so any execution order gives the same report.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::engine::{train, HmePosterior, TrainConfig, TrainingTrace};
use crate::error::{HmeError, Result};
use crate::topology::{enumerate_topologies, TreeTopology};

/// One training run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub topology_id: usize,
    pub tree: TreeTopology,
    pub restart: usize,
    pub seed: u64,
}

/// Outcome of one run as recorded in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub topology_id: usize,
    pub num_experts: usize,
    pub topology: String,
    pub restart: usize,
    pub seed: u64,
    /// `None` when the run failed numerically.
    pub final_bound: Option<f64>,
    /// Met the bound tolerance before the iteration cap.
    pub converged: bool,
    pub iterations: usize,
    pub failure: Option<String>,
}

impl SelectionEntry {
    /// Runs with a finite final bound take part in the maxima.
    pub fn eligible(&self) -> bool {
        self.final_bound.is_some_and(f64::is_finite)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub topology_id: usize,
    pub num_experts: usize,
    pub topology: String,
    /// Largest bound over the topology's eligible runs.
    pub best_bound: Option<f64>,
    pub runs: usize,
    pub failed_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OckhamPoint {
    pub num_experts: usize,
    pub best_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Sorted by topology id, then restart.
    pub entries: Vec<SelectionEntry>,
    /// Index into `entries` of the selected run.
    pub best: usize,
    pub topologies: Vec<TopologySummary>,
    pub ockham_curve: Vec<OckhamPoint>,
    /// Topologies whose runs all failed.
    pub failed_topologies: Vec<usize>,
}

impl SelectionReport {
    pub fn best_entry(&self) -> &SelectionEntry {
        &self.entries[self.best]
    }

    pub fn best_tree(&self) -> Result<TreeTopology> {
        TreeTopology::parse(&self.best_entry().topology)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one run, a hash of `(base_seed, topology_id, restart)`.
pub fn run_seed(base_seed: u64, topology_id: usize, restart: usize) -> u64 {
    let a = splitmix64(base_seed);
    let b = splitmix64(a ^ topology_id as u64);
    splitmix64(b ^ (restart as u64).rotate_left(32))
}

/// Every topology with `expert_min..=expert_max` experts. Ids count
/// topologies from one expert upward, so they do not depend on the range.
pub fn topologies_in_range(expert_min: usize, expert_max: usize) -> Result<Vec<(usize, TreeTopology)>> {
    if expert_min == 0 || expert_min > expert_max {
        return Err(HmeError::InvalidArgument(format!(
            "expert range {expert_min}..={expert_max} is empty or starts at 0"
        )));
    }
    let mut out = Vec::new();
    let mut id = 0;
    for m in 1..=expert_max {
        let trees = enumerate_topologies(m)?;
        for tree in trees {
            if m >= expert_min {
                out.push((id, tree));
            }
            id += 1;
        }
    }
    Ok(out)
}

/// Runs for an explicit list of `(id, tree)` pairs.
pub fn plan_runs(topologies: &[(usize, TreeTopology)], restarts: usize, base_seed: u64) -> Result<Vec<RunSpec>> {
    if restarts == 0 {
        return Err(HmeError::InvalidArgument("at least one restart per topology is needed".into()));
    }
    if topologies.is_empty() {
        return Err(HmeError::InvalidArgument("no topologies to train".into()));
    }
    Ok(topologies
        .iter()
        .flat_map(|(id, tree)| {
            (0..restarts).map(move |r| RunSpec {
                topology_id: *id,
                tree: tree.clone(),
                restart: r,
                seed: run_seed(base_seed, *id, r),
            })
        })
        .collect())
}

/// Runs for every topology in an expert-count range.
pub fn plan_sweep(expert_min: usize, expert_max: usize, restarts: usize, base_seed: u64) -> Result<Vec<RunSpec>> {
    plan_runs(&topologies_in_range(expert_min, expert_max)?, restarts, base_seed)
}

fn entry_from(spec: &RunSpec, trace: &TrainingTrace, failure: Option<String>) -> SelectionEntry {
    SelectionEntry {
        topology_id: spec.topology_id,
        num_experts: spec.tree.num_experts(),
        topology: spec.tree.code(),
        restart: spec.restart,
        seed: spec.seed,
        final_bound: if failure.is_some() { None } else { trace.final_bound() },
        converged: failure.is_none() && trace.converged,
        iterations: trace.iterations_run,
        failure,
    }
}

/// Trains one run. The posterior is returned only when training succeeded.
pub fn run_one(spec: &RunSpec, data: &Dataset, config: &TrainConfig) -> (SelectionEntry, Option<HmePosterior>) {
    let (entry, out) = run_one_traced(spec, data, config);
    (entry, out.map(|(post, _)| post))
}

/// [`run_one`] that also keeps the training trace of a successful run.
pub fn run_one_traced(
    spec: &RunSpec,
    data: &Dataset,
    config: &TrainConfig,
) -> (SelectionEntry, Option<(HmePosterior, TrainingTrace)>) {
    match train(&spec.tree, data, config, spec.seed) {
        Ok((post, trace)) => (entry_from(spec, &trace, None), Some((post, trace))),
        Err(f) => (entry_from(spec, &f.trace, Some(format!("{}", f.error))), None),
    }
}

// Larger bound first; ties go to fewer experts, then lower ids and restarts.
fn better(a: &SelectionEntry, b: &SelectionEntry) -> bool {
    let (la, lb) = (a.final_bound.unwrap_or(f64::NEG_INFINITY), b.final_bound.unwrap_or(f64::NEG_INFINITY));
    if la != lb {
        return la > lb;
    }
    (a.num_experts, a.topology_id, a.restart) < (b.num_experts, b.topology_id, b.restart)
}

/// Builds the report from run outcomes given in any order.
pub fn assemble_report(mut entries: Vec<SelectionEntry>) -> Result<SelectionReport> {
    if entries.is_empty() {
        return Err(HmeError::Selection("no runs to select from".into()));
    }
    entries.sort_by(|a, b| (a.topology_id, a.restart).cmp(&(b.topology_id, b.restart)));

    let mut topologies: Vec<TopologySummary> = Vec::new();
    for e in &entries {
        if topologies.last().is_none_or(|t| t.topology_id != e.topology_id) {
            topologies.push(TopologySummary {
                topology_id: e.topology_id,
                num_experts: e.num_experts,
                topology: e.topology.clone(),
                best_bound: None,
                runs: 0,
                failed_runs: 0,
            });
        }
        let t = topologies.last_mut().expect("pushed above");
        t.runs += 1;
        if e.eligible() {
            let l = e.final_bound.expect("eligible");
            t.best_bound = Some(t.best_bound.map_or(l, |b: f64| b.max(l)));
        } else {
            t.failed_runs += 1;
        }
    }
    let failed_topologies: Vec<usize> =
        topologies.iter().filter(|t| t.best_bound.is_none()).map(|t| t.topology_id).collect();

    let mut best: Option<usize> = None;
    for (k, e) in entries.iter().enumerate() {
        if e.eligible() && best.is_none_or(|b| better(e, &entries[b])) {
            best = Some(k);
        }
    }
    let best = best.ok_or_else(|| HmeError::Selection("every run failed; nothing to select".into()))?;

    let mut sizes: Vec<usize> = entries.iter().map(|e| e.num_experts).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let ockham_curve = sizes
        .into_iter()
        .map(|m| OckhamPoint {
            num_experts: m,
            best_bound: topologies
                .iter()
                .filter(|t| t.num_experts == m)
                .filter_map(|t| t.best_bound)
                .reduce(f64::max),
        })
        .collect();

    Ok(SelectionReport { entries, best, topologies, ockham_curve, failed_topologies })
}

/// Trains every planned run in sequence.
pub fn run_plan(plan: &[RunSpec], data: &Dataset, config: &TrainConfig) -> Result<SelectionReport> {
    config.validate()?;
    assemble_report(plan.iter().map(|s| run_one(s, data, config).0).collect())
}

/// Sequential sweep over all topologies with `expert_min..=expert_max` experts.
pub fn sweep(
    data: &Dataset,
    expert_min: usize,
    expert_max: usize,
    restarts: usize,
    base_seed: u64,
    config: &TrainConfig,
) -> Result<SelectionReport> {
    run_plan(&plan_sweep(expert_min, expert_max, restarts, base_seed)?, data, config)
}

/// Retrains the selected run; training is deterministic given the seed.
pub fn retrain_best(report: &SelectionReport, data: &Dataset, config: &TrainConfig) -> Result<(HmePosterior, TrainingTrace)> {
    let e = report.best_entry();
    train(&report.best_tree()?, data, config, e.seed).map_err(|f| f.error)
}

/// `exp(L_M − max L)` per topology, in topology order; failed topologies get 0.
pub fn model_weights(report: &SelectionReport) -> Vec<(usize, f64)> {
    let top = report.topologies.iter().filter_map(|t| t.best_bound).fold(f64::NEG_INFINITY, f64::max);
    report
        .topologies
        .iter()
        .map(|t| (t.topology_id, t.best_bound.map_or(0.0, |l| libm::exp(l - top))))
        .collect()
}
