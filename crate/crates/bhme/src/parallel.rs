//! Model-selection sweeps fanned out over a rayon thread pool. Results do
//! not depend on the number of threads: seeds are fixed per run and the
//! report is assembled after every run has finished.

use bhme_core::engine::{HmePosterior, TrainConfig, TrainingTrace};
use bhme_core::selection::{assemble_report, plan_runs, plan_sweep, run_one_traced, RunSpec, SelectionReport};
use bhme_core::{Dataset, Result, TreeTopology};
use rayon::prelude::*;

/// The winning run of a plan.
#[derive(Clone, Debug)]
pub struct Selected {
    pub report: SelectionReport,
    pub posterior: HmePosterior,
    pub trace: TrainingTrace,
}

/// Trains every run in parallel and keeps the posterior of the selected one.
pub fn run_plan_parallel(plan: &[RunSpec], data: &Dataset, config: &TrainConfig) -> Result<Selected> {
    config.validate()?;
    let outcomes: Vec<_> = plan.par_iter().map(|spec| run_one_traced(spec, data, config)).collect();
    let mut kept = Vec::with_capacity(outcomes.len());
    let mut entries = Vec::with_capacity(outcomes.len());
    for (entry, out) in outcomes {
        kept.push(((entry.topology_id, entry.restart), out));
        entries.push(entry);
    }
    let report = assemble_report(entries)?;
    let best = report.best_entry();
    let key = (best.topology_id, best.restart);
    let (posterior, trace) = kept
        .into_iter()
        .find(|(k, out)| *k == key && out.is_some())
        .and_then(|(_, out)| out)
        .expect("the selected run finished with a posterior");
    Ok(Selected { report, posterior, trace })
}

pub fn sweep_parallel(
    data: &Dataset,
    expert_min: usize,
    expert_max: usize,
    restarts: usize,
    base_seed: u64,
    config: &TrainConfig,
) -> Result<Selected> {
    run_plan_parallel(&plan_sweep(expert_min, expert_max, restarts, base_seed)?, data, config)
}

/// Restarts of a single fixed topology, reported under topology id 0.
pub fn restarts_parallel(
    tree: &TreeTopology,
    data: &Dataset,
    restarts: usize,
    base_seed: u64,
    config: &TrainConfig,
) -> Result<Selected> {
    run_plan_parallel(&plan_runs(&[(0, tree.clone())], restarts, base_seed)?, data, config)
}
