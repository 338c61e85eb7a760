//! Parallel experiment execution.
//!
//! Every `(n, rep)` cell derives its own seed, so cells run in any order on
//! any number of threads. Results land in slots indexed by cell and are
//! aggregated in a fixed order, which makes the table independent of the
//! schedule.

use atomkde_core::simlab::{
    experiment_truth, run_replication, summarize, ExperimentSpec, Replication, SummaryTable,
};
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] atomkde_core::Error),
    #[error("cannot start worker threads: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Runs every cell of `spec` in parallel. `threads = None` uses the global
/// pool.
pub fn run(spec: &ExperimentSpec, threads: Option<usize>) -> Result<(SummaryTable, Vec<Replication>), RunError> {
    spec.validate()?;
    let truth = experiment_truth(spec)?;
    let cells: Vec<(usize, usize)> = spec
        .n_grid
        .iter()
        .flat_map(|&n| (0..spec.reps).map(move |rep| (n, rep)))
        .collect();
    let work = || {
        cells
            .par_iter()
            .map(|&(n, rep)| run_replication(spec, truth, n, rep))
            .collect::<Result<Vec<_>, _>>()
    };
    let reps = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build()?.install(work)?,
        None => work()?,
    };
    let table = summarize(spec, truth, &reps)?;
    Ok((table, reps))
}
