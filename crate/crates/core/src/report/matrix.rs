use rayon::prelude::*;

use crate::domain::MechanismConfig;
use crate::engine::{run_trace, Mode, RunConfig, RunMetrics};
use crate::error::{Error, Result};
use crate::io::Trace;
use crate::predictors::PredictorKind;

/// Coordinates of one run cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunAxes {
    pub mechanism: MechanismConfig,
    pub predictor: PredictorKind,
    pub switch_period_cycles: u64,
    pub workload: String,
    pub mode: Mode,
}

impl RunAxes {
    /// `base` with this cell's axes applied.
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        RunConfig {
            mechanism: self.mechanism,
            predictor: self.predictor,
            switch_period_cycles: self.switch_period_cycles,
            mode: self.mode,
            ..base.clone()
        }
    }

    /// `mechanism/predictor/period/workload/mode`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.mechanism.mechanism,
            self.predictor,
            self.switch_period_cycles,
            self.workload,
            self.mode.name()
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunCell {
    pub axes: RunAxes,
    pub metrics: RunMetrics,
}

/// Results over mechanism × predictor × switch period × workload.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentMatrix {
    pub cells: Vec<RunCell>,
}

impl ExperimentMatrix {
    pub fn find(&self, axes: &RunAxes) -> Option<&RunCell> {
        self.cells.iter().find(|c| &c.axes == axes)
    }
}

/// Runs every cell (workload name → traces) on a pool of `threads` workers
/// (0 = available parallelism). Cell order in the result follows `axes`.
pub fn run_matrix(
    axes: &[RunAxes],
    workloads: &[(String, Vec<Trace>)],
    base: &RunConfig,
    threads: usize,
) -> Result<ExperimentMatrix> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunCell>> = pool.install(|| {
        axes.par_iter()
            .map(|a| {
                let traces = workloads
                    .iter()
                    .find(|(name, _)| name == &a.workload)
                    .map(|(_, t)| t)
                    .ok_or_else(|| Error::config(format!("no workload named '{}'", a.workload)))?;
                let metrics = run_trace(traces, &a.config(base))
                    .map_err(|e| Error::config(format!("cell {}: {e}", a.label())))?;
                Ok(RunCell { axes: a.clone(), metrics })
            })
            .collect()
    });
    Ok(ExperimentMatrix {
        cells: results.into_iter().collect::<Result<_>>()?,
    })
}
