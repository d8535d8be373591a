use crate::domain::Mechanism;
use crate::engine::{compare_runs, Mode};
use crate::error::{Error, Result};
use crate::stats::{geometric_mean, geometric_mean_change};

use super::matrix::{ExperimentMatrix, RunAxes};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Cell,
    /// Geometric mean over the workloads of one mechanism / predictor /
    /// period / mode group.
    GeoMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverheadRow {
    pub kind: RowKind,
    pub axes: RunAxes,
    pub overhead: f64,
    pub mpki: f64,
    pub baseline_mpki: f64,
    pub mpki_delta: f64,
    /// Mean over the measured threads of the accuracy change.
    pub accuracy_delta: f64,
}

/// Normalized overhead of every non-`baseline` cell against the cell with the
/// same predictor, period, workload and mode under `baseline`, followed by a
/// geometric-mean row per group.
pub fn emit_overhead_table(matrix: &ExperimentMatrix, baseline: Mechanism) -> Result<Vec<OverheadRow>> {
    let mut rows = Vec::new();
    for cell in matrix.cells.iter().filter(|c| c.axes.mechanism.mechanism != baseline) {
        let base = matrix
            .cells
            .iter()
            .find(|b| {
                b.axes.mechanism.mechanism == baseline
                    && b.axes.predictor == cell.axes.predictor
                    && b.axes.switch_period_cycles == cell.axes.switch_period_cycles
                    && b.axes.workload == cell.axes.workload
                    && b.axes.mode == cell.axes.mode
            })
            .ok_or_else(|| {
                let mut want = cell.axes.clone();
                want.mechanism.mechanism = baseline;
                Error::MissingBaseline(want.label())
            })?;
        let o = compare_runs(&base.metrics, &cell.metrics)?;
        let acc = measured_mean(&o.accuracy_delta, cell.axes.mode);
        rows.push(OverheadRow {
            kind: RowKind::Cell,
            axes: cell.axes.clone(),
            overhead: o.overhead,
            mpki: cell.metrics.mpki(),
            baseline_mpki: base.metrics.mpki(),
            mpki_delta: o.mpki_delta,
            accuracy_delta: acc,
        });
    }

    let mut groups: Vec<RunAxes> = Vec::new();
    for r in &rows {
        let mut key = r.axes.clone();
        key.workload = "geomean".into();
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for key in groups {
        let members: Vec<&OverheadRow> = rows
            .iter()
            .filter(|r| {
                let mut k = r.axes.clone();
                k.workload = "geomean".into();
                k == key
            })
            .collect();
        let gm = |f: fn(&OverheadRow) -> f64| {
            let v: Vec<f64> = members.iter().map(|r| f(r)).collect();
            geometric_mean_change(&v).unwrap_or(f64::NAN)
        };
        let mean = |f: fn(&OverheadRow) -> f64| {
            members.iter().map(|r| f(r)).sum::<f64>() / members.len() as f64
        };
        let mpki = geometric_mean(&members.iter().map(|r| r.mpki).collect::<Vec<_>>());
        let base_mpki =
            geometric_mean(&members.iter().map(|r| r.baseline_mpki).collect::<Vec<_>>());
        rows.push(OverheadRow {
            kind: RowKind::GeoMean,
            axes: key,
            overhead: gm(|r| r.overhead),
            mpki: mpki.unwrap_or(f64::NAN),
            baseline_mpki: base_mpki.unwrap_or(f64::NAN),
            mpki_delta: mean(|r| r.mpki_delta),
            accuracy_delta: mean(|r| r.accuracy_delta),
        });
    }
    Ok(rows)
}

/// Mean of per-thread deltas over the measured threads.
fn measured_mean(deltas: &[f64], mode: Mode) -> f64 {
    let n = match mode {
        Mode::SingleThread => 1,
        Mode::Smt2 => 2,
    }
    .min(deltas.len());
    if n == 0 {
        0.0
    } else {
        deltas[..n].iter().sum::<f64>() / n as f64
    }
}
