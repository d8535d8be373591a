use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackReport;
use crate::error::Result;

use super::matrix::ExperimentMatrix;
use super::overhead::{OverheadRow, RowKind};
use super::security::SecurityRow;
use super::table::mechanism_label;

/// Column order of [`RunCsvRow`].
pub const RUN_COLUMNS: [&str; 22] = [
    "mechanism",
    "pht_encoding",
    "predictor",
    "switch_period_cycles",
    "workload",
    "mode",
    "branches",
    "instructions",
    "mispredictions",
    "direction_mispredictions",
    "btb_misses",
    "cycles",
    "mpki",
    "accuracy",
    "key_rotations",
    "switch_rotations",
    "privilege_rotations",
    "flushes",
    "flush_entries",
    "context_switches",
    "privilege_changes",
    "simulated_cycles",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCsvRow {
    pub mechanism: String,
    pub pht_encoding: String,
    pub predictor: String,
    pub switch_period_cycles: u64,
    pub workload: String,
    pub mode: String,
    pub branches: u64,
    pub instructions: u64,
    pub mispredictions: u64,
    pub direction_mispredictions: u64,
    pub btb_misses: u64,
    pub cycles: u64,
    pub mpki: f64,
    pub accuracy: f64,
    pub key_rotations: u64,
    pub switch_rotations: u64,
    pub privilege_rotations: u64,
    pub flushes: u64,
    pub flush_entries: u64,
    pub context_switches: u64,
    pub privilege_changes: u64,
    pub simulated_cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadCsvRow {
    pub row: String,
    pub mechanism: String,
    pub predictor: String,
    pub switch_period_cycles: u64,
    pub workload: String,
    pub mode: String,
    pub overhead: f64,
    pub mpki: f64,
    pub baseline_mpki: f64,
    pub mpki_delta: f64,
    pub accuracy_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityCsvRow {
    pub attack: String,
    pub variant: String,
    pub mechanism: String,
    pub core: String,
    pub iterations: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub chance_rate: f64,
    pub p_value: f64,
    pub label: String,
    pub published: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackCsvRow {
    pub attack: String,
    pub variant: String,
    pub mechanism: String,
    pub core: String,
    pub iterations: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub subtrials: u64,
    pub subtrial_successes: u64,
    pub diagnostics: String,
}

fn core(smt: bool) -> String {
    if smt { "smt" } else { "single" }.into()
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_run_csv<W: Write>(w: W, matrix: &ExperimentMatrix) -> Result<()> {
    write_rows(
        w,
        matrix.cells.iter().map(|c| {
            let m = &c.metrics;
            let a = &m.aggregate;
            RunCsvRow {
                mechanism: mechanism_label(&c.axes.mechanism),
                pht_encoding: c.axes.mechanism.pht_encoding.name().into(),
                predictor: c.axes.predictor.to_string(),
                switch_period_cycles: c.axes.switch_period_cycles,
                workload: c.axes.workload.clone(),
                mode: c.axes.mode.name().into(),
                branches: a.branches,
                instructions: a.instructions,
                mispredictions: a.mispredictions,
                direction_mispredictions: a.direction_mispredictions,
                btb_misses: a.btb_misses,
                cycles: a.cycles,
                mpki: m.mpki(),
                accuracy: m.accuracy(),
                key_rotations: m.key_rotations(),
                switch_rotations: m.switch_rotations,
                privilege_rotations: m.privilege_rotations,
                flushes: m.flushes,
                flush_entries: m.flush_entries,
                context_switches: m.context_switches,
                privilege_changes: m.privilege_changes,
                simulated_cycles: m.simulated_cycles,
            }
        }),
    )
}

pub fn write_overhead_csv<W: Write>(w: W, rows: &[OverheadRow]) -> Result<()> {
    write_rows(
        w,
        rows.iter().map(|r| OverheadCsvRow {
            row: match r.kind {
                RowKind::Cell => "cell",
                RowKind::GeoMean => "geomean",
            }
            .into(),
            mechanism: mechanism_label(&r.axes.mechanism),
            predictor: r.axes.predictor.to_string(),
            switch_period_cycles: r.axes.switch_period_cycles,
            workload: r.axes.workload.clone(),
            mode: r.axes.mode.name().into(),
            overhead: r.overhead,
            mpki: r.mpki,
            baseline_mpki: r.baseline_mpki,
            mpki_delta: r.mpki_delta,
            accuracy_delta: r.accuracy_delta,
        }),
    )
}

pub fn write_security_csv<W: Write>(w: W, rows: &[SecurityRow]) -> Result<()> {
    write_rows(
        w,
        rows.iter().map(|r| SecurityCsvRow {
            attack: r.attack.to_string(),
            variant: r.variant.clone(),
            mechanism: mechanism_label(&r.mechanism),
            core: core(r.smt),
            iterations: r.iterations,
            successes: r.successes,
            success_rate: r.success_rate,
            chance_rate: r.chance_rate,
            p_value: r.p_value,
            label: r.label.to_string(),
            published: r.expected.map_or(String::new(), |l| l.to_string()),
        }),
    )
}

pub fn write_attack_csv<W: Write>(w: W, reports: &[AttackReport]) -> Result<()> {
    write_rows(
        w,
        reports.iter().map(|r| AttackCsvRow {
            attack: r.kind.to_string(),
            variant: r.mode.map_or("-".into(), |m| m.name().to_string()),
            mechanism: mechanism_label(&r.mechanism),
            core: core(r.smt),
            iterations: r.iterations_run,
            successes: r.successes,
            success_rate: r.success_rate,
            subtrials: r.subtrials,
            subtrial_successes: r.subtrial_successes,
            diagnostics: r
                .diagnostics
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";"),
        }),
    )
}

/// Parses rows written by one of the `write_*_csv` functions.
pub fn read_csv_rows<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}
