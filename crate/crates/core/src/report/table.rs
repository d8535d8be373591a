use std::fmt::Write as _;

use crate::attacks::AttackReport;
use crate::domain::{MechanismConfig, PhtEncoding};

use super::matrix::ExperimentMatrix;
use super::overhead::{OverheadRow, RowKind};
use super::security::SecurityRow;

/// Left-aligned text columns separated by two spaces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TextTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        TextTable {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let cols = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let mut l = String::new();
            for (i, c) in cells.iter().enumerate().take(cols) {
                if i + 1 == cols {
                    l.push_str(c);
                } else {
                    let _ = write!(l, "{:<w$}  ", c, w = widths[i]);
                }
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(&self.headers);
        for r in &self.rows {
            line(r);
        }
        out
    }
}

/// Mechanism name plus any non-default encoding options.
pub(crate) fn mechanism_label(m: &MechanismConfig) -> String {
    let mut s = m.mechanism.name().to_string();
    if m.mechanism.is_xor() && m.pht_encoding == PhtEncoding::PerEntry {
        s.push_str("/per-entry");
    }
    if m.word_width_bits != 32 {
        let _ = write!(s, "/w{}", m.word_width_bits);
    }
    if m.hardened_word_select {
        s.push_str("/hardened");
    }
    s
}

pub fn render_runs(matrix: &ExperimentMatrix) -> String {
    let mut t = TextTable::new([
        "mechanism", "predictor", "period", "workload", "mode", "instructions", "mpki", "accuracy",
        "rotations", "flushes",
    ]);
    for c in &matrix.cells {
        let m = &c.metrics;
        t.push(vec![
            mechanism_label(&c.axes.mechanism),
            c.axes.predictor.to_string(),
            c.axes.switch_period_cycles.to_string(),
            c.axes.workload.clone(),
            c.axes.mode.name().into(),
            m.aggregate.instructions.to_string(),
            format!("{:.4}", m.mpki()),
            format!("{:.6}", m.accuracy()),
            m.key_rotations().to_string(),
            m.flushes.to_string(),
        ]);
    }
    t.render()
}

pub fn render_overhead(rows: &[OverheadRow]) -> String {
    let mut t = TextTable::new([
        "mechanism", "predictor", "period", "workload", "mode", "overhead", "mpki", "base_mpki",
        "d_accuracy",
    ]);
    for r in rows {
        let workload = match r.kind {
            RowKind::Cell => r.axes.workload.clone(),
            RowKind::GeoMean => "[geomean]".into(),
        };
        t.push(vec![
            mechanism_label(&r.axes.mechanism),
            r.axes.predictor.to_string(),
            r.axes.switch_period_cycles.to_string(),
            workload,
            r.axes.mode.name().into(),
            format!("{:+.4}%", 100.0 * r.overhead),
            format!("{:.4}", r.mpki),
            format!("{:.4}", r.baseline_mpki),
            format!("{:+.6}", r.accuracy_delta),
        ]);
    }
    t.render()
}

pub fn render_security(rows: &[SecurityRow]) -> String {
    let mut t = TextTable::new([
        "attack", "variant", "mechanism", "core", "success", "rate", "chance", "p_value", "label",
        "published",
    ]);
    for r in rows {
        t.push(vec![
            r.attack.to_string(),
            r.variant.clone(),
            mechanism_label(&r.mechanism),
            if r.smt { "smt" } else { "single" }.into(),
            format!("{}/{}", r.successes, r.iterations),
            format!("{:.4}", r.success_rate),
            format!("{:.4}", r.chance_rate),
            format!("{:.3e}", r.p_value),
            r.label.to_string(),
            r.expected.map_or("-".into(), |l| l.to_string()),
        ]);
    }
    t.render()
}

pub fn render_attacks(reports: &[AttackReport]) -> String {
    let mut t = TextTable::new([
        "attack", "mechanism", "core", "iterations", "successes", "rate", "subtrial_rate", "diagnostics",
    ]);
    for r in reports {
        let diag: Vec<String> = r.diagnostics.iter().map(|(k, v)| format!("{k}={v}")).collect();
        t.push(vec![
            r.kind.to_string(),
            mechanism_label(&r.mechanism),
            if r.smt { "smt" } else { "single" }.into(),
            r.iterations_run.to_string(),
            r.successes.to_string(),
            format!("{:.4}", r.success_rate),
            if r.subtrials > 0 {
                format!("{:.4}", r.subtrial_rate())
            } else {
                "-".into()
            },
            if diag.is_empty() { "-".into() } else { diag.join(";") },
        ]);
    }
    t.render()
}
