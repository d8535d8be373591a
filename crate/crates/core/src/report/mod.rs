//! Experiment matrices, overhead tables, security matrices and their text /
//! CSV renderings.

mod csv_out;
mod matrix;
mod overhead;
mod security;
mod table;

pub use csv_out::{
    read_csv_rows, write_attack_csv, write_overhead_csv, write_run_csv, write_security_csv,
    AttackCsvRow, OverheadCsvRow, RunCsvRow, SecurityCsvRow, RUN_COLUMNS,
};
pub use matrix::{run_matrix, ExperimentMatrix, RunAxes, RunCell};
pub use overhead::{emit_overhead_table, OverheadRow, RowKind};
pub use security::{classify, emit_security_matrix, expected_label, SecurityLabel, SecurityRow};
pub use table::{render_attacks, render_overhead, render_runs, render_security, TextTable};
