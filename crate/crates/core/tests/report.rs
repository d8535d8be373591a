use bpiso::attacks::{run_attack, AttackKind, AttackScenario};
use bpiso::engine::{Mode, RunConfig};
use bpiso::io::{generate_synthetic, SyntheticSpec, Trace};
use bpiso::predictors::PredictorKind;
use bpiso::report::{
    emit_overhead_table, emit_security_matrix, read_csv_rows, render_overhead, render_runs,
    run_matrix, write_attack_csv, write_overhead_csv, write_run_csv, write_security_csv,
    AttackCsvRow, ExperimentMatrix, OverheadCsvRow, RowKind, RunAxes, RunCsvRow, SecurityCsvRow,
    RUN_COLUMNS,
};
use bpiso::{Error, Mechanism, MechanismConfig};

fn workloads() -> Vec<(String, Vec<Trace>)> {
    ["a", "b"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let t = generate_synthetic(&SyntheticSpec {
                seed: i as u64 + 1,
                records: 8_000,
                ..SyntheticSpec::default()
            })
            .unwrap();
            (name.to_string(), vec![t])
        })
        .collect()
}

fn axes(mechs: &[Mechanism], workloads: &[&str]) -> Vec<RunAxes> {
    let mut out = Vec::new();
    for &m in mechs {
        for w in workloads {
            out.push(RunAxes {
                mechanism: MechanismConfig::new(m),
                predictor: PredictorKind::Gshare,
                switch_period_cycles: 10_000,
                workload: w.to_string(),
                mode: Mode::SingleThread,
            });
        }
    }
    out
}

fn base() -> RunConfig {
    RunConfig { privilege_rate_per_mcycle: 50.0, ..RunConfig::default() }
}

fn matrix(mechs: &[Mechanism]) -> ExperimentMatrix {
    run_matrix(&axes(mechs, &["a", "b"]), &workloads(), &base(), 2).unwrap()
}

#[test]
fn overhead_table_shape() {
    let m = matrix(&[Mechanism::Baseline, Mechanism::XorBp, Mechanism::CompleteFlush]);
    let rows = emit_overhead_table(&m, Mechanism::Baseline).unwrap();
    assert_eq!(rows.iter().filter(|r| r.kind == RowKind::Cell).count(), 4);
    let means: Vec<_> = rows.iter().filter(|r| r.kind == RowKind::GeoMean).collect();
    assert_eq!(means.len(), 2);
    assert!(means.iter().all(|r| r.axes.workload == "geomean"));
    let text = render_overhead(&rows);
    assert_eq!(text.matches("geomean").count(), 2);
}

#[test]
fn baseline_against_itself_is_zero() {
    // Every XOR-BP cell replaced by a copy of its baseline cell.
    let m = matrix(&[Mechanism::Baseline, Mechanism::XorBp]);
    let mut same = m.clone();
    for c in same.cells.iter_mut().filter(|c| c.axes.mechanism.mechanism == Mechanism::XorBp) {
        let twin = m
            .cells
            .iter()
            .find(|b| b.axes.mechanism.mechanism == Mechanism::Baseline && b.axes.workload == c.axes.workload)
            .unwrap();
        c.metrics = twin.metrics.clone();
    }
    for r in emit_overhead_table(&same, Mechanism::Baseline).unwrap() {
        assert_eq!(r.overhead, 0.0);
        assert_eq!(r.mpki_delta, 0.0);
        assert_eq!(r.accuracy_delta, 0.0);
    }
}

#[test]
fn missing_baseline_names_the_cell() {
    let m = run_matrix(&axes(&[Mechanism::Baseline], &["a"]), &workloads(), &base(), 1).unwrap();
    let mut extra = run_matrix(&axes(&[Mechanism::NoisyXorBp], &["a", "b"]), &workloads(), &base(), 1).unwrap();
    extra.cells.extend(m.cells);
    match emit_overhead_table(&extra, Mechanism::Baseline) {
        Err(Error::MissingBaseline(label)) => {
            assert!(label.contains("baseline") && label.contains("/b/"), "{label}")
        }
        other => panic!("expected missing baseline, got {other:?}"),
    }
}

#[test]
fn run_csv_round_trips() {
    let m = matrix(&[Mechanism::Baseline, Mechanism::NoisyXorBp]);
    let mut buf = Vec::new();
    write_run_csv(&mut buf, &m).unwrap();
    let header = String::from_utf8(buf.clone()).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, RUN_COLUMNS.join(","));
    let rows: Vec<RunCsvRow> = read_csv_rows(&buf[..]).unwrap();
    assert_eq!(rows.len(), m.cells.len());
    for (row, cell) in rows.iter().zip(&m.cells) {
        assert_eq!(row.workload, cell.axes.workload);
        assert_eq!(row.branches, cell.metrics.aggregate.branches);
        assert_eq!(row.mpki, cell.metrics.mpki());
        assert_eq!(row.accuracy, cell.metrics.accuracy());
        assert_eq!(row.key_rotations, cell.metrics.key_rotations());
    }
    let mut again = Vec::new();
    let mut w = csv::Writer::from_writer(&mut again);
    for r in &rows {
        w.serialize(r).unwrap();
    }
    drop(w);
    assert_eq!(again, buf);
    assert!(render_runs(&m).contains("noisy-xor-bp"));
}

#[test]
fn overhead_csv_round_trips() {
    let m = matrix(&[Mechanism::Baseline, Mechanism::PreciseFlush]);
    let rows = emit_overhead_table(&m, Mechanism::Baseline).unwrap();
    let mut buf = Vec::new();
    write_overhead_csv(&mut buf, &rows).unwrap();
    let back: Vec<OverheadCsvRow> = read_csv_rows(&buf[..]).unwrap();
    assert_eq!(back.len(), rows.len());
    for (b, r) in back.iter().zip(&rows) {
        assert_eq!(b.overhead, r.overhead);
        assert_eq!(b.accuracy_delta, r.accuracy_delta);
        assert_eq!(b.row, if r.kind == RowKind::Cell { "cell" } else { "geomean" });
    }
}

#[test]
fn attack_and_security_csv_round_trip() {
    let reports: Vec<_> = [Mechanism::Baseline, Mechanism::XorBp]
        .into_iter()
        .map(|m| {
            let mut s = AttackScenario::new(AttackKind::BtbContentionSbpa, MechanismConfig::new(m));
            s.iterations = 200;
            run_attack(&s).unwrap()
        })
        .collect();
    let mut buf = Vec::new();
    write_attack_csv(&mut buf, &reports).unwrap();
    let back: Vec<AttackCsvRow> = read_csv_rows(&buf[..]).unwrap();
    for (b, r) in back.iter().zip(&reports) {
        assert_eq!(b.success_rate, r.success_rate);
        assert_eq!(b.successes, r.successes);
        assert!(b.diagnostics.contains("probe_misses="));
    }
    let rows = emit_security_matrix(&reports);
    let mut buf = Vec::new();
    write_security_csv(&mut buf, &rows).unwrap();
    let back: Vec<SecurityCsvRow> = read_csv_rows(&buf[..]).unwrap();
    for (b, r) in back.iter().zip(&rows) {
        assert_eq!(b.p_value, r.p_value);
        assert_eq!(b.label, r.label.to_string());
        assert_eq!(b.core, "single");
    }
}
