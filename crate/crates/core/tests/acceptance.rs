//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};

use bpiso::attacks::{
    replay_tag_hits, run_attack, AttackKind, AttackReport, AttackScenario, BranchScopeMode,
    RESIDUAL_FLOOR,
};
use bpiso::engine::{run_trace, Machine, Mode, RunConfig, RunMetrics};
use bpiso::io::{format_trace, generate_synthetic, parse_trace_str, SyntheticSpec, Trace};
use bpiso::predictors::{BtbGeometry, PredictorKind};
use bpiso::report::{
    emit_overhead_table, run_matrix, write_attack_csv, write_overhead_csv, write_run_csv, RowKind,
    RunAxes,
};
use bpiso::stats::{
    above_chance, binomial_upper_tail, geometric_mean, geometric_mean_change, poisson_within_sigma,
};
use bpiso::{
    codec_apply, Key, Mechanism, MechanismConfig, PhtEncoding, SimRng, ThreadContext, Tid, Word,
};

type Outcome = Result<String, String>;

const ALPHA: f64 = 0.001;
const NO_SWITCHES: u64 = u64::MAX / 4;

/// Warm-up-sensitive mix: a large static footprint at a shared code base, so
/// co-running threads alias unless their indices are randomized.
fn suite_spec(seed: u64, records: usize) -> SyntheticSpec {
    SyntheticSpec {
        name: format!("w{seed}"),
        seed,
        records,
        num_static_branches: 2048,
        successor_bias: 0.95,
        bias_shape: 0.05,
        correlated_fraction: 0.3,
        pattern_fraction: 0.05,
        loop_fraction: 0.05,
        ..SyntheticSpec::default()
    }
}

fn suite(pairs: u64, records: usize) -> Vec<(String, Vec<Trace>)> {
    (0..pairs)
        .map(|i| {
            let a = generate_synthetic(&suite_spec(100 + 2 * i, records)).unwrap();
            let b = generate_synthetic(&suite_spec(101 + 2 * i, records)).unwrap();
            (format!("pair{i}"), vec![a, b])
        })
        .collect()
}

fn run(traces: &[Trace], cfg: &RunConfig) -> RunMetrics {
    run_trace(traces, cfg).expect("run")
}

fn c1_transparency() -> Outcome {
    let mut rng = SimRng::seed_from_u64(1);
    for i in 0..100_000u32 {
        let width = 1 + i % 64;
        let w = Word::new(rng.random::<u64>() & bpiso::domain::mask(width), width).unwrap();
        let k = Word::new(rng.random::<u64>() & bpiso::domain::mask(width), width).unwrap();
        let round = codec_apply(codec_apply(w, k).unwrap(), k).unwrap();
        if round != w {
            return Err(format!("pair {i}: {w:?} under {k:?} decoded to {round:?}"));
        }
    }
    let trace = generate_synthetic(&SyntheticSpec {
        records: 100_000,
        seed: 7,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let btb = BtbGeometry::default();
    let fixed = Key::new(0x9e37_79b9_7f4a_7c15);
    for kind in PredictorKind::ALL {
        let mut base = Machine::new(kind, btb, MechanismConfig::new(Mechanism::Baseline), 3);
        let expected: Vec<_> = trace.records.iter().map(|r| base.execute(Tid(0), r)).collect();
        for mech in [Mechanism::XorBp, Mechanism::NoisyXorBp] {
            for key in [Key::ZERO, fixed] {
                let mut m = Machine::new(kind, btb, MechanismConfig::new(mech), 3);
                m.set_context(ThreadContext::new(Tid(0), key));
                m.warm_reset(Tid(0));
                for (i, rec) in trace.records.iter().enumerate() {
                    if m.execute(Tid(0), rec) != expected[i] {
                        return Err(format!("{kind} {mech} key {key:?}: branch {i} differs"));
                    }
                }
            }
        }
    }
    Ok("1e5 codec pairs; 3 predictors x 2 mechanisms x 2 keys x 1e5 branches identical".into())
}

fn c2_garbling() -> Outcome {
    let trials = 200_000u64;
    let tag_bits = BtbGeometry::default().tag_bits;
    let p = 2f64.powi(-(tag_bits as i32));
    let bound = p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    let mut details = Vec::new();
    for mech in [Mechanism::XorBp, Mechanism::NoisyXorBp] {
        let hits = replay_tag_hits(trials, MechanismConfig::new(mech), 11);
        let rate = hits as f64 / trials as f64;
        details.push(format!("{mech} {rate:.2e}"));
        if rate > bound {
            return Err(format!("{mech}: tag-hit rate {rate:.3e} > bound {bound:.3e}"));
        }
    }
    Ok(format!("{} (bound {bound:.2e}, {trials} trials)", details.join(", ")))
}

fn attack(kind: AttackKind, mech: Mechanism, iterations: u64) -> AttackReport {
    let mut s = AttackScenario::new(kind, MechanismConfig::new(mech));
    s.iterations = iterations;
    s.seed = 5;
    run_attack(&s).expect("attack")
}

fn c3_reuse_grid() -> Outcome {
    let n = 10_000;
    let mut details = Vec::new();
    for kind in [AttackKind::BtbReuseTraining, AttackKind::PhtBranchScope] {
        let base = attack(kind, Mechanism::Baseline, n);
        if base.success_rate < 0.90 || !above_chance(base.successes, n, RESIDUAL_FLOOR, ALPHA) {
            return Err(format!("{kind} baseline success {:.4}", base.success_rate));
        }
        details.push(format!("{kind} baseline {:.4}", base.success_rate));
        for mech in [Mechanism::XorBp, Mechanism::NoisyXorBp] {
            let r = attack(kind, mech, n);
            let p = binomial_upper_tail(r.successes, n, RESIDUAL_FLOOR);
            if r.success_rate >= 0.01 || p <= ALPHA {
                return Err(format!("{kind} {mech}: success {:.4}, p {p:.3e}", r.success_rate));
            }
            details.push(format!("{mech} {:.4}", r.success_rate));
        }
    }
    Ok(details.join(", "))
}

fn c4_contention() -> Outcome {
    let n = 10_000u64;
    let base = attack(AttackKind::BtbContentionSbpa, Mechanism::Baseline, n);
    if base.success_rate < 0.95 {
        return Err(format!("baseline inference accuracy {:.4}", base.success_rate));
    }
    let sd = (0.25 / n as f64).sqrt();
    let mut details = vec![format!("baseline {:.4}", base.success_rate)];
    for mech in [Mechanism::XorBp, Mechanism::NoisyXorBp] {
        let r = attack(AttackKind::BtbContentionSbpa, mech, n);
        if (r.success_rate - 0.5).abs() > 3.0 * sd {
            return Err(format!("{mech}: accuracy {:.4} outside 0.5 +- {:.4}", r.success_rate, 3.0 * sd));
        }
        details.push(format!("{mech} {:.4}", r.success_rate));
    }
    Ok(details.join(", "))
}

const PERIODS: [u64; 4] = [1_000_000, 4_000_000, 8_000_000, 16_000_000];

fn c5_flush_trends() -> Outcome {
    let workloads = suite(3, 2_000_000);
    let predictor = PredictorKind::Gshare;
    let cfg = |mode, period, mech| RunConfig {
        mode,
        predictor,
        switch_period_cycles: period,
        privilege_rate_per_mcycle: 0.0,
        mechanism: MechanismConfig::new(mech),
        ..RunConfig::default()
    };
    let mut details = Vec::new();
    let mut last_mpki = f64::INFINITY;
    for period in PERIODS {
        // Per (pair, thread): single-thread and SMT losses under each mechanism.
        let mut single_complete = Vec::new();
        let mut smt_complete = Vec::new();
        let mut smt_precise = Vec::new();
        let mut mpki = Vec::new();
        for (_, traces) in &workloads {
            let smt = |m| run(traces, &cfg(Mode::Smt2, period, m));
            let (sb, sc, sp) = (smt(Mechanism::Baseline), smt(Mechanism::CompleteFlush), smt(Mechanism::PreciseFlush));
            for t in 0..2 {
                let order = [traces[t].clone(), traces[1 - t].clone()];
                let single = |m| run(&order, &cfg(Mode::SingleThread, period, m));
                let (b, c) = (single(Mechanism::Baseline), single(Mechanism::CompleteFlush));
                mpki.push(c.threads[0].mpki());
                single_complete.push(b.threads[0].accuracy() - c.threads[0].accuracy());
                smt_complete.push(sb.threads[t].accuracy() - sc.threads[t].accuracy());
                smt_precise.push(sb.threads[t].accuracy() - sp.threads[t].accuracy());
            }
        }
        let gm = |v: &[f64]| geometric_mean_change(v).unwrap();
        let mpki = geometric_mean(&mpki).unwrap();
        let (ls, lc, lp) = (gm(&single_complete), gm(&smt_complete), gm(&smt_precise));
        details.push(format!(
            "{}M: mpki {mpki:.3} loss single {ls:.5} smt {lc:.5} precise {lp:.5}",
            period / 1_000_000
        ));
        if mpki > last_mpki {
            return Err(format!("complete-flush MPKI rises with period: {}", details.join("; ")));
        }
        last_mpki = mpki;
        if lc <= ls {
            return Err(format!("SMT loss does not exceed single-thread loss: {}", details.join("; ")));
        }
        if lp > lc {
            return Err(format!("precise loss exceeds complete loss: {}", details.join("; ")));
        }
    }
    Ok(details.join("; "))
}

fn c6_mechanism_ordering() -> Outcome {
    let workloads = suite(4, 1_000_000);
    let mut axes = Vec::new();
    for predictor in PredictorKind::ALL {
        for mech in [Mechanism::Baseline, Mechanism::NoisyXorBp, Mechanism::PreciseFlush, Mechanism::CompleteFlush] {
            for (w, _) in &workloads {
                axes.push(RunAxes {
                    mechanism: MechanismConfig::new(mech),
                    predictor,
                    switch_period_cycles: 8_000_000,
                    workload: w.clone(),
                    mode: Mode::Smt2,
                });
            }
        }
    }
    let matrix = run_matrix(&axes, &workloads, &RunConfig::default(), 0).map_err(|e| e.to_string())?;
    let rows = emit_overhead_table(&matrix, Mechanism::Baseline).map_err(|e| e.to_string())?;
    let mean = |p: PredictorKind, m: Mechanism| {
        rows.iter()
            .find(|r| r.kind == RowKind::GeoMean && r.axes.predictor == p && r.axes.mechanism.mechanism == m)
            .map(|r| r.overhead)
            .expect("geomean row")
    };
    let mut details = Vec::new();
    for p in PredictorKind::ALL {
        let (n, pr, c) = (
            mean(p, Mechanism::NoisyXorBp),
            mean(p, Mechanism::PreciseFlush),
            mean(p, Mechanism::CompleteFlush),
        );
        details.push(format!("{p} noisy {:.2}% precise {:.2}% complete {:.2}%", n * 100.0, pr * 100.0, c * 100.0));
        if !(n <= pr && pr <= c) {
            return Err(details.join("; "));
        }
    }
    Ok(details.join("; "))
}

fn c7_predictor_quality() -> Outcome {
    let cfg = |predictor| RunConfig {
        predictor,
        switch_period_cycles: NO_SWITCHES,
        privilege_rate_per_mcycle: 0.0,
        ..RunConfig::default()
    };
    let mut means = Vec::new();
    for p in PredictorKind::ALL {
        let mpki: Vec<f64> = (0..4)
            .map(|i| {
                let spec = SyntheticSpec {
                    num_static_branches: 512,
                    loop_fraction: 0.1,
                    ..suite_spec(200 + i, 500_000)
                };
                run(&[generate_synthetic(&spec).unwrap()], &cfg(p)).mpki()
            })
            .collect();
        means.push((p, mpki.iter().sum::<f64>() / mpki.len() as f64));
    }
    let detail = means
        .iter()
        .map(|(p, m)| format!("{p} {m:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    if means[0].1 > means[1].1 && means[1].1 > means[2].1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8_encoding_granularity() -> Outcome {
    let mut details = Vec::new();
    for enc in [PhtEncoding::PerEntry, PhtEncoding::EnhancedWord] {
        let mut s = AttackScenario::new(
            AttackKind::PhtBranchScope,
            MechanismConfig::new(Mechanism::XorBp).with_encoding(enc),
        );
        s.iterations = 1_000;
        s.seed = 9;
        s.branchscope_mode = BranchScopeMode::Differential;
        let r = run_attack(&s).map_err(|e| e.to_string())?;
        let p = binomial_upper_tail(r.subtrial_successes, r.subtrials, r.subtrial_chance);
        details.push(format!(
            "{}: {}/{} = {:.4} (p {p:.2e})",
            enc.name(),
            r.subtrial_successes,
            r.subtrials,
            r.subtrial_rate()
        ));
        let recovered = p < ALPHA;
        if recovered != (enc == PhtEncoding::PerEntry) {
            return Err(details.join(", "));
        }
    }
    Ok(details.join(", "))
}

fn c9_privilege_accounting() -> Outcome {
    // Long gaps between branches keep the trace short for a long horizon.
    let trace = generate_synthetic(&SyntheticSpec {
        records: 400_000,
        num_static_branches: 256,
        inst_gap: 200,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut details = Vec::new();
    for rate in [1.6, 4.9, 7.0] {
        let cfg = RunConfig {
            privilege_rate_per_mcycle: rate,
            mechanism: MechanismConfig::new(Mechanism::XorBp),
            switch_period_cycles: 8_000_000,
            seed: 21,
            ..RunConfig::default()
        };
        let m = run(&[trace.clone(), trace.clone()], &cfg);
        let mcycles = m.simulated_cycles as f64 / 1e6;
        let expected = rate * mcycles;
        if m.key_rotations() != m.privilege_rotations + m.switch_rotations
            || m.privilege_rotations != m.privilege_changes
        {
            return Err(format!("rate {rate}: rotation counts disagree with events: {m:?}"));
        }
        if !poisson_within_sigma(m.privilege_rotations, expected, 3.0) {
            return Err(format!(
                "rate {rate}: {} privilege rotations over {mcycles:.1} Mcycles, expected {expected:.1}",
                m.privilege_rotations
            ));
        }
        if m.privilege_rotations < 10 * m.switch_rotations {
            return Err(format!(
                "rate {rate}: {} privilege vs {} switch rotations",
                m.privilege_rotations, m.switch_rotations
            ));
        }
        details.push(format!(
            "{rate}/Mcycle: {} priv ({:.2}/Mcycle) vs {} switch",
            m.privilege_rotations,
            m.privilege_rotations as f64 / mcycles,
            m.switch_rotations
        ));
    }
    Ok(details.join(", "))
}

fn c10_determinism() -> Outcome {
    let workloads = suite(1, 50_000);
    let axes: Vec<RunAxes> = [Mechanism::Baseline, Mechanism::NoisyXorBp, Mechanism::CompleteFlush]
        .into_iter()
        .map(|m| RunAxes {
            mechanism: MechanismConfig::new(m),
            predictor: PredictorKind::Tage,
            switch_period_cycles: 100_000,
            workload: "pair0".into(),
            mode: Mode::Smt2,
        })
        .collect();
    let base = RunConfig { seed: 77, ..RunConfig::default() };
    let emit = || -> Result<Vec<u8>, String> {
        let matrix = run_matrix(&axes, &workloads, &base, 0).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        write_run_csv(&mut out, &matrix).map_err(|e| e.to_string())?;
        let rows = emit_overhead_table(&matrix, Mechanism::Baseline).map_err(|e| e.to_string())?;
        write_overhead_csv(&mut out, &rows).map_err(|e| e.to_string())?;
        let mut s = AttackScenario::new(AttackKind::BtbContentionSbpa, MechanismConfig::new(Mechanism::NoisyXorBp));
        s.iterations = 500;
        s.seed = 77;
        write_attack_csv(&mut out, &[run_attack(&s).map_err(|e| e.to_string())?]).map_err(|e| e.to_string())?;
        Ok(out)
    };
    let (a, b) = (emit()?, emit()?);
    if a != b {
        return Err("seeded reruns produced different CSV bytes".into());
    }
    let trace = &workloads[0].1[0];
    let text = format_trace(trace);
    let parsed = parse_trace_str(&text, std::path::Path::new("<mem>"), trace.name.clone())
        .map_err(|e| e.to_string())?;
    if parsed.records != trace.records || format_trace(&parsed) != text {
        return Err("trace did not round-trip".into());
    }
    Ok(format!("{} CSV bytes identical; {} records round-tripped", a.len(), trace.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("codec involution and transparency", c1_transparency),
        ("cross-key BTB garbling", c2_garbling),
        ("reuse attack grid", c3_reuse_grid),
        ("contention defense", c4_contention),
        ("flush trends", c5_flush_trends),
        ("mechanism ordering on SMT-2", c6_mechanism_ordering),
        ("predictor quality ordering", c7_predictor_quality),
        ("PHT encoding granularity", c8_encoding_granularity),
        ("privilege-event accounting", c9_privilege_accounting),
        ("determinism and round-trips", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
