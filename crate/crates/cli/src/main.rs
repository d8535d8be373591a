use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpiso::attacks::{run_attacks, AttackScenario};
use bpiso::engine::{run_trace, RunMetrics};
use bpiso::io::{
    format_trace, generate_synthetic, load_config, parse_config_str, write_trace, Config, Trace,
    WorkloadSource, DEFAULT_ATTACK_CONFIG,
};
use bpiso::report::{
    emit_overhead_table, emit_security_matrix, render_attacks, render_overhead, render_runs,
    render_security, run_matrix, write_attack_csv, write_overhead_csv, write_run_csv,
    write_security_csv, ExperimentMatrix, RunAxes, RunCell,
};
use bpiso::verify::{run_verify, Fault};
use bpiso::Error;
use clap::{Args, Parser, Subcommand};

/// Branch predictor isolation simulator.
#[derive(Debug, Parser)]
#[command(name = "bpiso", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value (`key=value` or `section.key=value`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also write results as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, env = "BPISO_SEED")]
    seed: Option<u64>,
    /// Worker threads for sweeps and attack grids (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration over its traces.
    Run(Common),
    /// Run the cross product of the [sweep] axes and print overhead tables.
    Sweep(Common),
    /// Run attack scenarios and print the security matrix.
    Attack(Common),
    /// Write traces generated from [synthetic.<name>] sections.
    GenTrace {
        #[command(flatten)]
        common: Common,
        /// Spec names to generate (default: all).
        #[arg(long = "spec")]
        specs: Vec<String>,
        /// Output file (one spec) or directory (several). Default: stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Verify {
        #[arg(long, env = "BPISO_SEED")]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(c) => cmd_run(&c),
        Command::Sweep(c) => cmd_sweep(&c),
        Command::Attack(c) => cmd_attack(&c),
        Command::GenTrace { common, specs, out } => cmd_gen_trace(&common, &specs, out.as_deref()),
        Command::Verify { seed, inject_fault } => cmd_verify(seed.unwrap_or(0), inject_fault.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

/// Loads the config (or `fallback` text when none is given) with `--seed`
/// folded into the overrides, and prints its warnings.
fn config(c: &Common, fallback: &str) -> Result<Config, Failure> {
    let mut overrides = c.set.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = match &c.config {
        Some(p) => load_config(p, &overrides)?,
        None => parse_config_str(fallback, Path::new("<defaults>"), &overrides)?,
    };
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn header(c: &Common) -> String {
    let mut h = String::new();
    if let Some(p) = &c.config {
        h.push_str(&format!("# config: {}\n", p.display()));
    }
    for o in &c.set {
        h.push_str(&format!("# override: {o}\n"));
    }
    if let Some(s) = c.seed {
        h.push_str(&format!("# seed: {s}\n"));
    }
    h
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// `dir/stem-suffix.csv` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}-{suffix}.csv"))
}

/// Workload name used for `[run]` inputs, shared by `run` and `sweep`.
fn run_workload_name(source: &WorkloadSource) -> String {
    match source {
        WorkloadSource::Named(n) => n.clone(),
        WorkloadSource::Synthetic(names) => names.join("+"),
        WorkloadSource::Files(paths) => paths
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("+"),
    }
}

fn run_inputs(cfg: &Config) -> Result<(String, Vec<Trace>), Failure> {
    let source = cfg.run_workload.as_ref().ok_or_else(|| {
        Failure::Validation("[run] names no inputs; set traces = <file>[, <file>] or workload = <name>".into())
    })?;
    Ok((run_workload_name(source), cfg.load_source(source)?))
}

fn print_metrics(m: &RunMetrics) {
    println!("thread  branches  instructions  mispredictions  mpki  accuracy");
    for (i, t) in m.threads.iter().enumerate() {
        println!(
            "{i}  {}  {}  {}  {:.4}  {:.6}",
            t.branches,
            t.instructions,
            t.mispredictions,
            t.mpki(),
            t.accuracy()
        );
    }
    let a = &m.aggregate;
    println!(
        "measured  {}  {}  {}  {:.4}  {:.6}",
        a.branches,
        a.instructions,
        a.mispredictions,
        a.mpki(),
        a.accuracy()
    );
    println!(
        "context_switches={} privilege_changes={} key_rotations={} flushes={} flush_entries={} cycles={}",
        m.context_switches,
        m.privilege_changes,
        m.key_rotations(),
        m.flushes,
        m.flush_entries,
        m.simulated_cycles
    );
}

fn cmd_run(c: &Common) -> Outcome {
    let cfg = config(c, "")?;
    let (workload, traces) = run_inputs(&cfg)?;
    let r = &cfg.run;
    print!("{}", header(c));
    println!(
        "# predictor={} mechanism={} pht_encoding={} mode={} period={} privilege_rate={} seed={}",
        r.predictor,
        r.mechanism.mechanism,
        r.mechanism.pht_encoding.name(),
        r.mode.name(),
        r.switch_period_cycles,
        r.privilege_rate_per_mcycle,
        r.seed
    );
    let metrics = run_trace(&traces, r)?;
    print_metrics(&metrics);
    if let Some(path) = &c.csv {
        let matrix = ExperimentMatrix {
            cells: vec![RunCell {
                axes: RunAxes {
                    mechanism: r.mechanism,
                    predictor: r.predictor,
                    switch_period_cycles: r.switch_period_cycles,
                    workload,
                    mode: r.mode,
                },
                metrics,
            }],
        };
        write_run_csv(create(path)?, &matrix)?;
    }
    Ok(())
}

fn or_default<T: Clone>(axis: &[T], fallback: T) -> Vec<T> {
    if axis.is_empty() {
        vec![fallback]
    } else {
        axis.to_vec()
    }
}

fn cmd_sweep(c: &Common) -> Outcome {
    let cfg = config(c, "")?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Failure::Validation("config has no [sweep] section".into()))?;
    let base = &cfg.run;
    let mut workloads: Vec<(String, Vec<Trace>)> = Vec::new();
    if sweep.workloads.is_empty() {
        workloads.push(run_inputs(&cfg)?);
    } else {
        for name in &sweep.workloads {
            let w = cfg.workload(name).expect("checked at load");
            workloads.push((name.clone(), cfg.load_source(&w.source)?));
        }
    }
    let predictors = or_default(&sweep.predictors, base.predictor);
    let periods = or_default(&sweep.periods, base.switch_period_cycles);
    let modes = or_default(&sweep.modes, base.mode);
    let mut axes = Vec::new();
    for mechanism in &sweep.mechanisms {
        for &predictor in &predictors {
            for &switch_period_cycles in &periods {
                for (workload, _) in &workloads {
                    for &mode in &modes {
                        axes.push(RunAxes {
                            mechanism: *mechanism,
                            predictor,
                            switch_period_cycles,
                            workload: workload.clone(),
                            mode,
                        });
                    }
                }
            }
        }
    }
    let matrix = run_matrix(&axes, &workloads, base, c.threads.unwrap_or(0))?;
    print!("{}", header(c));
    println!("# {} cells", matrix.cells.len());
    print!("{}", render_runs(&matrix));
    let has_baseline = sweep.mechanisms.iter().any(|m| m.mechanism == sweep.baseline);
    let overhead = if has_baseline && sweep.mechanisms.len() > 1 {
        let rows = emit_overhead_table(&matrix, sweep.baseline)?;
        println!();
        println!("# overhead vs {}", sweep.baseline);
        print!("{}", render_overhead(&rows));
        Some(rows)
    } else {
        None
    };
    if let Some(path) = &c.csv {
        write_run_csv(create(path)?, &matrix)?;
        if let Some(rows) = &overhead {
            write_overhead_csv(create(&sibling(path, "overhead"))?, rows)?;
        }
    }
    Ok(())
}

fn cmd_attack(c: &Common) -> Outcome {
    let cfg = config(c, DEFAULT_ATTACK_CONFIG)?;
    let scenarios: Vec<AttackScenario> = cfg.attack_scenarios();
    if scenarios.is_empty() {
        return Err(Failure::Validation("config has no [attack.<name>] sections".into()));
    }
    let reports = run_attacks(&scenarios, c.threads.unwrap_or(0))?;
    print!("{}", header(c));
    let fewest = scenarios.iter().map(|s| s.iterations).min().unwrap_or(0);
    if fewest < 10_000 {
        println!(
            "# note: {fewest} iterations per scenario; rate confidence half-width up to {:.4} (95%)",
            1.96 * (0.25 / fewest as f64).sqrt()
        );
    }
    print!("{}", render_attacks(&reports));
    println!();
    let rows = emit_security_matrix(&reports);
    print!("{}", render_security(&rows));
    if let Some(path) = &c.csv {
        write_security_csv(create(path)?, &rows)?;
        write_attack_csv(create(&sibling(path, "reports"))?, &reports)?;
    }
    Ok(())
}

fn cmd_gen_trace(c: &Common, names: &[String], out: Option<&Path>) -> Outcome {
    let cfg = config(c, "")?;
    let mut specs: Vec<_> = if names.is_empty() {
        cfg.synthetic.clone()
    } else {
        names
            .iter()
            .map(|n| {
                cfg.synthetic
                    .iter()
                    .find(|s| &s.name == n)
                    .cloned()
                    .ok_or_else(|| Failure::Validation(format!("no [synthetic.{n}] section")))
            })
            .collect::<Result<_, _>>()?
    };
    if specs.is_empty() {
        return Err(Failure::Validation("no [synthetic.<name>] sections to generate".into()));
    }
    if let Some(seed) = c.seed {
        for s in &mut specs {
            s.seed = seed;
        }
    }
    match (out, specs.len()) {
        (None, 1) => {
            let t = generate_synthetic(&specs[0])?;
            let mut w = BufWriter::new(io::stdout().lock());
            w.write_all(format_trace(&t).as_bytes())?;
            w.flush()?;
        }
        (None, _) => {
            return Err(Failure::Validation("several specs need --out <directory>".into()))
        }
        (Some(path), 1) if !path.is_dir() => {
            let t = generate_synthetic(&specs[0])?;
            write_trace(path, &t)?;
            eprintln!("wrote {} ({} records)", path.display(), t.len());
        }
        (Some(dir), _) => {
            std::fs::create_dir_all(dir)?;
            for s in &specs {
                let t = generate_synthetic(s)?;
                let path = dir.join(format!("{}.trace", s.name));
                write_trace(&path, &t)?;
                eprintln!("wrote {} ({} records)", path.display(), t.len());
            }
        }
    }
    Ok(())
}

fn cmd_verify(seed: u64, fault: Option<&str>) -> Outcome {
    let fault = fault.map(|f| f.parse::<Fault>()).transpose()?;
    let report = run_verify(seed, fault);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        println!("{} checks passed (seed {seed})", report.checks.len());
        Ok(())
    } else {
        let names: Vec<_> = report.failures().map(|c| c.name).collect();
        Err(Failure::Runtime(format!(
            "invariant violated: {}; reproduce with `bpiso verify --seed {seed}`",
            names.join(", ")
        )))
    }
}
