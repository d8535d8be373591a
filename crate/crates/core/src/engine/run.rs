use std::fmt;
use std::str::FromStr;

use crate::domain::{BranchKind, BranchRecord, MechanismConfig, Privilege, Tid};
use crate::error::{Error, Result};
use crate::io::Trace;
use crate::predictors::{BtbGeometry, PredictorKind, HARTS};

use super::events::{EventKind, EventSchedule, ScheduleEvent};
use super::machine::Machine;
use super::metrics::{RunIdentity, RunMetrics, ThreadMetrics};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// One hardware thread; a foreground and an optional background trace
    /// take turns at quantum boundaries.
    #[default]
    SingleThread,
    /// Two hardware threads co-running one trace each.
    Smt2,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SingleThread => "single",
            Mode::Smt2 => "smt2",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::SingleThread),
            "smt2" => Ok(Mode::Smt2),
            _ => Err(Error::config(format!("unknown mode '{s}' (valid: single, smt2)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub switch_period_cycles: u64,
    /// Mean privilege changes per million cycles, per hardware thread.
    pub privilege_rate_per_mcycle: f64,
    pub misprediction_penalty: u64,
    pub mechanism: MechanismConfig,
    pub predictor: PredictorKind,
    pub btb: BtbGeometry,
    pub seed: u64,
    /// Chance that an event eligible for key rotation rotates.
    pub rotation_probability: f64,
    /// Execute a short kernel branch sequence on every kernel entry.
    pub kernel_stub: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::SingleThread,
            switch_period_cycles: 8_000_000,
            privilege_rate_per_mcycle: 4.9,
            misprediction_penalty: 10,
            mechanism: MechanismConfig::default(),
            predictor: PredictorKind::Gshare,
            btb: BtbGeometry::default(),
            seed: 0,
            rotation_probability: 1.0,
            kernel_stub: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.switch_period_cycles == 0 {
            return Err(Error::config("switch_period_cycles must be > 0"));
        }
        if !self.privilege_rate_per_mcycle.is_finite() || self.privilege_rate_per_mcycle < 0.0 {
            return Err(Error::config(format!(
                "privilege_rate_per_mcycle must be a finite value >= 0, got {}",
                self.privilege_rate_per_mcycle
            )));
        }
        if !(0.0..=1.0).contains(&self.rotation_probability) {
            return Err(Error::config(format!(
                "rotation_probability must lie in [0, 1], got {}",
                self.rotation_probability
            )));
        }
        self.btb.validate()?;
        self.mechanism.validate()
    }

    pub fn machine(&self) -> Machine {
        Machine::new(self.predictor, self.btb, self.mechanism, self.seed)
            .with_rotation_probability(self.rotation_probability)
    }
}

/// Branches executed on each kernel entry when the stub is enabled.
fn kernel_stub() -> Vec<BranchRecord> {
    let base = 0xffff_8000_0010_0000u64;
    (0..24u64)
        .map(|i| {
            let pc = base + i * 0x40;
            if i % 6 == 5 {
                BranchRecord::jump(pc, BranchKind::Indirect, base + ((i * 7) % 24) * 0x40)
            } else {
                BranchRecord::conditional(pc, i % 3 != 0, pc + 0x20)
            }
            .with_gap(4)
        })
        .collect()
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    machine: Machine,
    schedule: std::iter::Peekable<EventSchedule>,
    clocks: [u64; HARTS],
    threads: Vec<ThreadMetrics>,
    kernel: ThreadMetrics,
    stub: Vec<BranchRecord>,
    context_switches: u64,
    privilege_changes: u64,
}

impl Runner<'_> {
    fn deliver(&mut self, now: u64) -> Result<()> {
        while let Some(ev) = self.schedule.next_if(|e| e.cycle <= now) {
            self.machine.apply_event(&ev)?;
            match ev.kind {
                EventKind::ContextSwitchIn { .. } => self.context_switches += 1,
                EventKind::PrivilegeChange { tid, to } => {
                    self.privilege_changes += 1;
                    if self.cfg.kernel_stub && to == Privilege::Kernel {
                        self.run_stub(tid, &ev);
                    }
                }
                EventKind::ContextSwitchOut { .. } => {}
            }
        }
        Ok(())
    }

    fn run_stub(&mut self, hart: Tid, _ev: &ScheduleEvent) {
        for i in 0..self.stub.len() {
            let rec = self.stub[i];
            let o = self.machine.execute(hart, &rec);
            let cost = rec.instructions() + self.cfg.misprediction_penalty * o.mispredicted as u64;
            self.clocks[hart.index()] += cost;
            self.kernel.record(&rec, &o, cost);
        }
    }

    fn step(&mut self, hart: Tid, thread: Tid, rec: &BranchRecord) {
        let o = self.machine.execute(hart, rec);
        let cost = rec.instructions() + self.cfg.misprediction_penalty * o.mispredicted as u64;
        self.clocks[hart.index()] += cost;
        self.threads[thread.index()].record(rec, &o, cost);
    }
}

/// Runs the traces under `cfg` and returns the collected metrics.
///
/// Single-thread mode measures `traces[0]` to completion; `traces[1]`, if
/// present, runs (looping) during background quanta. SMT-2 runs both traces
/// to completion, always advancing the hardware thread that is behind.
pub fn run_trace(traces: &[Trace], cfg: &RunConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let nonempty = |i: usize| traces.get(i).is_some_and(|t| !t.records.is_empty());
    match cfg.mode {
        Mode::SingleThread if !nonempty(0) => {
            return Err(Error::config("single-thread run needs a nonempty foreground trace"))
        }
        Mode::Smt2 if !(nonempty(0) && nonempty(1)) => {
            return Err(Error::config("smt2 run needs two nonempty traces"))
        }
        _ => {}
    }
    let background = cfg.mode == Mode::SingleThread && nonempty(1);
    let mut r = Runner {
        cfg,
        machine: cfg.machine(),
        schedule: EventSchedule::new(cfg, background).peekable(),
        clocks: [0; HARTS],
        threads: vec![ThreadMetrics::default(); traces.len().clamp(1, HARTS)],
        kernel: ThreadMetrics::default(),
        stub: kernel_stub(),
        context_switches: 0,
        privilege_changes: 0,
    };

    let measured: Vec<usize> = match cfg.mode {
        Mode::SingleThread => {
            let fg = &traces[0].records;
            let mut pos = [0usize; 2];
            while pos[0] < fg.len() {
                r.deliver(r.clocks[0])?;
                let thread = r.machine.context(Tid(0)).resident();
                let rec = if thread == Tid(0) || !background {
                    pos[0] += 1;
                    fg[pos[0] - 1]
                } else {
                    let bg = &traces[1].records;
                    pos[1] += 1;
                    bg[(pos[1] - 1) % bg.len()]
                };
                let thread = if background { thread } else { Tid(0) };
                r.step(Tid(0), thread, &rec);
            }
            vec![0]
        }
        Mode::Smt2 => {
            let mut pos = [0usize; 2];
            loop {
                let hart = (0..HARTS)
                    .filter(|&h| pos[h] < traces[h].records.len())
                    .min_by_key(|&h| r.clocks[h]);
                let Some(h) = hart else { break };
                r.deliver(r.clocks[h])?;
                let rec = traces[h].records[pos[h]];
                pos[h] += 1;
                r.step(Tid(h as u8), Tid(h as u8), &rec);
            }
            vec![0, 1]
        }
    };

    let mut aggregate = ThreadMetrics::default();
    for &t in &measured {
        aggregate.add(&r.threads[t]);
    }
    let stats = r.machine.stats();
    Ok(RunMetrics {
        identity: RunIdentity {
            predictor: cfg.predictor,
            mode: cfg.mode,
            traces: traces.iter().map(|t| (t.name.clone(), t.records.len())).collect(),
        },
        mechanism: cfg.mechanism.mechanism,
        switch_period_cycles: cfg.switch_period_cycles,
        threads: r.threads,
        aggregate,
        kernel: r.kernel,
        switch_rotations: stats.switch_rotations,
        privilege_rotations: stats.privilege_rotations,
        flushes: stats.flushes,
        flush_entries: stats.flush_entries,
        context_switches: r.context_switches,
        privilege_changes: r.privilege_changes,
        simulated_cycles: r.clocks.into_iter().max().unwrap_or(0),
    })
}
