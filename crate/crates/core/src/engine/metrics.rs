use crate::domain::{BranchRecord, Mechanism};
use crate::error::{Error, Result};
use crate::predictors::{BranchOutcome, PredictorKind};

use super::run::Mode;

/// Counters for one software thread (or an aggregate of several).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ThreadMetrics {
    pub branches: u64,
    pub instructions: u64,
    /// Branches whose predicted next pc was wrong (direction or target).
    pub mispredictions: u64,
    pub direction_mispredictions: u64,
    pub btb_misses: u64,
    /// `instructions + penalty * mispredictions`.
    pub cycles: u64,
}

impl ThreadMetrics {
    pub fn record(&mut self, rec: &BranchRecord, outcome: &BranchOutcome, cycles: u64) {
        self.branches += 1;
        self.instructions += rec.instructions();
        self.mispredictions += outcome.mispredicted as u64;
        self.direction_mispredictions += outcome.direction_mispredicted as u64;
        self.btb_misses += !outcome.btb_hit as u64;
        self.cycles += cycles;
    }

    pub fn add(&mut self, other: &ThreadMetrics) {
        self.branches += other.branches;
        self.instructions += other.instructions;
        self.mispredictions += other.mispredictions;
        self.direction_mispredictions += other.direction_mispredictions;
        self.btb_misses += other.btb_misses;
        self.cycles += other.cycles;
    }

    pub fn mpki(&self) -> f64 {
        if self.instructions == 0 {
            0.0
        } else {
            1000.0 * self.mispredictions as f64 / self.instructions as f64
        }
    }

    pub fn direction_mpki(&self) -> f64 {
        if self.instructions == 0 {
            0.0
        } else {
            1000.0 * self.direction_mispredictions as f64 / self.instructions as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.branches == 0 {
            1.0
        } else {
            1.0 - self.mispredictions as f64 / self.branches as f64
        }
    }
}

/// What must match for two runs to be comparable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunIdentity {
    pub predictor: PredictorKind,
    pub mode: Mode,
    /// (name, record count) per input trace.
    pub traces: Vec<(String, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    pub identity: RunIdentity,
    pub mechanism: Mechanism,
    pub switch_period_cycles: u64,
    /// Indexed by software thread.
    pub threads: Vec<ThreadMetrics>,
    /// Sum over the measured threads (the foreground thread in single-thread
    /// mode, both threads on SMT-2).
    pub aggregate: ThreadMetrics,
    /// Branches executed by the optional kernel stub.
    pub kernel: ThreadMetrics,
    pub switch_rotations: u64,
    pub privilege_rotations: u64,
    pub flushes: u64,
    pub flush_entries: u64,
    pub context_switches: u64,
    pub privilege_changes: u64,
    /// Wall-clock cycles of the simulated machine at the end of the run.
    pub simulated_cycles: u64,
}

impl RunMetrics {
    pub fn key_rotations(&self) -> u64 {
        self.switch_rotations + self.privilege_rotations
    }

    pub fn mpki(&self) -> f64 {
        self.aggregate.mpki()
    }

    pub fn accuracy(&self) -> f64 {
        self.aggregate.accuracy()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Overhead {
    /// `(cycles_b - cycles_a) / cycles_a` over the measured threads.
    pub overhead: f64,
    /// Per thread, `accuracy_b - accuracy_a`.
    pub accuracy_delta: Vec<f64>,
    pub mpki_delta: f64,
}

pub fn compare_runs(a: &RunMetrics, b: &RunMetrics) -> Result<Overhead> {
    if a.identity != b.identity {
        return Err(Error::Mismatch(format!(
            "{:?} vs {:?}",
            a.identity, b.identity
        )));
    }
    let ca = a.aggregate.cycles as f64;
    let overhead = if ca == 0.0 {
        0.0
    } else {
        (b.aggregate.cycles as f64 - ca) / ca
    };
    let accuracy_delta = a
        .threads
        .iter()
        .zip(&b.threads)
        .map(|(x, y)| y.accuracy() - x.accuracy())
        .collect();
    Ok(Overhead {
        overhead,
        accuracy_delta,
        mpki_delta: b.mpki() - a.mpki(),
    })
}
