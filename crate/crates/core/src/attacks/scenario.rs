use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::domain::MechanismConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackKind {
    BtbReuseTraining,
    PhtBranchScope,
    BtbContentionSbpa,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [
        AttackKind::BtbReuseTraining,
        AttackKind::PhtBranchScope,
        AttackKind::BtbContentionSbpa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::BtbReuseTraining => "btb-reuse",
            AttackKind::PhtBranchScope => "pht-branchscope",
            AttackKind::BtbContentionSbpa => "btb-sbpa",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown attack '{s}' (valid: btb-reuse, pht-branchscope, btb-sbpa)"
                ))
            })
    }
}

/// What a PHT sub-trial counts as success.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BranchScopeMode {
    /// The victim's prediction follows the direction the attacker trained.
    #[default]
    Training,
    /// The attacker's own prediction after the victim ran reveals the
    /// victim's direction.
    Perception,
    /// Perception with key-cancelling reference entries: reads full counter
    /// states of the target and two reference branches and solves for the
    /// victim's update.
    Differential,
}

impl BranchScopeMode {
    pub fn name(self) -> &'static str {
        match self {
            BranchScopeMode::Training => "training",
            BranchScopeMode::Perception => "perception",
            BranchScopeMode::Differential => "differential",
        }
    }
}

impl FromStr for BranchScopeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(BranchScopeMode::Training),
            "perception" => Ok(BranchScopeMode::Perception),
            "differential" => Ok(BranchScopeMode::Differential),
            _ => Err(Error::config(format!(
                "unknown branchscope mode '{s}' (valid: training, perception, differential)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackScenario {
    pub kind: AttackKind,
    pub iterations: u64,
    /// PHT sub-trials per iteration.
    pub trainings_per_iteration: u32,
    /// PHT iteration succeeds when at least this many sub-trials succeed.
    pub success_threshold: u32,
    pub mechanism: MechanismConfig,
    pub seed: u64,
    pub smt: bool,
    pub rotation_probability: f64,
    pub branchscope_mode: BranchScopeMode,
    /// Contention: prime every BTB set instead of the victim's set.
    pub whole_btb_prime: bool,
}

impl AttackScenario {
    pub fn new(kind: AttackKind, mechanism: MechanismConfig) -> Self {
        AttackScenario {
            kind,
            iterations: 10_000,
            trainings_per_iteration: 100,
            success_threshold: 90,
            mechanism,
            seed: 0,
            smt: false,
            rotation_probability: 1.0,
            branchscope_mode: BranchScopeMode::Training,
            whole_btb_prime: false,
        }
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be > 0"));
        }
        if self.trainings_per_iteration == 0 {
            return Err(Error::config("trainings_per_iteration must be > 0"));
        }
        if self.success_threshold > self.trainings_per_iteration {
            return Err(Error::config(format!(
                "success_threshold {} exceeds trainings_per_iteration {}",
                self.success_threshold, self.trainings_per_iteration
            )));
        }
        if !(0.0..=1.0).contains(&self.rotation_probability) {
            return Err(Error::config("rotation_probability must lie in [0, 1]"));
        }
        self.mechanism.validate()
    }
}

/// Success-rate floor for attacks that plant state (training) or aggregate
/// many sub-trials per iteration: a residual rate at or below this counts as
/// no information.
pub const RESIDUAL_FLOOR: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub mechanism: MechanismConfig,
    pub smt: bool,
    pub mode: Option<BranchScopeMode>,
    pub iterations_run: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Rate an attacker with no information achieves.
    pub chance_rate: f64,
    pub subtrials: u64,
    pub subtrial_successes: u64,
    /// Chance rate of a single sub-trial (PHT attacks).
    pub subtrial_chance: f64,
    pub diagnostics: BTreeMap<String, u64>,
}

impl AttackReport {
    pub(crate) fn new(s: &AttackScenario, chance_rate: f64) -> Self {
        AttackReport {
            kind: s.kind,
            mechanism: s.mechanism,
            smt: s.smt,
            mode: (s.kind == AttackKind::PhtBranchScope).then_some(s.branchscope_mode),
            iterations_run: 0,
            successes: 0,
            success_rate: 0.0,
            chance_rate,
            subtrials: 0,
            subtrial_successes: 0,
            subtrial_chance: 0.0,
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn record(&mut self, success: bool) {
        self.iterations_run += 1;
        self.successes += success as u64;
        self.success_rate = self.successes as f64 / self.iterations_run as f64;
    }

    pub(crate) fn bump(&mut self, key: &str, by: u64) {
        *self.diagnostics.entry(key.to_string()).or_default() += by;
    }

    pub fn subtrial_rate(&self) -> f64 {
        if self.subtrials == 0 {
            0.0
        } else {
            self.subtrial_successes as f64 / self.subtrials as f64
        }
    }
}

pub fn run_attack(s: &AttackScenario) -> Result<AttackReport> {
    s.validate()?;
    Ok(match s.kind {
        AttackKind::BtbReuseTraining => super::attack_btb_reuse(s),
        AttackKind::PhtBranchScope => super::attack_pht_branchscope(s),
        AttackKind::BtbContentionSbpa => super::attack_btb_contention(s),
    })
}

/// Runs independent scenarios on a pool of `threads` workers (0 = available
/// parallelism). Reports come back in input order.
pub fn run_attacks(scenarios: &[AttackScenario], threads: usize) -> Result<Vec<AttackReport>> {
    for s in scenarios {
        s.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| scenarios.par_iter().map(run_attack).collect())
}
