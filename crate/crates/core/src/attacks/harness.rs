use crate::domain::{BranchKind, BranchRecord, Tid};
use crate::engine::{EventKind, Machine, ScheduleEvent};
use crate::predictors::{BranchOutcome, BtbGeometry, PredictorKind, GSHARE_INDEX_BITS};

use super::scenario::AttackScenario;

pub(crate) const ATTACKER: Tid = Tid(0);
pub(crate) const VICTIM: Tid = Tid(1);

/// Attacker and victim sharing a Gshare + BTB machine.
#[derive(Clone, Debug)]
pub struct Harness {
    machine: Machine,
    smt: bool,
    cycle: u64,
    on_core: Tid,
}

impl Harness {
    pub fn new(s: &AttackScenario) -> Self {
        let machine = Machine::new(PredictorKind::Gshare, BtbGeometry::default(), s.mechanism, s.seed)
            .with_rotation_probability(s.rotation_probability);
        Harness {
            machine,
            smt: s.smt,
            cycle: 0,
            on_core: ATTACKER,
        }
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn hart(&self, thread: Tid) -> Tid {
        if self.smt {
            thread
        } else {
            Tid(0)
        }
    }

    /// Hands hardware thread 0 to `thread`. A no-op on SMT or when `thread`
    /// already runs.
    pub fn switch_to(&mut self, thread: Tid) {
        if self.smt || self.on_core == thread {
            return;
        }
        self.cycle += 1;
        let tid = Tid(0);
        for kind in [
            EventKind::ContextSwitchOut { tid, thread: self.on_core },
            EventKind::ContextSwitchIn { tid, thread },
        ] {
            self.machine
                .apply_event(&ScheduleEvent { cycle: self.cycle, kind })
                .expect("hart 0 exists");
        }
        self.on_core = thread;
    }

    pub fn exec(&mut self, thread: Tid, rec: &BranchRecord) -> BranchOutcome {
        debug_assert!(self.smt || self.on_core == thread);
        let hart = self.hart(thread);
        self.machine.execute(hart, rec)
    }

    pub fn conditional(&mut self, thread: Tid, pc: u64, taken: bool) -> BranchOutcome {
        self.exec(thread, &BranchRecord::conditional(pc, taken, pc + 0x40))
    }

    pub fn indirect(&mut self, thread: Tid, pc: u64, target: u64) -> BranchOutcome {
        self.exec(thread, &BranchRecord::jump(pc, BranchKind::Indirect, target))
    }

    /// Runs enough not-taken branches at `filler` to zero the global history,
    /// then executes the conditional at `pc`.
    pub fn conditional_at_zero_history(
        &mut self,
        thread: Tid,
        filler: u64,
        pc: u64,
        taken: bool,
    ) -> BranchOutcome {
        for _ in 0..GSHARE_INDEX_BITS {
            self.conditional(thread, filler, false);
        }
        self.conditional(thread, pc, taken)
    }
}
