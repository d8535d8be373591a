use rand::{Rng, SeedableRng};

use crate::domain::{
    generate_key, BranchRecord, Mechanism, MechanismConfig, SimRng, ThreadContext, Tid,
};
use crate::error::{Error, Result};
use crate::isolation::{flush_complete, flush_precise};
use crate::predictors::{BranchOutcome, BtbGeometry, PredictorKind, PredictorStack, HARTS};

use super::events::{EventKind, ScheduleEvent};

/// Counts of what the mechanism did in response to events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RotationStats {
    pub switch_rotations: u64,
    pub privilege_rotations: u64,
    pub flushes: u64,
    pub flush_entries: u64,
}

/// A predictor stack shared by the hardware threads, their contexts, and the
/// mechanism's response to schedule events.
#[derive(Clone, Debug)]
pub struct Machine {
    mech: MechanismConfig,
    stack: PredictorStack,
    contexts: Vec<ThreadContext>,
    rng: SimRng,
    rotation_probability: f64,
    stats: RotationStats,
}

impl Machine {
    /// Draws one key per hardware thread from `seed`, then resets the tables
    /// as seen by hardware thread 0.
    pub fn new(
        predictor: PredictorKind,
        btb: BtbGeometry,
        mech: MechanismConfig,
        seed: u64,
    ) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let contexts: Vec<ThreadContext> = (0..HARTS as u8)
            .map(|h| ThreadContext::new(Tid(h), generate_key(&mut rng)))
            .collect();
        let mut stack = PredictorStack::with_btb(predictor, btb, &mech);
        stack.warm_reset(&contexts[0], &mech);
        Machine {
            mech,
            stack,
            contexts,
            rng,
            rotation_probability: 1.0,
            stats: RotationStats::default(),
        }
    }

    /// Probability that an event eligible for key rotation actually rotates.
    pub fn with_rotation_probability(mut self, p: f64) -> Self {
        self.rotation_probability = p.clamp(0.0, 1.0);
        self
    }

    /// Replaces a hardware thread's context, e.g. to pin a key in tests.
    pub fn set_context(&mut self, ctx: ThreadContext) {
        let h = ctx.tid().index();
        self.contexts[h] = ctx;
    }

    /// Re-runs the table reset under hardware thread `tid`'s current key.
    pub fn warm_reset(&mut self, tid: Tid) {
        self.stack.warm_reset(&self.contexts[tid.index()], &self.mech);
    }

    pub fn mechanism(&self) -> &MechanismConfig {
        &self.mech
    }

    pub fn context(&self, tid: Tid) -> &ThreadContext {
        &self.contexts[tid.index()]
    }

    pub fn stack(&self) -> &PredictorStack {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut PredictorStack {
        &mut self.stack
    }

    pub fn stats(&self) -> RotationStats {
        self.stats
    }

    pub fn execute(&mut self, hart: Tid, rec: &BranchRecord) -> BranchOutcome {
        self.stack.execute(rec, &self.contexts[hart.index()], &self.mech)
    }

    /// Rotates keys or flushes according to the configured mechanism.
    pub fn apply_event(&mut self, ev: &ScheduleEvent) -> Result<()> {
        let hart = ev.kind.target();
        if hart.index() >= HARTS {
            return Err(Error::contract(format!("event for unknown hardware thread {hart}")));
        }
        let mechanism = self.mech.mechanism;
        match ev.kind {
            EventKind::ContextSwitchOut { thread, .. } => {
                if mechanism == Mechanism::PreciseFlush {
                    self.precise(thread, ev.cycle)?;
                }
            }
            EventKind::ContextSwitchIn { .. } | EventKind::PrivilegeChange { .. } => {
                let privilege = ev.kind.is_privilege();
                self.switch_context(ev, privilege)?;
                match mechanism {
                    Mechanism::CompleteFlush => {
                        let s = flush_complete(&mut self.stack, ev.cycle);
                        self.stats.flushes += 1;
                        self.stats.flush_entries += s.entries_cleared as u64;
                    }
                    Mechanism::PreciseFlush if privilege => {
                        let resident = self.contexts[hart.index()].resident();
                        self.precise(resident, ev.cycle)?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn precise(&mut self, thread: Tid, cycle: u64) -> Result<()> {
        let s = flush_precise(&mut self.stack, thread, cycle)?;
        self.stats.flushes += 1;
        self.stats.flush_entries += s.entries_cleared as u64;
        Ok(())
    }

    fn switch_context(&mut self, ev: &ScheduleEvent, privilege: bool) -> Result<()> {
        let ctx = &mut self.contexts[ev.kind.target().index()];
        let rotate = self.mech.content_encoding()
            && (self.rotation_probability >= 1.0
                || (self.rotation_probability > 0.0 && self.rng.random_bool(self.rotation_probability)));
        if rotate {
            ctx.rotate_key(ev, &mut self.rng)?;
            if privilege {
                self.stats.privilege_rotations += 1;
            } else {
                self.stats.switch_rotations += 1;
            }
        } else {
            ctx.apply_switch(ev)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BranchKind, Key, Privilege};

    fn machine(m: Mechanism) -> Machine {
        Machine::new(PredictorKind::Gshare, BtbGeometry::default(), MechanismConfig::new(m), 9)
    }

    fn ev(kind: EventKind) -> ScheduleEvent {
        ScheduleEvent { cycle: 10, kind }
    }

    #[test]
    fn baseline_never_rotates() {
        let mut m = machine(Mechanism::Baseline);
        let k = m.context(Tid(0)).key();
        m.apply_event(&ev(EventKind::ContextSwitchIn { tid: Tid(0), thread: Tid(1) })).unwrap();
        m.apply_event(&ev(EventKind::PrivilegeChange { tid: Tid(0), to: Privilege::Kernel })).unwrap();
        assert_eq!(m.context(Tid(0)).key(), k);
        assert_eq!(m.context(Tid(0)).resident(), Tid(1));
        assert_eq!(m.context(Tid(0)).privilege(), Privilege::Kernel);
        assert_eq!(m.stats(), RotationStats::default());
    }

    #[test]
    fn xor_rotation_accounting() {
        let mut m = machine(Mechanism::NoisyXorBp);
        m.apply_event(&ev(EventKind::ContextSwitchOut { tid: Tid(1), thread: Tid(1) })).unwrap();
        m.apply_event(&ev(EventKind::ContextSwitchIn { tid: Tid(1), thread: Tid(1) })).unwrap();
        m.apply_event(&ev(EventKind::PrivilegeChange { tid: Tid(0), to: Privilege::Kernel })).unwrap();
        let s = m.stats();
        assert_eq!((s.switch_rotations, s.privilege_rotations, s.flushes), (1, 1, 0));
        assert_eq!(m.context(Tid(1)).rotation_count(), 1);
    }

    #[test]
    fn zero_rotation_probability_keeps_keys() {
        let mut m = machine(Mechanism::XorBp).with_rotation_probability(0.0);
        let k = m.context(Tid(0)).key();
        for _ in 0..10 {
            m.apply_event(&ev(EventKind::ContextSwitchIn { tid: Tid(0), thread: Tid(0) })).unwrap();
        }
        assert_eq!(m.context(Tid(0)).key(), k);
    }

    #[test]
    fn complete_flush_on_switch_in() {
        let mut m = machine(Mechanism::CompleteFlush);
        let rec = BranchRecord::jump(0x1000, BranchKind::Indirect, 0x2000);
        m.execute(Tid(0), &rec);
        m.apply_event(&ev(EventKind::ContextSwitchIn { tid: Tid(0), thread: Tid(0) })).unwrap();
        assert_eq!(m.stack().btb.valid_entries(), 0);
        assert_eq!(m.stats().flushes, 1);
    }

    #[test]
    fn precise_flush_targets_outgoing_thread() {
        let mut m = machine(Mechanism::PreciseFlush);
        m.set_context(ThreadContext::new(Tid(1), Key::ZERO));
        m.execute(Tid(0), &BranchRecord::jump(0x1000, BranchKind::Indirect, 0x2000));
        m.execute(Tid(1), &BranchRecord::jump(0x3000, BranchKind::Indirect, 0x4000));
        m.apply_event(&ev(EventKind::ContextSwitchOut { tid: Tid(0), thread: Tid(0) })).unwrap();
        assert_eq!(m.stack().btb.valid_entries(), 1);
        assert_eq!(m.execute(Tid(1), &BranchRecord::jump(0x3000, BranchKind::Indirect, 0x4000)).predicted_next, 0x4000);
    }

    #[test]
    fn unknown_hart_is_rejected() {
        let mut m = machine(Mechanism::XorBp);
        assert!(m.apply_event(&ev(EventKind::ContextSwitchIn { tid: Tid(5), thread: Tid(0) })).is_err());
    }
}
