use rand::SeedableRng;
use rand_distr::{Distribution, Exp};

use crate::domain::{Privilege, SimRng, Tid};

use super::run::{Mode, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Software `thread` starts running on hardware thread `tid`.
    ContextSwitchIn { tid: Tid, thread: Tid },
    /// Software `thread` stops running on hardware thread `tid`.
    ContextSwitchOut { tid: Tid, thread: Tid },
    PrivilegeChange { tid: Tid, to: Privilege },
}

impl EventKind {
    /// Hardware thread the event is delivered to.
    pub fn target(&self) -> Tid {
        match *self {
            EventKind::ContextSwitchIn { tid, .. }
            | EventKind::ContextSwitchOut { tid, .. }
            | EventKind::PrivilegeChange { tid, .. } => tid,
        }
    }

    pub fn is_privilege(&self) -> bool {
        matches!(self, EventKind::PrivilegeChange { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleEvent {
    pub cycle: u64,
    pub kind: EventKind,
}

const SCHEDULE_STREAM: u64 = 0x5c4e_d01e;

/// Lazy, seeded event stream in nondecreasing cycle order.
///
/// Context switches fall on quantum boundaries: in single-thread mode the
/// hardware thread alternates between the foreground (t0) and background
/// (t1) software threads; on SMT-2 each hardware thread re-enters its own
/// thread at boundaries staggered by half a period. Privilege changes are a
/// Poisson process per active hardware thread, toggling user/kernel.
#[derive(Clone, Debug)]
pub struct EventSchedule {
    period: u64,
    harts: usize,
    background: bool,
    next_switch: Vec<u64>,
    resident: Vec<Tid>,
    next_privilege: Vec<f64>,
    level: Vec<Privilege>,
    gap: Option<Exp<f64>>,
    rng: SimRng,
    pending: Option<ScheduleEvent>,
}

impl EventSchedule {
    pub fn new(cfg: &RunConfig, background: bool) -> Self {
        let harts = match cfg.mode {
            Mode::SingleThread => 1,
            Mode::Smt2 => 2,
        };
        let period = cfg.switch_period_cycles.max(1);
        let mut rng = SimRng::seed_from_u64(cfg.seed ^ SCHEDULE_STREAM);
        let gap = (cfg.privilege_rate_per_mcycle > 0.0)
            .then(|| Exp::new(cfg.privilege_rate_per_mcycle / 1e6).expect("positive rate"));
        let next_privilege = (0..harts)
            .map(|_| gap.as_ref().map_or(f64::INFINITY, |g| g.sample(&mut rng)))
            .collect();
        EventSchedule {
            period,
            harts,
            background,
            next_switch: (0..harts as u64)
                .map(|h| period + h * period / 2)
                .collect(),
            resident: (0..harts as u8).map(Tid).collect(),
            next_privilege,
            level: vec![Privilege::User; harts],
            gap,
            rng,
            pending: None,
        }
    }
}

impl Iterator for EventSchedule {
    type Item = ScheduleEvent;

    fn next(&mut self) -> Option<ScheduleEvent> {
        if let Some(ev) = self.pending.take() {
            return Some(ev);
        }
        let (sh, &sw) = self
            .next_switch
            .iter()
            .enumerate()
            .min_by_key(|&(_, c)| *c)
            .expect("at least one hart");
        let (ph, &pv) = self
            .next_privilege
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one hart");

        if pv < sw as f64 {
            let tid = Tid(ph as u8);
            let to = match self.level[ph] {
                Privilege::User => Privilege::Kernel,
                Privilege::Kernel => Privilege::User,
            };
            self.level[ph] = to;
            let gap = self.gap.as_ref().expect("finite arrival implies a rate");
            self.next_privilege[ph] = pv + gap.sample(&mut self.rng);
            return Some(ScheduleEvent {
                cycle: pv as u64,
                kind: EventKind::PrivilegeChange { tid, to },
            });
        }

        let tid = Tid(sh as u8);
        let out = self.resident[sh];
        let incoming = if self.harts == 1 && self.background {
            Tid(1 - out.0)
        } else {
            out
        };
        self.resident[sh] = incoming;
        self.next_switch[sh] = sw + self.period;
        self.pending = Some(ScheduleEvent {
            cycle: sw,
            kind: EventKind::ContextSwitchIn { tid, thread: incoming },
        });
        Some(ScheduleEvent {
            cycle: sw,
            kind: EventKind::ContextSwitchOut { tid, thread: out },
        })
    }
}

/// All events strictly before `horizon`.
pub fn schedule_events(cfg: &RunConfig, horizon: u64) -> Vec<ScheduleEvent> {
    EventSchedule::new(cfg, true)
        .take_while(|e| e.cycle < horizon)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: Mode, period: u64, rate: f64) -> RunConfig {
        RunConfig {
            mode,
            switch_period_cycles: period,
            privilege_rate_per_mcycle: rate,
            ..RunConfig::default()
        }
    }

    #[test]
    fn single_thread_switch_times() {
        let evs = schedule_events(&cfg(Mode::SingleThread, 4_000_000, 0.0), 12_000_000);
        let cycles: Vec<u64> = evs.iter().map(|e| e.cycle).collect();
        assert_eq!(cycles, vec![4_000_000, 4_000_000, 8_000_000, 8_000_000]);
        assert_eq!(
            evs[1].kind,
            EventKind::ContextSwitchIn { tid: Tid(0), thread: Tid(1) }
        );
        assert_eq!(
            evs[3].kind,
            EventKind::ContextSwitchIn { tid: Tid(0), thread: Tid(0) }
        );
    }

    #[test]
    fn zero_rate_has_no_privilege_events() {
        let evs = schedule_events(&cfg(Mode::Smt2, 1_000_000, 0.0), 50_000_000);
        assert!(evs.iter().all(|e| !e.kind.is_privilege()));
        assert!(evs.windows(2).all(|w| w[0].cycle <= w[1].cycle));
    }

    #[test]
    fn smt_harts_are_staggered() {
        let evs = schedule_events(&cfg(Mode::Smt2, 8_000_000, 0.0), 17_000_000);
        let ins: Vec<(u64, Tid)> = evs
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::ContextSwitchIn { tid, .. } => Some((e.cycle, tid)),
                _ => None,
            })
            .collect();
        assert_eq!(
            ins,
            vec![(8_000_000, Tid(0)), (12_000_000, Tid(1)), (16_000_000, Tid(0))]
        );
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        let c = cfg(Mode::SingleThread, u64::MAX / 4, 4.9);
        let n = schedule_events(&c, 100_000_000)
            .iter()
            .filter(|e| e.kind.is_privilege())
            .count() as f64;
        let (mean, sd) = (490.0, 490f64.sqrt());
        assert!((n - mean).abs() <= 3.0 * sd, "{n}");
    }

    #[test]
    fn privilege_levels_alternate() {
        let evs = schedule_events(&cfg(Mode::SingleThread, u64::MAX / 4, 7.0), 10_000_000);
        let levels: Vec<Privilege> = evs
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::PrivilegeChange { to, .. } => Some(to),
                _ => None,
            })
            .collect();
        assert!(levels.len() > 10);
        for (i, l) in levels.iter().enumerate() {
            let expect = if i % 2 == 0 { Privilege::Kernel } else { Privilege::User };
            assert_eq!(*l, expect);
        }
    }

    #[test]
    fn seeded_replay() {
        let c = cfg(Mode::Smt2, 2_000_000, 3.3);
        assert_eq!(schedule_events(&c, 40_000_000), schedule_events(&c, 40_000_000));
    }
}
