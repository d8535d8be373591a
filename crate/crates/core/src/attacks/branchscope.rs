use rand::{Rng, SeedableRng};

use crate::domain::{SimRng, Tid};
use crate::predictors::{
    counter_predicts_taken, counter_update, STRONG_NOT_TAKEN, STRONG_TAKEN,
};

use super::harness::{Harness, ATTACKER, VICTIM};
use super::scenario::{AttackReport, AttackScenario, BranchScopeMode, RESIDUAL_FLOOR};

const CODE_BASE: u64 = 0x40_0000;
const PRIMED: u8 = 1;

/// Branch addresses used by one iteration. At zero global history they map
/// to PHT indices `p`, `p^3` (filler), `p^4`/`p^5` (victim references) and
/// `p^8`/`p^9` (attacker references); the filler run that clears history
/// never indexes any of the others.
#[derive(Clone, Copy, Debug)]
struct Layout {
    target: u64,
    filler: u64,
    victim_refs: [u64; 2],
    attacker_refs: [u64; 2],
}

impl Layout {
    fn draw(rng: &mut SimRng) -> Self {
        let target = CODE_BASE + (rng.random_range(0..0x4000u64) << 6);
        let at = |d: u64| target ^ (d << 2);
        Layout {
            target,
            filler: at(3),
            victim_refs: [at(4), at(5)],
            attacker_refs: [at(8), at(9)],
        }
    }
}

/// Executes `pc` at zero history and returns the observed prediction.
fn run(h: &mut Harness, t: Tid, l: &Layout, pc: u64, taken: bool) -> bool {
    h.conditional_at_zero_history(t, l.filler, pc, taken).predicted_taken
}

/// Drives the counter at `pc` (as `t` decodes it) to `state`.
fn set_state(h: &mut Harness, t: Tid, l: &Layout, pc: u64, state: u8) {
    for _ in 0..STRONG_TAKEN {
        run(h, t, l, pc, false);
    }
    for _ in 0..state {
        run(h, t, l, pc, true);
    }
}

/// Full 2-bit value held (as `t` decodes it) by two entries that are known to
/// hold the same value. A prediction only exposes the high bit and every
/// update merges one pair of states, so the low bit is read from whichever
/// copy the first update did not collapse.
fn read_pair(h: &mut Harness, t: Tid, l: &Layout, pcs: [u64; 2]) -> u8 {
    if run(h, t, l, pcs[0], false) {
        // 3 -> 2 still predicts taken, 2 -> 1 does not.
        if run(h, t, l, pcs[0], false) {
            3
        } else {
            2
        }
    } else {
        run(h, t, l, pcs[1], true);
        // 1 -> 2 predicts taken, 0 -> 1 does not.
        if run(h, t, l, pcs[1], true) {
            1
        } else {
            0
        }
    }
}

/// Decides which of two candidate values the entry at `pc` holds, using at
/// most two executions.
fn distinguish(h: &mut Harness, t: Tid, l: &Layout, pc: u64, if_false: u8, if_true: u8) -> bool {
    let high = counter_predicts_taken;
    if high(if_false) != high(if_true) {
        return run(h, t, l, pc, false) == high(if_true);
    }
    // Same high bit: step toward the middle first so the pair stays apart.
    let toward_middle = !high(if_true);
    run(h, t, l, pc, toward_middle);
    let next = |v| counter_update(v, toward_middle);
    run(h, t, l, pc, false) == high(next(if_true))
}

fn subtrial(
    h: &mut Harness,
    mode: BranchScopeMode,
    l: &Layout,
    rng: &mut SimRng,
    report: &mut AttackReport,
) -> bool {
    let secret: bool = rng.random();
    match mode {
        BranchScopeMode::Training => {
            let chosen: bool = rng.random();
            h.switch_to(ATTACKER);
            let state = if chosen { STRONG_TAKEN } else { STRONG_NOT_TAKEN };
            set_state(h, ATTACKER, l, l.target, state);
            h.switch_to(VICTIM);
            let predicted = run(h, VICTIM, l, l.target, secret);
            h.switch_to(ATTACKER);
            predicted == chosen
        }
        BranchScopeMode::Perception => {
            h.switch_to(ATTACKER);
            set_state(h, ATTACKER, l, l.target, PRIMED);
            h.switch_to(VICTIM);
            run(h, VICTIM, l, l.target, secret);
            h.switch_to(ATTACKER);
            run(h, ATTACKER, l, l.target, false) == secret
        }
        BranchScopeMode::Differential => {
            h.switch_to(ATTACKER);
            set_state(h, ATTACKER, l, l.target, PRIMED);
            for pc in l.attacker_refs {
                set_state(h, ATTACKER, l, pc, PRIMED);
            }
            h.switch_to(VICTIM);
            // The victim saturates its own (secret-independent) branches
            // before the secret-dependent one.
            for pc in l.victim_refs {
                for _ in 0..STRONG_TAKEN {
                    run(h, VICTIM, l, pc, true);
                }
            }
            run(h, VICTIM, l, l.target, secret);
            h.switch_to(ATTACKER);
            // With one key slice shared by every entry, the victim references
            // expose the victim-to-attacker key difference and the attacker
            // references the attacker's own epoch difference.
            let victim_delta = read_pair(h, ATTACKER, l, l.victim_refs) ^ STRONG_TAKEN;
            let own_delta = read_pair(h, ATTACKER, l, l.attacker_refs) ^ PRIMED;
            let before = PRIMED ^ own_delta ^ victim_delta;
            let seen = |taken| counter_update(before, taken) ^ victim_delta;
            let inferred = distinguish(h, ATTACKER, l, l.target, seen(false), seen(true));
            report.bump("differential_reads", 1);
            inferred == secret
        }
    }
}

/// BranchScope on the shared Gshare PHT. Each iteration draws a fresh target
/// branch and runs `trainings_per_iteration` sub-trials; the iteration
/// counts as a success when at least `success_threshold` of them do.
pub fn attack_pht_branchscope(s: &AttackScenario) -> AttackReport {
    let mut h = Harness::new(s);
    let mut rng = SimRng::seed_from_u64(s.seed ^ 0xb5c0_9e00);
    let mut report = AttackReport::new(s, RESIDUAL_FLOOR);
    report.subtrial_chance = 0.5;
    for _ in 0..s.iterations {
        let layout = Layout::draw(&mut rng);
        let mut hits = 0u32;
        for _ in 0..s.trainings_per_iteration {
            hits += subtrial(&mut h, s.branchscope_mode, &layout, &mut rng, &mut report) as u32;
        }
        report.subtrials += s.trainings_per_iteration as u64;
        report.subtrial_successes += hits as u64;
        report.record(hits >= s.success_threshold);
    }
    report
}
