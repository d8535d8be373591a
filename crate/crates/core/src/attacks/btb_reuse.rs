use rand::{Rng, SeedableRng};

use crate::domain::{generate_key, Key, KeyLane, MechanismConfig, SimRng, ThreadContext, Tid};
use crate::engine::{EventKind, ScheduleEvent};
use crate::predictors::{Btb, BtbGeometry};

use super::harness::{Harness, ATTACKER, VICTIM};
use super::scenario::{AttackReport, AttackScenario, RESIDUAL_FLOOR};

const CODE_BASE: u64 = 0x40_0000;
const GADGET_BASE: u64 = 0x7f00_0000_0000;

/// Shared-code BTB injection: the attacker runs the indirect branch at P with
/// its own target A; after the switch the victim runs P and succeeds for the
/// attacker when the predicted target is A.
pub fn attack_btb_reuse(s: &AttackScenario) -> AttackReport {
    let mut h = Harness::new(s);
    let mut rng = SimRng::seed_from_u64(s.seed ^ 0xb7b_7e05e);
    let mut report = AttackReport::new(s, RESIDUAL_FLOOR);
    for _ in 0..s.iterations {
        // Locate: a shared indirect branch and a gadget.
        let p = CODE_BASE + (rng.random_range(0..0x4_0000u64) << 2);
        let gadget = GADGET_BASE + (rng.random_range(0..0x100_0000u64) << 4);
        let legit = CODE_BASE + 0x100_0000 + (rng.random_range(0..0x1000u64) << 4);

        h.switch_to(ATTACKER);
        h.indirect(ATTACKER, p, gadget);

        h.switch_to(VICTIM);
        let o = h.indirect(VICTIM, p, legit);
        report.bump("victim_btb_hits", o.btb_hit as u64);
        report.record(o.btb_hit && o.predicted_next == gadget);
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpuriousHitEstimate {
    pub trials: u64,
    /// Fraction of cross-key lookups whose tag matched.
    pub tag_hit_rate: f64,
    /// Among forced tag hits, fraction whose decoded target falls inside the
    /// `window_bits` match window around the planted target.
    pub redirect_given_hit: f64,
    /// `tag_hit_rate`-free residual: `2^-T * redirect_given_hit`.
    pub redirect_rate: f64,
}

/// Monte-Carlo estimate of how often a residual entry written under one key
/// redirects a lookup under a fresh key.
pub fn spurious_hit_redirect_rate(trials: u64, window_bits: u32, seed: u64) -> SpuriousHitEstimate {
    let mut rng = SimRng::seed_from_u64(seed);
    let tag_bits = BtbGeometry::default().tag_bits;
    let tag_mask = (1u64 << tag_bits) - 1;
    let window = (1u64 << window_bits) - 1;
    let (mut hits, mut redirects) = (0u64, 0u64);
    for _ in 0..trials {
        let (k1, k2) = (Key::new(rng.random()), Key::new(rng.random()));
        let planted: u64 = rng.random();
        let tag: u64 = rng.random::<u64>() & tag_mask;
        let stored_tag = tag ^ k1.slice(KeyLane::BtbTag, tag_bits);
        hits += (stored_tag == tag ^ k2.slice(KeyLane::BtbTag, tag_bits)) as u64;
        // Forced hit: the stored target is decoded with the wrong key.
        let decoded = planted ^ k1.target_key() ^ k2.target_key();
        redirects += ((decoded ^ planted) & window == 0) as u64;
    }
    let redirect_given_hit = redirects as f64 / trials as f64;
    SpuriousHitEstimate {
        trials,
        tag_hit_rate: hits as f64 / trials as f64,
        redirect_given_hit,
        redirect_rate: redirect_given_hit / (1u64 << tag_bits) as f64,
    }
}

/// Replays a just-written BTB entry after one key rotation, `trials` times
/// with fresh keys each time. Returns the number of lookups that hit.
pub fn replay_tag_hits(trials: u64, mechanism: MechanismConfig, seed: u64) -> u64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut btb = Btb::new(BtbGeometry::default(), &mechanism);
    let rotate = ScheduleEvent {
        cycle: 0,
        kind: EventKind::ContextSwitchIn { tid: Tid(0), thread: Tid(0) },
    };
    let mut hits = 0;
    for _ in 0..trials {
        let mut ctx = ThreadContext::new(Tid(0), generate_key(&mut rng));
        let pc = CODE_BASE + (rng.random_range(0..0x4_0000u64) << 2);
        btb.update(pc, pc + 0x100, true, &ctx, &mechanism);
        ctx.rotate_key(&rotate, &mut rng).expect("event addressed to hart 0");
        hits += btb.probe(pc, &ctx, &mechanism).is_some() as u64;
        btb.flush();
    }
    hits
}
