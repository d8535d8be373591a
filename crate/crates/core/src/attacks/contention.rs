use rand::{Rng, SeedableRng};

use crate::domain::SimRng;
use crate::predictors::BtbGeometry;

use super::harness::{Harness, ATTACKER, VICTIM};
use super::scenario::{AttackReport, AttackScenario};

const CODE_BASE: u64 = 0x40_0000;
// Tag range disjoint from the victim's code so partial tags never alias.
const PRIME_BASE: u64 = 0xa0_0000;

/// Same-set BTB contention (SBPA). The attacker fills the BTB set it
/// computes for the victim's conditional branch with its own jumps; a taken
/// victim branch allocates into its set and evicts one of them, which the
/// attacker sees as a miss when it re-runs its jumps.
///
/// With `whole_btb_prime` the attacker fills every set instead, which finds
/// the victim's allocation wherever the index key put it.
pub fn attack_btb_contention(s: &AttackScenario) -> AttackReport {
    let mut h = Harness::new(s);
    let mut rng = SimRng::seed_from_u64(s.seed ^ 0x5b9a_c0de);
    let mut report = AttackReport::new(s, 0.5);
    let g = BtbGeometry::default();
    let set_stride = (g.sets as u64) << 2;
    let tag_stride = set_stride;

    for _ in 0..s.iterations {
        // Locate.
        let victim_pc = CODE_BASE + (rng.random_range(0..0x4_0000u64) << 2);
        let secret: bool = rng.random();
        let own_set = (victim_pc >> 2) % g.sets as u64;
        let primes: Vec<u64> = if s.whole_btb_prime {
            (0..g.sets as u64)
                .flat_map(|set| (0..g.ways as u64).map(move |w| (set, w)))
                .map(|(set, w)| PRIME_BASE + (set << 2) + w * tag_stride * 4)
                .collect()
        } else {
            (0..g.ways as u64)
                .map(|w| PRIME_BASE + (own_set << 2) + (w + 1) * tag_stride)
                .collect()
        };

        // Prime.
        h.switch_to(ATTACKER);
        for &pc in &primes {
            h.indirect(ATTACKER, pc, pc + 0x40);
        }

        h.switch_to(VICTIM);
        h.conditional(VICTIM, victim_pc, secret);

        // Probe.
        h.switch_to(ATTACKER);
        let misses = primes
            .iter()
            .filter(|&&pc| !h.indirect(ATTACKER, pc, pc + 0x40).btb_hit)
            .count() as u64;
        report.bump("probe_misses", misses);
        report.record((misses > 0) == secret);
    }
    report
}
