use crate::domain::{mask, KeyLane, MechanismConfig, ThreadContext, Tid};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BtbGeometry {
    /// Power of two.
    pub sets: usize,
    pub ways: usize,
    pub tag_bits: u32,
}

impl Default for BtbGeometry {
    fn default() -> Self {
        BtbGeometry {
            sets: 256,
            ways: 2,
            tag_bits: 12,
        }
    }
}

impl BtbGeometry {
    pub fn index_bits(&self) -> u32 {
        self.sets.trailing_zeros()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sets.is_power_of_two() || self.ways == 0 || self.ways > 64 {
            return Err(Error::config(format!(
                "BTB needs a power-of-two set count and 1..=64 ways, got {}x{}",
                self.sets, self.ways
            )));
        }
        if self.tag_bits == 0 || self.tag_bits + self.index_bits() + 2 > 64 {
            return Err(Error::config(format!("BTB tag width {} unusable", self.tag_bits)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BtbEntry {
    pub valid: bool,
    /// Stored tag, encoded when content encoding is active.
    pub tag: u64,
    /// Stored target, encoded when content encoding is active.
    pub target: u64,
    pub owner: Option<Tid>,
}

/// Set-associative branch target buffer with true-LRU replacement.
#[derive(Clone, Debug)]
pub struct Btb {
    geometry: BtbGeometry,
    entries: Vec<BtbEntry>,
    /// Per set, the recency rank of each way (0 = most recent).
    lru: Vec<u8>,
    track_owner: bool,
}

impl Btb {
    pub fn new(geometry: BtbGeometry, cfg: &MechanismConfig) -> Self {
        geometry.validate().expect("BTB geometry validated by caller");
        let ranks: Vec<u8> = (0..geometry.ways as u8).collect();
        Btb {
            geometry,
            entries: vec![BtbEntry::default(); geometry.sets * geometry.ways],
            lru: ranks.repeat(geometry.sets),
            track_owner: cfg.owner_tracking(),
        }
    }

    pub fn geometry(&self) -> BtbGeometry {
        self.geometry
    }

    /// Bits `[S+2, S+2+T)` of the pc.
    #[inline]
    pub fn tag_of(&self, pc: u64) -> u64 {
        (pc >> (2 + self.geometry.index_bits())) & mask(self.geometry.tag_bits)
    }

    /// Set selected by `pc` for `ctx`, including the index key under
    /// Noisy-XOR-BP.
    #[inline]
    pub fn set_index(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> usize {
        let bits = self.geometry.index_bits();
        let mut set = (pc >> 2) & mask(bits);
        if cfg.index_encoding() {
            set ^= ctx.key().slice(KeyLane::Index, bits);
        }
        set as usize
    }

    #[inline]
    fn encoded_tag(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> u64 {
        let tag = self.tag_of(pc);
        if cfg.content_encoding() {
            tag ^ ctx.key().slice(KeyLane::BtbTag, self.geometry.tag_bits)
        } else {
            tag
        }
    }

    #[inline]
    fn target_key(ctx: &ThreadContext, cfg: &MechanismConfig) -> u64 {
        if cfg.content_encoding() {
            ctx.key().target_key()
        } else {
            0
        }
    }

    pub fn entry(&self, set: usize, way: usize) -> &BtbEntry {
        &self.entries[set * self.geometry.ways + way]
    }

    pub fn lru_ranks(&self, set: usize) -> &[u8] {
        let w = self.geometry.ways;
        &self.lru[set * w..(set + 1) * w]
    }

    pub fn valid_entries(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }

    /// Matching way and decoded target, without touching replacement state.
    pub fn probe(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> Option<(usize, u64)> {
        let set = self.set_index(pc, ctx, cfg);
        let tag = self.encoded_tag(pc, ctx, cfg);
        let base = set * self.geometry.ways;
        self.entries[base..base + self.geometry.ways]
            .iter()
            .position(|e| e.valid && e.tag == tag)
            .map(|way| (way, self.entries[base + way].target ^ Self::target_key(ctx, cfg)))
    }

    /// Predicted target for `pc`, or `None` on a miss. Hits refresh LRU.
    pub fn lookup(&mut self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> Option<u64> {
        let (way, target) = self.probe(pc, ctx, cfg)?;
        self.touch(self.set_index(pc, ctx, cfg), way);
        Some(target)
    }

    /// Commit-time update. Only taken branches write the BTB.
    pub fn update(
        &mut self,
        pc: u64,
        actual_target: u64,
        taken: bool,
        ctx: &ThreadContext,
        cfg: &MechanismConfig,
    ) {
        if !taken {
            return;
        }
        let set = self.set_index(pc, ctx, cfg);
        let tag = self.encoded_tag(pc, ctx, cfg);
        let ways = self.geometry.ways;
        let base = set * ways;
        let slot = &self.entries[base..base + ways];
        let way = slot
            .iter()
            .position(|e| e.valid && e.tag == tag)
            .or_else(|| slot.iter().position(|e| !e.valid))
            .unwrap_or_else(|| {
                let ranks = self.lru_ranks(set);
                (0..ways).max_by_key(|&w| ranks[w]).unwrap_or(0)
            });
        self.entries[base + way] = BtbEntry {
            valid: true,
            tag,
            target: actual_target ^ Self::target_key(ctx, cfg),
            owner: self.track_owner.then(|| ctx.resident()),
        };
        self.touch(set, way);
    }

    fn touch(&mut self, set: usize, way: usize) {
        let w = self.geometry.ways;
        let ranks = &mut self.lru[set * w..(set + 1) * w];
        let old = ranks[way];
        for r in ranks.iter_mut() {
            if *r < old {
                *r += 1;
            }
        }
        ranks[way] = 0;
    }

    /// Invalidates everything; returns the number of entries that were valid.
    pub fn flush(&mut self) -> usize {
        let cleared = self.valid_entries();
        self.entries.fill(BtbEntry::default());
        cleared
    }

    /// Invalidates the entries owned by `tid`.
    pub fn flush_owner(&mut self, tid: Tid) -> Result<usize> {
        if !self.track_owner {
            return Err(Error::contract("precise flush on a BTB without owner tracking"));
        }
        let mut cleared = 0;
        for e in self.entries.iter_mut().filter(|e| e.valid && e.owner == Some(tid)) {
            *e = BtbEntry::default();
            cleared += 1;
        }
        Ok(cleared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Key, Mechanism};

    fn ctx(key: u64) -> ThreadContext {
        ThreadContext::new(Tid(0), Key::new(key))
    }

    fn btb(mech: Mechanism) -> (Btb, MechanismConfig) {
        let cfg = MechanismConfig::new(mech);
        (Btb::new(BtbGeometry::default(), &cfg), cfg)
    }

    #[test]
    fn baseline_store_then_load() {
        let (mut b, cfg) = btb(Mechanism::Baseline);
        let c = ctx(0);
        b.update(0x40_0100, 0x8000_4000, true, &c, &cfg);
        assert_eq!(b.lookup(0x40_0100, &c, &cfg), Some(0x8000_4000));
    }

    #[test]
    fn xor_same_key_round_trips_and_stores_encoded() {
        let (mut b, cfg) = btb(Mechanism::XorBp);
        let c = ctx(0xacbc_df21);
        b.update(0x40_0100, 0x8000_4000, true, &c, &cfg);
        assert_eq!(b.lookup(0x40_0100, &c, &cfg), Some(0x8000_4000));
        let set = b.set_index(0x40_0100, &c, &cfg);
        let e = b.entry(set, 0);
        assert_eq!(e.target, 0x8000_4000 ^ 0xacbc_df21);
        assert_eq!(e.tag, b.tag_of(0x40_0100) ^ c.key().slice(KeyLane::BtbTag, 12));
    }

    #[test]
    fn not_taken_leaves_state_identical() {
        let (mut b, cfg) = btb(Mechanism::Baseline);
        let c = ctx(0);
        b.update(0x1000, 0x2000, true, &c, &cfg);
        let entries = b.entries.clone();
        let lru = b.lru.clone();
        b.update(0x3000, 0x4000, false, &c, &cfg);
        assert_eq!(b.entries, entries);
        assert_eq!(b.lru, lru);
    }

    #[test]
    fn invalid_way_filled_before_eviction() {
        let (mut b, cfg) = btb(Mechanism::Baseline);
        let c = ctx(0);
        let stride = 256 * 4;
        b.update(0x1000, 0xa, true, &c, &cfg);
        b.update(0x1000 + stride, 0xb, true, &c, &cfg);
        assert_eq!(b.lookup(0x1000, &c, &cfg), Some(0xa));
        assert_eq!(b.lookup(0x1000 + stride, &c, &cfg), Some(0xb));
        // Third congruent branch evicts the least recently used (0x1000).
        b.lookup(0x1000 + stride, &c, &cfg);
        b.update(0x1000 + 2 * stride, 0xc, true, &c, &cfg);
        assert_eq!(b.probe(0x1000, &c, &cfg), None);
        assert!(b.probe(0x1000 + stride, &c, &cfg).is_some());
    }

    #[test]
    fn lru_ranks_stay_a_permutation() {
        let cfg = MechanismConfig::default();
        let mut b = Btb::new(BtbGeometry { sets: 4, ways: 4, tag_bits: 8 }, &cfg);
        let c = ctx(0);
        for i in 0..200u64 {
            let pc = (i * 7919) << 2;
            b.update(pc, i, true, &c, &cfg);
            b.lookup(pc ^ 0x30, &c, &cfg);
        }
        for set in 0..4 {
            let mut r = b.lru_ranks(set).to_vec();
            r.sort();
            assert_eq!(r, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn cross_key_lookup_misses_or_garbles() {
        let (mut b, cfg) = btb(Mechanism::XorBp);
        let k1 = ctx(0x1111_2222_3333_4444);
        let k2 = ctx(0x9999_8888_7777_6666);
        b.update(0x40_0100, 0x8000_4000, true, &k1, &cfg);
        match b.lookup(0x40_0100, &k2, &cfg) {
            None => {}
            Some(t) => assert_ne!(t, 0x8000_4000),
        }
    }

    #[test]
    fn noisy_index_moves_the_set() {
        let (b, cfg) = btb(Mechanism::NoisyXorBp);
        let c = ctx(0xffff_ffff_ffff_ffff);
        let plain = (0x40_0100u64 >> 2) as usize & 255;
        assert_eq!(b.set_index(0x40_0100, &c, &cfg), plain ^ 255);
    }

    #[test]
    fn precise_flush_only_touches_owner() {
        let (mut b, cfg) = btb(Mechanism::PreciseFlush);
        let t0 = ctx(0);
        let t1 = ThreadContext::new(Tid(1), Key::ZERO);
        b.update(0x1000, 1, true, &t0, &cfg);
        b.update(0x2000, 2, true, &t1, &cfg);
        assert_eq!(b.flush_owner(Tid(0)).unwrap(), 1);
        assert_eq!(b.lookup(0x2000, &t1, &cfg), Some(2));
        assert_eq!(b.lookup(0x1000, &t0, &cfg), None);
        assert_eq!(b.flush_owner(Tid(0)).unwrap(), 0);
        let (mut plain, pcfg) = btb(Mechanism::Baseline);
        plain.update(0x1000, 1, true, &t0, &pcfg);
        assert!(plain.flush_owner(Tid(0)).is_err());
    }
}
