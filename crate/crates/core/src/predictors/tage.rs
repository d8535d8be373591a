use crate::domain::{mask, KeyLane, MechanismConfig, ThreadContext, Tid};
use crate::error::{Error, Result};

use super::counter::{counter_predicts_taken, counter_update, saturating_step};
use super::pht::Pht;
use super::HARTS;

pub const TAGGED_TABLES: usize = 6;
pub const HISTORY_LENGTHS: [u32; TAGGED_TABLES] = [12, 27, 44, 63, 90, 130];
pub const TAG_BITS: [u32; TAGGED_TABLES] = [8, 9, 10, 11, 12, 12];
const INDEX_BITS: u32 = 12;
const BASE_BITS: u32 = 12;
const BASE_SALT: u32 = 4;
const CTR_MAX: u8 = 7;
const USEFUL_MAX: u8 = 3;
const USE_ALT_MAX: u8 = 15;
const USEFUL_RESET_PERIOD: u64 = 1 << 18;
const HIST_WORDS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TageEntry {
    pub valid: bool,
    /// Stored partial tag (encoded under content encoding).
    pub tag: u16,
    /// Stored 3-bit counter (encoded under content encoding); taken when the
    /// decoded value is at least 4.
    pub ctr: u8,
    pub useful: u8,
    owner: u8,
}

/// Global history plus its circular-shift folds for one hardware thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct HistoryState {
    bits: [u64; HIST_WORDS],
    index: [u64; TAGGED_TABLES],
    tag0: [u64; TAGGED_TABLES],
    tag1: [u64; TAGGED_TABLES],
}

/// Bit `i` of the history (0 = most recent).
#[inline]
fn history_bit(bits: &[u64; HIST_WORDS], i: u32) -> u64 {
    (bits[(i / 64) as usize] >> (i % 64)) & 1
}

/// Reference fold: XOR of `h_i << (i mod width)` over the first `len` bits.
pub fn fold_history(bits: &[u64; HIST_WORDS], len: u32, width: u32) -> u64 {
    (0..len).fold(0, |acc, i| acc ^ (history_bit(bits, i) << (i % width)))
}

#[inline]
fn fold_step(comp: u64, new: u64, out: u64, len: u32, width: u32) -> u64 {
    let mut c = (comp << 1) ^ new;
    c ^= out << (len % width);
    c ^= c >> width;
    c & mask(width)
}

impl HistoryState {
    fn push(&mut self, taken: bool) {
        let b = &mut self.bits;
        b[2] = (b[2] << 1) | (b[1] >> 63);
        b[1] = (b[1] << 1) | (b[0] >> 63);
        b[0] = (b[0] << 1) | taken as u64;
        let new = taken as u64;
        for t in 0..TAGGED_TABLES {
            let len = HISTORY_LENGTHS[t];
            let out = history_bit(&self.bits, len);
            self.index[t] = fold_step(self.index[t], new, out, len, INDEX_BITS);
            self.tag0[t] = fold_step(self.tag0[t], new, out, len, TAG_BITS[t]);
            self.tag1[t] = fold_step(self.tag1[t], new, out, len, TAG_BITS[t] - 1);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TageMeta {
    pub indices: [usize; TAGGED_TABLES],
    pub tags: [u16; TAGGED_TABLES],
    pub base_index: usize,
    pub provider: Option<usize>,
    pub alt: Option<usize>,
    pub provider_taken: bool,
    pub alt_taken: bool,
    /// Provider counter weak and useful == 0.
    pub provider_new: bool,
    pub taken: bool,
}

/// Simplified TAGE: a bimodal base table and six tagged tables indexed with
/// geometrically increasing global-history lengths.
#[derive(Clone, Debug)]
pub struct Tage {
    base: Pht,
    tables: Vec<Vec<TageEntry>>,
    history: [HistoryState; HARTS],
    use_alt_on_na: u8,
    updates: u64,
    alloc_rng: u64,
    track_owner: bool,
}

const ALLOC_SEED: u64 = 0x2545_f491_4f6c_dd1d;

impl Tage {
    pub fn new(cfg: &MechanismConfig) -> Self {
        Tage {
            base: Pht::new(1 << BASE_BITS, BASE_SALT, cfg),
            tables: vec![vec![TageEntry::default(); 1 << INDEX_BITS]; TAGGED_TABLES],
            history: [HistoryState::default(); HARTS],
            use_alt_on_na: 8,
            updates: 0,
            alloc_rng: ALLOC_SEED,
            track_owner: cfg.owner_tracking(),
        }
    }

    pub fn base(&self) -> &Pht {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut Pht {
        &mut self.base
    }

    pub fn entry(&self, table: usize, index: usize) -> &TageEntry {
        &self.tables[table][index]
    }

    pub fn valid_entries(&self) -> usize {
        self.tables.iter().flatten().filter(|e| e.valid).count()
    }

    fn ik(ctx: &ThreadContext, cfg: &MechanismConfig, bits: u32) -> u64 {
        if cfg.index_encoding() {
            ctx.key().slice(KeyLane::Index, bits)
        } else {
            0
        }
    }

    fn tag_key(t: usize, ctx: &ThreadContext, cfg: &MechanismConfig) -> u16 {
        if cfg.content_encoding() {
            ctx.key().slice(KeyLane::TageTag(t as u8), TAG_BITS[t]) as u16
        } else {
            0
        }
    }

    fn ctr_key(t: usize, ctx: &ThreadContext, cfg: &MechanismConfig) -> u8 {
        if cfg.content_encoding() {
            ctx.key().slice(KeyLane::TageCounter(t as u8), 3) as u8
        } else {
            0
        }
    }

    /// Decoded tag of an entry as seen by `ctx`.
    pub fn decoded_tag(&self, t: usize, i: usize, ctx: &ThreadContext, cfg: &MechanismConfig) -> u16 {
        self.tables[t][i].tag ^ Self::tag_key(t, ctx, cfg)
    }

    pub fn decoded_ctr(&self, t: usize, i: usize, ctx: &ThreadContext, cfg: &MechanismConfig) -> u8 {
        self.tables[t][i].ctr ^ Self::ctr_key(t, ctx, cfg)
    }

    /// Table indices and partial tags for `pc` under the current history.
    pub fn hashes(
        &self,
        pc: u64,
        ctx: &ThreadContext,
        cfg: &MechanismConfig,
    ) -> ([usize; TAGGED_TABLES], [u16; TAGGED_TABLES]) {
        let h = &self.history[ctx.tid().index()];
        let ik = Self::ik(ctx, cfg, INDEX_BITS);
        let p = pc >> 2;
        let mut idx = [0; TAGGED_TABLES];
        let mut tags = [0; TAGGED_TABLES];
        for t in 0..TAGGED_TABLES {
            let raw = p ^ (p >> (INDEX_BITS - t as u32)) ^ h.index[t];
            idx[t] = ((raw ^ ik) & mask(INDEX_BITS)) as usize;
            tags[t] = ((p ^ h.tag0[t] ^ (h.tag1[t] << 1)) & mask(TAG_BITS[t])) as u16;
        }
        (idx, tags)
    }

    pub fn predict(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> (bool, TageMeta) {
        let (indices, tags) = self.hashes(pc, ctx, cfg);
        let base_index = (((pc >> 2) ^ Self::ik(ctx, cfg, BASE_BITS)) & mask(BASE_BITS)) as usize;
        let mut provider = None;
        let mut alt = None;
        for t in (0..TAGGED_TABLES).rev() {
            let e = &self.tables[t][indices[t]];
            if e.valid && e.tag ^ Self::tag_key(t, ctx, cfg) == tags[t] {
                if provider.is_none() {
                    provider = Some(t);
                } else {
                    alt = Some(t);
                    break;
                }
            }
        }
        let base_taken = counter_predicts_taken(self.base.read(base_index, ctx, cfg));
        let ctr_of = |t: usize| self.tables[t][indices[t]].ctr ^ Self::ctr_key(t, ctx, cfg);
        let alt_taken = alt.map_or(base_taken, |t| ctr_of(t) >= 4);
        let (provider_taken, provider_new) = match provider {
            Some(t) => {
                let c = ctr_of(t);
                (c >= 4, (c == 3 || c == 4) && self.tables[t][indices[t]].useful == 0)
            }
            None => (base_taken, false),
        };
        let taken = if provider.is_some() && provider_new && self.use_alt_on_na >= 8 {
            alt_taken
        } else {
            provider_taken
        };
        let meta = TageMeta {
            indices,
            tags,
            base_index,
            provider,
            alt,
            provider_taken,
            alt_taken,
            provider_new,
            taken,
        };
        (taken, meta)
    }

    pub fn update(&mut self, taken: bool, ctx: &ThreadContext, cfg: &MechanismConfig, meta: &TageMeta) {
        let owner = if self.track_owner { ctx.resident().0 + 1 } else { 0 };
        match meta.provider {
            Some(p) => {
                if meta.provider_new && meta.provider_taken != meta.alt_taken {
                    self.use_alt_on_na =
                        saturating_step(self.use_alt_on_na, meta.alt_taken == taken, USE_ALT_MAX);
                }
                let ck = Self::ctr_key(p, ctx, cfg);
                let e = &mut self.tables[p][meta.indices[p]];
                e.ctr = saturating_step(e.ctr ^ ck, taken, CTR_MAX) ^ ck;
                e.owner = owner;
                if meta.provider_taken != meta.alt_taken {
                    e.useful = saturating_step(e.useful, meta.provider_taken == taken, USEFUL_MAX);
                }
                if e.useful == 0 {
                    // A fresh provider has not proven itself; keep the
                    // alternate trained as well.
                    match meta.alt {
                        Some(a) => {
                            let ck = Self::ctr_key(a, ctx, cfg);
                            let e = &mut self.tables[a][meta.indices[a]];
                            e.ctr = saturating_step(e.ctr ^ ck, taken, CTR_MAX) ^ ck;
                        }
                        None => {
                            let c = self.base.read(meta.base_index, ctx, cfg);
                            self.base.write(meta.base_index, counter_update(c, taken), ctx, cfg);
                        }
                    }
                }
            }
            None => {
                let c = self.base.read(meta.base_index, ctx, cfg);
                self.base.write(meta.base_index, counter_update(c, taken), ctx, cfg);
            }
        }

        if meta.taken != taken {
            self.allocate(taken, ctx, cfg, meta, owner);
        }

        self.updates += 1;
        if self.updates.is_multiple_of(USEFUL_RESET_PERIOD) {
            for e in self.tables.iter_mut().flatten() {
                e.useful >>= 1;
            }
        }
        self.history[ctx.tid().index()].push(taken);
    }

    fn allocate(&mut self, taken: bool, ctx: &ThreadContext, cfg: &MechanismConfig, meta: &TageMeta, owner: u8) {
        let start = meta.provider.map_or(0, |p| p + 1);
        if start >= TAGGED_TABLES {
            return;
        }
        let free: Vec<usize> = (start..TAGGED_TABLES)
            .filter(|&t| {
                let e = &self.tables[t][meta.indices[t]];
                !e.valid || e.useful == 0
            })
            .collect();
        if free.is_empty() {
            for t in start..TAGGED_TABLES {
                let e = &mut self.tables[t][meta.indices[t]];
                e.useful = e.useful.saturating_sub(1);
            }
            return;
        }
        let pick = if free.len() > 1 && self.next_random() & 1 == 1 {
            free[1]
        } else {
            free[0]
        };
        let ck = Self::ctr_key(pick, ctx, cfg);
        let tk = Self::tag_key(pick, ctx, cfg);
        self.tables[pick][meta.indices[pick]] = TageEntry {
            valid: true,
            tag: meta.tags[pick] ^ tk,
            ctr: (if taken { 4 } else { 3 }) ^ ck,
            useful: 0,
            owner,
        };
    }

    fn next_random(&mut self) -> u64 {
        let mut x = self.alloc_rng;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.alloc_rng = x;
        x
    }

    pub fn warm_reset(&mut self, ctx: &ThreadContext, cfg: &MechanismConfig) {
        self.base.warm_reset(ctx, cfg);
        for t in self.tables.iter_mut() {
            t.fill(TageEntry::default());
        }
        self.history = [HistoryState::default(); HARTS];
        self.use_alt_on_na = 8;
        self.updates = 0;
        self.alloc_rng = ALLOC_SEED;
    }

    pub fn flush(&mut self) -> usize {
        let cleared = self.valid_entries() + self.base.flush();
        for t in self.tables.iter_mut() {
            t.fill(TageEntry::default());
        }
        self.history = [HistoryState::default(); HARTS];
        cleared
    }

    pub fn flush_owner(&mut self, tid: Tid) -> Result<usize> {
        if !self.track_owner {
            return Err(Error::contract("precise flush on TAGE without owner tracking"));
        }
        let mut cleared = 0;
        for e in self.tables.iter_mut().flatten() {
            if e.valid && e.owner == tid.0 + 1 {
                *e = TageEntry::default();
                cleared += 1;
            }
        }
        Ok(cleared + self.base.flush_owner(tid)?)
    }

    /// Decoded counters of every valid tagged entry (for range checks).
    pub fn decoded_counters(&self, ctx: &ThreadContext, cfg: &MechanismConfig) -> Vec<u8> {
        let mut out = Vec::new();
        for t in 0..TAGGED_TABLES {
            for i in 0..self.tables[t].len() {
                if self.tables[t][i].valid {
                    out.push(self.decoded_ctr(t, i, ctx, cfg));
                }
            }
        }
        out
    }

    #[cfg(test)]
    fn write_entry(&mut self, t: usize, i: usize, tag: u16, ctr: u8, useful: u8, ctx: &ThreadContext, cfg: &MechanismConfig) {
        self.tables[t][i] = TageEntry {
            valid: true,
            tag: tag ^ Self::tag_key(t, ctx, cfg),
            ctr: ctr ^ Self::ctr_key(t, ctx, cfg),
            useful,
            owner: 0,
        };
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::domain::{Key, Mechanism, SimRng};

    fn setup(mech: Mechanism, key: u64) -> (Tage, ThreadContext, MechanismConfig) {
        let cfg = MechanismConfig::new(mech);
        let c = ThreadContext::new(Tid(0), Key::new(key));
        let mut t = Tage::new(&cfg);
        t.warm_reset(&c, &cfg);
        (t, c, cfg)
    }

    #[test]
    fn history_lengths_increase() {
        assert!(HISTORY_LENGTHS.windows(2).all(|w| w[0] < w[1]));
        assert!(HISTORY_LENGTHS[TAGGED_TABLES - 1] < 64 * HIST_WORDS as u32);
    }

    #[test]
    fn incremental_folds_match_reference() {
        let mut h = HistoryState::default();
        let mut rng = SimRng::seed_from_u64(11);
        for _ in 0..500 {
            h.push(rng.random_bool(0.5));
            for t in 0..TAGGED_TABLES {
                let len = HISTORY_LENGTHS[t];
                assert_eq!(h.index[t], fold_history(&h.bits, len, INDEX_BITS));
                assert_eq!(h.tag0[t], fold_history(&h.bits, len, TAG_BITS[t]));
                assert_eq!(h.tag1[t], fold_history(&h.bits, len, TAG_BITS[t] - 1));
            }
        }
    }

    #[test]
    fn base_fallback() {
        let (mut t, c, cfg) = setup(Mechanism::XorBp, 99);
        let (_, meta) = t.predict(0x400, &c, &cfg);
        assert!(meta.provider.is_none());
        t.base_mut().write(meta.base_index, 2, &c, &cfg);
        assert!(t.predict(0x400, &c, &cfg).0);
    }

    #[test]
    fn longest_match_provides() {
        let (mut t, c, cfg) = setup(Mechanism::XorBp, 0xfeed);
        let (_, meta) = t.predict(0x400, &c, &cfg);
        t.write_entry(2, meta.indices[2], meta.tags[2], 0, 1, &c, &cfg);
        t.write_entry(5, meta.indices[5], meta.tags[5], 7, 1, &c, &cfg);
        let (taken, meta) = t.predict(0x400, &c, &cfg);
        assert_eq!(meta.provider, Some(5));
        assert_eq!(meta.alt, Some(2));
        assert!(taken);
    }

    #[test]
    fn useful_rises_when_provider_beats_alt() {
        let (mut t, c, cfg) = setup(Mechanism::Baseline, 0);
        let (_, meta) = t.predict(0x400, &c, &cfg);
        t.write_entry(3, meta.indices[3], meta.tags[3], 6, 1, &c, &cfg);
        let (taken, meta) = t.predict(0x400, &c, &cfg);
        assert!(taken && !meta.alt_taken);
        t.update(true, &c, &cfg, &meta);
        assert_eq!(t.entry(3, meta.indices[3]).useful, 2);
    }

    #[test]
    fn no_free_slot_decrements_useful() {
        let (mut t, c, cfg) = setup(Mechanism::Baseline, 0);
        let (_, meta) = t.predict(0x400, &c, &cfg);
        t.write_entry(1, meta.indices[1], meta.tags[1], 6, 0, &c, &cfg);
        for k in 2..TAGGED_TABLES {
            // Present but with a different tag, so they do not match.
            t.write_entry(k, meta.indices[k], meta.tags[k] ^ 1, 0, 2, &c, &cfg);
        }
        let (taken, meta) = t.predict(0x400, &c, &cfg);
        assert_eq!(meta.provider, Some(1));
        assert!(taken);
        let before = t.valid_entries();
        t.update(false, &c, &cfg, &meta);
        for k in 2..TAGGED_TABLES {
            assert_eq!(t.entry(k, meta.indices[k]).useful, 1);
        }
        assert_eq!(t.valid_entries(), before);
    }

    #[test]
    fn counters_stay_in_range() {
        let (mut t, c, cfg) = setup(Mechanism::NoisyXorBp, 0x0bad_cafe);
        let mut rng = SimRng::seed_from_u64(5);
        for _ in 0..20_000 {
            let pc = rng.random_range(0..512u64) << 2;
            let (_, meta) = t.predict(pc, &c, &cfg);
            t.update(rng.random_bool(0.5), &c, &cfg, &meta);
        }
        assert!(t.decoded_counters(&c, &cfg).iter().all(|&v| v <= CTR_MAX));
        assert!(t.base().decoded(&c, &cfg).iter().all(|&v| v <= 3));
        assert!(t.tables.iter().flatten().all(|e| e.useful <= USEFUL_MAX));
    }
}
