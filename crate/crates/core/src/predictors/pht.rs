use crate::domain::{mask, KeyLane, MechanismConfig, PhtEncoding, ThreadContext, Tid};
use crate::error::{Error, Result};
use crate::isolation::{enhanced_pht_read, enhanced_pht_write, WordKeySchedule};

use super::counter::WEAK_NOT_TAKEN;

/// Counter value written by resets and flushes.
pub const COUNTER_RESET: u8 = WEAK_NOT_TAKEN;

/// Table of 2-bit counters packed into physical words.
///
/// Storage is physical: with content encoding active, the words hold encoded
/// bits and every access decodes through the accessing thread's key. Callers
/// pass logical entry indices that already include any index randomisation.
#[derive(Clone, Debug)]
pub struct Pht {
    words: Vec<u64>,
    entries: usize,
    word_width: u32,
    salt: u32,
    owners: Option<Vec<u8>>,
}

impl Pht {
    /// `entries` must be a power of two holding at least one full word.
    pub fn new(entries: usize, salt: u32, cfg: &MechanismConfig) -> Self {
        let word_width = cfg.word_width_bits;
        let per_word = (word_width / 2) as usize;
        assert!(entries.is_power_of_two() && entries >= per_word, "bad PHT size {entries}");
        let num_words = entries / per_word;
        Pht {
            words: vec![reset_pattern(word_width); num_words],
            entries,
            word_width,
            salt,
            owners: cfg.owner_tracking().then(|| vec![0; entries]),
        }
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    pub fn index_bits(&self) -> u32 {
        self.entries.trailing_zeros()
    }

    pub fn word_width(&self) -> u32 {
        self.word_width
    }

    pub fn entries_per_word(&self) -> usize {
        (self.word_width / 2) as usize
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn salt(&self) -> u32 {
        self.salt
    }

    pub fn raw_word(&self, word: usize) -> u64 {
        self.words[word]
    }

    pub fn set_raw_word(&mut self, word: usize, value: u64) {
        self.words[word] = value & mask(self.word_width);
    }

    /// Stored (possibly encoded) bits of an entry at its unpermuted location.
    pub fn raw_field(&self, entry: usize) -> u8 {
        let (word, shift) = self.plain_location(entry);
        ((self.words[word] >> shift) & 3) as u8
    }

    pub fn owner(&self, entry: usize) -> Option<Tid> {
        self.owners
            .as_ref()
            .and_then(|o| o[entry].checked_sub(1))
            .map(Tid)
    }

    pub fn schedule(&self, ctx: &ThreadContext) -> WordKeySchedule {
        WordKeySchedule::new(ctx.key(), self.salt, self.word_width)
    }

    /// Decoded counter at `entry` as seen by `ctx`.
    #[inline]
    pub fn read(&self, entry: usize, ctx: &ThreadContext, cfg: &MechanismConfig) -> u8 {
        debug_assert!(entry < self.entries);
        if !cfg.content_encoding() {
            return self.raw_field(entry);
        }
        match cfg.pht_encoding {
            PhtEncoding::PerEntry => {
                self.raw_field(entry) ^ ctx.key().slice(KeyLane::CounterField, 2) as u8
            }
            PhtEncoding::EnhancedWord => {
                enhanced_pht_read(self, entry, &self.schedule(ctx), cfg)
                    .expect("entry index within table")
            }
        }
    }

    /// Stores decoded counter `value` at `entry` on behalf of `ctx`.
    #[inline]
    pub fn write(&mut self, entry: usize, value: u8, ctx: &ThreadContext, cfg: &MechanismConfig) {
        debug_assert!(entry < self.entries && value <= 3);
        if let Some(owners) = self.owners.as_mut() {
            owners[entry] = ctx.resident().0 + 1;
        }
        if !cfg.content_encoding() {
            self.set_plain_field(entry, value);
            return;
        }
        match cfg.pht_encoding {
            PhtEncoding::PerEntry => {
                let key = ctx.key().slice(KeyLane::CounterField, 2) as u8;
                self.set_plain_field(entry, value ^ key);
            }
            PhtEncoding::EnhancedWord => {
                let schedule = self.schedule(ctx);
                enhanced_pht_write(self, entry, value, &schedule, cfg)
                    .expect("entry index within table");
            }
        }
    }

    /// Fills the table so that every entry decodes to the reset value under
    /// `ctx`. Identical to a flush when content encoding is off.
    pub fn warm_reset(&mut self, ctx: &ThreadContext, cfg: &MechanismConfig) {
        let pattern = reset_pattern(self.word_width);
        let width = self.word_width;
        let key = ctx.key();
        for (w, word) in self.words.iter_mut().enumerate() {
            let word_key = if !cfg.content_encoding() {
                0
            } else {
                match cfg.pht_encoding {
                    PhtEncoding::PerEntry => replicate_field(key.slice(KeyLane::CounterField, 2), width),
                    PhtEncoding::EnhancedWord => key.word_key(self.salt, w, width),
                }
            };
            *word = pattern ^ word_key;
        }
        if let Some(owners) = self.owners.as_mut() {
            owners.fill(0);
        }
    }

    /// Resets every counter to [`COUNTER_RESET`]; returns how many changed.
    pub fn flush(&mut self) -> usize {
        let changed = (0..self.entries)
            .filter(|&e| self.raw_field(e) != COUNTER_RESET)
            .count();
        self.words.fill(reset_pattern(self.word_width));
        if let Some(owners) = self.owners.as_mut() {
            owners.fill(0);
        }
        changed
    }

    /// Resets the entries last written by `tid`.
    pub fn flush_owner(&mut self, tid: Tid) -> Result<usize> {
        let Some(owners) = self.owners.take() else {
            return Err(Error::contract("precise flush on a PHT without owner tracking"));
        };
        let mut owners = owners;
        let tag = tid.0 + 1;
        let mut cleared = 0;
        for (entry, owner) in owners.iter_mut().enumerate() {
            if *owner == tag {
                *owner = 0;
                self.set_plain_field(entry, COUNTER_RESET);
                cleared += 1;
            }
        }
        self.owners = Some(owners);
        Ok(cleared)
    }

    /// Decoded view of every entry under `ctx`.
    pub fn decoded(&self, ctx: &ThreadContext, cfg: &MechanismConfig) -> Vec<u8> {
        (0..self.entries).map(|e| self.read(e, ctx, cfg)).collect()
    }

    #[inline]
    fn plain_location(&self, entry: usize) -> (usize, u32) {
        let per_word = self.entries_per_word();
        (entry / per_word, 2 * (entry % per_word) as u32)
    }

    fn set_plain_field(&mut self, entry: usize, bits: u8) {
        let (word, shift) = self.plain_location(entry);
        let w = &mut self.words[word];
        *w = (*w & !(3u64 << shift)) | ((bits as u64 & 3) << shift);
    }
}

fn reset_pattern(width: u32) -> u64 {
    replicate_field(COUNTER_RESET as u64, width)
}

/// Repeats a 2-bit field across a `width`-bit word.
pub(crate) fn replicate_field(field: u64, width: u32) -> u64 {
    (0..width / 2).fold(0u64, |acc, i| acc | ((field & 3) << (2 * i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Key, Mechanism};

    fn ctx(key: u64) -> ThreadContext {
        ThreadContext::new(Tid(0), Key::new(key))
    }

    #[test]
    fn fresh_table_reads_weak_not_taken() {
        let cfg = MechanismConfig::default();
        let pht = Pht::new(64, 0, &cfg);
        assert!(pht.decoded(&ctx(0), &cfg).iter().all(|&c| c == COUNTER_RESET));
    }

    #[test]
    fn per_entry_stores_value_xor_key_slice() {
        let cfg = MechanismConfig::new(Mechanism::XorBp).with_encoding(PhtEncoding::PerEntry);
        let c = ctx(0xfeed_face_cafe_beef);
        let k = c.key().slice(KeyLane::CounterField, 2) as u8;
        let mut pht = Pht::new(64, 0, &cfg);
        pht.write(9, 2, &c, &cfg);
        assert_eq!(pht.raw_field(9), 2 ^ k);
        assert_eq!(pht.read(9, &c, &cfg), 2);
    }

    #[test]
    fn per_entry_key_recoverable_from_one_pair() {
        // One known plaintext/ciphertext pair reveals the 2-bit key, which
        // then decodes every other entry of the thread.
        let cfg = MechanismConfig::new(Mechanism::XorBp).with_encoding(PhtEncoding::PerEntry);
        let victim = ctx(0x0123_4567_89ab_cdef);
        let mut pht = Pht::new(64, 0, &cfg);
        pht.write(3, 3, &victim, &cfg);
        pht.write(40, 0, &victim, &cfg);
        let recovered = pht.raw_field(3) ^ 3;
        assert_eq!(pht.raw_field(40) ^ recovered, 0);
    }

    #[test]
    fn warm_reset_decodes_to_reset_under_owner_key() {
        for enc in [PhtEncoding::PerEntry, PhtEncoding::EnhancedWord] {
            let cfg = MechanismConfig::new(Mechanism::XorBp).with_encoding(enc);
            let c = ctx(0x5151_a0a0_1234_9876);
            let mut pht = Pht::new(256, 7, &cfg);
            pht.warm_reset(&c, &cfg);
            assert!(pht.decoded(&c, &cfg).iter().all(|&v| v == COUNTER_RESET));
        }
    }

    #[test]
    fn flush_owner_requires_tracking() {
        let cfg = MechanismConfig::default();
        let mut pht = Pht::new(64, 0, &cfg);
        assert!(pht.flush_owner(Tid(0)).is_err());
    }

    #[test]
    fn flush_owner_is_selective_and_idempotent() {
        let cfg = MechanismConfig::new(Mechanism::PreciseFlush);
        let mut pht = Pht::new(64, 0, &cfg);
        let a = ctx(0);
        let b = ThreadContext::new(Tid(1), Key::ZERO);
        pht.write(1, 3, &a, &cfg);
        pht.write(2, 0, &b, &cfg);
        assert_eq!(pht.owner(1), Some(Tid(0)));
        assert_eq!(pht.flush_owner(Tid(0)).unwrap(), 1);
        assert_eq!(pht.read(1, &a, &cfg), COUNTER_RESET);
        assert_eq!(pht.read(2, &a, &cfg), 0);
        assert_eq!(pht.flush_owner(Tid(0)).unwrap(), 0);
    }

    #[test]
    fn flush_counts_changed_entries() {
        let cfg = MechanismConfig::default();
        let mut pht = Pht::new(64, 0, &cfg);
        let c = ctx(0);
        pht.write(0, 3, &c, &cfg);
        pht.write(1, 1, &c, &cfg);
        pht.write(2, 0, &c, &cfg);
        assert_eq!(pht.flush(), 2);
        assert_eq!(pht.flush(), 0);
    }
}
