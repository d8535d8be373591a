use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use super::mask;

/// Deterministic PRNG owned by a simulation. Stands in for the per-core
/// hardware random number generator.
pub type SimRng = ChaCha8Rng;

/// Thread-private master random number.
///
/// Every per-use key (BTB tag key, target key, index key, PHT word keys) is a
/// fixed slice or derivation of this one 64-bit value. A zero key makes every
/// derived key zero, so all codecs degenerate to the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Key(u64);

/// Where a derived key is cut from the master value.
///
/// Slices may overlap; they only need to be fixed functions of the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyLane {
    /// Set / table index randomisation.
    Index,
    /// BTB partial tag.
    BtbTag,
    /// Per-entry (2-bit) PHT counter encoding.
    CounterField,
    /// Tournament local-history entries.
    LocalHistory,
    /// TAGE tag of tagged table `n`.
    TageTag(u8),
    /// TAGE prediction counter of tagged table `n`.
    TageCounter(u8),
}

impl KeyLane {
    fn rotation(self) -> u32 {
        match self {
            KeyLane::Index => 17,
            KeyLane::BtbTag => 40,
            KeyLane::CounterField => 60,
            KeyLane::LocalHistory => 3,
            KeyLane::TageTag(n) => (29 + 7 * n as u32) % 64,
            KeyLane::TageCounter(n) => (53 + 5 * n as u32) % 64,
        }
    }
}

impl Key {
    pub const ZERO: Key = Key(0);

    pub const fn new(value: u64) -> Self {
        Key(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `width` bits of the key starting at the lane's bit offset (wrapping).
    #[inline]
    pub fn slice(self, lane: KeyLane, width: u32) -> u64 {
        self.0.rotate_right(lane.rotation()) & mask(width)
    }

    /// Key applied to full 64-bit BTB targets.
    #[inline]
    pub fn target_key(self) -> u64 {
        self.0
    }

    /// Word key for physical word `word` of the table identified by `salt`.
    ///
    /// Neighbouring words get unrelated keys; the zero key maps to zero.
    #[inline]
    pub fn word_key(self, salt: u32, word: usize, width: u32) -> u64 {
        if self.0 == 0 {
            return 0;
        }
        let tweak = splitmix64(((salt as u64) << 40) ^ word as u64);
        splitmix64(self.0 ^ tweak) & mask(width)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a fresh key from the simulation's generator.
pub fn generate_key(rng: &mut SimRng) -> Key {
    Key(rng.next_u64())
}
