use crate::domain::{mask, Key};

/// Per-word key derivation for one PHT under one master key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordKeySchedule {
    key: Key,
    salt: u32,
    width: u32,
}

impl WordKeySchedule {
    pub fn new(key: Key, salt: u32, width: u32) -> Self {
        WordKeySchedule { key, salt, width }
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Key for physical word `word`.
    #[inline]
    pub fn word_key(&self, word: usize) -> u64 {
        self.key.word_key(self.salt, word, self.width)
    }

    /// Seed for the hardened word permutation. Zero for the zero key.
    #[inline]
    fn select_seed(&self) -> u64 {
        self.key.word_key(self.salt ^ 0x5e1e_c700, usize::MAX, 64)
    }

    #[inline]
    pub fn permute(&self, word: usize, word_index_bits: u32) -> usize {
        hardened_word_index(word, word_index_bits, self.select_seed())
    }
}

/// `rotl(word ^ a, r)` within `bits` bits, with `a` and `r` cut from `seed`.
/// A bijection on `0..2^bits` for every seed.
#[inline]
pub fn hardened_word_index(word: usize, bits: u32, seed: u64) -> usize {
    if bits == 0 {
        return 0;
    }
    let m = mask(bits);
    let x = (word as u64 ^ seed) & m;
    let r = ((seed >> 32) % bits as u64) as u32;
    let rotated = if r == 0 {
        x
    } else {
        ((x << r) | (x >> (bits - r))) & m
    };
    rotated as usize
}
