use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Isolation mechanism applied to the shared predictor state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mechanism {
    #[default]
    Baseline,
    CompleteFlush,
    PreciseFlush,
    XorBp,
    NoisyXorBp,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Baseline,
        Mechanism::CompleteFlush,
        Mechanism::PreciseFlush,
        Mechanism::XorBp,
        Mechanism::NoisyXorBp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Baseline => "baseline",
            Mechanism::CompleteFlush => "complete-flush",
            Mechanism::PreciseFlush => "precise-flush",
            Mechanism::XorBp => "xor-bp",
            Mechanism::NoisyXorBp => "noisy-xor-bp",
        }
    }

    pub fn is_flush(self) -> bool {
        matches!(self, Mechanism::CompleteFlush | Mechanism::PreciseFlush)
    }

    pub fn is_xor(self) -> bool {
        matches!(self, Mechanism::XorBp | Mechanism::NoisyXorBp)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Mechanism::ALL.iter().map(|m| m.name()).collect();
                Error::config(format!(
                    "unknown mechanism '{s}' (valid: {})",
                    valid.join(", ")
                ))
            })
    }
}

/// How PHT counters are encoded when content encoding is active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhtEncoding {
    /// Each 2-bit counter XORed with the same 2-bit key slice.
    PerEntry,
    /// Whole physical words XORed with per-word keys.
    #[default]
    EnhancedWord,
}

impl PhtEncoding {
    pub fn name(self) -> &'static str {
        match self {
            PhtEncoding::PerEntry => "per-entry",
            PhtEncoding::EnhancedWord => "enhanced-word",
        }
    }
}

impl FromStr for PhtEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-entry" => Ok(PhtEncoding::PerEntry),
            "enhanced-word" => Ok(PhtEncoding::EnhancedWord),
            _ => Err(Error::config(format!(
                "unknown pht_encoding '{s}' (valid: per-entry, enhanced-word)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MechanismConfig {
    pub mechanism: Mechanism,
    pub pht_encoding: PhtEncoding,
    /// Physical PHT word width in bits. Power of two in 2..=64.
    pub word_width_bits: u32,
    /// Key-dependent permutation of physical PHT word indices.
    pub hardened_word_select: bool,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            mechanism: Mechanism::Baseline,
            pht_encoding: PhtEncoding::EnhancedWord,
            word_width_bits: 32,
            hardened_word_select: false,
        }
    }
}

impl MechanismConfig {
    pub fn new(mechanism: Mechanism) -> Self {
        MechanismConfig {
            mechanism,
            ..Default::default()
        }
    }

    pub fn with_encoding(mut self, encoding: PhtEncoding) -> Self {
        self.pht_encoding = encoding;
        self
    }

    /// Table contents are XOR-encoded with the thread's key.
    #[inline]
    pub fn content_encoding(&self) -> bool {
        self.mechanism.is_xor()
    }

    /// Table indices are XORed with the thread's index key.
    #[inline]
    pub fn index_encoding(&self) -> bool {
        self.mechanism == Mechanism::NoisyXorBp
    }

    /// Entries carry the owning thread id.
    #[inline]
    pub fn owner_tracking(&self) -> bool {
        self.mechanism == Mechanism::PreciseFlush
    }

    /// Checks internal consistency. Returns advisory warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let w = self.word_width_bits;
        if !(2..=64).contains(&w) || !w.is_power_of_two() {
            return Err(Error::config(format!(
                "word_width_bits must be a power of two in 2..=64, got {w}"
            )));
        }
        if self.hardened_word_select && self.pht_encoding != PhtEncoding::EnhancedWord {
            return Err(Error::config(
                "hardened_word_select requires pht_encoding = enhanced-word",
            ));
        }
        let mut warnings = Vec::new();
        if self.mechanism == Mechanism::NoisyXorBp && self.pht_encoding == PhtEncoding::PerEntry {
            warnings.push(
                "noisy-xor-bp normally pairs with enhanced-word PHT encoding; per-entry selected"
                    .to_string(),
            );
        }
        Ok(warnings)
    }
}
