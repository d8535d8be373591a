use crate::error::{Error, Result};

use super::mask;

/// An unsigned value together with its bit width (1..=64).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Word {
    value: u64,
    width: u32,
}

impl Word {
    pub fn new(value: u64, width: u32) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::contract(format!("word width {width} outside 1..=64")));
        }
        if value & !mask(width) != 0 {
            return Err(Error::contract(format!(
                "value {value:#x} does not fit in {width} bits"
            )));
        }
        Ok(Word { value, width })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }
}

/// Encodes or decodes `word` with `key`. XOR, hence its own inverse.
pub fn codec_apply(word: Word, key: Word) -> Result<Word> {
    if word.width != key.width {
        return Err(Error::contract(format!(
            "codec width mismatch: word is {} bits, key is {} bits",
            word.width, key.width
        )));
    }
    Ok(Word {
        value: word.value ^ key.value,
        width: word.width,
    })
}
