use crate::domain::{mask, MechanismConfig};
use crate::error::{Error, Result};
use crate::predictors::Pht;

use super::WordKeySchedule;

/// Physical word and bit offset of a logical entry.
///
/// The word index is `entry / (word_width / 2)`, optionally permuted by the
/// key-dependent hardened selection.
pub fn physical_location(
    pht: &Pht,
    entry: usize,
    schedule: &WordKeySchedule,
    cfg: &MechanismConfig,
) -> Result<(usize, u32)> {
    if entry >= pht.entries() {
        return Err(Error::contract(format!(
            "PHT entry {entry} out of range (table has {})",
            pht.entries()
        )));
    }
    let per_word = pht.entries_per_word();
    let logical_word = entry / per_word;
    let word = if cfg.hardened_word_select {
        schedule.permute(logical_word, pht.num_words().trailing_zeros())
    } else {
        logical_word
    };
    Ok((word, 2 * (entry % per_word) as u32))
}

/// Decodes the whole physical word holding `entry` and returns its 2-bit
/// field.
pub fn enhanced_pht_read(
    pht: &Pht,
    entry: usize,
    schedule: &WordKeySchedule,
    cfg: &MechanismConfig,
) -> Result<u8> {
    let (word, shift) = physical_location(pht, entry, schedule, cfg)?;
    let decoded = pht.raw_word(word) ^ schedule.word_key(word);
    Ok(((decoded >> shift) & 3) as u8)
}

/// Read-decode the word, replace one field, re-encode, write back.
pub fn enhanced_pht_write(
    pht: &mut Pht,
    entry: usize,
    value: u8,
    schedule: &WordKeySchedule,
    cfg: &MechanismConfig,
) -> Result<()> {
    if value > 3 {
        return Err(Error::contract(format!("counter value {value} exceeds 2 bits")));
    }
    let (word, shift) = physical_location(pht, entry, schedule, cfg)?;
    let word_key = schedule.word_key(word);
    let decoded = pht.raw_word(word) ^ word_key;
    let updated = (decoded & !(3u64 << shift)) | ((value as u64) << shift);
    pht.set_raw_word(word, (updated ^ word_key) & mask(pht.word_width()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::domain::{Key, Mechanism, SimRng};

    fn enhanced(width: u32, hardened: bool) -> MechanismConfig {
        MechanismConfig {
            word_width_bits: width,
            hardened_word_select: hardened,
            ..MechanismConfig::new(Mechanism::XorBp)
        }
    }

    #[test]
    fn zero_key_reads_raw_bits() {
        let cfg = enhanced(32, false);
        let mut pht = Pht::new(4096, 0, &cfg);
        pht.set_raw_word(0, 0b11_10_01_00);
        let s = WordKeySchedule::new(Key::ZERO, 0, 32);
        let decoded: Vec<u8> = (0..4).map(|e| enhanced_pht_read(&pht, e, &s, &cfg).unwrap()).collect();
        assert_eq!(decoded, vec![0, 1, 2, 3]);
    }

    #[test]
    fn write_then_read_same_key() {
        let cfg = enhanced(32, false);
        let mut pht = Pht::new(4096, 0, &cfg);
        let s = WordKeySchedule::new(Key::new(0xabcdef), 0, 32);
        enhanced_pht_write(&mut pht, 5, 2, &s, &cfg).unwrap();
        assert_eq!(enhanced_pht_read(&pht, 5, &s, &cfg).unwrap(), 2);
    }

    #[test]
    fn write_leaves_word_neighbours_alone() {
        for hardened in [false, true] {
            let cfg = enhanced(32, hardened);
            let mut pht = Pht::new(4096, 0, &cfg);
            let s = WordKeySchedule::new(Key::new(0x1357_9bdf_2468_ace0), 0, 32);
            let before: Vec<u8> = (0..16).map(|e| enhanced_pht_read(&pht, e, &s, &cfg).unwrap()).collect();
            enhanced_pht_write(&mut pht, 5, 3 - before[5], &s, &cfg).unwrap();
            for e in (0..16).filter(|&e| e != 5) {
                assert_eq!(enhanced_pht_read(&pht, e, &s, &cfg).unwrap(), before[e]);
            }
            assert_eq!(enhanced_pht_read(&pht, 5, &s, &cfg).unwrap(), 3 - before[5]);
        }
    }

    #[test]
    fn sequential_fill_of_one_word_decodes_exactly() {
        // 64-bit words hold 32 entries: write all of them, decode in bulk.
        let cfg = enhanced(64, false);
        let mut pht = Pht::new(4096, 0, &cfg);
        let s = WordKeySchedule::new(Key::new(0x0f0f_1234_5678_9abc), 0, 64);
        let mut rng = SimRng::seed_from_u64(11);
        let written: Vec<u8> = (0..32).map(|_| rng.random_range(0..4u8)).collect();
        for (e, &v) in written.iter().enumerate() {
            enhanced_pht_write(&mut pht, 64 + e, v, &s, &cfg).unwrap();
        }
        let word = pht.raw_word(2) ^ s.word_key(2);
        let bulk: Vec<u8> = (0..32).map(|i| ((word >> (2 * i)) & 3) as u8).collect();
        assert_eq!(bulk, written);
    }

    #[test]
    fn out_of_range_rejected() {
        let cfg = enhanced(32, false);
        let mut pht = Pht::new(64, 0, &cfg);
        let s = WordKeySchedule::new(Key::new(1), 0, 32);
        assert!(enhanced_pht_read(&pht, 64, &s, &cfg).is_err());
        assert!(enhanced_pht_write(&mut pht, 64, 1, &s, &cfg).is_err());
        assert!(enhanced_pht_write(&mut pht, 0, 4, &s, &cfg).is_err());
    }

    #[test]
    fn flipping_one_word_only_disturbs_that_word() {
        let cfg = enhanced(32, true);
        let mut pht = Pht::new(1024, 0, &cfg);
        let s = WordKeySchedule::new(Key::new(0x77aa_0011_beef_0042), 0, 32);
        let before: Vec<u8> = (0..1024).map(|e| enhanced_pht_read(&pht, e, &s, &cfg).unwrap()).collect();
        let (victim_word, _) = physical_location(&pht, 100, &s, &cfg).unwrap();
        pht.set_raw_word(victim_word, !pht.raw_word(victim_word));
        for e in 0..1024 {
            let (w, _) = physical_location(&pht, e, &s, &cfg).unwrap();
            let now = enhanced_pht_read(&pht, e, &s, &cfg).unwrap();
            if w == victim_word {
                assert_ne!(now, before[e]);
            } else {
                assert_eq!(now, before[e]);
            }
        }
    }
}
