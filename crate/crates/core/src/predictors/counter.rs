//! Saturating counters.

pub const STRONG_NOT_TAKEN: u8 = 0;
pub const WEAK_NOT_TAKEN: u8 = 1;
pub const WEAK_TAKEN: u8 = 2;
pub const STRONG_TAKEN: u8 = 3;

/// Two-bit counter transition.
#[inline]
pub fn counter_update(state: u8, taken: bool) -> u8 {
    saturating_step(state, taken, STRONG_TAKEN)
}

/// One step toward `max` (taken) or 0 (not taken).
#[inline]
pub fn saturating_step(state: u8, up: bool, max: u8) -> u8 {
    if up {
        if state < max {
            state + 1
        } else {
            max
        }
    } else {
        state.saturating_sub(1)
    }
}

#[inline]
pub fn counter_predicts_taken(state: u8) -> bool {
    state >= WEAK_TAKEN
}
