//! Domain types shared by every predictor structure.

mod branch;
mod codec;
mod context;
mod key;
mod mechanism;

pub use branch::{BranchKind, BranchRecord};
pub use codec::{codec_apply, Word};
pub use context::{rotate_key, Privilege, ThreadContext, Tid};
pub use key::{generate_key, Key, KeyLane, SimRng};
pub use mechanism::{Mechanism, MechanismConfig, PhtEncoding};

/// Low `width` bits set. `width` may be 0..=64.
#[inline]
pub fn mask(width: u32) -> u64 {
    match width {
        0 => 0,
        64.. => u64::MAX,
        w => (1u64 << w) - 1,
    }
}
