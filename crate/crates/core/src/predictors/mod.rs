//! Predictor structures. Every table access takes the accessing thread's
//! context and the mechanism configuration, which select the content and
//! index codecs.

mod btb;
mod counter;
mod gshare;
mod pht;
mod stack;
mod tage;
mod tournament;

pub use btb::{Btb, BtbEntry, BtbGeometry};
pub use counter::{
    counter_predicts_taken, counter_update, saturating_step, STRONG_NOT_TAKEN, STRONG_TAKEN,
    WEAK_NOT_TAKEN, WEAK_TAKEN,
};
pub use gshare::{gshare_index, Gshare, GshareMeta};
pub use pht::{Pht, COUNTER_RESET};
pub use stack::{BranchOutcome, Direction, DirectionMeta, PredictorKind, PredictorStack};
pub use tage::{fold_history, Tage, TageEntry, TageMeta, HISTORY_LENGTHS, TAGGED_TABLES, TAG_BITS};
pub use tournament::{Tournament, TournamentMeta};

/// Hardware threads sharing one predictor (SMT-2).
pub const HARTS: usize = 2;

/// Gshare PHT index width (4096 entries).
pub const GSHARE_INDEX_BITS: u32 = 12;
