//! Isolation layers over the predictor structures: word-granular PHT
//! encoding and the flush baselines.

mod enhanced;
mod flush;
mod word_keys;

pub use enhanced::{enhanced_pht_read, enhanced_pht_write, physical_location};
pub use flush::{flush_complete, flush_precise, FlushStats};
pub use word_keys::{hardened_word_index, WordKeySchedule};
