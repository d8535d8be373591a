use crate::domain::Tid;
use crate::error::Result;
use crate::predictors::PredictorStack;

/// Result of one flush.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlushStats {
    pub entries_cleared: usize,
    pub cycle: u64,
}

/// Invalidates the BTB and tagged tables, resets counters to weakly
/// not-taken and clears history registers.
pub fn flush_complete(stack: &mut PredictorStack, cycle: u64) -> FlushStats {
    let entries_cleared = stack.btb.flush() + stack.direction.flush();
    FlushStats { entries_cleared, cycle }
}

/// Clears only the entries owned by `tid`. Histories are left alone: they
/// are per hardware thread, not per owner.
pub fn flush_precise(stack: &mut PredictorStack, tid: Tid, cycle: u64) -> Result<FlushStats> {
    let entries_cleared = stack.btb.flush_owner(tid)? + stack.direction.flush_owner(tid)?;
    Ok(FlushStats { entries_cleared, cycle })
}
