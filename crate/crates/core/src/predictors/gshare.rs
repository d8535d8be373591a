use crate::domain::{mask, KeyLane, MechanismConfig, ThreadContext};

use super::counter::{counter_predicts_taken, counter_update};
use super::pht::Pht;
use super::HARTS;

const PHT_SALT: u32 = 0;

/// `pc_low ^ history ^ index_key`, cut to `bits`.
#[inline]
pub fn gshare_index(pc_low: u64, history: u64, index_key: u64, bits: u32) -> usize {
    ((pc_low ^ history ^ index_key) & mask(bits)) as usize
}

/// State captured at predict time and carried to commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GshareMeta {
    pub index: usize,
    /// Decoded counter value read at predict time.
    pub counter: u8,
}

/// Gshare: one PHT indexed by pc XOR global history. The history register is
/// private to each hardware thread.
#[derive(Clone, Debug)]
pub struct Gshare {
    pht: Pht,
    bits: u32,
    history: [u64; HARTS],
}

impl Gshare {
    pub fn new(index_bits: u32, cfg: &MechanismConfig) -> Self {
        Gshare {
            pht: Pht::new(1 << index_bits, PHT_SALT, cfg),
            bits: index_bits,
            history: [0; HARTS],
        }
    }

    pub fn pht(&self) -> &Pht {
        &self.pht
    }

    pub fn pht_mut(&mut self) -> &mut Pht {
        &mut self.pht
    }

    pub fn history(&self, ctx: &ThreadContext) -> u64 {
        self.history[ctx.tid().index()]
    }

    pub fn set_history(&mut self, ctx: &ThreadContext, value: u64) {
        self.history[ctx.tid().index()] = value & mask(self.bits);
    }

    #[inline]
    pub fn index(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> usize {
        let ik = if cfg.index_encoding() {
            ctx.key().slice(KeyLane::Index, self.bits)
        } else {
            0
        };
        gshare_index(pc >> 2, self.history(ctx), ik, self.bits)
    }

    pub fn predict(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> (bool, GshareMeta) {
        let index = self.index(pc, ctx, cfg);
        let counter = self.pht.read(index, ctx, cfg);
        (counter_predicts_taken(counter), GshareMeta { index, counter })
    }

    /// Read-decode-modify-encode-write at commit, then shift history.
    pub fn update(&mut self, pc: u64, taken: bool, ctx: &ThreadContext, cfg: &MechanismConfig) {
        let index = self.index(pc, ctx, cfg);
        let counter = self.pht.read(index, ctx, cfg);
        self.pht.write(index, counter_update(counter, taken), ctx, cfg);
        self.shift(ctx, taken);
    }

    /// Commit using the counter captured at predict time instead of a re-read.
    pub fn update_from_meta(
        &mut self,
        meta: &GshareMeta,
        taken: bool,
        ctx: &ThreadContext,
        cfg: &MechanismConfig,
    ) {
        self.pht.write(meta.index, counter_update(meta.counter, taken), ctx, cfg);
        self.shift(ctx, taken);
    }

    fn shift(&mut self, ctx: &ThreadContext, taken: bool) {
        let h = &mut self.history[ctx.tid().index()];
        *h = ((*h << 1) | taken as u64) & mask(self.bits);
    }

    pub fn warm_reset(&mut self, ctx: &ThreadContext, cfg: &MechanismConfig) {
        self.pht.warm_reset(ctx, cfg);
        self.history = [0; HARTS];
    }

    pub fn clear_history(&mut self) {
        self.history = [0; HARTS];
    }
}
