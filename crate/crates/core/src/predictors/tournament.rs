use crate::domain::{mask, KeyLane, MechanismConfig, ThreadContext, Tid};
use crate::error::{Error, Result};

use super::counter::{counter_predicts_taken, counter_update};
use super::pht::Pht;
use super::HARTS;

const LOCAL_BITS: u32 = 11;
const GLOBAL_BITS: u32 = 13;
const PATH_BITS: u32 = 12;

const LOCAL_SALT: u32 = 1;
const GLOBAL_SALT: u32 = 2;
const CHOOSER_SALT: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TournamentMeta {
    pub lht_index: usize,
    pub local_index: usize,
    pub global_index: usize,
    pub local_taken: bool,
    pub global_taken: bool,
    pub chose_global: bool,
}

/// Local/global hybrid with a chooser.
///
/// First level: 2048 per-branch 11-bit histories, selecting one of 2048
/// local counters. Global side: 8192 counters and an 8192-entry chooser,
/// both addressed by the 12-bit path history hashed with the pc.
#[derive(Clone, Debug)]
pub struct Tournament {
    lht: Vec<u16>,
    lht_owner: Option<Vec<u8>>,
    local: Pht,
    global: Pht,
    chooser: Pht,
    path: [u64; HARTS],
}

impl Tournament {
    pub fn new(cfg: &MechanismConfig) -> Self {
        Tournament {
            lht: vec![0; 1 << LOCAL_BITS],
            lht_owner: cfg.owner_tracking().then(|| vec![0; 1 << LOCAL_BITS]),
            local: Pht::new(1 << LOCAL_BITS, LOCAL_SALT, cfg),
            global: Pht::new(1 << GLOBAL_BITS, GLOBAL_SALT, cfg),
            chooser: Pht::new(1 << GLOBAL_BITS, CHOOSER_SALT, cfg),
            path: [0; HARTS],
        }
    }

    pub fn chooser(&self) -> &Pht {
        &self.chooser
    }

    pub fn chooser_mut(&mut self) -> &mut Pht {
        &mut self.chooser
    }

    pub fn global_mut(&mut self) -> &mut Pht {
        &mut self.global
    }

    pub fn local_mut(&mut self) -> &mut Pht {
        &mut self.local
    }

    fn lht_key(ctx: &ThreadContext, cfg: &MechanismConfig) -> u16 {
        if cfg.content_encoding() {
            ctx.key().slice(KeyLane::LocalHistory, LOCAL_BITS) as u16
        } else {
            0
        }
    }

    fn ik(ctx: &ThreadContext, cfg: &MechanismConfig, bits: u32) -> u64 {
        if cfg.index_encoding() {
            ctx.key().slice(KeyLane::Index, bits)
        } else {
            0
        }
    }

    /// Decoded local history of the branch at `pc`.
    pub fn local_history(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> u16 {
        let i = self.lht_index(pc, ctx, cfg);
        self.lht[i] ^ Self::lht_key(ctx, cfg)
    }

    fn lht_index(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> usize {
        (((pc >> 2) ^ Self::ik(ctx, cfg, LOCAL_BITS)) & mask(LOCAL_BITS)) as usize
    }

    pub fn predict(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> (bool, TournamentMeta) {
        let lht_index = self.lht_index(pc, ctx, cfg);
        let hist = (self.lht[lht_index] ^ Self::lht_key(ctx, cfg)) as u64;
        let local_index = ((hist ^ Self::ik(ctx, cfg, LOCAL_BITS)) & mask(LOCAL_BITS)) as usize;
        let path = self.path[ctx.tid().index()];
        let global_index =
            ((path ^ (pc >> 2) ^ Self::ik(ctx, cfg, GLOBAL_BITS)) & mask(GLOBAL_BITS)) as usize;
        let local_taken = counter_predicts_taken(self.local.read(local_index, ctx, cfg));
        let global_taken = counter_predicts_taken(self.global.read(global_index, ctx, cfg));
        let chose_global = counter_predicts_taken(self.chooser.read(global_index, ctx, cfg));
        let taken = if chose_global { global_taken } else { local_taken };
        let meta = TournamentMeta {
            lht_index,
            local_index,
            global_index,
            local_taken,
            global_taken,
            chose_global,
        };
        (taken, meta)
    }

    pub fn update(
        &mut self,
        taken: bool,
        ctx: &ThreadContext,
        cfg: &MechanismConfig,
        meta: &TournamentMeta,
    ) {
        if meta.local_taken != meta.global_taken {
            let c = self.chooser.read(meta.global_index, ctx, cfg);
            self.chooser
                .write(meta.global_index, counter_update(c, meta.global_taken == taken), ctx, cfg);
        }
        let c = self.local.read(meta.local_index, ctx, cfg);
        self.local.write(meta.local_index, counter_update(c, taken), ctx, cfg);
        let c = self.global.read(meta.global_index, ctx, cfg);
        self.global.write(meta.global_index, counter_update(c, taken), ctx, cfg);

        let k = Self::lht_key(ctx, cfg);
        let hist = self.lht[meta.lht_index] ^ k;
        let next = ((hist << 1) | taken as u16) & mask(LOCAL_BITS) as u16;
        self.lht[meta.lht_index] = next ^ k;
        if let Some(owners) = self.lht_owner.as_mut() {
            owners[meta.lht_index] = ctx.resident().0 + 1;
        }
        let p = &mut self.path[ctx.tid().index()];
        *p = ((*p << 1) | taken as u64) & mask(PATH_BITS);
    }

    pub fn warm_reset(&mut self, ctx: &ThreadContext, cfg: &MechanismConfig) {
        self.local.warm_reset(ctx, cfg);
        self.global.warm_reset(ctx, cfg);
        self.chooser.warm_reset(ctx, cfg);
        self.lht.fill(Self::lht_key(ctx, cfg));
        if let Some(o) = self.lht_owner.as_mut() {
            o.fill(0);
        }
        self.path = [0; HARTS];
    }

    pub fn flush(&mut self) -> usize {
        let mut cleared = self.local.flush() + self.global.flush() + self.chooser.flush();
        cleared += self.lht.iter().filter(|&&h| h != 0).count();
        self.lht.fill(0);
        if let Some(o) = self.lht_owner.as_mut() {
            o.fill(0);
        }
        self.path = [0; HARTS];
        cleared
    }

    pub fn flush_owner(&mut self, tid: Tid) -> Result<usize> {
        let Some(owners) = self.lht_owner.as_mut() else {
            return Err(Error::contract("precise flush on a tournament predictor without owner tracking"));
        };
        let mut cleared = 0;
        for (h, o) in self.lht.iter_mut().zip(owners.iter_mut()) {
            if *o == tid.0 + 1 {
                *h = 0;
                *o = 0;
                cleared += 1;
            }
        }
        cleared += self.local.flush_owner(tid)?;
        cleared += self.global.flush_owner(tid)?;
        cleared += self.chooser.flush_owner(tid)?;
        Ok(cleared)
    }
}
