use std::fmt;
use std::str::FromStr;

use crate::domain::{BranchRecord, MechanismConfig, ThreadContext, Tid};
use crate::error::{Error, Result};

use super::btb::{Btb, BtbGeometry};
use super::gshare::{Gshare, GshareMeta};
use super::tage::{Tage, TageMeta};
use super::tournament::{Tournament, TournamentMeta};
use super::GSHARE_INDEX_BITS;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredictorKind {
    #[default]
    Gshare,
    Tournament,
    Tage,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 3] =
        [PredictorKind::Gshare, PredictorKind::Tournament, PredictorKind::Tage];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Gshare => "gshare",
            PredictorKind::Tournament => "tournament",
            PredictorKind::Tage => "tage",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown predictor '{s}' (valid: gshare, tournament, tage)"
                ))
            })
    }
}

#[derive(Clone, Debug)]
pub enum Direction {
    Gshare(Gshare),
    Tournament(Tournament),
    Tage(Box<Tage>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionMeta {
    Gshare(GshareMeta),
    Tournament(TournamentMeta),
    Tage(TageMeta),
}

impl Direction {
    pub fn new(kind: PredictorKind, cfg: &MechanismConfig) -> Self {
        match kind {
            PredictorKind::Gshare => Direction::Gshare(Gshare::new(GSHARE_INDEX_BITS, cfg)),
            PredictorKind::Tournament => Direction::Tournament(Tournament::new(cfg)),
            PredictorKind::Tage => Direction::Tage(Box::new(Tage::new(cfg))),
        }
    }

    pub fn predict(&self, pc: u64, ctx: &ThreadContext, cfg: &MechanismConfig) -> (bool, DirectionMeta) {
        match self {
            Direction::Gshare(g) => {
                let (t, m) = g.predict(pc, ctx, cfg);
                (t, DirectionMeta::Gshare(m))
            }
            Direction::Tournament(p) => {
                let (t, m) = p.predict(pc, ctx, cfg);
                (t, DirectionMeta::Tournament(m))
            }
            Direction::Tage(p) => {
                let (t, m) = p.predict(pc, ctx, cfg);
                (t, DirectionMeta::Tage(m))
            }
        }
    }

    /// Commit-time training. `meta` must come from the matching `predict`.
    pub fn update(
        &mut self,
        pc: u64,
        taken: bool,
        ctx: &ThreadContext,
        cfg: &MechanismConfig,
        meta: &DirectionMeta,
    ) {
        match (self, meta) {
            (Direction::Gshare(g), DirectionMeta::Gshare(_)) => g.update(pc, taken, ctx, cfg),
            (Direction::Tournament(p), DirectionMeta::Tournament(m)) => p.update(taken, ctx, cfg, m),
            (Direction::Tage(p), DirectionMeta::Tage(m)) => p.update(taken, ctx, cfg, m),
            _ => panic!("direction metadata from a different predictor"),
        }
    }

    pub fn warm_reset(&mut self, ctx: &ThreadContext, cfg: &MechanismConfig) {
        match self {
            Direction::Gshare(g) => g.warm_reset(ctx, cfg),
            Direction::Tournament(p) => p.warm_reset(ctx, cfg),
            Direction::Tage(p) => p.warm_reset(ctx, cfg),
        }
    }

    /// Resets all tables and clears history. Returns entries cleared.
    pub fn flush(&mut self) -> usize {
        match self {
            Direction::Gshare(g) => {
                g.clear_history();
                g.pht_mut().flush()
            }
            Direction::Tournament(p) => p.flush(),
            Direction::Tage(p) => p.flush(),
        }
    }

    pub fn flush_owner(&mut self, tid: Tid) -> Result<usize> {
        match self {
            Direction::Gshare(g) => g.pht_mut().flush_owner(tid),
            Direction::Tournament(p) => p.flush_owner(tid),
            Direction::Tage(p) => p.flush_owner(tid),
        }
    }

    pub fn as_gshare(&self) -> Option<&Gshare> {
        match self {
            Direction::Gshare(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_gshare_mut(&mut self) -> Option<&mut Gshare> {
        match self {
            Direction::Gshare(g) => Some(g),
            _ => None,
        }
    }
}

/// What the front end predicted for one branch and how it compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchOutcome {
    pub predicted_taken: bool,
    pub predicted_next: u64,
    /// Predicted next pc differs from the actual one.
    pub mispredicted: bool,
    /// Conditional branch whose direction was wrong.
    pub direction_mispredicted: bool,
    pub btb_hit: bool,
}

/// BTB plus one direction predictor.
#[derive(Clone, Debug)]
pub struct PredictorStack {
    pub btb: Btb,
    pub direction: Direction,
}

impl PredictorStack {
    pub fn new(kind: PredictorKind, cfg: &MechanismConfig) -> Self {
        Self::with_btb(kind, BtbGeometry::default(), cfg)
    }

    pub fn with_btb(kind: PredictorKind, geometry: BtbGeometry, cfg: &MechanismConfig) -> Self {
        PredictorStack {
            btb: Btb::new(geometry, cfg),
            direction: Direction::new(kind, cfg),
        }
    }

    /// Predict, compare against the recorded outcome, then train.
    pub fn execute(&mut self, rec: &BranchRecord, ctx: &ThreadContext, cfg: &MechanismConfig) -> BranchOutcome {
        let target = self.btb.lookup(rec.pc, ctx, cfg);
        let fall = rec.fall_through();
        let taken = rec.is_taken();
        let outcome = if rec.kind.is_conditional() {
            let (dir, meta) = self.direction.predict(rec.pc, ctx, cfg);
            self.direction.update(rec.pc, taken, ctx, cfg, &meta);
            let predicted_next = match (dir, target) {
                (true, Some(t)) => t,
                _ => fall,
            };
            BranchOutcome {
                predicted_taken: dir,
                predicted_next,
                mispredicted: predicted_next != rec.next_pc(),
                direction_mispredicted: dir != taken,
                btb_hit: target.is_some(),
            }
        } else {
            let predicted_next = target.unwrap_or(fall);
            BranchOutcome {
                predicted_taken: target.is_some(),
                predicted_next,
                mispredicted: predicted_next != rec.next_pc(),
                direction_mispredicted: false,
                btb_hit: target.is_some(),
            }
        };
        self.btb.update(rec.pc, rec.target, taken, ctx, cfg);
        outcome
    }

    /// Clears the BTB and sets every direction table to its reset value as
    /// seen through `ctx`.
    pub fn warm_reset(&mut self, ctx: &ThreadContext, cfg: &MechanismConfig) {
        self.btb.flush();
        self.direction.warm_reset(ctx, cfg);
    }
}
