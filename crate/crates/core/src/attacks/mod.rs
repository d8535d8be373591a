//! Locate / prime / probe models of reuse and contention attacks against a
//! simulated predictor stack.
//!
//! The attacker is software thread 0 and the victim software thread 1. In
//! time-sliced mode both run on hardware thread 0 and every hand-over is a
//! context switch (so keys rotate or tables flush according to the
//! mechanism); with `smt` they sit on hardware threads 0 and 1 and no event
//! separates prime from probe. The attacker reads its own predictor outcomes
//! directly.

mod branchscope;
mod btb_reuse;
mod contention;
mod harness;
mod scenario;

pub use branchscope::attack_pht_branchscope;
pub use btb_reuse::{
    attack_btb_reuse, replay_tag_hits, spurious_hit_redirect_rate, SpuriousHitEstimate,
};
pub use contention::attack_btb_contention;
pub use harness::Harness;
pub use scenario::{
    run_attack, run_attacks, AttackKind, AttackReport, AttackScenario, BranchScopeMode, RESIDUAL_FLOOR,
};
