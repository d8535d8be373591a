//! Built-in invariant suite run by `bpiso verify`.
//!
//! Each check builds small randomized instances from the suite seed. A
//! [`Fault`] deliberately breaks the system under test for one check so the
//! suite itself can be shown to catch it.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::domain::{
    codec_apply, generate_key, BranchKind, BranchRecord, Key, Mechanism, MechanismConfig, SimRng,
    ThreadContext, Tid, Word,
};
use crate::engine::{schedule_events, EventKind, Machine, Mode, RunConfig};
use crate::error::Error;
use crate::io::{generate_synthetic, SyntheticSpec};
use crate::isolation::{flush_complete, flush_precise};
use crate::predictors::{
    counter_update, BtbGeometry, Direction, PredictorKind, PredictorStack, COUNTER_RESET,
    STRONG_TAKEN,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Encode flips an extra bit.
    Codec,
    /// A context's key is swapped mid-run without re-encoding the tables.
    Isomorphism,
    /// A flush leaves one BTB entry behind.
    Flush,
    /// Counter transitions lose saturation.
    Counter,
}

impl Fault {
    pub const ALL: [Fault; 4] = [Fault::Codec, Fault::Isomorphism, Fault::Flush, Fault::Counter];

    pub fn name(self) -> &'static str {
        match self {
            Fault::Codec => "codec",
            Fault::Isomorphism => "isomorphism",
            Fault::Flush => "flush",
            Fault::Counter => "counter",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Fault::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fault '{s}' (valid: codec, isomorphism, flush, counter)")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

type Check = fn(u64, Option<Fault>) -> Result<String, String>;

const CHECKS: [(&str, Check); 6] = [
    ("codec-involution", codec_involution),
    ("baseline-isomorphism", baseline_isomorphism),
    ("flush-complete", flush_complete_resets),
    ("flush-precise", flush_precise_isolates),
    ("counter-range", counter_range),
    ("rotation-accounting", rotation_accounting),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check, in an order shuffled by `seed`.
pub fn run_verify(seed: u64, fault: Option<Fault>) -> VerifyReport {
    let mut order: Vec<usize> = (0..CHECKS.len()).collect();
    order.shuffle(&mut SimRng::seed_from_u64(seed));
    let checks = order
        .into_iter()
        .map(|i| {
            let (name, check) = CHECKS[i];
            let sub_seed = seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let (passed, detail) = match check(sub_seed, fault) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name, passed, detail }
        })
        .collect();
    VerifyReport { seed, checks }
}

fn codec_involution(seed: u64, fault: Option<Fault>) -> Result<String, String> {
    let mut rng = SimRng::seed_from_u64(seed);
    const N: usize = 20_000;
    for i in 0..N {
        let width = 1u32 << rng.random_range(1..=6);
        let mask = if width == 64 { u64::MAX } else { (1 << width) - 1 };
        let w = Word::new(rng.random::<u64>() & mask, width).map_err(|e| e.to_string())?;
        let k = Word::new(rng.random::<u64>() & mask, width).map_err(|e| e.to_string())?;
        let mut enc = codec_apply(w, k).map_err(|e| e.to_string())?;
        if fault == Some(Fault::Codec) {
            enc = Word::new(enc.value() ^ 1, width).map_err(|e| e.to_string())?;
        }
        let dec = codec_apply(enc, k).map_err(|e| e.to_string())?;
        if dec != w {
            return Err(format!(
                "pair {i}: decode(encode({:#x})) = {:#x} at width {width}",
                w.value(),
                dec.value()
            ));
        }
    }
    Ok(format!("{N} pairs"))
}

fn small_trace(seed: u64, records: usize) -> Vec<BranchRecord> {
    let spec = SyntheticSpec {
        name: "verify".into(),
        seed,
        records,
        num_static_branches: 512,
        ..Default::default()
    };
    generate_synthetic(&spec).expect("valid built-in spec").records
}

fn baseline_isomorphism(seed: u64, fault: Option<Fault>) -> Result<String, String> {
    let trace = small_trace(seed, 20_000);
    let btb = BtbGeometry::default();
    let mut compared = 0;
    for kind in PredictorKind::ALL {
        let mut base = Machine::new(kind, btb, MechanismConfig::new(Mechanism::Baseline), seed);
        let expected: Vec<_> = trace.iter().map(|r| base.execute(Tid(0), r)).collect();
        for (mech, zero_key) in [
            (Mechanism::XorBp, true),
            (Mechanism::XorBp, false),
            (Mechanism::NoisyXorBp, false),
        ] {
            let mut m = Machine::new(kind, btb, MechanismConfig::new(mech), seed);
            if zero_key {
                m.set_context(ThreadContext::new(Tid(0), Key::ZERO));
                m.warm_reset(Tid(0));
            }
            for (i, rec) in trace.iter().enumerate() {
                if fault == Some(Fault::Isomorphism) && i == trace.len() / 2 {
                    let other = Key::new(m.context(Tid(0)).key().value() ^ 0x5555_5555_5555_5555);
                    m.set_context(ThreadContext::new(Tid(0), other));
                }
                let got = m.execute(Tid(0), rec);
                if got != expected[i] {
                    return Err(format!(
                        "{kind} under {mech}{}: outcome {i} (pc {:#x}) differs from baseline",
                        if zero_key { " with zero key" } else { "" },
                        rec.pc
                    ));
                }
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} runs x {} branches identical", trace.len()))
}

fn fill(stack: &mut PredictorStack, ctx: &ThreadContext, cfg: &MechanismConfig, rng: &mut SimRng) {
    for _ in 0..400 {
        let pc = 0x40_0000 + (rng.random_range(0..0x1000u64) << 2);
        let rec = if rng.random_bool(0.3) {
            BranchRecord::jump(pc, BranchKind::Indirect, pc + 0x80)
        } else {
            BranchRecord::conditional(pc, rng.random(), pc + 0x40)
        };
        stack.execute(&rec, ctx, cfg);
    }
}

fn decoded_all_reset(stack: &PredictorStack, ctx: &ThreadContext, cfg: &MechanismConfig) -> bool {
    match &stack.direction {
        Direction::Gshare(g) => g.pht().decoded(ctx, cfg).iter().all(|&c| c == COUNTER_RESET),
        Direction::Tournament(t) => t.chooser().decoded(ctx, cfg).iter().all(|&c| c == COUNTER_RESET),
        Direction::Tage(t) => t.valid_entries() == 0,
    }
}

fn flush_complete_resets(seed: u64, fault: Option<Fault>) -> Result<String, String> {
    let mut rng = SimRng::seed_from_u64(seed);
    let cfg = MechanismConfig::new(Mechanism::CompleteFlush);
    let ctx = ThreadContext::new(Tid(0), Key::ZERO);
    for kind in PredictorKind::ALL {
        let mut stack = PredictorStack::new(kind, &cfg);
        fill(&mut stack, &ctx, &cfg, &mut rng);
        let stats = flush_complete(&mut stack, 0);
        if fault == Some(Fault::Flush) {
            stack.btb.update(0x40_0000, 0x40_0100, true, &ctx, &cfg);
        }
        if stack.btb.valid_entries() != 0 {
            return Err(format!("{kind}: {} BTB entries survive a complete flush", stack.btb.valid_entries()));
        }
        if !decoded_all_reset(&stack, &ctx, &cfg) {
            return Err(format!("{kind}: direction state not at reset after a complete flush"));
        }
        if stats.entries_cleared == 0 || flush_complete(&mut stack, 0).entries_cleared != 0 {
            return Err(format!("{kind}: complete flush is not idempotent"));
        }
    }
    Ok("all predictors".into())
}

fn flush_precise_isolates(seed: u64, fault: Option<Fault>) -> Result<String, String> {
    let mut rng = SimRng::seed_from_u64(seed);
    let cfg = MechanismConfig::new(Mechanism::PreciseFlush);
    let a = ThreadContext::new(Tid(0), generate_key(&mut rng));
    let b = ThreadContext::new(Tid(1), generate_key(&mut rng));
    for kind in PredictorKind::ALL {
        let mut stack = PredictorStack::new(kind, &cfg);
        fill(&mut stack, &a, &cfg, &mut rng);
        fill(&mut stack, &b, &cfg, &mut rng);
        let g = stack.btb.geometry();
        let owned_by = |s: &PredictorStack, t: Tid| {
            (0..g.sets)
                .flat_map(|set| (0..g.ways).map(move |w| (set, w)))
                .filter(|&(set, w)| {
                    let e = s.btb.entry(set, w);
                    e.valid && e.owner == Some(t)
                })
                .map(|(set, w)| (set, w, *s.btb.entry(set, w)))
                .collect::<Vec<_>>()
        };
        let kept_before = owned_by(&stack, Tid(1));
        flush_precise(&mut stack, Tid(0), 0).map_err(|e| e.to_string())?;
        if fault == Some(Fault::Flush) {
            stack.btb.update(0x7f_0000, 0x7f_0100, true, &a, &cfg);
        }
        let left = owned_by(&stack, Tid(0)).len();
        if left != 0 {
            return Err(format!("{kind}: {left} BTB entries of thread 0 survive its precise flush"));
        }
        if owned_by(&stack, Tid(1)) != kept_before {
            return Err(format!("{kind}: precise flush of thread 0 changed thread 1's BTB entries"));
        }
        let again = flush_precise(&mut stack, Tid(0), 0).map_err(|e| e.to_string())?;
        if again.entries_cleared != 0 {
            return Err(format!("{kind}: repeated precise flush cleared {} entries", again.entries_cleared));
        }
    }
    Ok("all predictors".into())
}

fn counter_range(seed: u64, fault: Option<Fault>) -> Result<String, String> {
    let step = |s: u8, t: bool| {
        if fault == Some(Fault::Counter) && t {
            s + 1
        } else {
            counter_update(s, t)
        }
    };
    for s in 0..=STRONG_TAKEN {
        for t in [false, true] {
            let n = step(s, t);
            if n > STRONG_TAKEN {
                return Err(format!("transition from {s} on taken={t} leaves range: {n}"));
            }
        }
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let cfg = MechanismConfig::new(Mechanism::XorBp);
    let ctx = ThreadContext::new(Tid(0), generate_key(&mut rng));
    for kind in PredictorKind::ALL {
        let mut stack = PredictorStack::new(kind, &cfg);
        stack.warm_reset(&ctx, &cfg);
        fill(&mut stack, &ctx, &cfg, &mut rng);
        let (values, max): (Vec<u8>, u8) = match &stack.direction {
            Direction::Gshare(g) => (g.pht().decoded(&ctx, &cfg), STRONG_TAKEN),
            Direction::Tournament(t) => (t.chooser().decoded(&ctx, &cfg), STRONG_TAKEN),
            Direction::Tage(t) => (t.decoded_counters(&ctx, &cfg), 7),
        };
        if let Some(v) = values.iter().find(|&&v| v > max) {
            return Err(format!("{kind}: decoded counter {v} exceeds {max}"));
        }
    }
    Ok("transitions closed; decoded tables in range".into())
}

fn rotation_accounting(seed: u64, _fault: Option<Fault>) -> Result<String, String> {
    let cfg = RunConfig {
        mode: Mode::Smt2,
        switch_period_cycles: 1_000_000,
        mechanism: MechanismConfig::new(Mechanism::XorBp),
        seed,
        ..Default::default()
    };
    let events = schedule_events(&cfg, 20_000_000);
    let mut m = cfg.machine();
    for ev in &events {
        m.apply_event(ev).map_err(|e| e.to_string())?;
    }
    let switches = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ContextSwitchIn { .. }))
        .count() as u64;
    let privileges = events.iter().filter(|e| e.kind.is_privilege()).count() as u64;
    let s = m.stats();
    if s.switch_rotations != switches || s.privilege_rotations != privileges {
        return Err(format!(
            "rotations {}/{} vs events {switches}/{privileges}",
            s.switch_rotations, s.privilege_rotations
        ));
    }
    let per_ctx: u64 = (0..2).map(|h| m.context(Tid(h)).rotation_count()).sum();
    if per_ctx != switches + privileges {
        return Err(format!("contexts rotated {per_ctx} times for {} events", switches + privileges));
    }
    Ok(format!("{switches} switch and {privileges} privilege rotations"))
}
