use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution};

use crate::domain::{BranchKind, BranchRecord, SimRng};
use crate::error::{Error, Result};

use super::trace::Trace;

/// Parameters of a synthetic workload.
///
/// Static branches are laid out in functions of `function_size` slots. Each
/// step moves to the current function's preferred successor (with
/// probability `successor_bias`, otherwise to a uniformly drawn function),
/// optionally calls it, and executes its slots in order. Every slot has one
/// behaviour; conditional slots that are not pattern, loop or correlated are
/// biased coins whose bias comes from a symmetric Beta(`bias_shape`,
/// `bias_shape`) draw. A loop slot runs its whole trip in place before the
/// next slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub seed: u64,
    /// Total records emitted, calls and returns included.
    pub records: usize,
    pub num_static_branches: usize,
    pub function_size: usize,
    /// Probability that the next function is the current one's preferred
    /// successor rather than a uniform pick.
    pub successor_bias: f64,
    pub pattern_fraction: f64,
    pub loop_fraction: f64,
    pub correlated_fraction: f64,
    pub indirect_fraction: f64,
    pub bias_shape: f64,
    /// Overrides the Beta draw for every biased branch.
    pub fixed_bias: Option<f64>,
    /// Overrides the random pattern of every pattern branch.
    pub fixed_pattern: Option<Vec<bool>>,
    pub max_pattern_period: usize,
    pub max_loop_trip: u32,
    /// Correlated branches copy the outcome of the k-th previous
    /// conditional branch, k in `1..=max_correlation_distance`.
    pub max_correlation_distance: usize,
    pub max_indirect_targets: usize,
    pub inst_gap: u32,
    pub calls: bool,
    pub pc_base: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            seed: 1,
            records: 100_000,
            num_static_branches: 512,
            function_size: 8,
            successor_bias: 0.9,
            pattern_fraction: 0.10,
            loop_fraction: 0.05,
            correlated_fraction: 0.25,
            indirect_fraction: 0.05,
            bias_shape: 0.1,
            fixed_bias: None,
            fixed_pattern: None,
            max_pattern_period: 8,
            max_loop_trip: 12,
            max_correlation_distance: 40,
            max_indirect_targets: 4,
            inst_gap: 5,
            calls: true,
            pc_base: 0x40_0000,
        }
    }
}

const MAX_HISTORY: usize = 127;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("pattern_fraction", self.pattern_fraction),
            ("loop_fraction", self.loop_fraction),
            ("correlated_fraction", self.correlated_fraction),
            ("indirect_fraction", self.indirect_fraction),
        ];
        if !(0.0..=1.0).contains(&self.successor_bias) {
            return Err(Error::config(format!(
                "successor_bias must lie in [0, 1], got {}",
                self.successor_bias
            )));
        }
        for (k, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{k} must lie in [0, 1], got {v}")));
            }
        }
        let sum: f64 = fractions.iter().map(|f| f.1).sum();
        if sum > 1.0 + 1e-9 {
            return Err(Error::config(format!("behaviour fractions sum to {sum} > 1")));
        }
        if let Some(b) = self.fixed_bias {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::config(format!("fixed_bias must lie in [0, 1], got {b}")));
            }
        }
        if matches!(&self.fixed_pattern, Some(p) if p.is_empty()) {
            return Err(Error::config("fixed_pattern must not be empty"));
        }
        if self.num_static_branches == 0 || self.function_size == 0 {
            return Err(Error::config("num_static_branches and function_size must be > 0"));
        }
        if !(self.bias_shape > 0.0 && self.bias_shape.is_finite()) {
            return Err(Error::config("bias_shape must be positive"));
        }
        if self.max_pattern_period < 2 || self.max_loop_trip < 2 || self.max_indirect_targets < 1 {
            return Err(Error::config(
                "max_pattern_period and max_loop_trip must be >= 2, max_indirect_targets >= 1",
            ));
        }
        if !(1..=MAX_HISTORY).contains(&self.max_correlation_distance) {
            return Err(Error::config(format!(
                "max_correlation_distance must lie in 1..={MAX_HISTORY}"
            )));
        }
        Ok(())
    }

    fn branch_spacing(&self) -> u64 {
        (self.inst_gap as u64 + 1) * 4
    }

    /// Functions are laid out back to back; each is its slots followed by a
    /// return.
    fn function_entry(&self, f: usize) -> u64 {
        self.pc_base + f as u64 * (self.function_size as u64 + 1) * self.branch_spacing()
    }

    fn slot_pc(&self, f: usize, s: usize) -> u64 {
        self.function_entry(f) + (s as u64 + 1) * self.branch_spacing() - 4
    }
}

#[derive(Clone, Debug)]
enum Behaviour {
    Biased(f64),
    Pattern { bits: Vec<bool>, pos: usize },
    /// Backward branch iterated in place: taken `trip - 1` times, then
    /// falls through.
    Loop { trip: u32 },
    Correlated { distance: usize, invert: bool },
    Indirect { targets: Vec<u64>, pos: usize },
}

struct Slot {
    pc: u64,
    behaviour: Behaviour,
}

fn build_slots(spec: &SyntheticSpec, rng: &mut SimRng) -> Result<Vec<Slot>> {
    let beta = Beta::new(spec.bias_shape, spec.bias_shape)
        .map_err(|e| Error::config(format!("bias_shape: {e}")))?;
    let mut slots = Vec::with_capacity(spec.num_static_branches);
    for i in 0..spec.num_static_branches {
        let (f, s) = (i / spec.function_size, i % spec.function_size);
        let pc = spec.slot_pc(f, s);
        let u: f64 = rng.random();
        let mut edge = spec.pattern_fraction;
        let behaviour = if u < edge {
            let bits = match &spec.fixed_pattern {
                Some(p) => p.clone(),
                None => {
                    let len = rng.random_range(2..=spec.max_pattern_period);
                    (0..len).map(|_| rng.random_bool(0.5)).collect()
                }
            };
            Behaviour::Pattern { bits, pos: 0 }
        } else if u < {
            edge += spec.loop_fraction;
            edge
        } {
            Behaviour::Loop {
                trip: rng.random_range(2..=spec.max_loop_trip),
            }
        } else if u < {
            edge += spec.correlated_fraction;
            edge
        } {
            Behaviour::Correlated {
                distance: rng.random_range(1..=spec.max_correlation_distance),
                invert: rng.random_bool(0.5),
            }
        } else if u < {
            edge += spec.indirect_fraction;
            edge
        } {
            let n = rng.random_range(1..=spec.max_indirect_targets);
            let targets = (0..n)
                .map(|_| spec.function_entry(rng.random_range(0..spec.num_static_branches)))
                .collect();
            Behaviour::Indirect { targets, pos: 0 }
        } else {
            Behaviour::Biased(spec.fixed_bias.unwrap_or_else(|| beta.sample(rng)))
        };
        slots.push(Slot { pc, behaviour });
    }
    Ok(slots)
}

/// Deterministic trace for `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Trace> {
    spec.validate()?;
    let mut rng = SimRng::seed_from_u64(spec.seed);
    let mut slots = build_slots(spec, &mut rng)?;
    let functions = spec.num_static_branches.div_ceil(spec.function_size);
    let successor: Vec<usize> = (0..functions).map(|_| rng.random_range(0..functions)).collect();
    let mut f = rng.random_range(0..functions);
    let dispatcher = spec.pc_base.wrapping_sub(0x1000);
    let mut history: u128 = 0;
    let mut out = Vec::with_capacity(spec.records);

    'outer: while out.len() < spec.records {
        f = if rng.random_bool(spec.successor_bias) {
            successor[f]
        } else {
            rng.random_range(0..functions)
        };
        let first = f * spec.function_size;
        let last = (first + spec.function_size).min(slots.len());
        let entry = spec.function_entry(f);
        let call_pc = dispatcher + (f as u64 % 64) * 4;
        if spec.calls {
            out.push(BranchRecord::jump(call_pc, BranchKind::DirectCall, entry).with_gap(spec.inst_gap));
            if out.len() >= spec.records {
                break;
            }
        }
        for slot in &mut slots[first..last] {
            let pc = slot.pc;
            match &mut slot.behaviour {
                Behaviour::Indirect { targets, pos } => {
                    let t = targets[*pos];
                    *pos = (*pos + 1) % targets.len();
                    out.push(BranchRecord::jump(pc, BranchKind::Indirect, t).with_gap(spec.inst_gap));
                }
                Behaviour::Loop { trip } => {
                    let body = pc - spec.inst_gap as u64 * 4;
                    for i in 1..=*trip {
                        let taken = i < *trip;
                        history = (history << 1) | taken as u128;
                        out.push(BranchRecord::conditional(pc, taken, body).with_gap(spec.inst_gap));
                        if out.len() >= spec.records {
                            break 'outer;
                        }
                    }
                    continue;
                }
                b => {
                    let taken = match b {
                        Behaviour::Biased(p) => rng.random_bool(*p),
                        Behaviour::Pattern { bits, pos } => {
                            let t = bits[*pos];
                            *pos = (*pos + 1) % bits.len();
                            t
                        }
                        Behaviour::Correlated { distance, invert } => {
                            ((history >> (*distance - 1)) & 1 == 1) ^ *invert
                        }
                        Behaviour::Indirect { .. } | Behaviour::Loop { .. } => unreachable!(),
                    };
                    history = (history << 1) | taken as u128;
                    out.push(
                        BranchRecord::conditional(pc, taken, pc + 2 * spec.branch_spacing())
                            .with_gap(spec.inst_gap),
                    );
                }
            }
            if out.len() >= spec.records {
                break 'outer;
            }
        }
        if spec.calls {
            let ret_pc = spec.slot_pc(f, spec.function_size);
            out.push(BranchRecord::jump(ret_pc, BranchKind::Return, call_pc + 4).with_gap(spec.inst_gap));
        }
    }
    out.truncate(spec.records);
    Ok(Trace::new(spec.name.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(records: usize) -> SyntheticSpec {
        SyntheticSpec {
            records,
            num_static_branches: 1,
            function_size: 1,
            pattern_fraction: 0.0,
            loop_fraction: 0.0,
            correlated_fraction: 0.0,
            indirect_fraction: 0.0,
            calls: false,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn always_taken_branch() {
        let spec = SyntheticSpec { fixed_bias: Some(1.0), ..single(100) };
        let t = generate_synthetic(&spec).unwrap();
        assert_eq!(t.len(), 100);
        assert!(t.records.iter().all(|r| r.taken));
    }

    #[test]
    fn pattern_repeats_exactly() {
        let spec = SyntheticSpec {
            pattern_fraction: 1.0,
            fixed_pattern: Some(vec![true, true, true, false]),
            ..single(100)
        };
        let t = generate_synthetic(&spec).unwrap();
        for (i, r) in t.records.iter().enumerate() {
            assert_eq!(r.taken, i % 4 != 3);
        }
        assert_eq!(t.records.iter().filter(|r| r.taken).count(), 75);
    }

    #[test]
    fn bias_within_three_sigma() {
        let n = 100_000;
        let spec = SyntheticSpec { fixed_bias: Some(0.7), ..single(n) };
        let t = generate_synthetic(&spec).unwrap();
        let k = t.records.iter().filter(|r| r.taken).count() as f64;
        let sd = (n as f64 * 0.7 * 0.3).sqrt();
        assert!((k - 0.7 * n as f64).abs() <= 3.0 * sd, "{k}");
    }

    #[test]
    fn indirect_targets_cycle() {
        let spec = SyntheticSpec { indirect_fraction: 1.0, max_indirect_targets: 3, ..single(30) };
        let t = generate_synthetic(&spec).unwrap();
        let targets: Vec<u64> = t.records.iter().map(|r| r.target).collect();
        let period = (1..=3).find(|&p| targets.iter().skip(p).zip(&targets).all(|(a, b)| a == b)).unwrap();
        assert!(targets.chunks(period).all(|c| c.len() < period || c == &targets[..period]));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::default();
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 2, ..SyntheticSpec::default() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn gap_sets_instruction_count() {
        let t = generate_synthetic(&SyntheticSpec { records: 1000, ..Default::default() }).unwrap();
        assert_eq!(t.instruction_count(), 6000);
    }

    #[test]
    fn rejects_bad_fractions() {
        let spec = SyntheticSpec { pattern_fraction: 0.6, loop_fraction: 0.6, ..Default::default() };
        assert!(generate_synthetic(&spec).is_err());
    }
}
