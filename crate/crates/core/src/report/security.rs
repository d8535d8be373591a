use std::fmt;

use crate::attacks::{AttackKind, AttackReport};
use crate::domain::{Mechanism, MechanismConfig, PhtEncoding};
use crate::stats::binomial_upper_tail;

/// Significance level for "indistinguishable from chance".
pub const ALPHA: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SecurityLabel {
    Defend,
    Mitigate,
    NoProtection,
}

impl SecurityLabel {
    pub fn name(self) -> &'static str {
        match self {
            SecurityLabel::Defend => "Defend",
            SecurityLabel::Mitigate => "Mitigate",
            SecurityLabel::NoProtection => "No Protection",
        }
    }
}

impl fmt::Display for SecurityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Defend when `rate` over `trials` is not significantly above `chance`
/// (one-sided binomial, p > 0.001); Mitigate when it is but stays below half
/// the unprotected rate; otherwise No Protection.
pub fn classify(rate: f64, trials: u64, chance: f64, baseline_rate: f64) -> SecurityLabel {
    let k = (rate * trials as f64).round() as u64;
    if binomial_upper_tail(k, trials, chance) > ALPHA {
        SecurityLabel::Defend
    } else if rate < 0.5 * baseline_rate {
        SecurityLabel::Mitigate
    } else {
        SecurityLabel::NoProtection
    }
}

/// The published qualitative label for a cell, where one exists.
pub fn expected_label(kind: AttackKind, mech: &MechanismConfig, smt: bool) -> Option<SecurityLabel> {
    use Mechanism::*;
    use SecurityLabel::*;
    let m = mech.mechanism;
    if m == Baseline {
        return Some(NoProtection);
    }
    Some(match (kind, smt) {
        (AttackKind::BtbReuseTraining, false) | (AttackKind::BtbContentionSbpa, false) => Defend,
        (AttackKind::BtbReuseTraining, true) => match m {
            CompleteFlush => NoProtection,
            PreciseFlush | NoisyXorBp => Defend,
            XorBp => Mitigate,
            Baseline => NoProtection,
        },
        (AttackKind::BtbContentionSbpa, true) => match m {
            NoisyXorBp => Mitigate,
            _ => NoProtection,
        },
        (AttackKind::PhtBranchScope, smt) => {
            let per_entry = mech.pht_encoding == PhtEncoding::PerEntry;
            match (m, smt) {
                (CompleteFlush, false) | (PreciseFlush, _) => Defend,
                (CompleteFlush, true) => NoProtection,
                (XorBp, false) if per_entry => Mitigate,
                (XorBp, true) if per_entry => NoProtection,
                (XorBp, false) | (NoisyXorBp, false) => Defend,
                (XorBp, true) | (NoisyXorBp, true) => Mitigate,
                (Baseline, _) => NoProtection,
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecurityRow {
    pub attack: AttackKind,
    /// Sub-mode (BranchScope mode) or "-".
    pub variant: String,
    pub mechanism: MechanismConfig,
    pub smt: bool,
    pub iterations: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub chance_rate: f64,
    pub p_value: f64,
    pub label: SecurityLabel,
    pub expected: Option<SecurityLabel>,
}

fn variant(r: &AttackReport) -> String {
    r.mode.map(|m| m.name().to_string()).unwrap_or_else(|| "-".into())
}

/// Classifies every report against the Baseline report of the same attack,
/// variant and threading (falling back to a fully successful baseline when
/// none was run).
pub fn emit_security_matrix(reports: &[AttackReport]) -> Vec<SecurityRow> {
    reports
        .iter()
        .map(|r| {
            let baseline_rate = reports
                .iter()
                .find(|b| {
                    b.mechanism.mechanism == Mechanism::Baseline
                        && b.kind == r.kind
                        && b.mode == r.mode
                        && b.smt == r.smt
                })
                .map_or(1.0, |b| b.success_rate);
            SecurityRow {
                attack: r.kind,
                variant: variant(r),
                mechanism: r.mechanism,
                smt: r.smt,
                iterations: r.iterations_run,
                successes: r.successes,
                success_rate: r.success_rate,
                chance_rate: r.chance_rate,
                p_value: binomial_upper_tail(r.successes, r.iterations_run, r.chance_rate),
                label: classify(r.success_rate, r.iterations_run, r.chance_rate, baseline_rate),
                expected: expected_label(r.kind, &r.mechanism, r.smt),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::RESIDUAL_FLOOR;

    #[test]
    fn labels() {
        assert_eq!(classify(0.004, 10_000, RESIDUAL_FLOOR, 1.0), SecurityLabel::Defend);
        assert_eq!(classify(0.97, 10_000, RESIDUAL_FLOOR, 0.97), SecurityLabel::NoProtection);
        assert_eq!(classify(0.5, 10_000, 0.5, 1.0), SecurityLabel::Defend);
        assert_eq!(classify(RESIDUAL_FLOOR, 10_000, RESIDUAL_FLOOR, 1.0), SecurityLabel::Defend);
        assert_eq!(classify(0.2, 10_000, RESIDUAL_FLOOR, 0.97), SecurityLabel::Mitigate);
        assert_eq!(classify(0.6, 10_000, 0.5, 1.0), SecurityLabel::NoProtection);
    }

    #[test]
    fn published_labels() {
        let xor = MechanismConfig::new(Mechanism::XorBp);
        let xor_pe = xor.with_encoding(PhtEncoding::PerEntry);
        let noisy = MechanismConfig::new(Mechanism::NoisyXorBp);
        let pht = AttackKind::PhtBranchScope;
        assert_eq!(expected_label(pht, &xor_pe, false), Some(SecurityLabel::Mitigate));
        assert_eq!(expected_label(pht, &xor, false), Some(SecurityLabel::Defend));
        assert_eq!(expected_label(pht, &noisy, true), Some(SecurityLabel::Mitigate));
        assert_eq!(
            expected_label(AttackKind::BtbContentionSbpa, &noisy, true),
            Some(SecurityLabel::Mitigate)
        );
        assert_eq!(
            expected_label(AttackKind::BtbReuseTraining, &xor, true),
            Some(SecurityLabel::Mitigate)
        );
    }
}
