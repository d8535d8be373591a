//! `key = value` configuration files with `[section]` headers.
//!
//! Sections:
//!
//! * `[run]`: one [`RunConfig`] plus its inputs (`traces` or `workload`).
//! * `[attack.<name>]`: an attack scenario, expanded over `mechanisms`.
//! * `[sweep]`: axis lists for `bpiso sweep`.
//! * `[workload.<name>]`: trace files or synthetic specs run together.
//! * `[synthetic.<name>]`: a [`SyntheticSpec`].
//!
//! Lists are comma separated. Trace paths are relative to the config file.
//! `#` starts a comment.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::{AttackKind, AttackScenario, BranchScopeMode};
use crate::domain::{Mechanism, MechanismConfig, PhtEncoding};
use crate::engine::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::predictors::{BtbGeometry, PredictorKind};

use super::synthetic::{generate_synthetic, SyntheticSpec};
use super::trace::{parse_trace, Trace};

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

impl Section {
    fn set(&mut self, key: &str, value: &str) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.key == key) {
            e.value = value.to_string();
        } else {
            self.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line: 0,
            });
        }
    }
}

/// Where a workload's traces come from.
#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSource {
    Files(Vec<PathBuf>),
    /// Names of `[synthetic.<name>]` sections.
    Synthetic(Vec<String>),
    /// A `[workload.<name>]` section.
    Named(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub name: String,
    pub source: WorkloadSource,
}

/// One `[attack.<name>]` section: a scenario template and the mechanisms to
/// run it under.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSection {
    pub name: String,
    pub template: AttackScenario,
    pub mechanisms: Vec<MechanismConfig>,
}

impl AttackSection {
    pub fn scenarios(&self) -> Vec<AttackScenario> {
        self.mechanisms
            .iter()
            .map(|m| AttackScenario {
                mechanism: *m,
                ..self.template.clone()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub mechanisms: Vec<MechanismConfig>,
    pub predictors: Vec<PredictorKind>,
    pub periods: Vec<u64>,
    pub modes: Vec<Mode>,
    pub workloads: Vec<String>,
    pub baseline: Mechanism,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub run: RunConfig,
    /// Inputs of `[run]`, if it names any.
    pub run_workload: Option<WorkloadSource>,
    pub attacks: Vec<AttackSection>,
    pub sweep: Option<SweepSpec>,
    pub workloads: Vec<Workload>,
    pub synthetic: Vec<SyntheticSpec>,
    pub warnings: Vec<String>,
    base_dir: PathBuf,
}

/// Built-in attack grid used when `bpiso attack` runs without `--config`.
pub const DEFAULT_ATTACK_CONFIG: &str = "\
[attack.btb-reuse]
mechanisms = baseline, xor-bp, noisy-xor-bp

[attack.pht-branchscope]
mechanisms = baseline, xor-bp, noisy-xor-bp

[attack.btb-sbpa]
mechanisms = baseline, xor-bp, noisy-xor-bp
";

const RUN_KEYS: &[&str] = &[
    "predictor",
    "mechanism",
    "pht_encoding",
    "word_width_bits",
    "hardened_word_select",
    "owner_tracking",
    "mode",
    "switch_period_cycles",
    "privilege_rate_per_mcycle",
    "misprediction_penalty",
    "seed",
    "rotation_probability",
    "kernel_stub",
    "btb_sets",
    "btb_ways",
    "btb_tag_bits",
    "traces",
    "workload",
];

const ATTACK_KEYS: &[&str] = &[
    "kind",
    "mechanism",
    "mechanisms",
    "pht_encoding",
    "word_width_bits",
    "hardened_word_select",
    "iterations",
    "trainings_per_iteration",
    "success_threshold",
    "seed",
    "smt",
    "rotation_probability",
    "branchscope_mode",
    "whole_btb_prime",
];

const SWEEP_KEYS: &[&str] = &[
    "mechanisms",
    "predictors",
    "periods",
    "modes",
    "workloads",
    "baseline",
    "pht_encoding",
];

const WORKLOAD_KEYS: &[&str] = &["traces", "synthetic"];

const SYNTHETIC_KEYS: &[&str] = &[
    "seed",
    "records",
    "num_static_branches",
    "function_size",
    "successor_bias",
    "pattern_fraction",
    "loop_fraction",
    "correlated_fraction",
    "indirect_fraction",
    "bias_shape",
    "fixed_bias",
    "fixed_pattern",
    "max_pattern_period",
    "max_loop_trip",
    "max_correlation_distance",
    "max_indirect_targets",
    "inst_gap",
    "calls",
    "pc_base",
];

fn parse_sections(text: &str, origin: &Path) -> Result<Vec<Section>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("unterminated section header '{content}'")))?
                .trim();
            if name.is_empty() {
                return Err(err(line, "empty section name".into()));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(err(line, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(err(line, "missing key".into()));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| err(line, format!("'{key}' appears before any section header")))?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(err(line, format!("duplicate key '{key}' in [{}]", section.name)));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    let kind = section.split('.').next().unwrap_or(section);
    match (kind, section.contains('.')) {
        ("run", false) => Some(RUN_KEYS),
        ("sweep", false) => Some(SWEEP_KEYS),
        ("attack", true) => Some(ATTACK_KEYS),
        ("workload", true) => Some(WORKLOAD_KEYS),
        ("synthetic", true) => Some(SYNTHETIC_KEYS),
        _ => None,
    }
}

/// Applies `key=value` overrides. A dotted key (`attack.btb-reuse.iterations`)
/// names its section; a bare key goes to every `[run]`, `[attack.*]` and
/// `[sweep]` section that accepts it (creating `[run]` for run keys).
fn apply_overrides(sections: &mut Vec<Section>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override '{o}' is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some((section, k)) = key.rsplit_once('.') {
            let allowed = allowed_keys(section)
                .ok_or_else(|| Error::config(format!("override '{o}': unknown section [{section}]")))?;
            if !allowed.contains(&k) {
                return Err(Error::config(format!(
                    "override '{o}': [{section}] has no key '{k}' (valid: {})",
                    allowed.join(", ")
                )));
            }
            if !sections.iter().any(|s| s.name == section) {
                sections.push(Section {
                    name: section.to_string(),
                    line: 0,
                    entries: Vec::new(),
                });
            }
            sections
                .iter_mut()
                .find(|s| s.name == section)
                .expect("just ensured")
                .set(k, value);
            continue;
        }
        let mut applied = false;
        for s in sections.iter_mut() {
            let is_target = s.name == "run" || s.name == "sweep" || s.name.starts_with("attack.");
            if is_target && allowed_keys(&s.name).is_some_and(|a| a.contains(&key)) {
                // `mechanism` overrides an attack's whole list.
                if s.name.starts_with("attack.") && key == "mechanism" {
                    s.entries.retain(|e| e.key != "mechanisms");
                }
                s.set(key, value);
                applied = true;
            }
        }
        if !applied && RUN_KEYS.contains(&key) {
            let mut run = Section {
                name: "run".into(),
                line: 0,
                entries: Vec::new(),
            };
            run.set(key, value);
            sections.push(run);
            applied = true;
        }
        if !applied {
            return Err(Error::config(format!(
                "override '{o}': no section accepts '{key}' (run keys: {})",
                RUN_KEYS.join(", ")
            )));
        }
    }
    Ok(())
}

struct Reader<'a> {
    origin: &'a Path,
    section: &'a Section,
}

impl Reader<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        self.section.entries.iter().find(|e| e.key == key)
    }

    fn fail(&self, e: &Entry, message: String) -> Error {
        if e.line == 0 {
            Error::config(format!("[{}] {}: {message}", self.section.name, e.key))
        } else {
            Error::Parse {
                path: self.origin.to_path_buf(),
                line: e.line,
                message: format!("[{}] {}: {message}", self.section.name, e.key),
            }
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value
            .parse::<T>()
            .map(Some)
            .map_err(|err| self.fail(e, format!("invalid value '{}': {err}", e.value)))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<T>().map_err(|err| self.fail(e, format!("invalid item '{v}': {err}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn hex(&self, key: &str) -> Result<Option<u64>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let v = e.value.trim_start_matches("0x");
        u64::from_str_radix(v, 16)
            .map(Some)
            .map_err(|err| self.fail(e, format!("invalid hex '{}': {err}", e.value)))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for e in &self.section.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(self.fail(e, format!("unknown key (valid: {})", allowed.join(", "))));
            }
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Reads the mechanism options shared by `[run]`, `[attack.*]` and `[sweep]`.
fn mechanism_options(r: &Reader, base: MechanismConfig) -> Result<MechanismConfig> {
    let mut m = base;
    set(&mut m.pht_encoding, r.get::<PhtEncoding>("pht_encoding")?);
    set(&mut m.word_width_bits, r.get("word_width_bits")?);
    set(&mut m.hardened_word_select, r.get("hardened_word_select")?);
    Ok(m)
}

fn read_run(r: &Reader, warnings: &mut Vec<String>) -> Result<(RunConfig, Option<WorkloadSource>)> {
    r.check_keys(RUN_KEYS)?;
    let mut c = RunConfig::default();
    set(&mut c.predictor, r.get("predictor")?);
    set(&mut c.mechanism.mechanism, r.get("mechanism")?);
    c.mechanism = mechanism_options(r, c.mechanism)?;
    set(&mut c.mode, r.get("mode")?);
    set(&mut c.switch_period_cycles, r.get("switch_period_cycles")?);
    set(&mut c.privilege_rate_per_mcycle, r.get("privilege_rate_per_mcycle")?);
    set(&mut c.misprediction_penalty, r.get("misprediction_penalty")?);
    set(&mut c.seed, r.get("seed")?);
    set(&mut c.rotation_probability, r.get("rotation_probability")?);
    set(&mut c.kernel_stub, r.get("kernel_stub")?);
    let mut g = BtbGeometry::default();
    set(&mut g.sets, r.get("btb_sets")?);
    set(&mut g.ways, r.get("btb_ways")?);
    set(&mut g.tag_bits, r.get("btb_tag_bits")?);
    c.btb = g;
    if let Some(owner) = r.get::<bool>("owner_tracking")? {
        match (c.mechanism.mechanism, owner) {
            (Mechanism::PreciseFlush, false) => {
                return Err(Error::config(
                    "mechanism = precise-flush requires owner_tracking (it cannot be disabled)",
                ))
            }
            (m, true) if m != Mechanism::PreciseFlush => warnings.push(format!(
                "owner_tracking only applies to precise-flush; ignored for {m}"
            )),
            _ => {}
        }
    }
    warnings.extend(c.validate()?);
    let source = match (r.list::<String>("traces")?, r.get::<String>("workload")?) {
        (Some(_), Some(_)) => {
            return Err(Error::config("[run] names both traces and workload; pick one"))
        }
        (Some(t), None) => Some(WorkloadSource::Files(t.into_iter().map(PathBuf::from).collect())),
        (None, Some(w)) => Some(WorkloadSource::Named(w)),
        (None, None) => None,
    };
    Ok((c, source))
}

fn read_attack(r: &Reader, name: &str, warnings: &mut Vec<String>) -> Result<AttackSection> {
    r.check_keys(ATTACK_KEYS)?;
    let kind = match r.get::<AttackKind>("kind")? {
        Some(k) => k,
        None => name.parse::<AttackKind>().map_err(|_| {
            Error::config(format!(
                "[attack.{name}] needs kind = btb-reuse | pht-branchscope | btb-sbpa"
            ))
        })?,
    };
    let base = mechanism_options(r, MechanismConfig::default())?;
    let names = match (r.list::<Mechanism>("mechanisms")?, r.get::<Mechanism>("mechanism")?) {
        (Some(_), Some(_)) => {
            return Err(Error::config(format!(
                "[attack.{name}] sets both mechanism and mechanisms"
            )))
        }
        (Some(l), None) => l,
        (None, Some(m)) => vec![m],
        (None, None) => vec![Mechanism::Baseline, Mechanism::XorBp, Mechanism::NoisyXorBp],
    };
    let mechanisms: Vec<MechanismConfig> = names
        .into_iter()
        .map(|mechanism| MechanismConfig { mechanism, ..base })
        .collect();
    let mut s = AttackScenario::new(kind, base);
    set(&mut s.iterations, r.get("iterations")?);
    set(&mut s.trainings_per_iteration, r.get("trainings_per_iteration")?);
    set(&mut s.success_threshold, r.get("success_threshold")?);
    set(&mut s.seed, r.get("seed")?);
    set(&mut s.smt, r.get("smt")?);
    set(&mut s.rotation_probability, r.get("rotation_probability")?);
    set(&mut s.branchscope_mode, r.get::<BranchScopeMode>("branchscope_mode")?);
    set(&mut s.whole_btb_prime, r.get("whole_btb_prime")?);
    for m in &mechanisms {
        let scenario = AttackScenario {
            mechanism: *m,
            ..s.clone()
        };
        for w in scenario.validate()? {
            warnings.push(format!("[attack.{name}] {w}"));
        }
    }
    Ok(AttackSection {
        name: name.to_string(),
        template: s,
        mechanisms,
    })
}

fn read_sweep(r: &Reader) -> Result<SweepSpec> {
    r.check_keys(SWEEP_KEYS)?;
    let base = mechanism_options(r, MechanismConfig::default())?;
    let mechanisms = r
        .list::<Mechanism>("mechanisms")?
        .unwrap_or_else(|| Mechanism::ALL.to_vec())
        .into_iter()
        .map(|mechanism| MechanismConfig { mechanism, ..base })
        .collect();
    let periods: Vec<u64> = r.list("periods")?.unwrap_or_default();
    if periods.contains(&0) {
        return Err(Error::config("[sweep] periods must be > 0"));
    }
    Ok(SweepSpec {
        mechanisms,
        predictors: r.list("predictors")?.unwrap_or_default(),
        periods,
        modes: r.list("modes")?.unwrap_or_default(),
        workloads: r.list("workloads")?.unwrap_or_default(),
        baseline: r.get("baseline")?.unwrap_or(Mechanism::Baseline),
    })
}

fn read_synthetic(r: &Reader, name: &str) -> Result<SyntheticSpec> {
    r.check_keys(SYNTHETIC_KEYS)?;
    let mut s = SyntheticSpec {
        name: name.to_string(),
        ..Default::default()
    };
    set(&mut s.seed, r.get("seed")?);
    set(&mut s.records, r.get("records")?);
    set(&mut s.num_static_branches, r.get("num_static_branches")?);
    set(&mut s.function_size, r.get("function_size")?);
    set(&mut s.successor_bias, r.get("successor_bias")?);
    set(&mut s.pattern_fraction, r.get("pattern_fraction")?);
    set(&mut s.loop_fraction, r.get("loop_fraction")?);
    set(&mut s.correlated_fraction, r.get("correlated_fraction")?);
    set(&mut s.indirect_fraction, r.get("indirect_fraction")?);
    set(&mut s.bias_shape, r.get("bias_shape")?);
    if let Some(b) = r.get::<f64>("fixed_bias")? {
        s.fixed_bias = Some(b);
    }
    if let Some(e) = r.entry("fixed_pattern") {
        let bits = e
            .value
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(r.fail(e, format!("pattern must be 0/1 digits, got '{}'", e.value))),
            })
            .collect::<Result<Vec<bool>>>()?;
        s.fixed_pattern = Some(bits);
    }
    set(&mut s.max_pattern_period, r.get("max_pattern_period")?);
    set(&mut s.max_loop_trip, r.get("max_loop_trip")?);
    set(&mut s.max_correlation_distance, r.get("max_correlation_distance")?);
    set(&mut s.max_indirect_targets, r.get("max_indirect_targets")?);
    set(&mut s.inst_gap, r.get("inst_gap")?);
    set(&mut s.calls, r.get("calls")?);
    set(&mut s.pc_base, r.hex("pc_base")?);
    s.validate()
        .map_err(|e| Error::config(format!("[synthetic.{name}] {e}")))?;
    Ok(s)
}

fn read_workload(r: &Reader, name: &str) -> Result<Workload> {
    r.check_keys(WORKLOAD_KEYS)?;
    let source = match (r.list::<String>("traces")?, r.list::<String>("synthetic")?) {
        (Some(t), None) => WorkloadSource::Files(t.into_iter().map(PathBuf::from).collect()),
        (None, Some(s)) => WorkloadSource::Synthetic(s),
        _ => {
            return Err(Error::config(format!(
                "[workload.{name}] needs exactly one of traces or synthetic"
            )))
        }
    };
    Ok(Workload {
        name: name.to_string(),
        source,
    })
}

/// Parses configuration text. `origin` is used for error messages and as the
/// base for relative trace paths.
pub fn parse_config_str(text: &str, origin: &Path, overrides: &[String]) -> Result<Config> {
    let mut sections = parse_sections(text, origin)?;
    apply_overrides(&mut sections, overrides)?;
    let mut cfg = Config {
        run: RunConfig::default(),
        run_workload: None,
        attacks: Vec::new(),
        sweep: None,
        workloads: Vec::new(),
        synthetic: Vec::new(),
        warnings: Vec::new(),
        base_dir: origin.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for section in &sections {
        let r = Reader { origin, section };
        let (kind, name) = match section.name.split_once('.') {
            Some((k, n)) => (k, Some(n)),
            None => (section.name.as_str(), None),
        };
        match (kind, name) {
            ("run", None) => {
                let (run, src) = read_run(&r, &mut cfg.warnings)?;
                cfg.run = run;
                cfg.run_workload = src;
            }
            ("attack", Some(n)) => {
                let a = read_attack(&r, n, &mut cfg.warnings)?;
                cfg.attacks.push(a);
            }
            ("sweep", None) => cfg.sweep = Some(read_sweep(&r)?),
            ("workload", Some(n)) => cfg.workloads.push(read_workload(&r, n)?),
            ("synthetic", Some(n)) => cfg.synthetic.push(read_synthetic(&r, n)?),
            _ => {
                let err = format!(
                    "unknown section [{}] (valid: run, sweep, attack.<name>, workload.<name>, synthetic.<name>)",
                    section.name
                );
                return Err(if section.line == 0 {
                    Error::config(err)
                } else {
                    Error::Parse {
                        path: origin.to_path_buf(),
                        line: section.line,
                        message: err,
                    }
                });
            }
        }
    }
    cfg.check_references()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path, overrides)
}

impl Config {
    fn check_references(&self) -> Result<()> {
        let known_synth = |n: &str| self.synthetic.iter().any(|s| s.name == n);
        let known_workload = |n: &str| self.workloads.iter().any(|w| w.name == n);
        for w in &self.workloads {
            if let WorkloadSource::Synthetic(names) = &w.source {
                if let Some(n) = names.iter().find(|n| !known_synth(n)) {
                    return Err(Error::config(format!(
                        "[workload.{}] references missing [synthetic.{n}]",
                        w.name
                    )));
                }
            }
        }
        if let Some(WorkloadSource::Named(w)) = &self.run_workload {
            if !known_workload(w) {
                return Err(Error::config(format!("[run] workload '{w}' has no [workload.{w}] section")));
            }
        }
        if let Some(s) = &self.sweep {
            if let Some(w) = s.workloads.iter().find(|w| !known_workload(w)) {
                return Err(Error::config(format!("[sweep] workload '{w}' has no [workload.{w}] section")));
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// All attack scenarios, section by section.
    pub fn attack_scenarios(&self) -> Vec<AttackScenario> {
        self.attacks.iter().flat_map(AttackSection::scenarios).collect()
    }

    pub fn workload(&self, name: &str) -> Option<&Workload> {
        self.workloads.iter().find(|w| w.name == name)
    }

    /// Loads (or generates) the traces of `source`.
    pub fn load_source(&self, source: &WorkloadSource) -> Result<Vec<Trace>> {
        match source {
            WorkloadSource::Files(paths) => paths
                .iter()
                .map(|p| parse_trace(&self.base_dir.join(p)))
                .collect(),
            WorkloadSource::Synthetic(names) => names
                .iter()
                .map(|n| {
                    let spec = self
                        .synthetic
                        .iter()
                        .find(|s| &s.name == n)
                        .ok_or_else(|| Error::config(format!("no synthetic spec named '{n}'")))?;
                    generate_synthetic(spec)
                })
                .collect(),
            WorkloadSource::Named(w) => match self.workload(w) {
                Some(Workload {
                    source: WorkloadSource::Named(_),
                    ..
                })
                | None => Err(Error::config(format!("no workload named '{w}'"))),
                Some(wl) => self.load_source(&wl.source),
            },
        }
    }
}
