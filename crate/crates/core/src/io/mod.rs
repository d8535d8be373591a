//! Trace files, synthetic workloads and configuration files.

mod config;
mod synthetic;
mod trace;

pub use config::{
    load_config, parse_config_str, AttackSection, Config, SweepSpec, Workload, WorkloadSource,
    DEFAULT_ATTACK_CONFIG,
};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use trace::{format_trace, parse_trace, parse_trace_str, write_trace, Trace};
