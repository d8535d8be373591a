//! Trace-driven branch predictor simulator with thread-private XOR encoding of
//! predictor contents and indices (XOR-BP / Noisy-XOR-BP), flush-based
//! isolation baselines, attack harnesses and performance reporting.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`]: keys, the XOR codec, thread contexts, branch records and the
//!   mechanism configuration shared by everything else.
//! * [`predictors`]: BTB, Gshare, Tournament and TAGE structures whose table
//!   accesses go through the configured content/index codecs.
//! * [`isolation`]: word-granular PHT encoding and the complete/precise flush
//!   operations.
//! * [`engine`]: event scheduling and the trace-driven run loop.
//! * [`attacks`]: locate/prime/probe models of reuse and contention attacks.
//! * [`io`]: trace files, synthetic workloads and configuration files.
//! * [`report`]: overhead tables, security matrices and CSV output.

pub mod attacks;
pub mod domain;
pub mod engine;
pub mod error;
pub mod io;
pub mod isolation;
pub mod predictors;
pub mod report;
pub mod stats;
pub mod verify;

pub use domain::{
    codec_apply, generate_key, BranchKind, BranchRecord, Key, Mechanism, MechanismConfig,
    PhtEncoding, Privilege, SimRng, ThreadContext, Tid, Word,
};
pub use error::{Error, Result};
