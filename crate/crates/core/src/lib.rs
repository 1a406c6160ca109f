//! Analytical cost model and discrete-event simulator for hybrid
//! HE + garbled-circuit private inference.
//!
//! The crate is organised as a pipeline. [`calibration`] produces
//! [`NetworkProfile`]s and [`CostConstants`]; [`trace::build_trace`] turns a
//! network into the step sequence one inference performs; [`cost`] collapses
//! a trace into latencies under device and link profiles; [`wsa`] chooses the
//! link split; [`sim`] replays traces under a stream of requests.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arch;
pub mod calibration;
pub mod cost;
pub mod error;
pub mod model;
pub mod sim;
pub mod stats;
pub mod trace;
pub mod wsa;

pub use cost::{
    apply_whatif, comm_latency, compute_latency, phase_costs, CommLatency, ComputeSeconds,
    CostInputs, PhaseBreakdown, PhaseCosts, WhatIfFactors,
};
pub use error::{Error, Result};
pub use model::{
    storage_per_inference, validate_network, ComputeScale, CostConstants, DeviceProfile,
    LayerKind, LayerSpec, LinkProfile, NetworkProfile, Party, Primitive, ProtocolConfig,
    ProtocolVariant, StorageCost, ValidationReport, WsaMode,
};
pub use sim::{
    buffer_slots, run, sweep, ContentionPolicy, RateSummary, RunMetrics, SimConfig, SweepResult,
};
pub use trace::{build_trace, trace_bytes, Direction, Phase, ProtocolTrace, Step, StepKind, Tag, Work};
pub use wsa::{closed_form_bound, evaluate_split, optimize_split, SplitResult};
