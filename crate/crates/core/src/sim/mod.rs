//! Streaming-request simulation of one client and one server.
//!
//! Requests arrive as a Poisson process and are served one at a time in
//! arrival order. Serving a request consumes one buffered pre-compute when
//! one is ready; otherwise the request runs the offline phase inline first.
//! A background refill keeps the buffer topped up within the storage limit.
//! Link, client CPU and server CPU are separate resources: offline work runs
//! wherever the foreground request is not, or (under
//! [`ContentionPolicy::Exclusive`]) only while no request is in service.

mod engine;
mod plan;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::phase_costs;
use crate::error::{Error, Result};
use crate::model::{
    storage_per_inference, CostConstants, DeviceProfile, LinkProfile, NetworkProfile,
    ProtocolConfig,
};
use crate::stats;

pub use engine::{RequestRecord, ServeSource};
pub use plan::{Plan, Resource, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentionPolicy {
    /// Online work takes any resource it needs; offline work resumes later
    /// with its progress kept.
    #[default]
    OnlinePriority,
    /// Background refill pauses entirely while a request is in service, so
    /// foreground and background work never overlap.
    Exclusive,
}

impl std::str::FromStr for ContentionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online_priority" | "online-priority" => Ok(ContentionPolicy::OnlinePriority),
            "exclusive" => Ok(ContentionPolicy::Exclusive),
            other => Err(Error::Parse(format!("unknown contention policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub network: NetworkProfile,
    pub constants: CostConstants,
    pub protocol: ProtocolConfig,
    pub client: DeviceProfile,
    pub server: DeviceProfile,
    pub link: LinkProfile,
    /// Requests per second.
    pub arrival_rate: f64,
    pub horizon_s: f64,
    pub seed: u64,
    pub runs: usize,
    pub buffer_initially_full: bool,
    pub pipeline_depth: usize,
    pub contention: ContentionPolicy,
    /// Number of queue samples in the final quarter; a run is saturated when
    /// they are strictly increasing.
    pub saturation_samples: usize,
    /// Keep a per-request log in [`RunMetrics::requests`].
    pub record_requests: bool,
}

pub const DEFAULT_HORIZON_S: f64 = 86_400.0;
pub const DEFAULT_RUNS: usize = 50;

impl SimConfig {
    pub fn new(
        network: NetworkProfile,
        constants: CostConstants,
        protocol: ProtocolConfig,
        client: DeviceProfile,
        server: DeviceProfile,
        link: LinkProfile,
    ) -> Self {
        SimConfig {
            network,
            constants,
            protocol,
            client,
            server,
            link,
            arrival_rate: 0.0,
            horizon_s: DEFAULT_HORIZON_S,
            seed: 0,
            runs: DEFAULT_RUNS,
            buffer_initially_full: true,
            pipeline_depth: 1,
            contention: ContentionPolicy::OnlinePriority,
            saturation_samples: DEFAULT_SATURATION_SAMPLES,
            record_requests: false,
        }
    }

    pub fn with_rate(&self, arrival_rate: f64) -> SimConfig {
        SimConfig {
            arrival_rate,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        v.extend(self.network.validate().violations);
        v.extend(self.constants.validate().violations);
        v.extend(self.protocol.validate().violations);
        v.extend(self.client.validate().violations);
        v.extend(self.server.validate().violations);
        v.extend(self.link.validate().violations);
        if !(self.arrival_rate >= 0.0) || !self.arrival_rate.is_finite() {
            v.push(format!("sim.rate >= 0 failed (got {})", self.arrival_rate));
        }
        if !(self.horizon_s > 0.0) || !self.horizon_s.is_finite() {
            v.push(format!("sim.horizon_s > 0 failed (got {})", self.horizon_s));
        }
        if self.runs < 1 {
            v.push("sim.runs >= 1 failed".to_string());
        }
        if self.saturation_samples < 2 {
            v.push("sim.saturation_samples >= 2 failed".to_string());
        }
        if self.pipeline_depth < 1 {
            v.push("sim.pipeline_depth >= 1 failed".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: "simulation config".to_string(),
                violations: v,
            })
        }
    }
}

/// Number of pre-computes both parties can hold at once.
pub fn buffer_slots(config: &SimConfig) -> usize {
    let s = storage_per_inference(&config.network, &config.constants, config.protocol.variant);
    let fit = |cap: f64, need: f64| {
        if need <= 0.0 {
            usize::MAX
        } else {
            (cap / need).floor() as usize
        }
    };
    fit(config.client.storage_capacity_bytes, s.client_bytes)
        .min(fit(config.server.storage_capacity_bytes, s.server_bytes))
}

/// Evenly spaced times over the final quarter of the horizon (both ends
/// included) at which the number of requests in the system is sampled for
/// the saturation test.
pub fn queue_sample_times(horizon_s: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n)
        .map(|i| horizon_s * (0.75 + 0.25 * i as f64 / (n - 1) as f64))
        .collect()
}

pub const DEFAULT_SATURATION_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_index: usize,
    pub arrivals: usize,
    pub completed: usize,
    pub mean_latency_s: f64,
    pub mean_queue_wait_s: f64,
    pub mean_offline_inline_s: f64,
    pub mean_online_s: f64,
    /// Requests served from the buffer / with offline work inline.
    pub served_buffered: usize,
    pub served_inline: usize,
    pub unserved_at_horizon: usize,
    /// Requests in the system at each of [`queue_sample_times`].
    pub queue_samples: Vec<usize>,
    /// Ready pre-computes at the same times.
    pub buffer_samples: Vec<usize>,
    pub buffer_min: usize,
    pub buffer_max: usize,
    pub saturated: bool,
    pub requests: Vec<RequestRecord>,
}

/// One replication with run index 0.
pub fn run(config: &SimConfig) -> Result<RunMetrics> {
    config.validate()?;
    let plan = Plan::compile(config)?;
    Ok(engine::simulate(config, &plan, 0))
}

pub fn run_replication(config: &SimConfig, plan: &Plan, run_index: usize) -> RunMetrics {
    engine::simulate(config, plan, run_index)
}

/// All `config.runs` replications at `config.arrival_rate`, in run order.
/// They execute in parallel; each is seeded from `(seed, run index)` only.
pub fn replications(config: &SimConfig, plan: &Plan) -> Vec<RunMetrics> {
    (0..config.runs)
        .into_par_iter()
        .map(|i| engine::simulate(config, plan, i))
        .collect()
}

/// Per-rate aggregate over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    pub rate_per_s: f64,
    pub runs: usize,
    /// Replications that completed at least one request; latency statistics
    /// are over these.
    pub runs_with_completions: usize,
    pub mean_latency_s: f64,
    pub sd_latency_s: f64,
    pub mean_queue_wait_s: f64,
    pub mean_offline_inline_s: f64,
    pub mean_online_s: f64,
    pub mean_completed: f64,
    pub mean_unserved: f64,
    pub saturated_runs: usize,
}

impl RateSummary {
    /// Order-independent merge of replication metrics.
    pub fn aggregate(rate_per_s: f64, runs: &[RunMetrics]) -> RateSummary {
        let with: Vec<&RunMetrics> = runs.iter().filter(|r| r.completed > 0).collect();
        let col = |f: &dyn Fn(&RunMetrics) -> f64| with.iter().map(|r| f(r)).collect::<Vec<_>>();
        let all = |f: &dyn Fn(&RunMetrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let lat = col(&|r| r.mean_latency_s);
        RateSummary {
            rate_per_s,
            runs: runs.len(),
            runs_with_completions: with.len(),
            mean_latency_s: stats::mean(&lat),
            sd_latency_s: stats::std_dev(&lat),
            mean_queue_wait_s: stats::mean(&col(&|r| r.mean_queue_wait_s)),
            mean_offline_inline_s: stats::mean(&col(&|r| r.mean_offline_inline_s)),
            mean_online_s: stats::mean(&col(&|r| r.mean_online_s)),
            mean_completed: stats::mean(&all(&|r| r.completed as f64)),
            mean_unserved: stats::mean(&all(&|r| r.unserved_at_horizon as f64)),
            saturated_runs: runs.iter().filter(|r| r.saturated).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<RateSummary>,
    /// Largest swept rate at or below which no replication saturated.
    pub max_sustainable_rate: Option<f64>,
    pub buffer_slots: usize,
    pub plan_offline_s: f64,
    pub plan_online_s: f64,
}

/// Runs `config.runs` replications at every rate. Replications run in
/// parallel; each is seeded from `(seed, run index)` only, so rates share
/// arrival streams up to scaling.
pub fn sweep(config: &SimConfig, rates: &[f64]) -> Result<SweepResult> {
    if rates.is_empty() {
        return Err(Error::Parse("rate list is empty".to_string()));
    }
    config.validate()?;
    for &r in rates {
        config.with_rate(r).validate()?;
    }
    let plan = Plan::compile(config)?;
    let rows: Vec<RateSummary> = rates
        .iter()
        .map(|&rate| {
            let cfg = config.with_rate(rate);
            RateSummary::aggregate(rate, &replications(&cfg, &plan))
        })
        .collect();
    Ok(SweepResult {
        max_sustainable_rate: max_sustainable(&rows),
        rows,
        buffer_slots: plan.slots,
        plan_offline_s: plan.offline_s,
        plan_online_s: plan.online_s,
    })
}

/// Largest rate such that it and every lower swept rate never saturated.
pub fn max_sustainable(rows: &[RateSummary]) -> Option<f64> {
    let mut sorted: Vec<&RateSummary> = rows.iter().collect();
    sorted.sort_by(|a, b| a.rate_per_s.total_cmp(&b.rate_per_s));
    let mut best = None;
    for r in sorted {
        if r.saturated_runs > 0 {
            break;
        }
        best = Some(r.rate_per_s);
    }
    best
}

/// Checks that the plan agrees with the analytical cost model.
pub fn plan_matches_costs(config: &SimConfig, plan: &Plan) -> Result<(f64, f64)> {
    let costs = phase_costs(
        &config.network,
        &config.constants,
        &config.protocol,
        &config.client,
        &config.server,
        &config.link,
    )?;
    Ok((plan.offline_s - costs.offline.total_s, plan.online_s - costs.online.total_s))
}
