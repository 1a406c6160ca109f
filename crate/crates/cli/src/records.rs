//! Machine-readable CSV records.
//!
//! Every file starts with a `# generated_at: <timestamp>` line, then a CSV
//! header whose column names carry their units (`_s`, `_bytes`, `_per_s`,
//! `_mbps`). Floats are written in shortest round-trip form, so reading a
//! file back reproduces the records exactly.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const TIMESTAMP_PREFIX: &str = "# generated_at: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub network: String,
    pub variant: String,
    pub lphe: bool,
    pub upload_fraction: f64,
    /// `offline`, `online` or `total`.
    pub phase: String,
    pub gc_s: f64,
    pub he_s: f64,
    pub ss_s: f64,
    pub compute_s: f64,
    pub comm_upload_s: f64,
    pub comm_download_s: f64,
    pub comm_s: f64,
    pub upload_bytes: f64,
    pub download_bytes: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageRecord {
    pub network: String,
    pub variant: String,
    pub total_relus: u64,
    pub client_bytes: f64,
    pub client_gc_bytes: f64,
    pub client_randomness_bytes: f64,
    pub server_bytes: f64,
    pub server_gc_bytes: f64,
    pub server_randomness_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpheRecord {
    pub network: String,
    pub n_linear: usize,
    pub sequential_s: f64,
    pub parallel_s: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsaRecord {
    pub network: String,
    pub variant: String,
    pub upload_fraction: f64,
    pub upload_mbps: f64,
    pub download_mbps: f64,
    pub comm_s: f64,
    pub optimum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRecord {
    pub step: usize,
    pub label: String,
    pub gc_speedup: f64,
    pub he_speedup: f64,
    pub bandwidth_multiplier: f64,
    pub relu_reduction: f64,
    pub total_s: f64,
    pub offline_s: f64,
    pub online_s: f64,
    pub offline_pct: f64,
    /// Shares of `total_s`; they sum to 1.
    pub gc_share: f64,
    pub he_share: f64,
    pub ss_share: f64,
    pub comm_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub series: String,
    pub rate_per_s: f64,
    pub run_index: usize,
    pub arrivals: usize,
    pub completed: usize,
    pub mean_latency_s: f64,
    pub mean_queue_wait_s: f64,
    pub mean_offline_inline_s: f64,
    pub mean_online_s: f64,
    pub served_buffered: usize,
    pub served_inline: usize,
    pub unserved_at_horizon: usize,
    pub buffer_min: usize,
    pub buffer_max: usize,
    pub saturated: bool,
}

/// One swept rate, aggregated over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub series: String,
    pub network: String,
    pub variant: String,
    pub lphe: bool,
    pub wsa: String,
    pub client_storage_bytes: f64,
    pub buffer_slots: usize,
    pub rate_per_s: f64,
    pub period_min: f64,
    pub runs: usize,
    pub runs_with_completions: usize,
    pub mean_latency_s: f64,
    pub sd_latency_s: f64,
    pub mean_queue_wait_s: f64,
    pub mean_offline_inline_s: f64,
    pub mean_online_s: f64,
    pub mean_completed: f64,
    pub mean_unserved: f64,
    pub saturated_runs: usize,
    /// Set on the row of the largest sustainable rate of this series.
    pub max_sustainable: bool,
}

/// CSV body (header and rows) without the timestamp line.
pub fn to_csv<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().context("flushing csv")?;
    Ok(String::from_utf8(bytes)?)
}

pub fn from_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.context("reading csv record"))
        .collect()
}

pub fn with_timestamp(body: &str, timestamp: &str) -> String {
    format!("{TIMESTAMP_PREFIX}{timestamp}\n{body}")
}

/// File contents with the timestamp line removed.
pub fn strip_timestamp(text: &str) -> &str {
    match text.strip_prefix(TIMESTAMP_PREFIX) {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => text,
    }
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}
