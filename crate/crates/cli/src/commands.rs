//! Command implementations. Each returns a [`Report`]: a table for the
//! terminal and the record files to write.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pisim_core::sim::{max_sustainable, replications, Plan};
use pisim_core::wsa::{optimize_split_on, sweep_split};
use pisim_core::{
    apply_whatif, build_trace, phase_costs, storage_per_inference, sweep, trace_bytes, CostInputs,
    Direction, PhaseBreakdown, PhaseCosts, ProtocolConfig, ProtocolVariant, RateSummary,
    RunMetrics, SimConfig,
};

use crate::config::{Resolved, Series};
use crate::records::*;

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub table: String,
    pub files: Vec<RecordFile>,
}

#[derive(Debug, Clone)]
pub struct RecordFile {
    pub name: String,
    /// CSV header and rows, without the timestamp line.
    pub body: String,
}

impl Report {
    /// Writes every record file under `dir`, each prefixed with the
    /// timestamp line.
    pub fn write(&self, dir: &Path, timestamp: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut out = Vec::new();
        for f in &self.files {
            let path = dir.join(&f.name);
            std::fs::write(&path, with_timestamp(&f.body, timestamp))
                .with_context(|| format!("writing {}", path.display()))?;
            out.push(path);
        }
        Ok(out)
    }
}

fn file<T: serde::Serialize>(name: &str, records: &[T]) -> Result<RecordFile> {
    Ok(RecordFile {
        name: name.to_string(),
        body: to_csv(records)?,
    })
}

/// Plain aligned text table.
fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                s.push_str(&format!("{c:<w$}"));
            } else {
                s.push_str(&format!("  {c:>w$}"));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(|s| s.as_str()).collect()));
    }
    out
}

fn f(x: f64, digits: usize) -> String {
    format!("{x:.digits$}")
}

fn cost_inputs(r: &Resolved) -> CostInputs {
    CostInputs {
        network: r.network.clone(),
        constants: r.calibration.constants,
        protocol: r.protocol,
        client: r.client.clone(),
        server: r.server.clone(),
        link: r.link,
    }
}

fn phase_record(c: &PhaseCosts, phase: &str, b: &PhaseBreakdown) -> CostRecord {
    CostRecord {
        network: c.network.clone(),
        variant: c.variant.short_name().to_string(),
        lphe: c.lphe,
        upload_fraction: c.upload_fraction,
        phase: phase.to_string(),
        gc_s: b.gc_s(),
        he_s: b.he_s(),
        ss_s: b.ss_s(),
        compute_s: b.compute_total_s,
        comm_upload_s: b.comm_s.upload,
        comm_download_s: b.comm_s.download,
        comm_s: b.comm_total_s,
        upload_bytes: b.comm_bytes.upload,
        download_bytes: b.comm_bytes.download,
        total_s: b.total_s,
    }
}

pub fn cost_records(r: &Resolved) -> Result<Vec<CostRecord>> {
    let c = cost_inputs(r).phase_costs()?;
    let on = phase_record(&c, "online", &c.online);
    let off = phase_record(&c, "offline", &c.offline);
    let total = CostRecord {
        phase: "total".to_string(),
        gc_s: off.gc_s + on.gc_s,
        he_s: off.he_s + on.he_s,
        ss_s: off.ss_s + on.ss_s,
        compute_s: off.compute_s + on.compute_s,
        comm_upload_s: off.comm_upload_s + on.comm_upload_s,
        comm_download_s: off.comm_download_s + on.comm_download_s,
        comm_s: off.comm_s + on.comm_s,
        upload_bytes: off.upload_bytes + on.upload_bytes,
        download_bytes: off.download_bytes + on.download_bytes,
        total_s: c.total_s,
        ..off.clone()
    };
    Ok(vec![off, on, total])
}

pub fn costs(r: &Resolved) -> Result<Report> {
    let recs = cost_records(r)?;
    let rows: Vec<Vec<String>> = recs
        .iter()
        .map(|x| {
            vec![
                x.phase.clone(),
                f(x.gc_s, 1),
                f(x.he_s, 1),
                f(x.ss_s, 3),
                f(x.comm_s, 1),
                f(x.total_s, 1),
            ]
        })
        .collect();
    let head = &recs[0];
    let table = format!(
        "{} / {} (lphe {}, upload fraction {})\n{}",
        head.network,
        head.variant,
        if head.lphe { "on" } else { "off" },
        head.upload_fraction,
        table(&["phase", "GC [s]", "HE [s]", "SS [s]", "Comms [s]", "Total [s]"], &rows)
    );
    Ok(Report {
        table,
        files: vec![file("costs.csv", &recs)?],
    })
}

pub fn storage_records(r: &Resolved) -> Vec<StorageRecord> {
    let mut out = Vec::new();
    for n in &r.networks {
        for v in [ProtocolVariant::ServerGarbler, ProtocolVariant::ClientGarbler] {
            let s = storage_per_inference(n, &r.calibration.constants, v);
            out.push(StorageRecord {
                network: n.name.clone(),
                variant: v.short_name().to_string(),
                total_relus: n.total_relus,
                client_bytes: s.client_bytes,
                client_gc_bytes: s.client_gc_bytes,
                client_randomness_bytes: s.client_randomness_bytes,
                server_bytes: s.server_bytes,
                server_gc_bytes: s.server_gc_bytes,
                server_randomness_bytes: s.server_randomness_bytes,
            });
        }
    }
    out
}

pub fn storage(r: &Resolved) -> Result<Report> {
    let recs = storage_records(r);
    let rows: Vec<Vec<String>> = recs
        .chunks(2)
        .map(|p| {
            vec![
                p[0].network.clone(),
                f(p[0].client_bytes / 1e9, 2),
                f(p[1].client_bytes / 1e9, 2),
                f(p[0].client_bytes / p[1].client_bytes, 2),
                f(p[0].server_bytes / 1e9, 2),
                f(p[1].server_bytes / 1e9, 2),
            ]
        })
        .collect();
    Ok(Report {
        table: table(
            &["network", "client sg [GB]", "client cg [GB]", "sg/cg", "server sg [GB]", "server cg [GB]"],
            &rows,
        ),
        files: vec![file("storage.csv", &recs)?],
    })
}

pub fn lphe_records(r: &Resolved) -> Result<Vec<LpheRecord>> {
    r.networks
        .iter()
        .map(|n| {
            let he = |lphe: bool| -> Result<f64> {
                let p = ProtocolConfig {
                    lphe_enabled: lphe,
                    ..ProtocolConfig::baseline(ProtocolVariant::ServerGarbler)
                };
                Ok(phase_costs(n, &r.calibration.constants, &p, &r.client, &r.server, &r.link)?
                    .offline
                    .he_s())
            };
            let (seq, par) = (he(false)?, he(true)?);
            Ok(LpheRecord {
                network: n.name.clone(),
                n_linear: n.n_linear,
                sequential_s: seq,
                parallel_s: par,
                speedup: seq / par,
            })
        })
        .collect()
}

pub fn lphe(r: &Resolved) -> Result<Report> {
    let recs = lphe_records(r)?;
    let mut rows: Vec<Vec<String>> = recs
        .iter()
        .map(|x| vec![x.network.clone(), x.n_linear.to_string(), f(x.sequential_s, 1), f(x.parallel_s, 1), f(x.speedup, 2)])
        .collect();
    let speedups: Vec<f64> = recs.iter().map(|x| x.speedup).collect();
    rows.push(vec![
        "geometric mean".to_string(),
        String::new(),
        String::new(),
        String::new(),
        f(pisim_core::stats::geometric_mean(&speedups), 2),
    ]);
    Ok(Report {
        table: table(&["network", "linear layers", "sequential [s]", "parallel [s]", "speedup"], &rows),
        files: vec![file("lphe.csv", &recs)?],
    })
}

pub fn wsa_records(r: &Resolved) -> Result<Vec<WsaRecord>> {
    let mut out = Vec::new();
    for &v in &r.wsa_variants {
        let t = build_trace(&r.network, &r.calibration.constants, v);
        let best = optimize_split_on(&t, &r.link)?;
        let mbps = r.link.total_bandwidth_bps / 1e6;
        for s in sweep_split(&t, &r.link)? {
            out.push(WsaRecord {
                network: r.network.name.clone(),
                variant: v.short_name().to_string(),
                upload_fraction: s.upload_fraction,
                upload_mbps: s.upload_fraction * mbps,
                download_mbps: (1.0 - s.upload_fraction) * mbps,
                comm_s: s.seconds,
                optimum: s.upload_fraction == best.upload_fraction,
            });
        }
    }
    Ok(out)
}

pub fn wsa(r: &Resolved) -> Result<Report> {
    let recs = wsa_records(r)?;
    let mut rows = Vec::new();
    for &v in &r.wsa_variants {
        let name = v.short_name();
        let t = build_trace(&r.network, &r.calibration.constants, v);
        let even = pisim_core::wsa::evaluate_split_on(&t, &r.link, 0.5)?;
        let best = recs
            .iter()
            .find(|x| x.variant == name && x.optimum)
            .expect("optimum row");
        rows.push(vec![
            name.to_string(),
            f(best.upload_fraction, 3),
            f(best.upload_mbps, 0),
            f(best.download_mbps, 0),
            f(best.comm_s, 1),
            f(even, 1),
            f(100.0 * (1.0 - best.comm_s / even), 1),
        ]);
    }
    Ok(Report {
        table: format!(
            "{}\n{}",
            r.network.name,
            table(
                &["variant", "upload fraction", "upload [Mbps]", "download [Mbps]", "optimal [s]", "even [s]", "saving [%]"],
                &rows
            )
        ),
        files: vec![file("wsa.csv", &recs)?],
    })
}

pub fn whatif_records(r: &Resolved) -> Result<Vec<WhatIfRecord>> {
    let base = cost_inputs(r);
    r.whatif
        .iter()
        .enumerate()
        .map(|(i, (label, w))| {
            let c = apply_whatif(&base, w)?;
            let t = c.total_s;
            Ok(WhatIfRecord {
                step: i,
                label: label.clone(),
                gc_speedup: w.gc_speedup,
                he_speedup: w.he_speedup,
                bandwidth_multiplier: w.bandwidth_multiplier,
                relu_reduction: w.relu_reduction,
                total_s: t,
                offline_s: c.offline.total_s,
                online_s: c.online.total_s,
                offline_pct: 100.0 * c.offline.total_s / t,
                gc_share: (c.offline.gc_s() + c.online.gc_s()) / t,
                he_share: (c.offline.he_s() + c.online.he_s()) / t,
                ss_share: (c.offline.ss_s() + c.online.ss_s()) / t,
                comm_share: c.comm_total_s() / t,
            })
        })
        .collect()
}

pub fn whatif(r: &Resolved) -> Result<Report> {
    let recs = whatif_records(r)?;
    let rows: Vec<Vec<String>> = recs
        .iter()
        .map(|x| {
            vec![
                x.label.clone(),
                f(x.total_s, 2),
                f(x.offline_s, 2),
                f(x.online_s, 2),
                f(x.offline_pct, 1),
                f(x.gc_share, 3),
                f(x.he_share, 3),
                f(x.ss_share, 3),
                f(x.comm_share, 3),
            ]
        })
        .collect();
    Ok(Report {
        table: table(
            &["step", "total [s]", "offline [s]", "online [s]", "offline [%]", "GC", "HE", "SS", "Comms"],
            &rows,
        ),
        files: vec![file("whatif.csv", &recs)?],
    })
}

fn series_config(r: &Resolved, s: &Series) -> SimConfig {
    let mut c = r.sim.clone();
    c.protocol = s.protocol;
    c.client.storage_capacity_bytes = s.client_storage_bytes;
    c
}

fn own_series(r: &Resolved) -> Series {
    Series {
        label: r.protocol.variant.short_name().to_string(),
        protocol: r.protocol,
        client_storage_bytes: r.client.storage_capacity_bytes,
    }
}

fn rate_record(series: &str, c: &SimConfig, slots: usize, s: &RateSummary, max: Option<f64>) -> RateRecord {
    RateRecord {
        series: series.to_string(),
        network: c.network.name.clone(),
        variant: c.protocol.variant.short_name().to_string(),
        lphe: c.protocol.lphe_enabled,
        wsa: c.protocol.wsa_mode.to_string(),
        client_storage_bytes: c.client.storage_capacity_bytes,
        buffer_slots: slots,
        rate_per_s: s.rate_per_s,
        period_min: if s.rate_per_s > 0.0 { 1.0 / s.rate_per_s / 60.0 } else { f64::INFINITY },
        runs: s.runs,
        runs_with_completions: s.runs_with_completions,
        mean_latency_s: s.mean_latency_s,
        sd_latency_s: s.sd_latency_s,
        mean_queue_wait_s: s.mean_queue_wait_s,
        mean_offline_inline_s: s.mean_offline_inline_s,
        mean_online_s: s.mean_online_s,
        mean_completed: s.mean_completed,
        mean_unserved: s.mean_unserved,
        saturated_runs: s.saturated_runs,
        max_sustainable: max == Some(s.rate_per_s),
    }
}

pub fn sweep_records(r: &Resolved, series: &Series, rates: &[f64]) -> Result<Vec<RateRecord>> {
    let c = series_config(r, series);
    let res = sweep(&c, rates)?;
    Ok(res
        .rows
        .iter()
        .map(|row| rate_record(&series.label, &c, res.buffer_slots, row, res.max_sustainable_rate))
        .collect())
}

fn rate_rows(recs: &[RateRecord]) -> Vec<Vec<String>> {
    recs.iter()
        .map(|x| {
            vec![
                x.series.clone(),
                f(x.period_min, 1),
                f(x.mean_latency_s, 1),
                f(x.sd_latency_s, 1),
                f(x.mean_queue_wait_s, 1),
                f(x.mean_offline_inline_s, 1),
                f(x.mean_online_s, 1),
                format!("{}/{}", x.saturated_runs, x.runs),
                if x.max_sustainable { "*".to_string() } else { String::new() },
            ]
        })
        .collect()
}

const RATE_HEADERS: [&str; 9] = [
    "series",
    "period [min]",
    "latency [s]",
    "sd [s]",
    "queue [s]",
    "offline [s]",
    "online [s]",
    "saturated",
    "max",
];

fn required_rates(r: &Resolved) -> Result<&[f64]> {
    match &r.rates {
        Some(v) => Ok(v),
        None => bail!("no rates given: set sim.rates in the config or pass --rates"),
    }
}

fn sustainable_line(recs: &[RateRecord]) -> String {
    match recs.iter().find(|x| x.max_sustainable) {
        Some(x) => format!(
            "{}: max sustainable rate {:.3e}/s (1 every {:.1} min), {} buffer slots\n",
            x.series, x.rate_per_s, x.period_min, x.buffer_slots
        ),
        None => format!(
            "{}: saturated at every swept rate\n",
            recs.first().map_or("", |x| x.series.as_str())
        ),
    }
}

pub fn sweep_cmd(r: &Resolved) -> Result<Report> {
    let rates = required_rates(r)?;
    let recs = sweep_records(r, &own_series(r), rates)?;
    Ok(Report {
        table: format!(
            "{}{}",
            table(&RATE_HEADERS, &rate_rows(&recs)),
            sustainable_line(&recs)
        ),
        files: vec![file("sweep.csv", &recs)?],
    })
}

/// Runs one rate and keeps the per-replication metrics.
pub fn simulate_records(r: &Resolved) -> Result<(Vec<RunRecord>, RateRecord)> {
    let rate = match &r.rates {
        Some(v) if v.len() == 1 => v[0],
        Some(v) => bail!("simulate takes a single rate, got {}", v.len()),
        None => r.sim.arrival_rate,
    };
    if !(rate > 0.0) {
        bail!("no arrival rate: set sim.rate in the config or pass --rates");
    }
    let series = own_series(r);
    let c = series_config(r, &series).with_rate(rate);
    c.validate()?;
    let plan = Plan::compile(&c)?;
    let runs: Vec<RunMetrics> = replications(&c, &plan);
    let summary = RateSummary::aggregate(rate, &runs);
    let max = max_sustainable(std::slice::from_ref(&summary));
    let runs = runs
        .iter()
        .map(|m| RunRecord {
            series: series.label.clone(),
            rate_per_s: rate,
            run_index: m.run_index,
            arrivals: m.arrivals,
            completed: m.completed,
            mean_latency_s: m.mean_latency_s,
            mean_queue_wait_s: m.mean_queue_wait_s,
            mean_offline_inline_s: m.mean_offline_inline_s,
            mean_online_s: m.mean_online_s,
            served_buffered: m.served_buffered,
            served_inline: m.served_inline,
            unserved_at_horizon: m.unserved_at_horizon,
            buffer_min: m.buffer_min,
            buffer_max: m.buffer_max,
            saturated: m.saturated,
        })
        .collect();
    Ok((runs, rate_record(&series.label, &c, plan.slots, &summary, max)))
}

pub fn simulate(r: &Resolved) -> Result<Report> {
    let (runs, agg) = simulate_records(r)?;
    let agg = vec![agg];
    Ok(Report {
        table: table(&RATE_HEADERS, &rate_rows(&agg)),
        files: vec![file("simulate_runs.csv", &runs)?, file("simulate.csv", &agg)?],
    })
}

pub fn compare_records(r: &Resolved) -> Result<Vec<RateRecord>> {
    let rates = required_rates(r)?;
    let mut out = Vec::new();
    for s in &r.series {
        out.extend(sweep_records(r, s, rates)?);
    }
    Ok(out)
}

pub fn compare(r: &Resolved) -> Result<Report> {
    let recs = compare_records(r)?;
    let mut text = String::new();
    for s in &r.series {
        let mine: Vec<RateRecord> = recs.iter().filter(|x| x.series == s.label).cloned().collect();
        let low = mine
            .iter()
            .min_by(|a, b| a.rate_per_s.total_cmp(&b.rate_per_s))
            .map_or(f64::NAN, |x| x.mean_latency_s);
        text.push_str(&sustainable_line(&mine));
        text.push_str(&format!("{}: mean latency at the lowest rate {:.1} s\n", s.label, low));
    }
    Ok(Report {
        table: text,
        files: vec![file("compare.csv", &recs)?],
    })
}

pub fn trace(r: &Resolved) -> Result<Report> {
    let t = build_trace(&r.network, &r.calibration.constants, r.protocol.variant);
    t.check()?;
    let mut rows = Vec::new();
    for phase in pisim_core::Phase::BOTH {
        for d in Direction::BOTH {
            rows.push(vec![
                phase.as_str().to_string(),
                d.as_str().to_string(),
                f(trace_bytes(&t, Some(phase), Some(d)) / 1e9, 4),
            ]);
        }
    }
    rows.push(vec!["total".to_string(), String::new(), f(t.total_bytes() / 1e9, 4)]);
    Ok(Report {
        table: format!(
            "{} / {}: {} steps\n{}",
            t.network,
            t.variant.short_name(),
            t.steps.len(),
            table(&["phase", "direction", "bytes [GB]"], &rows)
        ),
        files: vec![RecordFile {
            name: "trace.txt".to_string(),
            body: t.to_text(),
        }],
    })
}
