//! Experiment configuration files.
//!
//! A config is TOML. Only `network` is required; every other key falls back
//! to a default whose origin is kept for `--explain`. Unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pisim_core::calibration::{self, Calibration};
use pisim_core::{
    ComputeScale, ContentionPolicy, DeviceProfile, LinkProfile, NetworkProfile, ProtocolConfig,
    ProtocolVariant, SimConfig, WhatIfFactors, WsaMode,
};
use serde::Deserialize;

use crate::presets;
use crate::rates::{parse_rate, parse_rates};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Bundled network name, or a path to a network TOML file.
    pub network: String,
    /// Networks for the multi-network commands (storage, lphe).
    pub networks: Option<Vec<String>>,
    /// Directory holding `calibration.toml` and `networks/`.
    pub calibration: Option<String>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub client: DeviceSection,
    #[serde(default)]
    pub server: DeviceSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub wsa: WsaSection,
    #[serde(default)]
    pub whatif: WhatIfSection,
    #[serde(default)]
    pub compare: CompareSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub variant: Option<ProtocolVariant>,
    pub lphe: Option<bool>,
    pub wsa: Option<WsaMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub total_bandwidth_bps: Option<f64>,
    pub upload_fraction: Option<f64>,
    pub slot_granularity: Option<f64>,
    pub per_message_overhead_s: Option<f64>,
    pub overlap_directions: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub storage_capacity_bytes: Option<f64>,
    pub compute_scale: Option<ComputeScale>,
}

/// A rate given as a number (requests per second) or as text such as `1/30m`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RateValue {
    Number(f64),
    Text(String),
}

impl RateValue {
    fn rate(&self) -> Result<f64> {
        match self {
            RateValue::Number(r) => Ok(*r),
            RateValue::Text(t) => parse_rate(t),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub rate: Option<RateValue>,
    pub rates: Option<String>,
    pub horizon_s: Option<f64>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub buffer_initially_full: Option<bool>,
    pub pipeline_depth: Option<usize>,
    pub contention: Option<ContentionPolicy>,
    pub saturation_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WsaSection {
    pub variants: Option<Vec<ProtocolVariant>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfSection {
    #[serde(default)]
    pub steps: Vec<WhatIfStep>,
}

/// One rung of the ladder; factors accumulate over the rungs before it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfStep {
    pub label: String,
    pub gc_speedup: Option<f64>,
    pub he_speedup: Option<f64>,
    pub bandwidth_multiplier: Option<f64>,
    pub relu_reduction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default)]
    pub series: Vec<SeriesSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub label: String,
    pub variant: ProtocolVariant,
    pub lphe: Option<bool>,
    pub wsa: Option<WsaMode>,
    pub client_storage_bytes: Option<f64>,
}

/// Command-line overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub rates: Option<String>,
    pub protocol: Option<ProtocolVariant>,
    pub lphe: Option<bool>,
    pub wsa: Option<WsaMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    Calibration,
    Config,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "built-in default",
            Source::Calibration => "calibration file",
            Source::Config => "config file",
            Source::Flag => "command-line flag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub key: String,
    pub value: String,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub protocol: ProtocolConfig,
    pub client_storage_bytes: f64,
}

/// A fully resolved configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub origin: String,
    pub calibration: Calibration,
    pub network: NetworkProfile,
    pub networks: Vec<NetworkProfile>,
    pub protocol: ProtocolConfig,
    pub client: DeviceProfile,
    pub server: DeviceProfile,
    pub link: LinkProfile,
    /// Simulation settings; `arrival_rate` holds `sim.rate` (0 if unset).
    pub sim: SimConfig,
    pub rates: Option<Vec<f64>>,
    pub wsa_variants: Vec<ProtocolVariant>,
    /// Cumulative factors per ladder rung, first rung is the baseline.
    pub whatif: Vec<(String, WhatIfFactors)>,
    pub series: Vec<Series>,
    pub provenance: Vec<Provenance>,
}

impl Resolved {
    pub fn explain(&self) -> String {
        let width = self.provenance.iter().map(|p| p.key.len()).max().unwrap_or(0);
        let mut out = format!("# resolved configuration from {}\n", self.origin);
        for p in &self.provenance {
            out.push_str(&format!("{:width$} = {:<28} # {}\n", p.key, p.value, p.source));
        }
        out
    }
}

/// Reads `path`, or a bundled preset when written as `preset:<name>`.
pub fn read_source(path: &str) -> Result<(String, String)> {
    if let Some(name) = path.strip_prefix("preset:") {
        let text = presets::get(name).ok_or_else(|| {
            anyhow!(
                "unknown preset `{name}` (available: {})",
                presets::names().collect::<Vec<_>>().join(", ")
            )
        })?;
        return Ok((path.to_string(), text.to_string()));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {path}"))?;
    Ok((path.to_string(), text))
}

pub fn load_config(path: &str, overrides: &Overrides) -> Result<Resolved> {
    let (origin, text) = read_source(path)?;
    resolve_str(&text, &origin, overrides)
}

pub fn parse_file(text: &str, origin: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| anyhow!("{origin}: {e}"))
}

struct Tracker(Vec<Provenance>);

impl Tracker {
    fn pick<T: fmt::Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        config: Option<T>,
        fallback: T,
        fallback_source: Source,
    ) -> T {
        let (v, s) = match (flag, config) {
            (Some(v), _) => (v, Source::Flag),
            (None, Some(v)) => (v, Source::Config),
            (None, None) => (fallback, fallback_source),
        };
        self.note(key, &v, s);
        v
    }

    fn note(&mut self, key: &str, value: &dyn fmt::Display, source: Source) {
        self.0.push(Provenance {
            key: key.to_string(),
            value: value.to_string(),
            source,
        });
    }
}

fn load_network(name: &str, cal: &Calibration, base: Option<&Path>) -> Result<NetworkProfile> {
    if name.ends_with(".toml") {
        let p = match base {
            Some(dir) if Path::new(name).is_relative() => dir.join(name),
            _ => Path::new(name).to_path_buf(),
        };
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading network {}", p.display()))?;
        let n = calibration::network_from_toml(&text)?;
        n.validate().into_result(&format!("network {}", p.display()))?;
        return Ok(n);
    }
    Ok(cal.network(name)?.clone())
}

/// The four-rung acceleration ladder used when a config has none.
pub fn default_ladder() -> Vec<WhatIfStep> {
    let step = |label: &str, gc, he, bw, relu| WhatIfStep {
        label: label.to_string(),
        gc_speedup: gc,
        he_speedup: he,
        bandwidth_multiplier: bw,
        relu_reduction: relu,
    };
    vec![
        step("GC 100x", Some(100.0), None, None, None),
        step("HE 1000x", None, Some(1000.0), None, None),
        step("BW 10x", None, None, Some(10.0), None),
        step("ReLU /10", None, None, None, Some(10.0)),
    ]
}

pub fn resolve_str(text: &str, origin: &str, o: &Overrides) -> Result<Resolved> {
    let file = parse_file(text, origin)?;
    let base = if origin.starts_with("preset:") {
        None
    } else {
        Path::new(origin).parent()
    };
    let mut t = Tracker(Vec::new());

    let calibration = match &file.calibration {
        Some(dir) => {
            let p = match base {
                Some(b) if Path::new(dir).is_relative() => b.join(dir),
                _ => Path::new(dir).to_path_buf(),
            };
            t.note("calibration", &p.display(), Source::Config);
            calibration::load_dir(&p).with_context(|| format!("loading calibration {}", p.display()))?
        }
        None => {
            t.note("calibration", &"bundled", Source::Default);
            calibration::bundled()?
        }
    };

    let network = load_network(&file.network, &calibration, base)?;
    t.note("network", &network.name, Source::Config);
    let networks = match &file.networks {
        Some(list) => {
            let n = list
                .iter()
                .map(|name| load_network(name, &calibration, base))
                .collect::<Result<Vec<_>>>()?;
            t.note("networks", &list.join(","), Source::Config);
            n
        }
        None => {
            t.note("networks", &"all bundled", Source::Default);
            calibration.networks.clone()
        }
    };

    let p = &file.protocol;
    let protocol = ProtocolConfig {
        variant: t.pick("protocol.variant", o.protocol, p.variant, ProtocolVariant::ServerGarbler, Source::Default),
        lphe_enabled: t.pick("protocol.lphe", o.lphe, p.lphe, false, Source::Default),
        wsa_mode: t.pick("protocol.wsa", o.wsa, p.wsa, WsaMode::EvenSplit, Source::Default),
    };

    let d = LinkProfile::default();
    let l = &file.link;
    let link = LinkProfile {
        total_bandwidth_bps: t.pick("link.total_bandwidth_bps", None, l.total_bandwidth_bps, d.total_bandwidth_bps, Source::Default),
        upload_fraction: t.pick("link.upload_fraction", None, l.upload_fraction, d.upload_fraction, Source::Default),
        slot_granularity: t.pick("link.slot_granularity", None, l.slot_granularity, d.slot_granularity, Source::Default),
        per_message_overhead_s: t.pick("link.per_message_overhead_s", None, l.per_message_overhead_s, d.per_message_overhead_s, Source::Default),
        overlap_directions: t.pick("link.overlap_directions", None, l.overlap_directions, d.overlap_directions, Source::Default),
    };

    let mut device = |key: &str, base: &DeviceProfile, s: &DeviceSection| DeviceProfile {
        storage_capacity_bytes: t.pick(
            &format!("{key}.storage_capacity_bytes"),
            None,
            s.storage_capacity_bytes,
            base.storage_capacity_bytes,
            Source::Calibration,
        ),
        compute_scale: {
            let c = s.compute_scale.unwrap_or(base.compute_scale);
            let src = if s.compute_scale.is_some() { Source::Config } else { Source::Calibration };
            t.note(
                &format!("{key}.compute_scale"),
                &format!("gc_garble={} gc_eval={} he={} ss={}", c.gc_garble, c.gc_eval, c.he, c.ss),
                src,
            );
            c
        },
        ..base.clone()
    };
    let client = device("client", &calibration.client, &file.client);
    let server = device("server", &calibration.server, &file.server);

    let s = &file.sim;
    let mut sim = SimConfig::new(
        network.clone(),
        calibration.constants,
        protocol,
        client.clone(),
        server.clone(),
        link,
    );
    sim.arrival_rate = match &s.rate {
        Some(r) => {
            let v = r.rate()?;
            t.note("sim.rate", &v, Source::Config);
            v
        }
        None => {
            t.note("sim.rate", &0.0, Source::Default);
            0.0
        }
    };
    sim.horizon_s = t.pick("sim.horizon_s", None, s.horizon_s, sim.horizon_s, Source::Default);
    sim.seed = t.pick("sim.seed", o.seed, s.seed, sim.seed, Source::Default);
    sim.runs = t.pick("sim.runs", o.runs, s.runs, sim.runs, Source::Default);
    sim.buffer_initially_full = t.pick("sim.buffer_initially_full", None, s.buffer_initially_full, sim.buffer_initially_full, Source::Default);
    sim.pipeline_depth = t.pick("sim.pipeline_depth", None, s.pipeline_depth, sim.pipeline_depth, Source::Default);
    let contention = t.pick(
        "sim.contention",
        None,
        s.contention.map(ContentionName),
        ContentionName(sim.contention),
        Source::Default,
    );
    sim.contention = contention.0;
    sim.saturation_samples = t.pick("sim.saturation_samples", None, s.saturation_samples, sim.saturation_samples, Source::Default);

    let rates = match (&o.rates, &s.rates) {
        (Some(r), _) => {
            t.note("sim.rates", r, Source::Flag);
            Some(parse_rates(r)?)
        }
        (None, Some(r)) => {
            t.note("sim.rates", r, Source::Config);
            Some(parse_rates(r)?)
        }
        (None, None) => {
            t.note("sim.rates", &"unset", Source::Default);
            None
        }
    };

    let wsa_variants = match (o.protocol, &file.wsa.variants) {
        (Some(v), _) => {
            t.note("wsa.variants", &v.short_name(), Source::Flag);
            vec![v]
        }
        (None, Some(list)) => {
            let names: Vec<_> = list.iter().map(|v| v.short_name()).collect();
            t.note("wsa.variants", &names.join(","), Source::Config);
            list.clone()
        }
        (None, None) => {
            t.note("wsa.variants", &protocol.variant.short_name(), Source::Default);
            vec![protocol.variant]
        }
    };

    let (steps, src) = if file.whatif.steps.is_empty() {
        (default_ladder(), Source::Default)
    } else {
        (file.whatif.steps.clone(), Source::Config)
    };
    let mut whatif = vec![("baseline".to_string(), WhatIfFactors::IDENTITY)];
    let mut acc = WhatIfFactors::IDENTITY;
    for st in &steps {
        acc = acc.then(WhatIfFactors {
            gc_speedup: st.gc_speedup.unwrap_or(1.0),
            he_speedup: st.he_speedup.unwrap_or(1.0),
            bandwidth_multiplier: st.bandwidth_multiplier.unwrap_or(1.0),
            relu_reduction: st.relu_reduction.unwrap_or(1.0),
        });
        whatif.push((st.label.clone(), acc));
    }
    let labels: Vec<_> = steps.iter().map(|s| s.label.as_str()).collect();
    t.note("whatif.steps", &labels.join(" | "), src);

    let series = if file.compare.series.is_empty() {
        let s = vec![
            Series {
                label: "sg".to_string(),
                protocol: ProtocolConfig::baseline(ProtocolVariant::ServerGarbler),
                client_storage_bytes: client.storage_capacity_bytes,
            },
            Series {
                label: "cg-opt".to_string(),
                protocol: ProtocolConfig::optimized(ProtocolVariant::ClientGarbler),
                client_storage_bytes: client.storage_capacity_bytes,
            },
        ];
        t.note("compare.series", &"sg, cg-opt", Source::Default);
        s
    } else {
        let s: Vec<Series> = file
            .compare
            .series
            .iter()
            .map(|sp| Series {
                label: sp.label.clone(),
                protocol: ProtocolConfig {
                    variant: sp.variant,
                    lphe_enabled: sp.lphe.unwrap_or(false),
                    wsa_mode: sp.wsa.unwrap_or(WsaMode::EvenSplit),
                },
                client_storage_bytes: sp.client_storage_bytes.unwrap_or(client.storage_capacity_bytes),
            })
            .collect();
        let labels: Vec<_> = s.iter().map(|x| x.label.as_str()).collect();
        t.note("compare.series", &labels.join(", "), Source::Config);
        s
    };

    let resolved = Resolved {
        origin: origin.to_string(),
        calibration,
        network,
        networks,
        protocol,
        client,
        server,
        link,
        sim,
        rates,
        wsa_variants,
        whatif,
        series,
        provenance: t.0,
    };
    validate(&resolved)?;
    Ok(resolved)
}

/// Display wrapper so the policy prints as it is written in a config.
struct ContentionName(ContentionPolicy);

impl fmt::Display for ContentionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            ContentionPolicy::OnlinePriority => "online_priority",
            ContentionPolicy::Exclusive => "exclusive",
        })
    }
}

fn validate(r: &Resolved) -> Result<()> {
    let mut v = Vec::new();
    v.extend(r.link.validate().violations);
    v.extend(r.protocol.validate().violations);
    v.extend(r.client.validate().violations);
    v.extend(r.server.validate().violations);
    if let Err(e) = r.sim.validate() {
        if let pisim_core::Error::Invalid { violations, .. } = e {
            for x in violations {
                if !v.contains(&x) {
                    v.push(x);
                }
            }
        } else {
            return Err(e.into());
        }
    }
    for (label, f) in &r.whatif {
        if let Err(e) = f.validate() {
            v.push(format!("whatif step `{label}`: {e}"));
        }
    }
    for s in &r.series {
        if !(s.client_storage_bytes >= 0.0) {
            v.push(format!("compare series `{}`: client_storage_bytes >= 0 failed", s.label));
        }
        if let WsaMode::Fixed(f) = s.protocol.wsa_mode {
            if !(f > 0.0 && f < 1.0) {
                v.push(format!("compare series `{}`: fixed upload fraction must lie in (0, 1)", s.label));
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        bail!("invalid configuration {}:\n  {}", r.origin, v.join("\n  "))
    }
}
