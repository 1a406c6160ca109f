//! Latency and byte aggregates of a trace under device and link profiles.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{
    storage_per_inference, CostConstants, DeviceProfile, LinkProfile, NetworkProfile, Party,
    Primitive, ProtocolConfig, ProtocolVariant, StorageCost, WsaMode,
};
use crate::trace::{build_trace, Direction, Phase, ProtocolTrace, StepKind, Work};
use crate::wsa;

/// Seconds per (party, primitive).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeSeconds(pub BTreeMap<(Party, Primitive), f64>);

impl ComputeSeconds {
    pub fn get(&self, party: Party, primitive: Primitive) -> f64 {
        self.0.get(&(party, primitive)).copied().unwrap_or(0.0)
    }

    /// Both parties' time on one primitive.
    pub fn primitive(&self, primitive: Primitive) -> f64 {
        self.get(Party::Client, primitive) + self.get(Party::Server, primitive)
    }

    pub fn party(&self, party: Party) -> f64 {
        Primitive::ALL.iter().map(|&p| self.get(party, p)).sum()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    fn add(&mut self, party: Party, primitive: Primitive, seconds: f64) {
        *self.0.entry((party, primitive)).or_insert(0.0) += seconds;
    }
}

/// Compute latency per phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeLatency {
    pub offline: ComputeSeconds,
    pub online: ComputeSeconds,
}

impl ComputeLatency {
    pub fn phase(&self, phase: Phase) -> &ComputeSeconds {
        match phase {
            Phase::Offline => &self.offline,
            Phase::Online => &self.online,
        }
    }
}

/// Wall-clock seconds of each compute step, HE layers of one phase grouped
/// when `lphe` is set. Returned in step order; a grouped HE block is reported
/// once, at the position of its first layer.
pub(crate) fn timed_compute(
    trace: &ProtocolTrace,
    client: &DeviceProfile,
    server: &DeviceProfile,
    lphe: bool,
) -> Result<Vec<Option<f64>>> {
    let scale = |party: Party, primitive: Primitive| match party {
        Party::Client => client.compute_scale.get(primitive),
        Party::Server => server.compute_scale.get(primitive),
    };
    let mut out = vec![None; trace.steps.len()];
    let mut he_group: Option<(usize, Phase)> = None;
    for (i, step) in trace.steps.iter().enumerate() {
        let StepKind::Compute {
            party,
            primitive,
            work,
        } = step.kind
        else {
            continue;
        };
        let seconds = work.seconds() * scale(party, primitive);
        if lphe && primitive == Primitive::He {
            if matches!(work, Work::Aggregate { .. }) {
                return Err(Error::MissingPerLayerHe);
            }
            match he_group {
                Some((first, phase)) if phase == step.phase => {
                    let cur = out[first].unwrap_or(0.0);
                    out[first] = Some(f64::max(cur, seconds));
                    out[i] = Some(0.0);
                }
                _ => {
                    he_group = Some((i, step.phase));
                    out[i] = Some(seconds);
                }
            }
        } else {
            out[i] = Some(seconds);
        }
    }
    Ok(out)
}

/// HE time is the sum of layer times, or their maximum under layer-parallel
/// HE (one worker per linear layer). Other primitives are reference seconds
/// times the executing party's slowdown.
pub fn compute_latency(
    trace: &ProtocolTrace,
    client: &DeviceProfile,
    server: &DeviceProfile,
    lphe: bool,
) -> Result<ComputeLatency> {
    let timed = timed_compute(trace, client, server, lphe)?;
    let mut out = ComputeLatency::default();
    for (step, secs) in trace.steps.iter().zip(timed) {
        if let (StepKind::Compute { party, primitive, .. }, Some(s)) = (step.kind, secs) {
            let bucket = match step.phase {
                Phase::Offline => &mut out.offline,
                Phase::Online => &mut out.online,
            };
            bucket.add(party, primitive, s);
        }
    }
    Ok(out)
}

/// Per-direction pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DirPair {
    pub upload: f64,
    pub download: f64,
}

impl DirPair {
    pub fn get(&self, d: Direction) -> f64 {
        match d {
            Direction::Upload => self.upload,
            Direction::Download => self.download,
        }
    }

    fn add(&mut self, d: Direction, v: f64) {
        match d {
            Direction::Upload => self.upload += v,
            Direction::Download => self.download += v,
        }
    }

    pub fn sum(&self) -> f64 {
        self.upload + self.download
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CommLatency {
    pub offline_s: DirPair,
    pub online_s: DirPair,
    pub offline_bytes: DirPair,
    pub online_bytes: DirPair,
    /// Wall-clock communication time of each phase.
    pub offline_total_s: f64,
    pub online_total_s: f64,
    pub total_s: f64,
}

/// Duration of one transfer on `link`.
pub fn transfer_seconds(link: &LinkProfile, direction: Direction, bytes: f64) -> f64 {
    let bps = match direction {
        Direction::Upload => link.upload_bps(),
        Direction::Download => link.download_bps(),
    };
    bytes * 8.0 / bps + link.per_message_overhead_s
}

/// Transfers serialize in trace order; with `overlap_directions` each phase
/// instead costs its slower direction.
pub fn comm_latency(trace: &ProtocolTrace, link: &LinkProfile) -> CommLatency {
    let mut out = CommLatency::default();
    for step in &trace.steps {
        if let StepKind::Transfer { direction, bytes, .. } = step.kind {
            let t = transfer_seconds(link, direction, bytes);
            let (secs, b) = match step.phase {
                Phase::Offline => (&mut out.offline_s, &mut out.offline_bytes),
                Phase::Online => (&mut out.online_s, &mut out.online_bytes),
            };
            secs.add(direction, t);
            b.add(direction, bytes);
        }
    }
    let phase_total = |p: &DirPair| {
        if link.overlap_directions {
            p.upload.max(p.download)
        } else {
            p.upload + p.download
        }
    };
    out.offline_total_s = phase_total(&out.offline_s);
    out.online_total_s = phase_total(&out.online_s);
    out.total_s = out.offline_total_s + out.online_total_s;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBreakdown {
    pub compute: ComputeSeconds,
    pub comm_s: DirPair,
    pub comm_bytes: DirPair,
    pub compute_total_s: f64,
    pub comm_total_s: f64,
    pub total_s: f64,
}

impl PhaseBreakdown {
    /// Garbled-circuit seconds (garbling plus evaluation, both parties).
    pub fn gc_s(&self) -> f64 {
        self.compute.primitive(Primitive::GcGarble) + self.compute.primitive(Primitive::GcEval)
    }

    pub fn he_s(&self) -> f64 {
        self.compute.primitive(Primitive::He)
    }

    pub fn ss_s(&self) -> f64 {
        self.compute.primitive(Primitive::Ss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCosts {
    pub network: String,
    pub variant: ProtocolVariant,
    pub lphe: bool,
    pub upload_fraction: f64,
    pub total_bandwidth_bps: f64,
    pub offline: PhaseBreakdown,
    pub online: PhaseBreakdown,
    pub total_s: f64,
    pub storage: StorageCost,
}

impl PhaseCosts {
    pub fn phase(&self, phase: Phase) -> &PhaseBreakdown {
        match phase {
            Phase::Offline => &self.offline,
            Phase::Online => &self.online,
        }
    }

    pub fn comm_total_s(&self) -> f64 {
        self.offline.comm_total_s + self.online.comm_total_s
    }
}

fn breakdown(compute: ComputeSeconds, comm_s: DirPair, comm_bytes: DirPair, comm_total_s: f64) -> PhaseBreakdown {
    let compute_total_s = compute.total();
    PhaseBreakdown {
        compute,
        comm_s,
        comm_bytes,
        compute_total_s,
        comm_total_s,
        total_s: compute_total_s + comm_total_s,
    }
}

/// Resolves the upload fraction a protocol configuration asks for.
pub fn resolve_link(trace: &ProtocolTrace, link: &LinkProfile, mode: WsaMode) -> Result<LinkProfile> {
    let fraction = match mode {
        WsaMode::EvenSplit => 0.5,
        WsaMode::Fixed(f) => f,
        WsaMode::Optimized => wsa::optimize_split_on(trace, link)?.upload_fraction,
    };
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    Ok(link.with_upload_fraction(fraction))
}

/// Full cost report of one inference. The link's upload fraction is taken
/// from `protocol.wsa_mode` (the link's own fraction is ignored).
pub fn phase_costs(
    network: &NetworkProfile,
    constants: &CostConstants,
    protocol: &ProtocolConfig,
    client: &DeviceProfile,
    server: &DeviceProfile,
    link: &LinkProfile,
) -> Result<PhaseCosts> {
    let trace = build_trace(network, constants, protocol.variant);
    let link = resolve_link(&trace, link, protocol.wsa_mode)?;
    costs_of_trace(&trace, network, constants, protocol, client, server, &link)
}

pub(crate) fn costs_of_trace(
    trace: &ProtocolTrace,
    network: &NetworkProfile,
    constants: &CostConstants,
    protocol: &ProtocolConfig,
    client: &DeviceProfile,
    server: &DeviceProfile,
    link: &LinkProfile,
) -> Result<PhaseCosts> {
    let compute = compute_latency(trace, client, server, protocol.lphe_enabled)?;
    let comm = comm_latency(trace, link);
    let offline = breakdown(compute.offline, comm.offline_s, comm.offline_bytes, comm.offline_total_s);
    let online = breakdown(compute.online, comm.online_s, comm.online_bytes, comm.online_total_s);
    let total_s = offline.total_s + online.total_s;
    Ok(PhaseCosts {
        network: network.name.clone(),
        variant: protocol.variant,
        lphe: protocol.lphe_enabled,
        upload_fraction: link.upload_fraction,
        total_bandwidth_bps: link.total_bandwidth_bps,
        offline,
        online,
        total_s,
        storage: storage_per_inference(network, constants, protocol.variant),
    })
}

/// Acceleration factors for what-if studies. Every factor is at least 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhatIfFactors {
    pub gc_speedup: f64,
    pub he_speedup: f64,
    pub bandwidth_multiplier: f64,
    pub relu_reduction: f64,
}

impl Default for WhatIfFactors {
    fn default() -> Self {
        WhatIfFactors::IDENTITY
    }
}

impl WhatIfFactors {
    pub const IDENTITY: WhatIfFactors = WhatIfFactors {
        gc_speedup: 1.0,
        he_speedup: 1.0,
        bandwidth_multiplier: 1.0,
        relu_reduction: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        for (name, v) in [
            ("gc_speedup", self.gc_speedup),
            ("he_speedup", self.he_speedup),
            ("bandwidth_multiplier", self.bandwidth_multiplier),
            ("relu_reduction", self.relu_reduction),
        ] {
            if !(v >= 1.0) || !v.is_finite() {
                violations.push(format!("whatif.{name} >= 1 failed (got {v})"));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: "what-if factors".to_string(),
                violations,
            })
        }
    }

    /// Factor-wise product; applying `a` then `b` equals applying `a.then(b)`.
    pub fn then(self, other: WhatIfFactors) -> WhatIfFactors {
        WhatIfFactors {
            gc_speedup: self.gc_speedup * other.gc_speedup,
            he_speedup: self.he_speedup * other.he_speedup,
            bandwidth_multiplier: self.bandwidth_multiplier * other.bandwidth_multiplier,
            relu_reduction: self.relu_reduction * other.relu_reduction,
        }
    }
}

/// Everything [`phase_costs`] needs, bundled so it can be transformed.
#[derive(Debug, Clone, PartialEq)]
pub struct CostInputs {
    pub network: NetworkProfile,
    pub constants: CostConstants,
    pub protocol: ProtocolConfig,
    pub client: DeviceProfile,
    pub server: DeviceProfile,
    pub link: LinkProfile,
}

impl CostInputs {
    pub fn phase_costs(&self) -> Result<PhaseCosts> {
        phase_costs(
            &self.network,
            &self.constants,
            &self.protocol,
            &self.client,
            &self.server,
            &self.link,
        )
    }

    pub fn trace(&self) -> ProtocolTrace {
        build_trace(&self.network, &self.constants, self.protocol.variant)
    }

    /// Inputs after acceleration: GC constants and per-layer HE times are
    /// divided by their speedups, the link is widened, and every per-ReLU
    /// quantity shrinks with the ReLU count.
    pub fn with_whatif(&self, f: &WhatIfFactors) -> Result<CostInputs> {
        f.validate()?;
        let mut out = self.clone();
        if f.he_speedup != 1.0 {
            out.network = out.network.with_he_scaled(f.he_speedup);
        }
        out.constants = out
            .constants
            .with_gc_speedup(f.gc_speedup)
            .with_relus_reduced(f.relu_reduction);
        out.link.total_bandwidth_bps *= f.bandwidth_multiplier;
        Ok(out)
    }
}

pub fn apply_whatif(inputs: &CostInputs, factors: &WhatIfFactors) -> Result<PhaseCosts> {
    inputs.with_whatif(factors)?.phase_costs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComputeScale, LayerKind, LayerSpec};
    use crate::trace::{Step, Tag};

    fn device(role: Party) -> DeviceProfile {
        DeviceProfile {
            name: role.as_str().to_string(),
            role,
            compute_scale: ComputeScale::REFERENCE,
            storage_capacity_bytes: 1e12,
        }
    }

    #[test]
    fn toy_transfers_even_split() {
        let trace = ProtocolTrace {
            network: "toy".into(),
            variant: ProtocolVariant::ServerGarbler,
            steps: vec![
                Step {
                    phase: Phase::Offline,
                    kind: StepKind::Transfer {
                        direction: Direction::Upload,
                        bytes: 1.25e8,
                        tag: Tag::HeShares,
                    },
                },
                Step {
                    phase: Phase::Offline,
                    kind: StepKind::Transfer {
                        direction: Direction::Download,
                        bytes: 1.25e8,
                        tag: Tag::HeShares,
                    },
                },
            ],
        };
        let c = comm_latency(&trace, &LinkProfile::even(1e9));
        assert_eq!(c.total_s, 4.0);
        let mut overlap = LinkProfile::even(1e9);
        overlap.overlap_directions = true;
        assert_eq!(comm_latency(&trace, &overlap).total_s, 2.0);
    }

    #[test]
    fn aggregate_he_rejects_lphe() {
        let trace = ProtocolTrace {
            network: "toy".into(),
            variant: ProtocolVariant::ServerGarbler,
            steps: vec![Step {
                phase: Phase::Offline,
                kind: StepKind::Compute {
                    party: Party::Server,
                    primitive: Primitive::He,
                    work: Work::Aggregate { seconds: 3.0 },
                },
            }],
        };
        let c = device(Party::Client);
        let s = device(Party::Server);
        assert!(compute_latency(&trace, &c, &s, false).is_ok());
        let err = compute_latency(&trace, &c, &s, true).unwrap_err();
        assert_eq!(err.to_string(), "LPHE requires per-layer HE costs");
    }

    #[test]
    fn single_linear_layer_lphe_is_identity() {
        let net = NetworkProfile::from_layers(
            "one",
            1,
            vec![
                LayerSpec {
                    index: 0,
                    kind: LayerKind::Linear {
                        he_latency_ref_s: 7.5,
                        share_bytes: 8.0,
                        macs: 1,
                        input_elements: 1,
                        output_elements: 1,
                    },
                },
                LayerSpec {
                    index: 1,
                    kind: LayerKind::Relu { relu_count: 1 },
                },
            ],
        );
        let constants = crate::calibration::fit(&Default::default()).unwrap().constants;
        let trace = build_trace(&net, &constants, ProtocolVariant::ServerGarbler);
        let c = device(Party::Client);
        let s = device(Party::Server);
        let seq = compute_latency(&trace, &c, &s, false).unwrap();
        let par = compute_latency(&trace, &c, &s, true).unwrap();
        assert_eq!(seq.offline.primitive(Primitive::He), 7.5);
        assert_eq!(par.offline.primitive(Primitive::He), 7.5);
    }
}
