use crate::cost::{resolve_link, timed_compute, transfer_seconds};
use crate::error::Result;
use crate::model::Party;
use crate::trace::{build_trace, Phase, StepKind};

use super::{buffer_slots, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Link,
    ClientCpu,
    ServerCpu,
}

impl Resource {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    fn of(party: Party) -> Resource {
        match party {
            Party::Client => Resource::ClientCpu,
            Party::Server => Resource::ServerCpu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub resource: Resource,
    pub seconds: f64,
}

/// A trace reduced to the resource-occupancy segments the simulator replays.
/// Consecutive steps on the same resource are merged; zero-length steps are
/// dropped. Link transfers always serialize here, whatever the link's
/// `overlap_directions` setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub offline: Vec<Segment>,
    pub online: Vec<Segment>,
    pub offline_s: f64,
    pub online_s: f64,
    pub slots: usize,
}

impl Plan {
    pub fn compile(config: &SimConfig) -> Result<Plan> {
        let trace = build_trace(&config.network, &config.constants, config.protocol.variant);
        let link = resolve_link(&trace, &config.link, config.protocol.wsa_mode)?;
        let compute = timed_compute(&trace, &config.client, &config.server, config.protocol.lphe_enabled)?;
        let mut offline = Vec::new();
        let mut online = Vec::new();
        for (step, secs) in trace.steps.iter().zip(compute) {
            let seg = match step.kind {
                StepKind::Compute { party, .. } => Segment {
                    resource: Resource::of(party),
                    seconds: secs.unwrap_or(0.0),
                },
                StepKind::Transfer { direction, bytes, .. } => Segment {
                    resource: Resource::Link,
                    seconds: transfer_seconds(&link, direction, bytes),
                },
            };
            let list = match step.phase {
                Phase::Offline => &mut offline,
                Phase::Online => &mut online,
            };
            push_merged(list, seg);
        }
        let total = |v: &[Segment]| v.iter().map(|s| s.seconds).sum();
        Ok(Plan {
            offline_s: total(&offline),
            online_s: total(&online),
            offline,
            online,
            slots: buffer_slots(config),
        })
    }
}

fn push_merged(list: &mut Vec<Segment>, seg: Segment) {
    if seg.seconds <= 0.0 {
        return;
    }
    match list.last_mut() {
        Some(last) if last.resource == seg.resource => last.seconds += seg.seconds,
        _ => list.push(seg),
    }
}
