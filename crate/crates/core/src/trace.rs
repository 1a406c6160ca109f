//! Step-level description of one inference: the offline pre-compute followed
//! by the online serve, as an ordered list of compute and transfer steps.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CostConstants, LayerKind, NetworkProfile, Party, Primitive, ProtocolVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Offline,
    Online,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Offline, Phase::Online];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Offline => "offline",
            Phase::Online => "online",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Client to server.
    Upload,
    /// Server to client.
    Download,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Upload, Direction::Download];

    /// Direction of a message sent by `from`.
    pub fn from_sender(from: Party) -> Direction {
        match from {
            Party::Client => Direction::Upload,
            Party::Server => Direction::Download,
        }
    }

    pub fn flipped(self) -> Direction {
        match self {
            Direction::Upload => Direction::Download,
            Direction::Download => Direction::Upload,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Upload => "upload",
            Direction::Download => "download",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    HeShares,
    GcMaterial,
    OtOffline,
    OtOnline,
    Labels,
    InputShare,
}

impl Tag {
    pub const ALL: [Tag; 6] = [
        Tag::HeShares,
        Tag::GcMaterial,
        Tag::OtOffline,
        Tag::OtOnline,
        Tag::Labels,
        Tag::InputShare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::HeShares => "he_shares",
            Tag::GcMaterial => "gc_material",
            Tag::OtOffline => "ot_offline",
            Tag::OtOnline => "ot_online",
            Tag::Labels => "labels",
            Tag::InputShare => "input_share",
        }
    }

    pub fn is_ot(self) -> bool {
        matches!(self, Tag::OtOffline | Tag::OtOnline)
    }
}

/// Reference-machine work of a compute step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Work {
    /// Work attributable to one layer of the network.
    Layer { layer: usize, seconds: f64 },
    /// Work known only as a total.
    Aggregate { seconds: f64 },
}

impl Work {
    pub fn seconds(&self) -> f64 {
        match *self {
            Work::Layer { seconds, .. } | Work::Aggregate { seconds } => seconds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind {
    Compute {
        party: Party,
        primitive: Primitive,
        work: Work,
    },
    Transfer {
        direction: Direction,
        bytes: f64,
        tag: Tag,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub phase: Phase,
    pub kind: StepKind,
}

impl Step {
    fn compute(phase: Phase, party: Party, primitive: Primitive, work: Work) -> Step {
        Step {
            phase,
            kind: StepKind::Compute {
                party,
                primitive,
                work,
            },
        }
    }

    pub fn bytes(&self) -> Option<(Direction, f64)> {
        match self.kind {
            StepKind::Transfer { direction, bytes, .. } => Some((direction, bytes)),
            StepKind::Compute { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTrace {
    pub network: String,
    pub variant: ProtocolVariant,
    pub steps: Vec<Step>,
}

impl ProtocolTrace {
    pub fn steps_in(&self, phase: Phase) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(move |s| s.phase == phase)
    }

    pub fn total_bytes(&self) -> f64 {
        trace_bytes(self, None, None)
    }

    pub fn tag_bytes(&self, tag: Tag) -> f64 {
        self.steps
            .iter()
            .filter_map(|s| match s.kind {
                StepKind::Transfer { bytes, tag: t, .. } if t == tag => Some(bytes),
                _ => None,
            })
            .sum()
    }

    /// Phase ordering and transfer positivity.
    pub fn check(&self) -> Result<()> {
        let mut violations = Vec::new();
        let mut seen_online = false;
        for (i, s) in self.steps.iter().enumerate() {
            match s.phase {
                Phase::Online => seen_online = true,
                Phase::Offline if seen_online => {
                    violations.push(format!("step {i}: offline step after online step"))
                }
                Phase::Offline => {}
            }
            match s.kind {
                StepKind::Transfer { bytes, .. } if !(bytes > 0.0) => {
                    violations.push(format!("step {i}: transfer bytes must be > 0"))
                }
                StepKind::Compute { work, .. } if !(work.seconds() >= 0.0) => {
                    violations.push(format!("step {i}: work must be >= 0"))
                }
                _ => {}
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: "trace".to_string(),
                violations,
            })
        }
    }
}

struct Builder {
    steps: Vec<Step>,
}

impl Builder {
    fn transfer(&mut self, phase: Phase, direction: Direction, bytes: f64, tag: Tag) {
        if bytes > 0.0 {
            self.steps.push(Step {
                phase,
                kind: StepKind::Transfer {
                    direction,
                    bytes,
                    tag,
                },
            });
        }
    }

    fn compute(&mut self, phase: Phase, party: Party, primitive: Primitive, work: Work) {
        self.steps.push(Step::compute(phase, party, primitive, work));
    }

    /// An OT exchange delivering `payload` bytes of labels to `receiver`,
    /// split into alternating receiver/sender messages.
    fn ot(&mut self, phase: Phase, receiver: Party, payload: f64, c: &CostConstants, tag: Tag) {
        let wire = payload * c.ot_traffic_expansion;
        let messages = c.ot_messages as usize;
        let from_receiver = messages.div_ceil(2);
        let from_sender = messages / 2;
        let receiver_bytes = wire * c.ot_receiver_share / from_receiver as f64;
        let sender_bytes = wire * (1.0 - c.ot_receiver_share) / from_sender as f64;
        for m in 0..messages {
            if m % 2 == 0 {
                self.transfer(phase, Direction::from_sender(receiver), receiver_bytes, tag);
            } else {
                self.transfer(phase, Direction::from_sender(receiver.other()), sender_bytes, tag);
            }
        }
    }
}

/// Builds the step sequence of one inference.
///
/// Offline, both variants: the client uploads its encrypted masks for every
/// linear layer, the server evaluates each layer homomorphically and returns
/// the masked shares. The garbler then garbles every ReLU and ships the
/// circuits to the evaluator. Under Server-Garbler the client also fetches
/// its own input labels by OT ahead of time.
///
/// Online, both variants: the client uploads its input share; linear layers
/// are secret-share arithmetic on the server. For every ReLU layer,
/// Server-Garbler sends the server's labels down, the client evaluates and
/// returns the output labels; Client-Garbler sends the client's labels up,
/// runs OT so the server obtains its own labels, and the server evaluates.
pub fn build_trace(
    network: &NetworkProfile,
    c: &CostConstants,
    variant: ProtocolVariant,
) -> ProtocolTrace {
    let mut b = Builder { steps: Vec::new() };
    let garbler = variant.garbler();
    let evaluator = variant.evaluator();
    let relus = network.total_relus as f64;
    let he_bytes: f64 = network
        .layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::Linear { share_bytes, .. } => share_bytes,
            LayerKind::Relu { .. } => 0.0,
        })
        .sum();

    let off = Phase::Offline;
    b.transfer(off, Direction::Upload, he_bytes, Tag::HeShares);
    for layer in &network.layers {
        if let LayerKind::Linear { he_latency_ref_s, .. } = layer.kind {
            b.compute(
                off,
                Party::Server,
                Primitive::He,
                Work::Layer {
                    layer: layer.index,
                    seconds: he_latency_ref_s,
                },
            );
        }
    }
    b.transfer(off, Direction::Download, he_bytes, Tag::HeShares);
    b.compute(
        off,
        garbler,
        Primitive::GcGarble,
        Work::Aggregate {
            seconds: relus * c.gc_garble_s_per_relu_ref,
        },
    );
    b.transfer(
        off,
        Direction::from_sender(garbler),
        relus * c.gc_bytes_per_relu,
        Tag::GcMaterial,
    );
    if variant == ProtocolVariant::ServerGarbler {
        b.ot(off, Party::Client, relus * c.ot_offline_bytes_per_relu, c, Tag::OtOffline);
    }

    let on = Phase::Online;
    b.transfer(
        on,
        Direction::Upload,
        network.input_elements as f64 * c.input_share_bytes_per_element,
        Tag::InputShare,
    );
    for layer in &network.layers {
        match layer.kind {
            LayerKind::Linear { macs, .. } => b.compute(
                on,
                Party::Server,
                Primitive::Ss,
                Work::Layer {
                    layer: layer.index,
                    seconds: macs as f64 * c.ss_online_s_per_mac_ref,
                },
            ),
            LayerKind::Relu { relu_count } => {
                let n = relu_count as f64;
                let labels = n * c.label_bytes_per_relu;
                b.transfer(on, Direction::from_sender(garbler), labels, Tag::Labels);
                if variant == ProtocolVariant::ClientGarbler {
                    b.ot(on, Party::Server, n * c.ot_online_bytes_per_relu, c, Tag::OtOnline);
                }
                b.compute(
                    on,
                    evaluator,
                    Primitive::GcEval,
                    Work::Layer {
                        layer: layer.index,
                        seconds: n * c.gc_eval_s_per_relu_ref,
                    },
                );
                if variant == ProtocolVariant::ServerGarbler {
                    b.transfer(on, Direction::from_sender(evaluator), labels, Tag::Labels);
                }
            }
        }
    }

    ProtocolTrace {
        network: network.name.clone(),
        variant,
        steps: b.steps,
    }
}

/// Sums transfer bytes matching the optional phase and direction filters.
pub fn trace_bytes(trace: &ProtocolTrace, phase: Option<Phase>, direction: Option<Direction>) -> f64 {
    trace
        .steps
        .iter()
        .filter(|s| phase.is_none_or(|p| s.phase == p))
        .filter_map(|s| s.bytes())
        .filter(|(d, _)| direction.is_none_or(|x| *d == x))
        .map(|(_, b)| b)
        .sum()
}

// ---------------------------------------------------------------------------
// Text dump: one step per line, whitespace separated.
//
//   <phase> compute <party> <primitive> layer=<i> seconds=<s>
//   <phase> compute <party> <primitive> seconds=<s>
//   <phase> transfer <direction> <tag> bytes=<b>

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.phase.as_str())?;
        match self.kind {
            StepKind::Compute {
                party,
                primitive,
                work,
            } => {
                write!(f, "compute {} {}", party.as_str(), primitive.as_str())?;
                match work {
                    Work::Layer { layer, seconds } => write!(f, " layer={layer} seconds={seconds:?}"),
                    Work::Aggregate { seconds } => write!(f, " seconds={seconds:?}"),
                }
            }
            StepKind::Transfer {
                direction,
                bytes,
                tag,
            } => write!(f, "transfer {} {} bytes={bytes:?}", direction.as_str(), tag.as_str()),
        }
    }
}

impl ProtocolTrace {
    pub fn to_text(&self) -> String {
        let mut out = format!("# network={} variant={}\n", self.network, self.variant.short_name());
        for s in &self.steps {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ProtocolTrace> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace dump".to_string()))?;
        let mut network = None;
        let mut variant = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = field.strip_prefix("network=") {
                network = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("variant=") {
                variant = Some(v.parse()?);
            }
        }
        let steps = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| l.parse::<Step>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 2))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProtocolTrace {
            network: network.ok_or_else(|| Error::Parse("header lacks network=".to_string()))?,
            variant: variant.ok_or_else(|| Error::Parse("header lacks variant=".to_string()))?,
            steps,
        })
    }
}

fn keyed<'a>(token: Option<&'a str>, key: &str) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("expected `{key}=`")))
}

fn number<T: FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(line: &str) -> Result<Step> {
        let mut t = line.split_whitespace();
        let phase = match t.next() {
            Some("offline") => Phase::Offline,
            Some("online") => Phase::Online,
            other => return Err(Error::Parse(format!("bad phase {other:?}"))),
        };
        let kind = match t.next() {
            Some("compute") => {
                let party = match t.next() {
                    Some("client") => Party::Client,
                    Some("server") => Party::Server,
                    other => return Err(Error::Parse(format!("bad party {other:?}"))),
                };
                let name = t.next();
                let primitive = Primitive::ALL
                    .into_iter()
                    .find(|p| Some(p.as_str()) == name)
                    .ok_or_else(|| Error::Parse(format!("bad primitive {name:?}")))?;
                let next = t.next();
                let work = if next.is_some_and(|x| x.starts_with("layer=")) {
                    let layer = number(keyed(next, "layer")?)?;
                    Work::Layer {
                        layer,
                        seconds: number(keyed(t.next(), "seconds")?)?,
                    }
                } else {
                    Work::Aggregate {
                        seconds: number(keyed(next, "seconds")?)?,
                    }
                };
                StepKind::Compute {
                    party,
                    primitive,
                    work,
                }
            }
            Some("transfer") => {
                let direction = match t.next() {
                    Some("upload") => Direction::Upload,
                    Some("download") => Direction::Download,
                    other => return Err(Error::Parse(format!("bad direction {other:?}"))),
                };
                let name = t.next();
                let tag = Tag::ALL
                    .into_iter()
                    .find(|x| Some(x.as_str()) == name)
                    .ok_or_else(|| Error::Parse(format!("bad tag {name:?}")))?;
                StepKind::Transfer {
                    direction,
                    tag,
                    bytes: number(keyed(t.next(), "bytes")?)?,
                }
            }
            other => return Err(Error::Parse(format!("bad step kind {other:?}"))),
        };
        if let Some(extra) = t.next() {
            return Err(Error::Parse(format!("trailing token `{extra}`")));
        }
        Ok(Step { phase, kind })
    }
}
