//! Domain types shared by every stage of the toolkit: network profiles,
//! device and link descriptions, per-ReLU cost constants and protocol
//! selection.
//!
//! All quantities carry their unit in the field name. Byte counts are `f64`
//! so that per-ReLU scaling (what-if analysis) stays exact and linear.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Client,
    Server,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Client => Party::Server,
            Party::Server => Party::Client,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Party::Client => "client",
            Party::Server => "server",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    He,
    GcGarble,
    GcEval,
    Ss,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [
        Primitive::He,
        Primitive::GcGarble,
        Primitive::GcEval,
        Primitive::Ss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::He => "he",
            Primitive::GcGarble => "gc_garble",
            Primitive::GcEval => "gc_eval",
            Primitive::Ss => "ss",
        }
    }
}

/// One layer of a profiled network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Linear {
        /// Offline HE evaluation time of this layer on the reference server.
        he_latency_ref_s: f64,
        /// Ciphertext bytes exchanged (each way) for this layer's offline HE step.
        share_bytes: f64,
        macs: u64,
        input_elements: u64,
        output_elements: u64,
    },
    Relu {
        relu_count: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, LayerKind::Linear { .. })
    }

    pub fn relu_count(&self) -> u64 {
        match self.kind {
            LayerKind::Relu { relu_count } => relu_count,
            LayerKind::Linear { .. } => 0,
        }
    }
}

/// A neural network described as an ordered list of linear and ReLU layers
/// with calibrated per-layer costs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkProfile {
    pub name: String,
    /// Scalar elements of the client's input (the first online upload).
    pub input_elements: u64,
    pub total_relus: u64,
    pub n_linear: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkProfile {
    /// Builds a profile and fills in the declared totals from the layers.
    pub fn from_layers(name: impl Into<String>, input_elements: u64, layers: Vec<LayerSpec>) -> Self {
        let total_relus = layers.iter().map(LayerSpec::relu_count).sum();
        let n_linear = layers.iter().filter(|l| l.is_linear()).count();
        NetworkProfile {
            name: name.into(),
            input_elements,
            total_relus,
            n_linear,
            layers,
        }
    }

    pub fn linear_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.is_linear())
    }

    pub fn relu_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| !l.is_linear())
    }

    /// Per-linear-layer HE latencies on the reference server, in layer order.
    pub fn he_latencies_ref_s(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Linear { he_latency_ref_s, .. } => Some(he_latency_ref_s),
                LayerKind::Relu { .. } => None,
            })
            .collect()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Linear { macs, .. } => macs,
                LayerKind::Relu { .. } => 0,
            })
            .sum()
    }

    /// Sum of linear-layer input and output activation elements.
    pub fn activation_elements(&self) -> (u64, u64) {
        self.layers.iter().fold((0, 0), |(i, o), l| match l.kind {
            LayerKind::Linear {
                input_elements,
                output_elements,
                ..
            } => (i + input_elements, o + output_elements),
            LayerKind::Relu { .. } => (i, o),
        })
    }

    /// Checks every structural invariant. An empty report means valid.
    pub fn validate(&self) -> ValidationReport {
        validate_network(self)
    }

    /// Returns a copy with every per-layer HE latency divided by `factor`.
    pub fn with_he_scaled(&self, factor: f64) -> NetworkProfile {
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let LayerKind::Linear { he_latency_ref_s, .. } = &mut layer.kind {
                *he_latency_ref_s /= factor;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self, what: &str) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: what.to_string(),
                violations: self.violations,
            })
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

pub fn validate_network(profile: &NetworkProfile) -> ValidationReport {
    let mut violations = Vec::new();

    let n_linear = profile.layers.iter().filter(|l| l.is_linear()).count();
    let relus: u64 = profile.layers.iter().map(LayerSpec::relu_count).sum();

    if n_linear == 0 {
        violations.push("n_linear > 0 failed".to_string());
    }
    if relus == 0 && !profile.layers.is_empty() {
        // Zero-ReLU networks are legal for degenerate what-if studies but are
        // flagged so bundled profiles never carry one by accident.
        violations.push("total_relus > 0 failed".to_string());
    }
    if profile.n_linear != n_linear {
        violations.push(format!(
            "declared n_linear = {} but layers contain {} linear layers",
            profile.n_linear, n_linear
        ));
    }
    if profile.total_relus != relus {
        violations.push(format!(
            "declared total_relus = {} but sum of relu_count = {}",
            profile.total_relus, relus
        ));
    }
    if let Some(first) = profile.layers.first() {
        if !first.is_linear() {
            violations.push("first layer must be linear".to_string());
        }
    }
    let mut prev_relu = false;
    for (pos, layer) in profile.layers.iter().enumerate() {
        if layer.index != pos {
            violations.push(format!("layer at position {pos} has index {}", layer.index));
        }
        match layer.kind {
            LayerKind::Linear {
                he_latency_ref_s,
                share_bytes,
                ..
            } => {
                if !(he_latency_ref_s >= 0.0) || !he_latency_ref_s.is_finite() {
                    violations.push(format!("layer {pos}: he_latency_ref_s must be >= 0"));
                }
                if !(share_bytes >= 0.0) || !share_bytes.is_finite() {
                    violations.push(format!("layer {pos}: share_bytes must be >= 0"));
                }
                prev_relu = false;
            }
            LayerKind::Relu { relu_count } => {
                if relu_count < 1 {
                    violations.push(format!("layer {pos}: relu_count >= 1 failed"));
                }
                if prev_relu {
                    violations.push(format!("layer {pos}: consecutive ReLU layers"));
                }
                prev_relu = true;
            }
        }
    }
    ValidationReport { violations }
}

/// Per-primitive slowdown of a device relative to the reference machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeScale {
    pub gc_garble: f64,
    pub gc_eval: f64,
    pub he: f64,
    pub ss: f64,
}

impl ComputeScale {
    pub const REFERENCE: ComputeScale = ComputeScale::uniform(1.0);

    pub const fn uniform(scale: f64) -> Self {
        ComputeScale {
            gc_garble: scale,
            gc_eval: scale,
            he: scale,
            ss: scale,
        }
    }

    pub fn get(&self, primitive: Primitive) -> f64 {
        match primitive {
            Primitive::He => self.he,
            Primitive::GcGarble => self.gc_garble,
            Primitive::GcEval => self.gc_eval,
            Primitive::Ss => self.ss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub role: Party,
    pub compute_scale: ComputeScale,
    pub storage_capacity_bytes: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for p in Primitive::ALL {
            let s = self.compute_scale.get(p);
            if !(s > 0.0) || !s.is_finite() {
                violations.push(format!("{}: compute_scale.{} > 0 failed", self.name, p.as_str()));
            }
        }
        if !(self.storage_capacity_bytes >= 0.0) {
            violations.push(format!("{}: storage_capacity_bytes >= 0 failed", self.name));
        }
        ValidationReport { violations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkProfile {
    pub total_bandwidth_bps: f64,
    pub upload_fraction: f64,
    pub slot_granularity: f64,
    pub per_message_overhead_s: f64,
    /// When set, uploads and downloads within a phase overlap and the phase
    /// costs the slower direction. Off by default: transfers serialize.
    pub overlap_directions: bool,
}

impl Default for LinkProfile {
    fn default() -> Self {
        LinkProfile {
            total_bandwidth_bps: 1e9,
            upload_fraction: 0.5,
            slot_granularity: 0.001,
            per_message_overhead_s: 0.0,
            overlap_directions: false,
        }
    }
}

impl LinkProfile {
    pub fn even(total_bandwidth_bps: f64) -> Self {
        LinkProfile {
            total_bandwidth_bps,
            ..LinkProfile::default()
        }
    }

    pub fn with_upload_fraction(mut self, upload_fraction: f64) -> Self {
        self.upload_fraction = upload_fraction;
        self
    }

    pub fn upload_bps(&self) -> f64 {
        self.total_bandwidth_bps * self.upload_fraction
    }

    pub fn download_bps(&self) -> f64 {
        self.total_bandwidth_bps - self.upload_bps()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if !(self.total_bandwidth_bps > 0.0) || !self.total_bandwidth_bps.is_finite() {
            violations.push("link.total_bandwidth_bps > 0 failed".to_string());
        }
        if !(self.upload_fraction > 0.0 && self.upload_fraction < 1.0) {
            violations.push(format!(
                "link.upload_fraction must lie in (0, 1), got {}",
                self.upload_fraction
            ));
        }
        if !(self.slot_granularity > 0.0 && self.slot_granularity <= 0.5) {
            violations.push(format!(
                "link.slot_granularity must lie in (0, 0.5], got {}",
                self.slot_granularity
            ));
        }
        if !(self.per_message_overhead_s >= 0.0) {
            violations.push("link.per_message_overhead_s >= 0 failed".to_string());
        }
        ValidationReport { violations }
    }
}

/// Calibration constants of the GC/OT/SS machinery. Per-ReLU quantities are
/// linear in the ReLU count, which is what makes ReLU-reduction what-ifs a
/// pure rescaling of this struct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConstants {
    /// Garbled-circuit material sent to and stored by the evaluator.
    pub gc_bytes_per_relu: f64,
    /// Input/output encoding information kept by the garbler.
    pub garbler_encoding_bytes_per_relu: f64,
    pub gc_garble_s_per_relu_ref: f64,
    pub gc_eval_s_per_relu_ref: f64,
    /// Label payload the evaluator obtains by offline OT (Server-Garbler);
    /// stored by the client with its circuits.
    pub ot_offline_bytes_per_relu: f64,
    /// Label payload the evaluator obtains by online OT (Client-Garbler).
    pub ot_online_bytes_per_relu: f64,
    /// Plain label transfer, per ReLU, for each direct label message.
    pub label_bytes_per_relu: f64,
    /// Wire bytes of an OT exchange per byte of delivered label payload.
    pub ot_traffic_expansion: f64,
    /// Share of OT wire bytes sent by the receiver; the sender sends the rest.
    pub ot_receiver_share: f64,
    /// Number of messages one OT exchange is split into, alternating
    /// receiver then sender.
    pub ot_messages: u32,
    /// Online secret-share arithmetic per multiply-accumulate on the reference server.
    pub ss_online_s_per_mac_ref: f64,
    pub randomness_bytes_per_element: f64,
    pub input_share_bytes_per_element: f64,
}

impl CostConstants {
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let fields = [
            ("gc_bytes_per_relu", self.gc_bytes_per_relu),
            ("garbler_encoding_bytes_per_relu", self.garbler_encoding_bytes_per_relu),
            ("gc_garble_s_per_relu_ref", self.gc_garble_s_per_relu_ref),
            ("gc_eval_s_per_relu_ref", self.gc_eval_s_per_relu_ref),
            ("ot_offline_bytes_per_relu", self.ot_offline_bytes_per_relu),
            ("ot_online_bytes_per_relu", self.ot_online_bytes_per_relu),
            ("label_bytes_per_relu", self.label_bytes_per_relu),
            ("ot_traffic_expansion", self.ot_traffic_expansion),
            ("ss_online_s_per_mac_ref", self.ss_online_s_per_mac_ref),
            ("randomness_bytes_per_element", self.randomness_bytes_per_element),
            ("input_share_bytes_per_element", self.input_share_bytes_per_element),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                violations.push(format!("constants.{name} >= 0 failed (got {v})"));
            }
        }
        if !(self.gc_bytes_per_relu > self.garbler_encoding_bytes_per_relu) {
            violations.push(
                "constants.gc_bytes_per_relu > garbler_encoding_bytes_per_relu failed".to_string(),
            );
        }
        if !(self.ot_receiver_share > 0.0 && self.ot_receiver_share < 1.0) {
            violations.push("constants.ot_receiver_share must lie in (0, 1)".to_string());
        }
        if self.ot_messages < 2 {
            violations.push("constants.ot_messages >= 2 failed".to_string());
        }
        ValidationReport { violations }
    }

    /// Divides every per-ReLU quantity by `factor`; identical in effect to
    /// dividing each layer's ReLU count by `factor`.
    pub fn with_relus_reduced(mut self, factor: f64) -> Self {
        self.gc_bytes_per_relu /= factor;
        self.garbler_encoding_bytes_per_relu /= factor;
        self.gc_garble_s_per_relu_ref /= factor;
        self.gc_eval_s_per_relu_ref /= factor;
        self.ot_offline_bytes_per_relu /= factor;
        self.ot_online_bytes_per_relu /= factor;
        self.label_bytes_per_relu /= factor;
        self
    }

    pub fn with_gc_speedup(mut self, factor: f64) -> Self {
        self.gc_garble_s_per_relu_ref /= factor;
        self.gc_eval_s_per_relu_ref /= factor;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolVariant {
    #[serde(rename = "sg")]
    ServerGarbler,
    #[serde(rename = "cg")]
    ClientGarbler,
}

impl ProtocolVariant {
    pub fn garbler(self) -> Party {
        match self {
            ProtocolVariant::ServerGarbler => Party::Server,
            ProtocolVariant::ClientGarbler => Party::Client,
        }
    }

    pub fn evaluator(self) -> Party {
        self.garbler().other()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ProtocolVariant::ServerGarbler => "sg",
            ProtocolVariant::ClientGarbler => "cg",
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            ProtocolVariant::ServerGarbler => ProtocolVariant::ClientGarbler,
            ProtocolVariant::ClientGarbler => ProtocolVariant::ServerGarbler,
        }
    }
}

impl std::str::FromStr for ProtocolVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sg" | "server-garbler" | "server_garbler" => Ok(ProtocolVariant::ServerGarbler),
            "cg" | "client-garbler" | "client_garbler" => Ok(ProtocolVariant::ClientGarbler),
            other => Err(Error::Parse(format!("unknown protocol variant `{other}`"))),
        }
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolVariant::ServerGarbler => "Server-Garbler",
            ProtocolVariant::ClientGarbler => "Client-Garbler",
        })
    }
}

/// How the link's upload/download split is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WsaMode {
    EvenSplit,
    Fixed(f64),
    Optimized,
}

impl std::str::FromStr for WsaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "even" => Ok(WsaMode::EvenSplit),
            "opt" | "optimized" => Ok(WsaMode::Optimized),
            _ => {
                let frac = lower
                    .strip_prefix("fixed:")
                    .ok_or_else(|| Error::Parse(format!("unknown wsa mode `{s}`")))?;
                let f: f64 = frac
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad wsa fraction `{frac}`")))?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Parse(format!(
                        "wsa fixed upload fraction must lie in (0, 1), got {f}"
                    )));
                }
                Ok(WsaMode::Fixed(f))
            }
        }
    }
}

impl fmt::Display for WsaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WsaMode::EvenSplit => f.write_str("even"),
            WsaMode::Fixed(x) => write!(f, "fixed:{x}"),
            WsaMode::Optimized => f.write_str("opt"),
        }
    }
}

impl Serialize for WsaMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WsaMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub variant: ProtocolVariant,
    pub lphe_enabled: bool,
    pub wsa_mode: WsaMode,
}

impl ProtocolConfig {
    pub fn baseline(variant: ProtocolVariant) -> Self {
        ProtocolConfig {
            variant,
            lphe_enabled: false,
            wsa_mode: WsaMode::EvenSplit,
        }
    }

    /// LPHE on and an optimized link split.
    pub fn optimized(variant: ProtocolVariant) -> Self {
        ProtocolConfig {
            variant,
            lphe_enabled: true,
            wsa_mode: WsaMode::Optimized,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if let WsaMode::Fixed(f) = self.wsa_mode {
            if !(f > 0.0 && f < 1.0) {
                violations.push(format!("protocol.wsa fixed fraction must lie in (0, 1), got {f}"));
            }
        }
        ValidationReport { violations }
    }
}

/// Per-inference storage of pre-computed material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageCost {
    pub client_bytes: f64,
    pub server_bytes: f64,
    pub client_gc_bytes: f64,
    pub server_gc_bytes: f64,
    pub client_randomness_bytes: f64,
    pub server_randomness_bytes: f64,
}

/// Bytes each party must hold for one buffered pre-compute.
///
/// The evaluator stores the circuits (plus, under Server-Garbler, the labels
/// it obtained by offline OT); the garbler stores the input/output encodings.
/// Randomness shares are independent of the GC roles: the client keeps `r_i`
/// and its decrypted HE share for every linear layer, the server keeps `s_i`.
pub fn storage_per_inference(
    network: &NetworkProfile,
    constants: &CostConstants,
    variant: ProtocolVariant,
) -> StorageCost {
    let relus = network.total_relus as f64;
    let (inputs, outputs) = network.activation_elements();
    let rb = constants.randomness_bytes_per_element;
    let client_randomness_bytes = (inputs + outputs) as f64 * rb;
    let server_randomness_bytes = outputs as f64 * rb;

    let evaluator_gc = relus * (constants.gc_bytes_per_relu + offline_ot_payload(constants, variant));
    let garbler_gc = relus * constants.garbler_encoding_bytes_per_relu;
    let (client_gc_bytes, server_gc_bytes) = match variant {
        ProtocolVariant::ServerGarbler => (evaluator_gc, garbler_gc),
        ProtocolVariant::ClientGarbler => (garbler_gc, evaluator_gc),
    };
    StorageCost {
        client_bytes: client_gc_bytes + client_randomness_bytes,
        server_bytes: server_gc_bytes + server_randomness_bytes,
        client_gc_bytes,
        server_gc_bytes,
        client_randomness_bytes,
        server_randomness_bytes,
    }
}

/// Client-Garbler has no offline OT: the server's labels depend on the input.
fn offline_ot_payload(constants: &CostConstants, variant: ProtocolVariant) -> f64 {
    match variant {
        ProtocolVariant::ServerGarbler => constants.ot_offline_bytes_per_relu,
        ProtocolVariant::ClientGarbler => 0.0,
    }
}
