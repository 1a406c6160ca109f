//! Bundled calibration: the six network profiles, the cost constants and the
//! reference client/server devices.
//!
//! The bundled files under `data/` are generated by [`fit`] and checked in.
//! [`fit`] derives every number from a handful of measured anchors on the
//! ResNet-18/TinyImageNet reference network:
//!
//! * HE time per linear layer is `kappa * macs * cn^beta`, where `cn` is the
//!   number of input channels that share one ciphertext
//!   (`min(c_in, SLOTS / output_hw)`, at least 1). `beta` is chosen so that the
//!   reference network's sum/max ratio matches the measured sequential and
//!   layer-parallel HE times; `kappa` then pins the sum.
//! * Garbling and evaluation cost per ReLU follow from the measured reference
//!   totals and the client slowdown.
//! * Online secret-share arithmetic is charged per multiply-accumulate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arch::{self, ArchLayer, Dataset, Model};
use crate::error::{Error, Result};
use crate::model::{
    ComputeScale, CostConstants, DeviceProfile, LayerKind, LayerSpec, NetworkProfile, Party,
};

/// Plaintext slots per ciphertext of the modelled HE parameter set.
pub const HE_SLOTS: u64 = 8192;

pub const REFERENCE_NETWORK: &str = "resnet18-tinyimagenet";

/// Measured totals the calibration is fitted to (reference network).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchors {
    pub he_sequential_s: f64,
    pub he_parallel_s: f64,
    pub gc_garble_server_s: f64,
    pub gc_eval_client_s: f64,
    pub ss_online_s: f64,
    pub client_slowdown: f64,
    pub gc_bytes_per_relu: f64,
    pub garbler_encoding_bytes_per_relu: f64,
    pub label_bytes_per_relu: f64,
    pub ot_offline_bytes_per_relu: f64,
    pub ot_online_bytes_per_relu: f64,
    pub he_bytes_per_element: f64,
    pub client_storage_bytes: f64,
    pub server_storage_bytes: f64,
}

impl Default for Anchors {
    fn default() -> Self {
        Anchors {
            he_sequential_s: 1080.0,
            he_parallel_s: 141.0,
            gc_garble_server_s: 25.1,
            gc_eval_client_s: 200.0,
            ss_online_s: 0.610,
            client_slowdown: 16.2,
            gc_bytes_per_relu: 18_200.0,
            garbler_encoding_bytes_per_relu: 3_500.0,
            label_bytes_per_relu: 596.0,
            ot_offline_bytes_per_relu: 509.0,
            ot_online_bytes_per_relu: 596.0,
            he_bytes_per_element: 8.0,
            client_storage_bytes: 128e9,
            server_storage_bytes: 1e12,
        }
    }
}

/// Everything the bundled data files contain.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub he_exponent: f64,
    pub he_scale_s: f64,
    pub constants: CostConstants,
    pub client: DeviceProfile,
    pub server: DeviceProfile,
    pub networks: Vec<NetworkProfile>,
}

impl Calibration {
    pub fn network(&self, name: &str) -> Result<&NetworkProfile> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::UnknownNetwork(name.to_string()))
    }
}

fn shapes(model: Model, dataset: Dataset) -> Vec<arch::LinearShape> {
    arch::layers(model, dataset)
        .into_iter()
        .filter_map(|l| match l {
            ArchLayer::Linear(s) => Some(s),
            ArchLayer::Relu(_) => None,
        })
        .collect()
}

fn packing(shape: &arch::LinearShape) -> f64 {
    let per_ct = (HE_SLOTS / shape.output_hw).min(shape.in_channels).max(1);
    per_ct as f64
}

/// Unscaled HE weight of each linear layer for a given exponent.
pub fn he_weights(linear: &[arch::LinearShape], beta: f64) -> Vec<f64> {
    linear
        .iter()
        .map(|s| s.macs as f64 * packing(s).powf(beta))
        .collect()
}

fn sum_over_max(w: &[f64]) -> f64 {
    let sum: f64 = w.iter().sum();
    let max = w.iter().cloned().fold(0.0, f64::max);
    sum / max
}

/// Bisection for the exponent that gives the reference network the target
/// sequential/parallel ratio.
pub fn fit_he_exponent(linear: &[arch::LinearShape], target_ratio: f64) -> Result<f64> {
    let g = |b: f64| sum_over_max(&he_weights(linear, b)) - target_ratio;
    let (mut lo, mut hi) = (0.01, 5.0);
    let (glo, ghi) = (g(lo), g(hi));
    if glo.signum() == ghi.signum() {
        return Err(Error::Data(format!(
            "HE exponent not bracketed: ratio error {glo} at {lo}, {ghi} at {hi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid).signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn fit(anchors: &Anchors) -> Result<Calibration> {
    let reference = shapes(Model::ResNet18, Dataset::TinyImageNet);
    let beta = fit_he_exponent(&reference, anchors.he_sequential_s / anchors.he_parallel_s)?;
    let kappa = anchors.he_sequential_s / he_weights(&reference, beta).iter().sum::<f64>();

    let ref_relus: u64 = arch::layers(Model::ResNet18, Dataset::TinyImageNet)
        .iter()
        .map(|l| match l {
            ArchLayer::Relu(n) => *n,
            ArchLayer::Linear(_) => 0,
        })
        .sum();
    let ref_macs: u64 = reference.iter().map(|s| s.macs).sum();
    let r = ref_relus as f64;

    let constants = CostConstants {
        gc_bytes_per_relu: anchors.gc_bytes_per_relu,
        garbler_encoding_bytes_per_relu: anchors.garbler_encoding_bytes_per_relu,
        gc_garble_s_per_relu_ref: anchors.gc_garble_server_s / r,
        gc_eval_s_per_relu_ref: anchors.gc_eval_client_s / (r * anchors.client_slowdown),
        ot_offline_bytes_per_relu: anchors.ot_offline_bytes_per_relu,
        ot_online_bytes_per_relu: anchors.ot_online_bytes_per_relu,
        label_bytes_per_relu: anchors.label_bytes_per_relu,
        ot_traffic_expansion: 3.0,
        ot_receiver_share: 1.0 / 3.0,
        ot_messages: 2,
        ss_online_s_per_mac_ref: anchors.ss_online_s / ref_macs as f64,
        randomness_bytes_per_element: 8.0,
        input_share_bytes_per_element: 8.0,
    };

    let networks = arch::BUNDLED
        .iter()
        .map(|&(m, d)| build_profile(m, d, beta, kappa, anchors.he_bytes_per_element))
        .collect();

    Ok(Calibration {
        he_exponent: beta,
        he_scale_s: kappa,
        constants,
        client: DeviceProfile {
            name: "embedded-client".to_string(),
            role: Party::Client,
            compute_scale: ComputeScale::uniform(anchors.client_slowdown),
            storage_capacity_bytes: anchors.client_storage_bytes,
        },
        server: DeviceProfile {
            name: "reference-server".to_string(),
            role: Party::Server,
            compute_scale: ComputeScale::REFERENCE,
            storage_capacity_bytes: anchors.server_storage_bytes,
        },
        networks,
    })
}

fn build_profile(model: Model, dataset: Dataset, beta: f64, kappa: f64, he_bytes: f64) -> NetworkProfile {
    let arch_layers = arch::layers(model, dataset);
    let mut input_elements = 0;
    let layers = arch_layers
        .iter()
        .enumerate()
        .map(|(index, l)| {
            let kind = match *l {
                ArchLayer::Linear(s) => {
                    if index == 0 {
                        input_elements = s.input_elements;
                    }
                    LayerKind::Linear {
                        he_latency_ref_s: kappa * s.macs as f64 * packing(&s).powf(beta),
                        share_bytes: s.input_elements as f64 * he_bytes,
                        macs: s.macs,
                        input_elements: s.input_elements,
                        output_elements: s.output_elements,
                    }
                }
                ArchLayer::Relu(n) => LayerKind::Relu { relu_count: n },
            };
            LayerSpec { index, kind }
        })
        .collect();
    NetworkProfile::from_layers(arch::network_name(model, dataset), input_elements, layers)
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    input_elements: u64,
    total_relus: u64,
    n_linear: usize,
    layers: Vec<LayerRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    index: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    he_latency_ref_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    share_bytes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    macs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_elements: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_elements: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relu_count: Option<u64>,
}

pub fn network_to_toml(profile: &NetworkProfile) -> String {
    let file = NetworkFile {
        name: profile.name.clone(),
        input_elements: profile.input_elements,
        total_relus: profile.total_relus,
        n_linear: profile.n_linear,
        layers: profile
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Linear {
                    he_latency_ref_s,
                    share_bytes,
                    macs,
                    input_elements,
                    output_elements,
                } => LayerRecord {
                    index: l.index,
                    kind: "linear".to_string(),
                    he_latency_ref_s: Some(he_latency_ref_s),
                    share_bytes: Some(share_bytes),
                    macs: Some(macs),
                    input_elements: Some(input_elements),
                    output_elements: Some(output_elements),
                    relu_count: None,
                },
                LayerKind::Relu { relu_count } => LayerRecord {
                    index: l.index,
                    kind: "relu".to_string(),
                    he_latency_ref_s: None,
                    share_bytes: None,
                    macs: None,
                    input_elements: None,
                    output_elements: None,
                    relu_count: Some(relu_count),
                },
            })
            .collect(),
    };
    toml::to_string(&file).expect("network profile serializes")
}

/// Parses a network file. Declared totals are kept as written so that
/// [`NetworkProfile::validate`] can report mismatches.
pub fn network_from_toml(text: &str) -> Result<NetworkProfile> {
    let file: NetworkFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for rec in file.layers {
        let missing = |field: &str| Error::Parse(format!("layer {}: missing `{field}`", rec.index));
        let kind = match rec.kind.as_str() {
            "linear" => LayerKind::Linear {
                he_latency_ref_s: rec.he_latency_ref_s.ok_or_else(|| missing("he_latency_ref_s"))?,
                share_bytes: rec.share_bytes.ok_or_else(|| missing("share_bytes"))?,
                macs: rec.macs.unwrap_or(0),
                input_elements: rec.input_elements.unwrap_or(0),
                output_elements: rec.output_elements.unwrap_or(0),
            },
            "relu" => LayerKind::Relu {
                relu_count: rec.relu_count.ok_or_else(|| missing("relu_count"))?,
            },
            other => {
                return Err(Error::Parse(format!(
                    "layer {}: kind must be `linear` or `relu`, got `{other}`",
                    rec.index
                )))
            }
        };
        layers.push(LayerSpec {
            index: rec.index,
            kind,
        });
    }
    Ok(NetworkProfile {
        name: file.name,
        input_elements: file.input_elements,
        total_relus: file.total_relus,
        n_linear: file.n_linear,
        layers,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    fit: FitRecord,
    constants: CostConstants,
    devices: BTreeMap<String, DeviceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitRecord {
    he_slots: u64,
    he_exponent: f64,
    he_scale_s: f64,
    reference_network: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceRecord {
    name: String,
    compute_scale: ComputeScale,
    storage_capacity_bytes: f64,
}

pub fn calibration_to_toml(cal: &Calibration) -> String {
    let device = |d: &DeviceProfile| DeviceRecord {
        name: d.name.clone(),
        compute_scale: d.compute_scale,
        storage_capacity_bytes: d.storage_capacity_bytes,
    };
    let mut devices = BTreeMap::new();
    devices.insert("client".to_string(), device(&cal.client));
    devices.insert("server".to_string(), device(&cal.server));
    let file = CalibrationFile {
        fit: FitRecord {
            he_slots: HE_SLOTS,
            he_exponent: cal.he_exponent,
            he_scale_s: cal.he_scale_s,
            reference_network: REFERENCE_NETWORK.to_string(),
        },
        constants: cal.constants,
        devices,
    };
    toml::to_string(&file).expect("calibration serializes")
}

fn calibration_from_toml(text: &str, networks: Vec<NetworkProfile>) -> Result<Calibration> {
    let file: CalibrationFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let device = |key: &str, role: Party| -> Result<DeviceProfile> {
        let d = file
            .devices
            .get(key)
            .ok_or_else(|| Error::Data(format!("missing device `{key}`")))?;
        Ok(DeviceProfile {
            name: d.name.clone(),
            role,
            compute_scale: d.compute_scale,
            storage_capacity_bytes: d.storage_capacity_bytes,
        })
    };
    Ok(Calibration {
        he_exponent: file.fit.he_exponent,
        he_scale_s: file.fit.he_scale_s,
        constants: file.constants,
        client: device("client", Party::Client)?,
        server: device("server", Party::Server)?,
        networks,
    })
}

const CALIBRATION_TOML: &str = include_str!("../data/calibration.toml");

const NETWORK_FILES: [(&str, &str); 6] = [
    ("resnet32-cifar100", include_str!("../data/networks/resnet32-cifar100.toml")),
    ("vgg16-cifar100", include_str!("../data/networks/vgg16-cifar100.toml")),
    ("resnet18-cifar100", include_str!("../data/networks/resnet18-cifar100.toml")),
    ("resnet32-tinyimagenet", include_str!("../data/networks/resnet32-tinyimagenet.toml")),
    ("vgg16-tinyimagenet", include_str!("../data/networks/vgg16-tinyimagenet.toml")),
    ("resnet18-tinyimagenet", include_str!("../data/networks/resnet18-tinyimagenet.toml")),
];

pub fn network_names() -> impl Iterator<Item = &'static str> {
    NETWORK_FILES.iter().map(|(n, _)| *n)
}

pub fn bundled_network_toml(name: &str) -> Option<&'static str> {
    NETWORK_FILES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_calibration_toml() -> &'static str {
    CALIBRATION_TOML
}

/// Loads one bundled network and checks it.
pub fn bundled_network(name: &str) -> Result<NetworkProfile> {
    let text = bundled_network_toml(name).ok_or_else(|| Error::UnknownNetwork(name.to_string()))?;
    let profile = network_from_toml(text)?;
    profile.validate().into_result(&format!("network {name}"))?;
    Ok(profile)
}

/// Loads every bundled file.
pub fn bundled() -> Result<Calibration> {
    let networks = network_names()
        .map(bundled_network)
        .collect::<Result<Vec<_>>>()?;
    let cal = calibration_from_toml(CALIBRATION_TOML, networks)?;
    cal.constants.validate().into_result("constants")?;
    cal.client.validate().into_result("client device")?;
    cal.server.validate().into_result("server device")?;
    Ok(cal)
}

/// Loads a directory laid out like [`write_files`] output. Bundled network
/// names keep their bundled order; other files follow in file-name order.
pub fn load_dir(dir: &std::path::Path) -> Result<Calibration> {
    let read = |p: &std::path::Path| {
        std::fs::read_to_string(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir.join("networks"))
        .map_err(|e| Error::Data(format!("{}: {e}", dir.join("networks").display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        (network_names().position(|n| n == stem).unwrap_or(usize::MAX), p.clone())
    });
    let mut networks = Vec::new();
    for p in &paths {
        let n = network_from_toml(&read(p)?)?;
        n.validate().into_result(&format!("network {}", p.display()))?;
        networks.push(n);
    }
    let cal = calibration_from_toml(&read(&dir.join("calibration.toml"))?, networks)?;
    cal.constants.validate().into_result("constants")?;
    cal.client.validate().into_result("client device")?;
    cal.server.validate().into_result("server device")?;
    Ok(cal)
}

/// Writes `calibration.toml` and `networks/<name>.toml` under `dir`.
pub fn write_files(cal: &Calibration, dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    let nets = dir.join("networks");
    std::fs::create_dir_all(&nets)?;
    let mut written = Vec::new();
    let path = dir.join("calibration.toml");
    std::fs::write(&path, calibration_to_toml(cal))?;
    written.push(path);
    for n in &cal.networks {
        let path = nets.join(format!("{}.toml", n.name));
        std::fs::write(&path, network_to_toml(n))?;
        written.push(path);
    }
    Ok(written)
}
