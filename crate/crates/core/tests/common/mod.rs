#![allow(dead_code)]

use pisim_core::calibration::{self, Calibration};
use pisim_core::*;

pub fn cal() -> Calibration {
    calibration::bundled().expect("bundled calibration loads")
}

pub fn reference() -> NetworkProfile {
    cal().network(calibration::REFERENCE_NETWORK).unwrap().clone()
}

pub fn linear(index: usize, he: f64, share: f64, macs: u64, inputs: u64, outputs: u64) -> LayerSpec {
    LayerSpec {
        index,
        kind: LayerKind::Linear {
            he_latency_ref_s: he,
            share_bytes: share,
            macs,
            input_elements: inputs,
            output_elements: outputs,
        },
    }
}

pub fn relu(index: usize, n: u64) -> LayerSpec {
    LayerSpec {
        index,
        kind: LayerKind::Relu { relu_count: n },
    }
}

/// One linear layer followed by one ReLU layer.
pub fn toy(relus: u64) -> NetworkProfile {
    NetworkProfile::from_layers(
        "toy",
        4,
        vec![linear(0, 2.0, 32.0, 16, 4, relus), relu(1, relus)],
    )
}

pub fn reference_device(role: Party) -> DeviceProfile {
    DeviceProfile {
        name: role.as_str().to_string(),
        role,
        compute_scale: ComputeScale::REFERENCE,
        storage_capacity_bytes: 1e12,
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

pub fn inputs(network: &str, protocol: ProtocolConfig) -> CostInputs {
    let c = cal();
    CostInputs {
        network: c.network(network).unwrap().clone(),
        constants: c.constants,
        protocol,
        client: c.client.clone(),
        server: c.server.clone(),
        link: LinkProfile::default(),
    }
}
