//! Fixtures shared by the benchmarks.

use pisim_core::calibration::{self, Calibration, REFERENCE_NETWORK};
use pisim_core::{
    build_trace, ContentionPolicy, LinkProfile, ProtocolConfig, ProtocolTrace, ProtocolVariant, SimConfig,
};

pub fn calibration() -> Calibration {
    calibration::bundled().expect("bundled calibration loads")
}

/// Message traces of every bundled network under both protocols.
pub fn traces(cal: &Calibration) -> Vec<ProtocolTrace> {
    cal.networks
        .iter()
        .flat_map(|n| {
            [ProtocolVariant::ServerGarbler, ProtocolVariant::ClientGarbler]
                .map(|v| build_trace(n, &cal.constants, v))
        })
        .collect()
}

/// Baseline protocol on the reference network with 128 GB of client
/// storage, a few runs per rate.
pub fn streaming_config(cal: &Calibration, runs: usize) -> SimConfig {
    let mut client = cal.client.clone();
    client.storage_capacity_bytes = 128e9;
    let mut c = SimConfig::new(
        cal.network(REFERENCE_NETWORK).expect("reference network").clone(),
        cal.constants,
        ProtocolConfig::baseline(ProtocolVariant::ServerGarbler),
        client,
        cal.server.clone(),
        LinkProfile::default(),
    );
    c.runs = runs;
    c.contention = ContentionPolicy::Exclusive;
    c
}

/// `n` geometric rates between one every 3 h and one every 15 min.
pub fn rates(n: usize) -> Vec<f64> {
    let (lo, hi): (f64, f64) = (1.0 / 10800.0, 1.0 / 900.0);
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}
