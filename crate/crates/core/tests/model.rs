mod common;

use common::*;
use pisim_core::calibration;
use pisim_core::*;
use proptest::prelude::*;

#[test]
fn bundled_networks_are_valid() {
    for name in calibration::network_names() {
        let n = calibration::bundled_network(name).unwrap();
        assert!(n.validate().is_valid(), "{name}: {}", n.validate());
    }
}

#[test]
fn reference_relu_count_matches_storage_quotient() {
    // 41 GB of client storage at 18.2 KB per ReLU.
    let oracle = 41e9 / 18_200.0;
    let n = reference();
    let rel = (n.total_relus as f64 - oracle).abs() / oracle;
    assert!(rel < 0.03, "total_relus {} vs quotient {oracle}", n.total_relus);
}

#[test]
fn reference_storage_both_variants() {
    let c = cal();
    let n = reference();
    let sg = storage_per_inference(&n, &c.constants, ProtocolVariant::ServerGarbler);
    let cg = storage_per_inference(&n, &c.constants, ProtocolVariant::ClientGarbler);
    assert!(rel_close(sg.client_bytes, 41e9, 0.03), "{}", sg.client_bytes);
    assert!(rel_close(cg.client_bytes, 8e9, 0.10), "{}", cg.client_bytes);
}

#[test]
fn storage_ratio_across_bundled_networks() {
    let c = cal();
    for n in &c.networks {
        let sg = storage_per_inference(n, &c.constants, ProtocolVariant::ServerGarbler);
        let cg = storage_per_inference(n, &c.constants, ProtocolVariant::ClientGarbler);
        let r = sg.client_bytes / cg.client_bytes;
        assert!((4.5..=6.0).contains(&r), "{}: ratio {r}", n.name);
    }
}

fn bare(gc: f64, enc: f64) -> CostConstants {
    CostConstants {
        gc_bytes_per_relu: gc,
        garbler_encoding_bytes_per_relu: enc,
        ot_offline_bytes_per_relu: 0.0,
        randomness_bytes_per_element: 0.0,
        ..cal().constants
    }
}

proptest! {
    #[test]
    fn zero_overhead_ratio_is_gc_over_encoding(relus in 1u64..5_000_000, enc in 1.0f64..10_000.0, extra in 1.0f64..50_000.0) {
        let c = bare(enc + extra, enc);
        let n = toy(relus);
        let sg = storage_per_inference(&n, &c, ProtocolVariant::ServerGarbler);
        let cg = storage_per_inference(&n, &c, ProtocolVariant::ClientGarbler);
        prop_assert!(rel_close(sg.client_bytes / cg.client_bytes, (enc + extra) / enc, 1e-12));
    }

    #[test]
    fn storage_is_linear_in_relus(relus in 1u64..1_000_000, k in 2u64..20) {
        let c = bare(18_200.0, 3_500.0);
        for v in [ProtocolVariant::ServerGarbler, ProtocolVariant::ClientGarbler] {
            let one = storage_per_inference(&toy(relus), &c, v);
            let many = storage_per_inference(&toy(relus * k), &c, v);
            prop_assert!(rel_close(many.client_gc_bytes, one.client_gc_bytes * k as f64, 1e-12));
            prop_assert!(rel_close(many.server_gc_bytes, one.server_gc_bytes * k as f64, 1e-12));
        }
    }

    #[test]
    fn variant_swap_swaps_gc_terms(relus in 1u64..1_000_000) {
        let c = bare(18_200.0, 3_500.0);
        let n = toy(relus);
        let sg = storage_per_inference(&n, &c, ProtocolVariant::ServerGarbler);
        let cg = storage_per_inference(&n, &c, ProtocolVariant::ClientGarbler);
        prop_assert_eq!(sg.client_gc_bytes, cg.server_gc_bytes);
        prop_assert_eq!(sg.server_gc_bytes, cg.client_gc_bytes);
        prop_assert_eq!(sg.client_randomness_bytes, cg.client_randomness_bytes);
    }
}

#[test]
fn validation_catches_each_invariant() {
    let mut n = toy(5);
    n.layers.push(relu(2, 0));
    n.layers.push(relu(3, 1));
    n.total_relus = 6;
    n.n_linear = 1;
    let report = n.validate();
    let text = report.to_string();
    assert!(text.contains("relu_count >= 1"), "{text}");
    assert!(text.contains("consecutive ReLU"), "{text}");
}

#[test]
fn consecutive_linear_layers_are_allowed() {
    let n = NetworkProfile::from_layers(
        "pooled",
        4,
        vec![linear(0, 1.0, 8.0, 4, 4, 4), linear(1, 1.0, 8.0, 4, 4, 4), relu(2, 4)],
    );
    assert!(n.validate().is_valid());
}

#[test]
fn device_and_constants_bounds() {
    let mut d = reference_device(Party::Client);
    d.compute_scale.he = 0.0;
    assert!(d.validate().violations[0].contains("compute_scale.he"));
    let mut c = cal().constants;
    c.gc_bytes_per_relu = 100.0;
    assert!(c
        .validate()
        .violations
        .iter()
        .any(|v| v.contains("gc_bytes_per_relu > garbler_encoding_bytes_per_relu")));
}
