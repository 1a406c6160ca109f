mod common;

use common::*;
use pisim_core::calibration::{self, REFERENCE_NETWORK};
use pisim_core::*;
use proptest::prelude::*;

fn within(got: f64, want: f64, tol: f64) {
    assert!(rel_close(got, want, tol), "got {got}, want {want} ±{}%", tol * 100.0);
}

#[test]
fn reference_breakdown_server_garbler() {
    let c = inputs(REFERENCE_NETWORK, ProtocolConfig::baseline(ProtocolVariant::ServerGarbler))
        .phase_costs()
        .unwrap();
    within(c.offline.gc_s(), 25.1, 0.01);
    within(c.offline.he_s(), 1080.0, 0.01);
    within(c.offline.comm_total_s, 704.0, 0.01);
    within(c.offline.total_s, 1809.0, 0.01);
    within(c.online.gc_s(), 200.0, 0.01);
    within(c.online.ss_s(), 0.610, 0.01);
    within(c.online.comm_total_s, 42.5, 0.01);
    within(c.online.total_s, 243.0, 0.01);
    within(c.total_s, 2052.0, 0.01);
    assert!((660.0..=747.0).contains(&c.comm_total_s()));
    assert_eq!(c.upload_fraction, 0.5);
}

#[test]
fn totals_are_sums_of_parts() {
    let cal = cal();
    for n in &cal.networks {
        for v in [ProtocolVariant::ServerGarbler, ProtocolVariant::ClientGarbler] {
            for p in [ProtocolConfig::baseline(v), ProtocolConfig::optimized(v)] {
                let c = inputs(&n.name, p).phase_costs().unwrap();
                for b in [&c.offline, &c.online] {
                    within(b.total_s, b.compute.total() + b.comm_total_s, 1e-12);
                    within(b.comm_total_s, b.comm_s.upload + b.comm_s.download, 1e-12);
                }
                within(c.total_s, c.offline.total_s + c.online.total_s, 1e-12);
            }
        }
    }
}

#[test]
fn optimized_client_garbler_total() {
    let c = inputs(REFERENCE_NETWORK, ProtocolConfig::optimized(ProtocolVariant::ClientGarbler))
        .phase_costs()
        .unwrap();
    within(c.total_s, 1052.0, 0.02);
}

#[test]
fn optimized_server_garbler_reduction() {
    let base = inputs(REFERENCE_NETWORK, ProtocolConfig::baseline(ProtocolVariant::ServerGarbler))
        .phase_costs()
        .unwrap();
    let opt = inputs(REFERENCE_NETWORK, ProtocolConfig::optimized(ProtocolVariant::ServerGarbler))
        .phase_costs()
        .unwrap();
    let reduction = 1.0 - opt.total_s / base.total_s;
    assert!((0.52..0.58).contains(&reduction), "reduction {reduction}");
    assert!(opt.total_s < inputs(REFERENCE_NETWORK, ProtocolConfig::optimized(ProtocolVariant::ClientGarbler))
        .phase_costs()
        .unwrap()
        .total_s);
}

#[test]
fn lphe_reference_he_drops_to_max_layer() {
    let mut p = ProtocolConfig::baseline(ProtocolVariant::ServerGarbler);
    let seq = inputs(REFERENCE_NETWORK, p).phase_costs().unwrap();
    p.lphe_enabled = true;
    let par = inputs(REFERENCE_NETWORK, p).phase_costs().unwrap();
    within(seq.offline.he_s(), 1080.0, 0.01);
    within(par.offline.he_s(), 141.0, 0.01);
    within(seq.total_s - par.total_s, seq.offline.he_s() - par.offline.he_s(), 1e-9);
}

/// Independent fold over layer entries.
fn fold_oracle(he: &[f64]) -> (f64, f64) {
    he.iter().fold((0.0, 0.0), |(s, m), &x| (s + x, if x > m { x } else { m }))
}

fn he_of(network: &NetworkProfile, lphe: bool) -> f64 {
    let p = ProtocolConfig {
        lphe_enabled: lphe,
        ..ProtocolConfig::baseline(ProtocolVariant::ServerGarbler)
    };
    let client = reference_device(Party::Client);
    let server = reference_device(Party::Server);
    phase_costs(network, &cal().constants, &p, &client, &server, &LinkProfile::default())
        .unwrap()
        .offline
        .he_s()
}

#[test]
fn lphe_bundled_vectors_sum_and_max() {
    for n in &cal().networks {
        let (sum, max) = fold_oracle(&n.he_latencies_ref_s());
        assert!(rel_close(he_of(n, false), sum, 1e-12), "{}", n.name);
        assert_eq!(he_of(n, true), max, "{}", n.name);
        let speedup = sum / max;
        assert!(speedup >= 1.0 && speedup <= n.n_linear as f64);
    }
}

#[test]
fn lphe_mean_speedup_across_bundled_pairs() {
    let speedups: Vec<f64> = cal()
        .networks
        .iter()
        .map(|n| {
            let (s, m) = fold_oracle(&n.he_latencies_ref_s());
            s / m
        })
        .collect();
    assert_eq!(speedups.len(), 6);
    within(stats::geometric_mean(&speedups), 9.7, 0.05);
}

#[test]
fn lphe_single_linear_layer_is_identity() {
    let n = toy(10);
    assert_eq!(he_of(&n, true), he_of(&n, false));
}

#[test]
fn lphe_rejects_aggregate_he() {
    let mut t = build_trace(&toy(3), &cal().constants, ProtocolVariant::ServerGarbler);
    for s in &mut t.steps {
        if let StepKind::Compute { primitive: Primitive::He, work, .. } = &mut s.kind {
            *work = Work::Aggregate { seconds: 2.0 };
        }
    }
    let d = reference_device(Party::Client);
    let e = compute_latency(&t, &d, &d, true).unwrap_err();
    assert_eq!(e.to_string(), "LPHE requires per-layer HE costs");
    assert!(compute_latency(&t, &d, &d, false).is_ok());
}

proptest! {
    #[test]
    fn lphe_matches_fold_on_random_vectors(he in proptest::collection::vec(0.0f64..500.0, 1..40)) {
        let mut layers = Vec::new();
        for (i, &h) in he.iter().enumerate() {
            layers.push(linear(2 * i, h, 64.0, 100, 8, 8));
            layers.push(relu(2 * i + 1, 8));
        }
        let n = NetworkProfile::from_layers("rand", 8, layers);
        let (sum, max) = fold_oracle(&he);
        prop_assert!(rel_close(he_of(&n, false), sum, 1e-12) || sum == 0.0);
        prop_assert_eq!(he_of(&n, true), max);
    }
}

fn ladder() -> [WhatIfFactors; 5] {
    let id = WhatIfFactors::IDENTITY;
    let gc = WhatIfFactors { gc_speedup: 100.0, ..id };
    let he = gc.then(WhatIfFactors { he_speedup: 1000.0, ..id });
    let bw = he.then(WhatIfFactors { bandwidth_multiplier: 10.0, ..id });
    let relu = bw.then(WhatIfFactors { relu_reduction: 10.0, ..id });
    [id, gc, he, bw, relu]
}

#[test]
fn whatif_ladder() {
    let base = inputs(REFERENCE_NETWORK, ProtocolConfig::optimized(ProtocolVariant::ClientGarbler));
    let expected = [1052.0, 645.0, 492.0, 54.0, 6.0];
    let results: Vec<PhaseCosts> = ladder().iter().map(|f| apply_whatif(&base, f).unwrap()).collect();
    for (c, want) in results.iter().zip(expected) {
        within(c.total_s, want, 0.05);
    }
    within(results[3].online.total_s, 12.0, 0.05);
    within(results[4].online.total_s, 1.63, 0.05);
    within(results[0].total_s / results[1].total_s, 1.63, 0.05);
}

#[test]
fn whatif_identity_is_noop() {
    let base = inputs(REFERENCE_NETWORK, ProtocolConfig::baseline(ProtocolVariant::ServerGarbler));
    assert_eq!(apply_whatif(&base, &WhatIfFactors::IDENTITY).unwrap(), base.phase_costs().unwrap());
}

#[test]
fn whatif_rejects_slowdowns() {
    let base = inputs(REFERENCE_NETWORK, ProtocolConfig::baseline(ProtocolVariant::ServerGarbler));
    let bad = WhatIfFactors { he_speedup: 0.5, ..WhatIfFactors::IDENTITY };
    let e = apply_whatif(&base, &bad).unwrap_err().to_string();
    assert!(e.contains("he_speedup >= 1"), "{e}");
}

#[test]
fn whatif_factor_order_is_irrelevant() {
    let base = inputs(REFERENCE_NETWORK, ProtocolConfig::baseline(ProtocolVariant::ClientGarbler));
    let id = WhatIfFactors::IDENTITY;
    let singles = [
        WhatIfFactors { gc_speedup: 100.0, ..id },
        WhatIfFactors { he_speedup: 1000.0, ..id },
        WhatIfFactors { bandwidth_multiplier: 10.0, ..id },
        WhatIfFactors { relu_reduction: 10.0, ..id },
    ];
    let all = apply_whatif(&base, &singles.iter().fold(id, |a, &b| a.then(b))).unwrap();
    // Every permutation, applied one factor at a time to the inputs.
    let mut order = [0usize, 1, 2, 3];
    let mut seen = 0;
    permute(&mut order, 0, &mut |perm| {
        let mut cur = base.clone();
        for &i in perm {
            cur = cur.with_whatif(&singles[i]).unwrap();
        }
        let c = cur.phase_costs().unwrap();
        assert!(rel_close(c.total_s, all.total_s, 1e-9), "{perm:?}: {} vs {}", c.total_s, all.total_s);
        assert!(rel_close(c.online.total_s, all.online.total_s, 1e-9));
        seen += 1;
    });
    assert_eq!(seen, 24);
}

fn permute(a: &mut [usize; 4], k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == a.len() {
        f(a);
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permute(a, k + 1, f);
        a.swap(k, i);
    }
}

fn components(c: &PhaseCosts) -> Vec<f64> {
    let mut v = Vec::new();
    for b in [&c.offline, &c.online] {
        v.extend([b.gc_s(), b.he_s(), b.ss_s(), b.comm_total_s, b.total_s]);
    }
    v.push(c.total_s);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn speedups_never_increase_latency(
        gc in 1.0f64..200.0,
        he in 1.0f64..2000.0,
        bw in 1.0f64..20.0,
        relu in 1.0f64..20.0,
        which in 0usize..4,
        bump in 1.0f64..10.0,
        cg in any::<bool>(),
        lphe in any::<bool>(),
    ) {
        let v = if cg { ProtocolVariant::ClientGarbler } else { ProtocolVariant::ServerGarbler };
        let p = ProtocolConfig { lphe_enabled: lphe, ..ProtocolConfig::baseline(v) };
        let base = inputs("resnet32-cifar100", p);
        let f = WhatIfFactors { gc_speedup: gc, he_speedup: he, bandwidth_multiplier: bw, relu_reduction: relu };
        let mut g = f;
        match which {
            0 => g.gc_speedup *= bump,
            1 => g.he_speedup *= bump,
            2 => g.bandwidth_multiplier *= bump,
            _ => g.relu_reduction *= bump,
        }
        let a = components(&apply_whatif(&base, &f).unwrap());
        let b = components(&apply_whatif(&base, &g).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*y <= *x * (1.0 + 1e-12), "{y} > {x}");
        }
    }

    #[test]
    fn comm_scales_inversely_with_bandwidth(k in 1.0f64..100.0, f in 0.01f64..0.99) {
        let c = cal();
        let t = build_trace(&reference(), &c.constants, ProtocolVariant::ServerGarbler);
        let link = LinkProfile::default().with_upload_fraction(f);
        let wide = LinkProfile { total_bandwidth_bps: link.total_bandwidth_bps * k, ..link };
        let a = comm_latency(&t, &link);
        let b = comm_latency(&t, &wide);
        prop_assert!(rel_close(b.total_s * k, a.total_s, 1e-12));
    }
}

#[test]
fn overlap_mode_takes_max_per_phase() {
    let c = cal();
    let t = build_trace(&reference(), &c.constants, ProtocolVariant::ServerGarbler);
    let serial = comm_latency(&t, &LinkProfile::default());
    let overlap = comm_latency(&t, &LinkProfile { overlap_directions: true, ..LinkProfile::default() });
    within(overlap.offline_total_s, serial.offline_s.upload.max(serial.offline_s.download), 1e-12);
    within(overlap.online_total_s, serial.online_s.upload.max(serial.online_s.download), 1e-12);
    assert!(overlap.total_s <= serial.total_s);
}

#[test]
fn per_message_overhead_adds_per_transfer() {
    let c = cal();
    let t = build_trace(&toy(100), &c.constants, ProtocolVariant::ServerGarbler);
    let transfers = t.steps.iter().filter(|s| s.bytes().is_some()).count() as f64;
    let plain = comm_latency(&t, &LinkProfile::default());
    let slow = comm_latency(&t, &LinkProfile { per_message_overhead_s: 0.01, ..LinkProfile::default() });
    within(slow.total_s - plain.total_s, 0.01 * transfers, 1e-9);
}

#[test]
fn client_slowdown_scales_client_work_only() {
    let cal = cal();
    let n = reference();
    let p = ProtocolConfig::baseline(ProtocolVariant::ServerGarbler);
    let slow = phase_costs(&n, &cal.constants, &p, &cal.client, &cal.server, &LinkProfile::default()).unwrap();
    let fast_client = reference_device(Party::Client);
    let fast = phase_costs(&n, &cal.constants, &p, &fast_client, &cal.server, &LinkProfile::default()).unwrap();
    let k = cal.client.compute_scale.gc_eval;
    within(slow.online.compute.get(Party::Client, Primitive::GcEval), fast.online.compute.get(Party::Client, Primitive::GcEval) * k, 1e-12);
    assert_eq!(slow.offline.compute.party(Party::Server), fast.offline.compute.party(Party::Server));
}

#[test]
fn fixed_split_is_respected_and_validated() {
    let mut i = inputs(REFERENCE_NETWORK, ProtocolConfig::baseline(ProtocolVariant::ServerGarbler));
    i.protocol.wsa_mode = WsaMode::Fixed(0.25);
    assert_eq!(i.phase_costs().unwrap().upload_fraction, 0.25);
    i.protocol.wsa_mode = WsaMode::Fixed(1.2);
    assert!(i.phase_costs().is_err());
}

#[test]
fn bundled_calibration_matches_fit() {
    let fitted = calibration::fit(&calibration::Anchors::default()).unwrap();
    let bundled = cal();
    assert!(rel_close(bundled.he_exponent, fitted.he_exponent, 1e-12));
    assert!(rel_close(bundled.he_scale_s, fitted.he_scale_s, 1e-12));
    assert_eq!(bundled.networks.len(), fitted.networks.len());
    for (a, b) in bundled.networks.iter().zip(&fitted.networks) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.total_relus, b.total_relus);
        for (x, y) in a.he_latencies_ref_s().iter().zip(b.he_latencies_ref_s()) {
            assert!(rel_close(*x, y, 1e-12));
        }
    }
    let (a, b) = (bundled.constants, fitted.constants);
    for (x, y) in [
        (a.gc_garble_s_per_relu_ref, b.gc_garble_s_per_relu_ref),
        (a.gc_eval_s_per_relu_ref, b.gc_eval_s_per_relu_ref),
        (a.ss_online_s_per_mac_ref, b.ss_online_s_per_mac_ref),
    ] {
        assert!(rel_close(x, y, 1e-12));
    }
}
