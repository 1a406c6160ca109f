use std::path::Path;
use std::process::{Command, Output};

use pisim_cli::commands;
use pisim_cli::config::{load_config, resolve_str, Overrides, Source};
use pisim_cli::presets;
use pisim_cli::rates::{parse_rate, parse_rates};
use pisim_cli::records::{read_file, strip_timestamp, to_csv, CostRecord, RateRecord, RunRecord, WhatIfRecord};
use pisim_core::calibration;
use pisim_core::{ContentionPolicy, ProtocolVariant, WsaMode};

fn pisim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pisim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn quick() -> Overrides {
    Overrides {
        runs: Some(6),
        rates: Some("geom:1/2h:1/20m:5".to_string()),
        ..Overrides::default()
    }
}

#[test]
fn empty_config_is_rejected() {
    let err = resolve_str("", "empty.toml", &Overrides::default()).unwrap_err();
    assert!(format!("{err:#}").contains("network"), "{err:#}");
}

#[test]
fn out_of_range_fraction_names_the_key() {
    let text = "network = \"resnet18-tinyimagenet\"\n[link]\nupload_fraction = 1.2\n";
    let err = format!("{:#}", resolve_str(text, "bad.toml", &Overrides::default()).unwrap_err());
    assert!(err.contains("link.upload_fraction"), "{err}");
    assert!(err.contains("bad.toml"), "{err}");
}

#[test]
fn all_violations_are_reported_together() {
    let text = "network = \"resnet18-tinyimagenet\"\n[link]\nupload_fraction = 0\ntotal_bandwidth_bps = -1\n[sim]\nruns = 0\n";
    let err = format!("{:#}", resolve_str(text, "bad.toml", &Overrides::default()).unwrap_err());
    for key in ["link.upload_fraction", "link.total_bandwidth_bps", "sim.runs"] {
        assert!(err.contains(key), "{key} missing from: {err}");
    }
}

#[test]
fn unknown_keys_and_networks_are_rejected() {
    assert!(resolve_str("network = \"resnet18-tinyimagenet\"\nbandwith = 1\n", "x", &Overrides::default()).is_err());
    assert!(resolve_str("network = \"resnet18-tinyimagenet\"\n[link]\nbandwith = 1\n", "x", &Overrides::default()).is_err());
    assert!(resolve_str("network = \"alexnet\"\n", "x", &Overrides::default()).is_err());
}

#[test]
fn table1_preset_resolves_to_the_baseline() {
    let r = load_config("preset:table1", &Overrides::default()).unwrap();
    assert_eq!(r.network.name, calibration::REFERENCE_NETWORK);
    assert_eq!(r.protocol.variant, ProtocolVariant::ServerGarbler);
    assert!(!r.protocol.lphe_enabled);
    assert_eq!(r.protocol.wsa_mode, WsaMode::EvenSplit);
    assert_eq!(r.link.total_bandwidth_bps, 1e9);
    assert_eq!(r.link.upload_fraction, 0.5);
}

#[test]
fn every_preset_resolves() {
    let names: Vec<&str> = presets::names().collect();
    assert!(names.len() >= 12);
    for n in names {
        load_config(&format!("preset:{n}"), &Overrides::default()).unwrap_or_else(|e| panic!("{n}: {e:#}"));
    }
    assert!(load_config("preset:nope", &Overrides::default()).is_err());
}

#[test]
fn flags_override_config_and_are_explained() {
    let o = Overrides {
        seed: Some(9),
        protocol: Some(ProtocolVariant::ClientGarbler),
        lphe: Some(true),
        ..Overrides::default()
    };
    let r = load_config("preset:fig8", &o).unwrap();
    assert_eq!(r.sim.seed, 9);
    assert_eq!(r.protocol.variant, ProtocolVariant::ClientGarbler);
    assert!(r.protocol.lphe_enabled);
    assert_eq!(r.sim.contention, ContentionPolicy::Exclusive);
    let source = |key: &str| r.provenance.iter().find(|p| p.key == key).unwrap().source;
    assert_eq!(source("sim.seed"), Source::Flag);
    assert_eq!(source("sim.contention"), Source::Config);
    assert_eq!(source("sim.saturation_samples"), Source::Default);
    assert_eq!(source("client.compute_scale"), Source::Calibration);
    let text = r.explain();
    assert!(text.contains("command-line flag"));
    assert!(text.lines().any(|l| l.starts_with("sim.seed") && l.contains('9')));
}

#[test]
fn rate_syntax() {
    assert_eq!(parse_rate("0.25").unwrap(), 0.25);
    assert_eq!(parse_rate("1/30m").unwrap(), 1.0 / 1800.0);
    assert_eq!(parse_rate("2/h").unwrap(), 2.0 / 3600.0);
    assert!(parse_rate("1/30x").is_err());
    assert!(parse_rate("-1").is_err());
    let g = parse_rates("geom:1/3h:1/15m:30").unwrap();
    assert_eq!(g.len(), 30);
    assert!((g[0] - 1.0 / 10800.0).abs() < 1e-18);
    assert!((g[29] - 1.0 / 900.0).abs() < 1e-15);
    assert!(g.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(parse_rates("lin:1:3:3").unwrap(), vec![1.0, 2.0, 3.0]);
}

#[test]
fn costs_records_match_breakdown() {
    let recs = commands::cost_records(&load_config("preset:table1", &Overrides::default()).unwrap()).unwrap();
    let phases: Vec<&str> = recs.iter().map(|r| r.phase.as_str()).collect();
    assert_eq!(phases, ["offline", "online", "total"]);
    let close = |a: f64, b: f64| (a - b).abs() <= 0.01 * b;
    assert!(close(recs[0].total_s, 1809.0));
    assert!(close(recs[1].total_s, 243.0));
    assert!((recs[2].total_s - recs[0].total_s - recs[1].total_s).abs() < 1e-9);
}

#[test]
fn whatif_ladder() {
    let recs = commands::whatif_records(&load_config("preset:fig12", &Overrides::default()).unwrap()).unwrap();
    let want = [1052.0, 645.0, 492.0, 54.0, 6.0];
    assert_eq!(recs.len(), want.len());
    for (r, w) in recs.iter().zip(want) {
        assert!((r.total_s - w).abs() <= 0.05 * w, "{}: {} vs {w}", r.label, r.total_s);
        let shares = r.gc_share + r.he_share + r.ss_share + r.comm_share;
        assert!((shares - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_rate_sweep_equals_simulate() {
    let o = Overrides {
        runs: Some(5),
        rates: Some("1/40m".to_string()),
        ..Overrides::default()
    };
    let r = load_config("preset:fig8", &o).unwrap();
    let (runs, agg) = commands::simulate_records(&r).unwrap();
    assert_eq!(runs.len(), 5);
    let swept = commands::sweep_cmd(&r).unwrap();
    let rows: Vec<RateRecord> = pisim_cli::records::from_csv(&swept.files[0].body).unwrap();
    assert_eq!(rows, vec![agg]);
}

#[test]
fn simulate_needs_exactly_one_rate() {
    let r = load_config("preset:fig8", &quick()).unwrap();
    assert!(commands::simulate_records(&r).is_err());
    let r = load_config("preset:table1", &Overrides::default()).unwrap();
    assert!(commands::simulate_records(&r).is_err());
    assert!(commands::sweep_cmd(&r).is_err());
}

fn roundtrip<T>(path: &Path, body: &str)
where
    T: serde::de::DeserializeOwned + serde::Serialize + PartialEq + std::fmt::Debug,
{
    let recs: Vec<T> = read_file(path).unwrap();
    assert!(!recs.is_empty());
    assert_eq!(to_csv(&recs).unwrap(), body, "{}", path.display());
}

#[test]
fn written_records_read_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let table1 = load_config("preset:table1", &Overrides::default()).unwrap();
    let report = commands::costs(&table1).unwrap();
    let paths = report.write(dir.path(), "2026-01-01T00:00:00Z").unwrap();
    roundtrip::<CostRecord>(&paths[0], &report.files[0].body);
    assert_eq!(read_file::<CostRecord>(&paths[0]).unwrap(), commands::cost_records(&table1).unwrap());

    let report = commands::whatif(&load_config("preset:fig12", &Overrides::default()).unwrap()).unwrap();
    let paths = report.write(dir.path(), "t").unwrap();
    roundtrip::<WhatIfRecord>(&paths[0], &report.files[0].body);

    let o = Overrides {
        runs: Some(4),
        rates: Some("1/30m".to_string()),
        ..Overrides::default()
    };
    let report = commands::simulate(&load_config("preset:fig8", &o).unwrap()).unwrap();
    let paths = report.write(dir.path(), "t").unwrap();
    roundtrip::<RunRecord>(&paths[0], &report.files[0].body);
    roundtrip::<RateRecord>(&paths[1], &report.files[1].body);
}

#[test]
fn trace_file_parses_after_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let r = load_config("preset:table1", &Overrides::default()).unwrap();
    let paths = commands::trace(&r).unwrap().write(dir.path(), "t").unwrap();
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    let t = pisim_core::ProtocolTrace::from_text(strip_timestamp(&text)).unwrap();
    assert_eq!(t, pisim_core::build_trace(&r.network, &r.calibration.constants, r.protocol.variant));
}

#[test]
fn binary_reruns_are_identical_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let out = |sub: &str| dir.path().join(sub).to_string_lossy().into_owned();
    for sub in ["a", "b"] {
        let o = pisim(&[
            "sweep", "--config", "preset:fig8", "--runs", "4", "--rates", "geom:1/2h:1/20m:4", "--out", &out(sub),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("wrote"));
    }
    let a = std::fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/sweep.csv")).unwrap();
    assert!(a.starts_with("# generated_at: "));
    assert_eq!(strip_timestamp(&a), strip_timestamp(&b));
}

#[test]
fn binary_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "network = \"resnet18-tinyimagenet\"\n[link]\nupload_fraction = 1.2\n").unwrap();
    let o = pisim(&["costs", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("link.upload_fraction"));

    let o = pisim(&["costs", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = pisim(&["presets", "nope"]);
    assert!(!o.status.success());
    let o = pisim(&["costs", "--config", "preset:table1", "--lphe", "maybe"]);
    assert!(!o.status.success());
}

#[test]
fn binary_explain_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = pisim(&["costs", "--config", "preset:table1", "--seed", "3", "--explain", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("sim.seed") && l.contains("command-line flag")));
    assert!(!out.exists());
}

#[test]
fn binary_lists_and_prints_presets() {
    let o = pisim(&["presets"]);
    assert!(o.status.success());
    let list = String::from_utf8_lossy(&o.stdout);
    assert!(list.lines().any(|l| l == "fig8"));
    let o = pisim(&["presets", "table1"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout), presets::get("table1").unwrap());
}

#[test]
fn binary_calibrate_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = pisim(&["calibrate", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = calibration::load_dir(dir.path()).unwrap();
    let bundled = calibration::bundled().unwrap();
    assert_eq!(written.networks.len(), bundled.networks.len());
    for (a, b) in written.networks.iter().zip(&bundled.networks) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.layers.len(), b.layers.len());
    }
}
