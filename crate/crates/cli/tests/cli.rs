//! End-to-end behavior of the command-line driver: exit codes, precedence
//! of flags over config fields, and a small synthetic fit round trip.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cjlab"))
}

fn run(args: &[&str], dir: &Path) -> std::process::Output {
    bin().args(args).current_dir(dir).output().expect("spawn")
}

#[test]
fn scan_emits_the_interference_parabolas() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run(
        &[
            "scan",
            "--param",
            "t",
            "--start",
            "0",
            "--stop",
            "1",
            "--steps",
            "5",
            "--quantity",
            "hom_p11",
            "--output",
            "hom.csv",
        ],
        dir,
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("hom.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,hom_p11");
    let mid: Vec<&str> = rows[3].split(',').collect(); // t = 0.5
    assert_eq!(mid[1].parse::<f64>().unwrap(), 0.0);

    let out = run(
        &[
            "scan",
            "--param",
            "g",
            "--start",
            "1",
            "--stop",
            "4",
            "--steps",
            "7",
            "--quantity",
            "cj_p11",
            "--output",
            "cj.csv",
        ],
        dir,
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("cj.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    let at_two: Vec<&str> = rows[3].split(',').collect(); // g = 2
    assert_eq!(at_two[1].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn scan_of_transmission_suppresses_p1_at_high_gain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"model": {"gain": 2.03, "o1": 0.65, "o2": 0.74, "eta": 0.78}}"#,
    )
    .unwrap();
    let out = run(
        &[
            "scan",
            "--config",
            "cfg.json",
            "--param",
            "transmission",
            "--start",
            "0",
            "--stop",
            "1",
            "--steps",
            "6",
            "--quantity",
            "p1_true",
            "--output",
            "t.csv",
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.join("t.csv")).unwrap();
    let p1: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // one-pair output probability decreases as more photon pairs get in
    for w in p1.windows(2) {
        assert!(w[1] < w[0], "P1 not decreasing: {p1:?}");
    }
}

#[test]
fn flags_override_config_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"scan": {"param": "g", "start": 1.0, "stop": 4.0, "steps": 4},
            "quantities": ["cj_p11"]}"#,
    )
    .unwrap();
    let out = run(
        &[
            "scan", "--config", "cfg.json", "--steps", "2", "--output", "s.csv",
        ],
        dir,
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 3, "flag --steps should win over file");
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // 2: malformed config, with position information
    std::fs::write(dir.join("bad.json"), "{ nope").unwrap();
    let out = run(
        &[
            "scan",
            "--config",
            "bad.json",
            "--param",
            "g",
            "--start",
            "1",
            "--stop",
            "2",
            "--steps",
            "3",
            "--quantity",
            "cj_p11",
            "--output",
            "o.csv",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    // 2: missing seed for a stochastic command
    std::fs::write(dir.join("cfg.json"), r#"{"pulses": 1000}"#).unwrap();
    let out = run(
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--output-stats",
            "s.json",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    // 2: missing fit stage, named by clap
    let out = run(&["fit", "--spdc", "x.json", "--output", "r.json"], dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("--h-input") && err.contains("--v-input"));
    // 4: unwritable output path
    let out = run(
        &[
            "scan",
            "--param",
            "g",
            "--start",
            "1",
            "--stop",
            "2",
            "--steps",
            "3",
            "--quantity",
            "cj_p11",
            "--output",
            "/nonexistent-dir/o.csv",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(4));
    // 2: unknown config field is rejected
    std::fs::write(dir.join("typo.json"), r#"{"modle": {}}"#).unwrap();
    let out = run(
        &[
            "scan",
            "--config",
            "typo.json",
            "--param",
            "g",
            "--start",
            "1",
            "--stop",
            "2",
            "--steps",
            "3",
            "--quantity",
            "cj_p11",
            "--output",
            "o.csv",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_then_fit_recovers_the_generating_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let stages = [("s00", 0.0, 0.0), ("s10", 0.65, 0.0), ("s01", 0.0, 0.74)];
    for (name, o1, o2) in stages {
        std::fs::write(
            dir.join(format!("{name}.json")),
            format!(
                r#"{{"model": {{"gain": 1.6, "o1": {o1}, "o2": {o2}, "eta": 0.78}},
                     "detectors": {{"count": 6, "total_eta": 0.78}},
                     "pulses": 400000, "seed": 5}}"#
            ),
        )
        .unwrap();
        let out = run(
            &[
                "simulate",
                "--config",
                &format!("{name}.json"),
                "--output-stats",
                &format!("{name}_stats.json"),
            ],
            dir,
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = run(
        &[
            "fit",
            "--spdc",
            "s00_stats.json",
            "--h-input",
            "s10_stats.json",
            "--v-input",
            "s01_stats.json",
            "--output",
            "report.json",
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let g = report["gain"]["value"].as_f64().unwrap();
    let o1 = report["o1"]["value"].as_f64().unwrap();
    let o2 = report["o2"]["value"].as_f64().unwrap();
    assert!((g - 1.6).abs() < 0.02, "g = {g}");
    assert!((o1 - 0.65).abs() < 0.03, "o1 = {o1}");
    assert!((o2 - 0.74).abs() < 0.03, "o2 = {o2}");
    assert!(report["deduced_p_n"].as_array().unwrap().len() > 10);
    // the report embeds the resolved model, so a reader can re-run it
    assert!((report["resolved_model"]["gain"].as_f64().unwrap() - g).abs() < 1e-12);
}

#[test]
fn vacuum_bundle_is_flagged_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("vac.json"),
        r#"{"c_m": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            "detectors": {"count": 6, "total_eta": 0.78, "dead_pulses": 0}}"#,
    )
    .unwrap();
    let out = run(
        &[
            "fit",
            "--spdc",
            "vac.json",
            "--h-input",
            "vac.json",
            "--v-input",
            "vac.json",
            "--output",
            "rep.json",
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("rep.json")).unwrap()).unwrap();
    assert!((report["gain"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(report["gain"]["at_boundary"].as_bool(), Some(true));
    assert_eq!(report["degenerate_overlaps"].as_bool(), Some(true));
}

#[test]
fn invert_round_trips_simulated_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"model": {"gain": 1.2, "o1": 0.0, "o2": 0.0, "eta": 0.78},
            "detectors": {"count": 6, "total_eta": 0.78},
            "pulses": 3000000, "seed": 99}"#,
    )
    .unwrap();
    let out = run(
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--output-stats",
            "st.json",
        ],
        dir,
    );
    assert!(out.status.success());
    let out = run(
        &[
            "invert", "--stats", "st.json", "--orders", "5", "--cutoff", "6", "--output",
            "inv.json",
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let inv: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("inv.json")).unwrap()).unwrap();
    let p1 = inv["p1_estimate"].as_f64().unwrap();
    let sigma = inv["p1_sigma"].as_f64().unwrap();
    let truth = 0.2 / 1.44; // one-pair probability of spontaneous PDC at g = 1.2
    assert!((p1 - truth).abs() < 4.0 * sigma, "p1 = {p1} ± {sigma}");
    assert_eq!(inv["ill_conditioned"].as_bool(), Some(true)); // eta/6 = 0.13
}

#[test]
fn record_files_round_trip_through_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"model": {"gain": 1.4, "o1": 0.0, "o2": 0.0, "eta": 0.6},
            "detectors": {"count": 5, "total_eta": 0.6},
            "pulses": 20000, "seed": 3}"#,
    )
    .unwrap();
    let out = run(
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--output-record",
            "r.cjmc",
            "--output-stats",
            "s.json",
        ],
        dir,
    );
    assert!(out.status.success());
    let record = cjlab_core::ClickRecord::read_from(&dir.join("r.cjmc")).unwrap();
    assert_eq!(record.detectors(), 5);
    assert_eq!(record.pulses(), 20000);
    let stats = cjlab_core::estimate_cm(&record, 5).unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("s.json")).unwrap()).unwrap();
    for m in 1..=5 {
        let from_file = file["c_m"][m - 1].as_f64().unwrap();
        assert!((stats.get(m) - from_file).abs() < 1e-15);
    }
}
