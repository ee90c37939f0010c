use std::fs;
use std::path::Path;

use rampflow::cli::run;

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rampflow").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUIET: &str = r#"
name = "quiet"
dt_seconds = 10

[[cells]]
length = 0.5
free_speed = 100.0
critical_density = 30.0
jam_density = 150.0
ramp_max_rate = 1200.0
ramp_queue_cap = 50.0

[demand]
horizon_steps = 12

[[demand.pulses]]
entry = 0
start_minute = 0
end_minute = 2
rate = 0.0
"#;

#[test]
fn validate_accepts_every_builtin() {
    for name in ["example1", "example2", "grenoble"] {
        let (code, out, _) = invoke(&["validate", "--scenario", &format!("builtin:{name}")]);
        assert_eq!(code, 0, "{name}");
        assert!(out.trim_end().ends_with("ok"), "{out}");
    }
}

#[test]
fn missing_scenario_file_is_an_input_error() {
    let (code, _, err) = invoke(&["simulate", "--scenario", "/nonexistent/rampflow.toml"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, _, _) = invoke(&["simulate", "--scenario", "builtin:example1", "--bogus"]);
    assert_eq!(code, 2);
}

#[test]
fn nonpositive_gain_breaks_the_contract() {
    let (code, _, err) = invoke(&["simulate", "--scenario", "builtin:example1", "--controller", "alinea", "--ki=-1"]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn optimum_of_a_capacity_drop_plant_is_unsupported() {
    let (code, _, _) = invoke(&[
        "simulate",
        "--scenario",
        "builtin:example1",
        "--capacity-drop",
        "0.1",
        "--with-lp",
    ]);
    assert_eq!(code, 4);
}

#[test]
fn imported_trajectory_must_match_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let (code, _, _) = invoke(&["simulate", "--scenario", "builtin:example2", "--controller", "none", "--out", path(&sim)]);
    assert_eq!(code, 0);
    // example 2 lasts 10 minutes at 10 s steps; the quiet scenario only 12 steps
    let quiet = dir.path().join("quiet.toml");
    fs::write(&quiet, QUIET).unwrap();
    let (code, _, err) = invoke(&[
        "report",
        "--scenario",
        path(&quiet),
        "--trajectory",
        path(&sim.join("trajectory.csv")),
        "--out",
        path(&dir.path().join("report")),
    ]);
    assert_eq!(code, 5, "{err}");
}

#[test]
fn simulation_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let (code, _, err) = invoke(&[
            "simulate",
            "--scenario",
            "builtin:example1",
            "--sigma-phi",
            "0.05",
            "--seed",
            "11",
            "--out",
            path(&out),
        ]);
        assert_eq!(code, 0, "{err}");
        outputs.push((fs::read(out.join("trajectory.csv")).unwrap(), fs::read(out.join("report.json")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn simulate_reports_the_certificate_and_optimum() {
    let (code, out, _) = invoke(&["simulate", "--scenario", "builtin:example1"]);
    assert_eq!(code, 0);
    // a plain summary precedes the JSON report
    let report: serde_json::Value = serde_json::from_str(&out[out.find('{').unwrap()..]).unwrap();
    assert_eq!(report["certificate"], "bounded");
    let lp = report["lp_optimum"].as_f64().unwrap();
    assert!((lp - 11.170016261).abs() < 1e-6, "{lp}");
}

#[test]
fn optimize_writes_solution_and_program() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("nested/example2.lp");
    let out = dir.path().join("opt");
    let (code, stdout, err) = invoke(&[
        "optimize",
        "--scenario",
        "builtin:example2",
        "--export-lp",
        path(&lp),
        "--out",
        path(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("holds"), "{stdout}");
    let program = fs::read_to_string(&lp).unwrap();
    assert!(program.starts_with("\\") && program.contains("Minimize") && program.trim_end().ends_with("End"));
    let solution: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(solution["status"], "optimal");
}

#[test]
fn optimize_without_demand_reports_no_congestion() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = dir.path().join("quiet.toml");
    fs::write(&quiet, QUIET).unwrap();
    let (code, out, err) = invoke(&["optimize", "--scenario", path(&quiet)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("no congestion"), "{out}");
}

#[test]
fn bounds_and_report_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = invoke(&["bounds", "--scenario", "builtin:example1", "--out", path(dir.path())]);
    assert_eq!(code, 0, "{err}");
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    assert!(bounds["tts_lb"].as_f64().unwrap() <= bounds["tts_be"].as_f64().unwrap());
    assert!(dir.path().join("restrictiveness.csv").exists());

    let report = dir.path().join("report");
    let (code, _, err) = invoke(&["report", "--scenario", "builtin:example2", "--out", path(&report)]);
    assert_eq!(code, 0, "{err}");
    for f in ["heatmap_be.csv", "heatmap_none.csv", "restrictiveness_alinea.csv", "savings.csv"] {
        assert!(report.join(f).exists(), "{f}");
    }
}

#[test]
fn campaign_prints_its_table() {
    let (code, out, err) = invoke(&[
        "campaign",
        "--scenario",
        "builtin:example2",
        "--runs",
        "3",
        "--sigmas",
        "0,0.05",
        "--no-lp",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("variant,"), "{out}");
    assert!(out.lines().count() > 4);
}
