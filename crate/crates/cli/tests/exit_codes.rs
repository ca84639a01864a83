use std::path::Path;
use std::process::Command;

const QUICK: &str = r#"
[partition]
k = 4
[anneal]
max_stages = 20
[global]
max_iters = 10
[detailed]
n_dpi = 3
final_paths = 3
"#;

fn place(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_place")).args(args).env("RUST_LOG", "warn").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generated(dir: &Path) {
    let (code, err) = place(&["gen", "--preset", "small", "--seed", "3", "--out", s(dir)]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn successful_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path());
    let cfg = dir.path().join("quick.toml");
    std::fs::write(&cfg, QUICK).unwrap();
    let out = dir.path().join("run");
    let (code, err) = place(&[
        "--design",
        s(&dir.path().join("netlist.json")),
        "--device",
        s(&dir.path().join("device.json")),
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--threads",
        "1",
        "--out",
        s(&out),
        "--ablate",
        "cfg5",
        "--svg",
        "--trace",
    ]);
    assert_eq!(code, 0, "{err}");
    for f in ["placement.json", "report.json", "placement.svg", "gp_trace.csv", "dp_trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["legality"]["legal"], true);
}

#[test]
fn infeasible_design_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path());
    // drop every DSP column from the device
    let dev_path = dir.path().join("device.json");
    let mut dev: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dev_path).unwrap()).unwrap();
    dev["columns"].as_array_mut().unwrap().retain(|c| c["kind"] != "DSP");
    std::fs::write(&dev_path, dev.to_string()).unwrap();
    let cfg = dir.path().join("quick.toml");
    std::fs::write(&cfg, QUICK).unwrap();
    let out = dir.path().join("run");
    let (code, err) =
        place(&["--design", s(&dir.path().join("netlist.json")), "--device", s(&dev_path), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("DSP"), "{err}");
}

#[test]
fn phase_failure_exits_3_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path());
    let cfg = dir.path().join("quick.toml");
    std::fs::write(&cfg, format!("{QUICK}\n[pack]\nrounds = 0\n")).unwrap();
    let out = dir.path().join("run");
    let (code, err) = place(&[
        "--design",
        s(&dir.path().join("netlist.json")),
        "--device",
        s(&dir.path().join("device.json")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("pack:"), "{err}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["phases"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(place(&["--design", "x.json"]).0, 1);
    assert_eq!(place(&["--design", "missing.json", "--device", "missing.json"]).0, 1);
    assert_eq!(place(&["--bogus"]).0, 1);
    assert_eq!(place(&["--help"]).0, 0);
}
