use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_etalon"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["slab", "--convention", "sideways"]).status.code(), Some(1));
}

#[test]
fn malformed_config_is_line_anchored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"schema_version\": 1,\n  \"optics\": {\n    \"wavelength\": 5.32e-7\n  }\n}\n").unwrap();
    let out = run(&["slab", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("bad.json:4:"), "{msg}");
    assert!(msg.contains("wavelength"), "{msg}");
}

#[test]
fn provenance_records_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["fringe", "--seed", "9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(p["rng_algorithm"], "ChaCha8Rng");
    assert_eq!(p["seed"], 9);
    assert_eq!(p["command"], "fringe");
    assert!(p["resolved_config"]["mechanics"]["modes"][0]["frequency_hz"].is_f64());
    assert!(p["resolved_config"]["grids"]["freq_hz"]["points"].is_u64());
}

#[test]
fn seed_changes_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed: &str| {
        let out = dir.path().join(seed);
        let o = run(&["fit-airy-lambda", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("data.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn measured_spectrum_in_nanometres() {
    // synthesize once, then feed the file back as measured input
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    assert_eq!(run(&["fit-airy-lambda", "--out", first.to_str().unwrap()]).status.code(), Some(0));
    let data = first.join("data.csv");
    let header = std::fs::read_to_string(&data).unwrap();
    assert!(header.starts_with("wavelength_nm,transmission_norm\n"));
    let second = dir.path().join("b");
    let o = run(&["fit-airy-lambda", "--input", data.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(first.join("fit.json")).unwrap(), std::fs::read(second.join("fit.json")).unwrap());
}

#[test]
fn bad_input_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "freq_hz,psd_v2_hz\n1.0,1.0\n2.0,NaN\n").unwrap();
    let o = run(&["fit-lorentzian", "--input", nan.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let flat = dir.path().join("flat.csv");
    let body: String = (0..200).map(|i| format!("{},1.0\n", 1e5 + i as f64)).collect();
    std::fs::write(&flat, format!("freq_hz,psd_v2_hz\n{body}")).unwrap();
    let o = run(&["fit-lorentzian", "--input", flat.to_str().unwrap(), "--out", dir.path().join("p").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "freq_hz,reflectivity\n1.0,0.3\n").unwrap();
    let o = run(&["fit-airy-scan", "--input", wrong.to_str().unwrap(), "--out", dir.path().join("q").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("voltage_v"), "{}", stderr(&o));
}

#[test]
fn unresolvable_fit_exits_two() {
    // a second peak hidden in the noise of the weak membrane
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("fig3.json")).unwrap();
    let text = text.replace("\"peak_count\": 1", "\"peak_count\": 2");
    let cfg = dir.path().join("two.json");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["fit-lorentzian", "--config", cfg.to_str().unwrap(), "--seed", "11", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("o/fit.json").exists());
}

#[test]
fn sweep_map_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["sweep-map", "--config", configs().join("fig4.json").to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let map: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("map.json")).unwrap()).unwrap();
    let keys: Vec<&String> = map.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["dl_grid", "freq_grid", "psd_rows"]);
    let rows = map["psd_rows"].as_array().unwrap();
    assert_eq!(rows.len(), map["dl_grid"].as_array().unwrap().len());
    let csv = std::fs::read_to_string(out.join("map.csv")).unwrap();
    let n = map["dl_grid"].as_array().unwrap().len() * map["freq_grid"].as_array().unwrap().len();
    assert_eq!(csv.lines().count(), n + 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("dominant membrane: 1"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(!text.contains("FAIL"), "{text}");
}
