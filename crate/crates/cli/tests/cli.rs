use std::path::Path;
use std::process::{Command, Output};

use csd_cli::run::{sha256_hex, RunManifest};
use serde_json::Value;

fn csd(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csd"))
        .args(args)
        .env("CSD_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> RunManifest {
    let out = csd(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let name = args.iter().position(|a| *a == "--name").map_or(args[0], |i| args[i + 1]);
    RunManifest::load(&root.join(name).join("manifest.json")).unwrap()
}

fn result(m: &RunManifest, key: &str) -> f64 {
    m.results[key].as_f64().unwrap_or_else(|| panic!("{key} missing from {}", m.results))
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# singular run\nsamples = 6\nc_bracket = 0.01, 0.02\n").unwrap();
    let m = ok(tmp.path(), &["singular-speed", "--config", cfg.to_str().unwrap(), "--c-bracket", "0.04,0.09"]);
    let cmd = serde_json::to_value(&m.command).unwrap();
    assert_eq!(cmd["subcommand"], "singular-speed");
    assert_eq!(cmd["samples"], 6);
    assert_eq!(cmd["c_bracket"], serde_json::json!([0.04, 0.09]));
    assert!((result(&m, "c0") - 0.07426).abs() < 5e-4);
}

#[test]
fn reruns_are_bit_identical_and_manifests_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let a = ok(root, &["singular-speed", "--name", "a"]);
    ok(root, &["singular-speed", "--name", "b"]);
    for f in &a.outputs {
        let (x, y) = (std::fs::read(root.join("a").join(f)).unwrap(), std::fs::read(root.join("b").join(f)).unwrap());
        assert!(x == y, "{f} differs between identical runs");
    }
    let manifest = root.join("a").join("manifest.json");
    let r = ok(root, &["replay", manifest.to_str().unwrap(), "--name", "replayed"]);
    assert_eq!(r.results, a.results);
    assert_eq!(r.parameter_hash, a.parameter_hash);
    assert_eq!(r.outputs, a.outputs);
}

#[test]
fn manifest_records_parameters_and_their_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ok(tmp.path(), &["manifold-dissect", "--name", "base"]);
    assert_eq!(base.parameter_hash, sha256_hex(&base.parameters));
    assert_eq!(base.outputs.len(), 7);
    assert_eq!(base.results["equilibria"].as_array().unwrap().len(), 3);
    let changed = ok(tmp.path(), &["manifold-dissect", "--name", "changed", "--set", "d_k=2.0e-5"]);
    assert_ne!(changed.parameter_hash, base.parameter_hash);
    assert!(changed.params().unwrap().d_k == 2.0e-5);
}

#[test]
fn speed_table_writes_one_row_per_size() {
    let tmp = tempfile::tempdir().unwrap();
    let m = ok(tmp.path(), &["speed-table", "--sizes", "20,30", "--model", "instantaneous1"]);
    let csv = std::fs::read_to_string(tmp.path().join("speed-table/speed_table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let speeds: Vec<f64> =
        m.results["speeds"].as_array().unwrap().iter().map(|r| r["speed_mm_per_min"].as_f64().unwrap()).collect();
    assert!(speeds.iter().all(|v| *v > 0.0 && v.is_finite()), "{speeds:?}");
}

#[test]
fn simulation_writes_field_per_variable_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let m = ok(tmp.path(), &["simulate-instant", "--cells", "30", "--t-end", "20000", "--sample-dt", "50"]);
    let dir = tmp.path().join("simulate-instant");
    let field = std::fs::read_to_string(dir.join("K_e.csv")).unwrap();
    let header = field.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 31);
    assert_eq!(field.lines().count(), 1 + 20000 / 50 + 1);
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(sidecar["model"], "instantaneous1");
    assert_eq!(result(&m, "n_cells"), 30.0);
}

#[test]
fn failures_exit_nonzero_and_name_the_operation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = csd(tmp.path(), &["singular-speed", "--set", "bogus=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key `bogus`"));
    let out = csd(tmp.path(), &["simulate-reduced", "--cells", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pde_sim::validate"));
    let out = csd(tmp.path(), &["singular-speed", "--c-bracket", "0.09,0.1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular_shoot::find_c0"));
    assert!(!tmp.path().join("singular-speed").exists());
}
