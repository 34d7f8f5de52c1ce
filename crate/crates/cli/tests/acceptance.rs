//! Acceptance: determinism of study artifacts.
//!
//! Any study re-run from its manifest must reproduce byte-identical CSV
//! bodies, independent of the worker count. Exercised end to end through
//! the installed binary.

use std::fs;
use std::process::Command;

fn run_binary(config_path: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gaugekit"))
        .arg("run")
        .arg(config_path)
        .output()
        .expect("binary runs")
}

#[test]
fn acceptance_12_determinism_across_reruns_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let out3 = dir.path().join("c");
    let config = |out: &std::path::Path, workers: usize| {
        format!(
            r#"{{
                "study": "density",
                "params": {{"alphas": [0.1], "n_list": [4], "n_samples": 10000}},
                "measure": {{"s": 1.0, "cutoff": 4, "radius": 1.0, "master_seed": 99}},
                "flow": {{"step_count": 8, "oversample_factor": 8, "store_trajectory": false}},
                "workers": {workers},
                "output_dir": "{}"
            }}"#,
            out.display()
        )
    };
    let cfg1 = dir.path().join("cfg1.json");
    fs::write(&cfg1, config(&out1, 1)).unwrap();
    let st = run_binary(&cfg1);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    // Re-run from the manifest (different output dir, more workers).
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    let mut cfg_json = manifest["config"].clone();
    cfg_json["output_dir"] = serde_json::json!(out2.display().to_string());
    cfg_json["workers"] = serde_json::json!(3);
    let cfg2 = dir.path().join("cfg2.json");
    fs::write(&cfg2, serde_json::to_string(&cfg_json).unwrap()).unwrap();
    let st = run_binary(&cfg2);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    // And a third run straight from the manifest file (workers unchanged).
    let manifest_path = dir.path().join("manifest_copy.json");
    let mut wrapped = manifest.clone();
    wrapped["config"]["output_dir"] = serde_json::json!(out3.display().to_string());
    fs::write(&manifest_path, serde_json::to_string(&wrapped).unwrap()).unwrap();
    let st = run_binary(&manifest_path);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    let a = fs::read(out1.join("results.csv")).unwrap();
    let b = fs::read(out2.join("results.csv")).unwrap();
    let c = fs::read(out3.join("results.csv")).unwrap();
    assert_eq!(a, b, "worker count changed the CSV body");
    assert_eq!(a, c, "manifest re-run changed the CSV body");
    println!("acceptance 12 (determinism): PASS");
}

#[test]
fn exit_codes_match_contract() {
    // Bad config file: exit 2.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"study\": \"unknown\"}").unwrap();
    let st = run_binary(&bad);
    assert_eq!(st.status.code(), Some(2));

    // Numeric failure: a tail-sup tails study with an impossible tail
    // target is hard to force cheaply, so use rejection starvation.
    let cfg = dir.path().join("starve.json");
    fs::write(
        &cfg,
        format!(
            r#"{{
                "study": "invariants",
                "params": {{"n_samples": 1, "alpha": 0.1, "n": 0}},
                "measure": {{"s": 1.0, "cutoff": 0, "radius": 2e-6, "master_seed": 1}},
                "output_dir": "{}"
            }}"#,
            dir.path().display()
        ),
    )
    .unwrap();
    let st = run_binary(&cfg);
    assert_eq!(st.status.code(), Some(3), "{}", String::from_utf8_lossy(&st.stderr));
}
