//! Acceptance: rerunning any command with the same manifest produces
//! byte-identical outputs, exit codes follow the contract, and the
//! manifest always lands next to the outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sandpile"))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn c15_byte_identical_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "verify",
            vec!["--volume".into(), "tree:2:1".into(), "--seed".into(), "11".into()],
        ),
        (
            "sample",
            vec![
                "--volume".into(),
                "tree:2:2".into(),
                "--seed".into(),
                "12".into(),
                "--samples".into(),
                "20".into(),
            ],
        ),
        (
            "greens",
            vec![
                "--volume".into(),
                "tree:2:3".into(),
                "--seed".into(),
                "13".into(),
                "--samples".into(),
                "4000".into(),
            ],
        ),
        (
            "clusters",
            vec![
                "--volume".into(),
                "tree:2:6".into(),
                "--seed".into(),
                "14".into(),
                "--samples".into(),
                "20000".into(),
            ],
        ),
        (
            "stats",
            vec![
                "--volume".into(),
                "tree:2:2".into(),
                "--seed".into(),
                "15".into(),
                "--samples".into(),
                "5000".into(),
                "--schedule".into(),
                "1,2,3".into(),
                "--runs".into(),
                "2000".into(),
            ],
        ),
        (
            "dynamics",
            vec![
                "--phi".into(),
                "geometric:0.25".into(),
                "--seed".into(),
                "16".into(),
                "--runs".into(),
                "100".into(),
                "--schedule".into(),
                "2,4".into(),
                "--threads".into(),
                "2".into(),
            ],
        ),
    ];
    for (name, args) in &commands {
        let mut snapshots = Vec::new();
        for repeat in 0..2 {
            let out = tmp.path().join(format!("{name}-{repeat}"));
            let status = bin()
                .arg(name)
                .args(args)
                .arg("--out")
                .arg(&out)
                .status()
                .unwrap();
            assert!(status.success(), "{name} run {repeat} failed");
            let files = dir_bytes(&out);
            assert!(
                files.contains_key("manifest.json"),
                "{name}: manifest missing"
            );
            assert!(files.len() >= 2, "{name}: no outputs besides the manifest");
            snapshots.push(files);
        }
        assert_eq!(
            snapshots[0], snapshots[1],
            "{name}: reruns are not byte-identical"
        );
    }
    println!(
        "[PASS] criterion 15: {} commands rerun byte-identically",
        commands.len()
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();

    // usage error: no seed anywhere
    let status = bin()
        .args(["verify", "--volume", "tree:2:1"])
        .arg("--out")
        .arg(tmp.path().join("no-seed"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // usage error: volume too large to enumerate
    let status = bin()
        .args(["verify", "--volume", "tree:2:4", "--seed", "1"])
        .arg("--out")
        .arg(tmp.path().join("too-big"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // refused precondition: non-summable rate without the override
    let out = bin()
        .args([
            "dynamics",
            "--phi",
            "constant:1.0",
            "--seed",
            "1",
            "--runs",
            "5",
            "--schedule",
            "2,4",
        ])
        .arg("--out")
        .arg(tmp.path().join("nonsummable"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let message = String::from_utf8_lossy(&out.stderr);
    assert!(
        message.contains("summability"),
        "refusal must cite the summability condition, got: {message}"
    );

    // the same rate runs as a negative control with the override
    let status = bin()
        .args([
            "dynamics",
            "--phi",
            "constant:1.0",
            "--allow-nonsummable",
            "--seed",
            "1",
            "--runs",
            "5",
            "--schedule",
            "2,4",
        ])
        .arg("--out")
        .arg(tmp.path().join("control"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{
  "volume": {"kind": "tree", "d": 2, "generations": 1},
  "seed": 77,
  "samples": 10
}"#,
    )
    .unwrap();
    let out_a = tmp.path().join("a");
    let status = bin()
        .args(["sample", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_a)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["samples"], 10);
    assert_eq!(manifest["volume"]["kind"], "tree");

    // a flag override wins over the config value
    let out_b = tmp.path().join("b");
    let status = bin()
        .args(["sample", "--config"])
        .arg(&config)
        .args(["--samples", "3"])
        .arg("--out")
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["samples"], 3);
    let csv = fs::read_to_string(out_b.join("samples.csv")).unwrap();
    // header + 3 samples x 4 sites
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    assert!(csv.ends_with('\n'));
    assert!(!csv.contains('\r'));
}
