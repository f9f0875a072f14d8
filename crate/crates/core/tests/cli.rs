use std::path::Path;
use std::process::Command;

use sigma_surfaces::cli_io::check_manifest;

fn run(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_sigma-surfaces"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const TORUS: &str = r#"{
  "source": {"kind": "catalog", "entry": {"name": "balanced_torus", "a": [1.0, -1.0], "b": [0.5, 0.0]}},
  "grid": {"xi_l0": -1.0, "xi_r0": -1.0, "h_l": 0.125, "h_r": 0.125, "n_l": 9, "n_r": 9},
  "analyses": ["verify"]
}"#;

const UNBALANCED: &str = r#"{
  "source": {"kind": "catalog", "entry": {"name": "unbalanced_torus", "c1_squared": 0.3, "a": [1.0, -1.0], "b": [0.5, 0.0]}},
  "grid": {"xi_l0": -1.0, "xi_r0": -1.0, "h_l": 0.125, "h_r": 0.125, "n_l": 9, "n_r": 9},
  "analyses": ["verify"]
}"#;

#[test]
fn verify_exit_codes_follow_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let good = write_config(dir.path(), "torus.json", TORUS);
    assert_eq!(run(&["verify", "--config", &good, "--out", out]), 0);
    assert!(check_manifest(Path::new(out)).unwrap());

    let bad = write_config(dir.path(), "unbalanced.json", UNBALANCED);
    assert_eq!(run(&["verify", "--config", &bad, "--out", out]), 4);
}

#[test]
fn config_problems_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(run(&["verify", "--config", missing.to_str().unwrap()]), 2);

    let good = write_config(dir.path(), "torus.json", TORUS);
    let out = dir.path().join("out");
    assert_eq!(
        run(&["verify", "--config", &good, "--grid", "1,1,0.1,0.1", "--out", out.to_str().unwrap()]),
        2
    );

    let garbled = write_config(dir.path(), "garbled.json", "{\"source\": 3}");
    assert_eq!(run(&["verify", "--config", &garbled]), 2);
}

#[test]
fn export_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/flat_plane.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_eq!(run(&["export", "--config", config, "--out", out.to_str().unwrap()]), 0);
        assert!(check_manifest(out).unwrap());
    }
    let manifest = |p: &Path| std::fs::read(p.join("manifest.json")).unwrap();
    assert_eq!(manifest(&a), manifest(&b));
}
