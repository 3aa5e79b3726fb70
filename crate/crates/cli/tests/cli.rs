use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[domain]
dim = 2
lo = [0.0, 0.0]
hi = [1.0, 1.0]
ref_point_a = [0.5, 0.5]

[fluid]
resolution = [16, 16]
dt = 0.02
initial = { kind = "mode", amplitude = 0.02 }

[particles]
count = 300
seed = 5

[initial]
spatial = { kind = "ball", center = [0.5, 0.5], radius = 0.2 }
velocity = { kind = "ball", radius = 0.2 }

[run]
horizon = 3.0
output_dir = "ignored"

[metrics]
every = 5
profile_grid = 16
w1_grid = 8
v_nodes = 8
"#;

fn vnslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnslab"))
        .args(args)
        .output()
        .expect("spawn vnslab")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_then_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let out_dir = tmp.path().join("out");
    let o = vnslab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = out_dir.join("manifest.json");
    assert!(manifest.is_file());
    let ts = std::fs::read_to_string(out_dir.join("timeseries.csv")).unwrap();
    assert!(ts.lines().count() > 5);

    for task in ["xinfty", "representation-check"] {
        let o = vnslab(&[
            "replay",
            "--manifest",
            manifest.to_str().unwrap(),
            "--task",
            task,
        ]);
        assert!(
            o.status.success(),
            "{task}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(v.get("task").is_some());
    }
}

#[test]
fn invalid_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("dt = 0.02", "dt = -0.02");
    let cfg = write(tmp.path(), "bad.toml", &bad);
    let o = vnslab(&[
        "run",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write(tmp.path(), "junk.toml", "[domain]\nshape = 3\n");
    let o = vnslab(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));

    let o = vnslab(&[
        "run",
        "--config",
        tmp.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tampered_manifest_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let out_dir = tmp.path().join("out");
    assert!(
        vnslab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
            .status
            .success()
    );
    let ts = out_dir.join("timeseries.csv");
    let mut text = std::fs::read_to_string(&ts).unwrap();
    text.push('\n');
    std::fs::write(&ts, text).unwrap();
    let manifest = out_dir.join("manifest.json");
    let o = vnslab(&[
        "replay",
        "--manifest",
        manifest.to_str().unwrap(),
        "--task",
        "xinfty",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
