use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reaction-inverse")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn forward_writes_mesh_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fwd");
    let o = cli(&["forward", "--level", "4", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mesh = std::fs::read_to_string(out.join("mesh.txt")).unwrap();
    assert_eq!(mesh.lines().filter(|l| l.starts_with("v ")).count(), 25);
    assert_eq!(mesh.lines().filter(|l| l.starts_with("t ")).count(), 32);
    assert_eq!(mesh.lines().filter(|l| l.starts_with("e ")).count(), 16);
    for name in ["beta", "neumann", "mixed", "dirichlet"] {
        let text = std::fs::read_to_string(out.join(format!("{name}.txt"))).unwrap();
        assert_eq!(text.lines().count(), 25);
        for line in text.lines() {
            let fields: Vec<f64> = line.split(' ').map(|v| v.parse().unwrap()).collect();
            assert_eq!(fields.len(), 3);
        }
    }
}

#[test]
fn gradcheck_passes_and_detects_a_flipped_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["gradcheck", "--level", "4", "--seed", "3", "--out", path(dir.path())]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("gradient check passed"));
    let csv = std::fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    let o = cli(&["gradcheck", "--level", "4", "--seed", "3", "--flip-gradient-sign", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn forward_accepts_a_constant_or_a_dumped_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(cli(&["forward", "--level", "4", "--beta", "2", "--out", path(&a)]).status.success());
    let dumped = a.join("beta.txt");
    assert!(std::fs::read_to_string(&dumped).unwrap().lines().all(|l| l.ends_with("2.0000000000000000e0")));
    let b = dir.path().join("b");
    assert!(cli(&["forward", "--level", "4", "--beta", path(&dumped), "--out", path(&b)]).status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join("neumann.txt")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = dir.path().join("c");
    assert!(cli(&["forward", "--level", "4", "--tuple", "-1,2,-3,4", "--beta", "2", "--out", path(&c)]).status.success());
    assert_ne!(read(&a), read(&c));
    let o = cli(&["forward", "--level", "8", "--beta", path(&dumped), "--out", path(&c)]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["forward", "--tuple", "1,2,3", "--out", path(&c)]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["forward", "--level", "0", "--out", path(&c)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradient_vanishes_at_the_truth_for_consistent_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "gradcheck", "--level", "4", "--at-truth", "--rho-rule", "fixed:0", "--theta-rule", "none", "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let norm: f64 = stdout.lines().find_map(|l| l.strip_prefix("gradient norm ")).unwrap().trim().parse().unwrap();
    assert!(norm <= 1e-9, "{norm}");
}

#[test]
fn invalid_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["invert", "--levels", "4,8", "--rho-rule", "cubic", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cubic"));
    let o = cli(&["invert", "--levels", "4,12", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["example", "7", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["forward", "--gamma", "middle", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_merged_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let from_cfg = dir.path().join("from_cfg");
    std::fs::write(
        &cfg,
        format!(r#"{{"levels": [4, 8], "seed": 5, "max_iter": 5, "gamma": "bottom,left", "out": "{}"}}"#, path(&from_cfg)),
    )
    .unwrap();
    let o = cli(&["invert", "--config", path(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(from_cfg.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["gamma"], "bottom,left");
    assert_eq!(manifest["params"]["max_iter"], 5);

    let flagged = dir.path().join("flagged");
    let o = cli(&["invert", "--config", path(&cfg), "--seed", "9", "--levels", "4", "--out", path(&flagged)]);
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(flagged.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["levels"], serde_json::json!([4]));
    assert_eq!(manifest["gamma"], "bottom,left");

    std::fs::write(&cfg, r#"{"levels": [4], "colour": "blue"}"#).unwrap();
    assert_eq!(cli(&["invert", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn example_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cli(&["example", "4", "--levels", "4", "--I", "1,6", "--max-iter", "5", "--seed", "2", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "example4_measurements.csv"));
    for name in names {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}
