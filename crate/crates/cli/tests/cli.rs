use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn caos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caos"))
        .args(args)
        .output()
        .expect("run caos")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = caos(&["plan", "--preset", "exp1-hdr", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["plan.toml", "assignment.csv", "validation.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn nyquist_violation_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = caos(&[
        "experiment",
        "--preset",
        "exp2-dualband",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let cfg = dir.path().join("exp2-dualband.config.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    let bad: String = text
        .lines()
        .map(|l| {
            if l.starts_with("sample_rate_hz") {
                "sample_rate_hz = 64.0".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&cfg, bad).unwrap();
    let o = caos(&[
        "plan",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("p")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr)
        .to_lowercase()
        .contains("nyquist"));
}

#[test]
fn unknown_config_field_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "name = \"x\"\nbogus = 1\n").unwrap();
    let o = caos(&["plan", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let o = caos(&["plan", "--preset", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dual_band_simulate_then_decode_gives_two_images() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = dir.path().join("dec");
    assert!(
        caos(&["simulate", "--preset", "exp2-dualband", "--out", s(&sim)])
            .status
            .success()
    );
    let o = caos(&[
        "decode",
        "--plan",
        s(&sim.join("plan.toml")),
        "--stream",
        s(&sim.join("pd1.f32")),
        "--stream",
        s(&sim.join("pd2.f32")),
        "--truth",
        s(&sim.join("truth_pd1.csv")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for tag in ["pd1", "pd2"] {
        for ext in ["pgm", "csv", "json"] {
            assert!(out.join(format!("{tag}.{ext}")).exists(), "{tag}.{ext}");
        }
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("{tag}.json"))).unwrap())
                .unwrap();
        assert!(report["ground_truth_correlation"].as_f64().unwrap() > 0.99);
    }
}

#[test]
fn tampered_key_decodes_but_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let bad = dir.path().join("bad");
    assert!(
        caos(&["simulate", "--preset", "exp2-dualband", "--out", s(&sim)])
            .status
            .success()
    );
    assert!(caos(&[
        "plan",
        "--preset",
        "exp2-dualband",
        "--seed",
        "424242",
        "--out",
        s(&bad)
    ])
    .status
    .success());
    let o = caos(&[
        "decode",
        "--plan",
        s(&bad.join("plan.toml")),
        "--stream",
        s(&sim.join("pd1.f32")),
        "--truth",
        s(&sim.join("truth_pd1.csv")),
        "--out",
        s(&dir.path().join("dec")),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("LOW"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dec/pd1.json")).unwrap())
            .unwrap();
    assert!(report["ground_truth_correlation"].as_f64().unwrap().abs() < 0.3);
}

#[test]
fn active_preset_writes_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = caos(&[
        "experiment",
        "--preset",
        "exp3-active",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    for v in ["a", "b"] {
        let checks: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("exp3-active-{v}.acceptance.json")))
                .unwrap(),
        )
        .unwrap();
        assert!(checks
            .as_array()
            .unwrap()
            .iter()
            .all(|c| c["passed"] == true));
        for p in 1..=3 {
            assert!(dir
                .path()
                .join(format!("exp3-active-{v}_pd1_source{p}.pgm"))
                .exists());
        }
    }
}

#[test]
fn failing_acceptance_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = caos(&["experiment", "--preset", "exp1-hdr", "--out", s(dir.path())]);
    let code = o.status.code();
    let checks: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("exp1-hdr.acceptance.json")).unwrap(),
    )
    .unwrap();
    let all = checks
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true);
    assert_eq!(code, Some(if all { 0 } else { 4 }));
}
