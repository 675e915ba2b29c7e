use std::path::Path;
use std::process::{Command, Output};

fn landmark(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landmark"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn landmark")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path) {
    let out = landmark(
        dir,
        &["synth", "--out", "data", "--images", "4", "--size", "32", "--seed", "1"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&landmark(dir.path(), &["--help"])), 0);
    assert_eq!(code(&landmark(dir.path(), &["train", "--help"])), 0);
    assert_eq!(code(&landmark(dir.path(), &["--version"])), 0);
    assert_eq!(code(&landmark(dir.path(), &[])), 1);
    assert_eq!(code(&landmark(dir.path(), &["fly"])), 1);
    assert_eq!(code(&landmark(dir.path(), &["train", "--variant", "resnet"])), 1);
    assert_eq!(
        code(&landmark(dir.path(), &["synth", "--out", "x", "--size", "lots"])),
        1
    );
}

#[test]
fn missing_inputs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = landmark(dir.path(), &["train", "--config", "nope.json"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nope.json"), "{}", stderr(&out));
    let out = landmark(
        dir.path(),
        &["train", "--manifest", "missing/manifest.json", "--epochs", "1"],
    );
    assert_eq!(code(&out), 1);
    let out = landmark(
        dir.path(),
        &["evaluate", "--checkpoint", "none.ckpt", "--manifest", "m.json"],
    );
    assert_eq!(code(&out), 1);
    let out = landmark(
        dir.path(),
        &["visualize", "--image", "a.png", "--pred", "p.csv", "--out", "o.png"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn synth_is_deterministic_and_writes_a_run_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path());
    synth(b.path());
    for f in [
        "data/config.json",
        "data/synth0/manifest.json",
        "data/synth1/images/0003.png",
        "data/synth1/landmarks/0000.csv",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let out = landmark(
        a.path(),
        &["synth", "--out", "bad", "--domains", "3", "--landmarks", "3,5"],
    );
    assert_eq!(code(&out), 1);
    let out = landmark(a.path(), &["synth", "--out", "bad", "--size", "8"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn train_predict_and_reject_unknown_domain() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth(root);
    let out = landmark(
        root,
        &["train", "--config", "data/config.json", "--epochs", "1", "--out", "run"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let history = std::fs::read_to_string(root.join("run/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3, "{history}");

    let image = "data/synth1/images/0000.png";
    let out = landmark(
        root,
        &[
            "predict",
            "--checkpoint",
            "run/best.ckpt",
            "--image",
            image,
            "--domain",
            "synth1",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("index,x,y"));
    assert_eq!(csv.lines().count(), 1 + 5);

    let out = landmark(
        root,
        &[
            "predict",
            "--checkpoint",
            "run/best.ckpt",
            "--image",
            image,
            "--domain",
            "ribs",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("ribs"), "{}", stderr(&out));

    let out = landmark(
        root,
        &[
            "evaluate",
            "--checkpoint",
            "run/best.ckpt",
            "--manifest",
            "data/synth0/manifest.json",
            "--sdr",
            "1,2",
            "--out",
            "eval",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("SDR 1px") && table.contains("SDR 2px"), "{table}");
}

#[test]
fn oracle_evaluation_needs_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = landmark(
        dir.path(),
        &[
            "evaluate",
            "--oracle",
            "--config",
            "data/config.json",
            "--split",
            "all",
            "--out",
            "oracle",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle/report.json")).unwrap()).unwrap();
    for d in report["domains"].as_array().unwrap() {
        assert_eq!(d["mre"].as_f64(), Some(0.0), "{d}");
        for e in d["sdr"].as_array().unwrap() {
            assert_eq!(e["rate"].as_f64(), Some(100.0), "{d}");
        }
    }
}

#[test]
fn audit_params_reports_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = landmark(dir.path(), &["audit-params", "--json", "audit.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for v in ["gu2net", "unet", "tri_unet"] {
        assert!(text.contains(v), "{text}");
    }
    assert!(dir.path().join("audit.json").is_file());
}
