use std::process::Command;

fn pointsaga() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pointsaga"))
}

fn mushrooms() -> String {
    format!("{}/tests/data/mushrooms.txt.gz", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn quick_check_passes() {
    let out = pointsaga().args(["check", "--quick"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text
        .lines()
        .any(|l| l.starts_with("check=prox_oracle passed=true")));
    assert!(text.contains("failed=0"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let config = dir.path().join("plan.json");
    let plan = serde_json::json!({
        "data": mushrooms(),
        "methods": ["point-saga"],
        "fractions": [0.05],
        "epochs": 50,
        "step": {"kind": "explicit", "gamma": 1.0},
        "fstar_epochs": 20,
        "out": out,
    });
    std::fs::write(&config, plan.to_string()).unwrap();
    let status = pointsaga()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .args(["--epochs", "3"])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("point-saga,mushrooms,0.05,0,1.0,1,"));
}

#[test]
fn fstar_subcommand_prints_each_fraction() {
    let out = pointsaga()
        .args([
            "fstar",
            "--fractions",
            "0.05,0.1",
            "--epochs",
            "2",
            "--gamma",
            "0.5",
            "--fstar-epochs",
            "10",
        ])
        .arg("--data")
        .arg(mushrooms())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("fraction=")).count(),
        2
    );
}

#[test]
fn bad_input_exits_with_error() {
    let missing = pointsaga()
        .args(["run", "--data", "/nonexistent/file.txt", "--l2", "0.1"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let hinge_saga = pointsaga()
        .args(["run", "--loss", "hinge", "--methods", "saga", "--l2", "0.1"])
        .arg("--data")
        .arg(mushrooms())
        .output()
        .unwrap();
    assert_eq!(hinge_saga.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&hinge_saga.stderr).contains("SAGA"));
}
