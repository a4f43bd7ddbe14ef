use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldi-alm"))
}

#[test]
fn small_run_writes_outputs_and_replays_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let scenarios = dir.path().join("scenarios.csv");
    let out = bin()
        .args(["--scenarios", "300", "--seed", "9", "--gammas", "0.1,0.3"])
        .arg("--out")
        .arg(&first)
        .arg("--save-scenarios")
        .arg(&scenarios)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("reduction %"));

    let second = dir.path().join("second");
    let out = bin()
        .arg("--load-scenarios")
        .arg(&scenarios)
        .args(["--gammas", "0.1,0.3"])
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let a = std::fs::read(first.join("objective.csv")).unwrap();
    let b = std::fs::read(second.join("objective.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn conflicting_flags_are_rejected() {
    let out = bin()
        .args(["--load-scenarios", "x.csv", "--seed", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
