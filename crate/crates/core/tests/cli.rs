use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

fn grpcoll() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grpcoll"))
}

#[test]
fn condition_experiment_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = grpcoll()
        .args([
            "exp-condition",
            "--conditions",
            "10,20",
            "--epochs",
            "2",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = std::fs::read_to_string(dir.path().join("condition.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["settings"]["dataset"], "gauss10");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = grpcoll()
        .args(["exp-condition", "--conditions", "3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("condition"));
    let out = grpcoll()
        .args(["exp-scaling", "--dataset", "cifar"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn verify_properties_reports() {
    let out = grpcoll()
        .args(["verify-properties", "--trials", "2000"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!out.stdout.is_empty());
}

#[test]
fn serve_and_participate_over_tcp() {
    let run = ["--dataset", "toy2d", "--epochs", "2"];
    let mut server = grpcoll()
        .args([
            "serve",
            "--bind",
            "127.0.0.1:0",
            "--participants",
            "2",
            "--timeout-secs",
            "30",
        ])
        .args(run)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect(&line)
        .to_string();

    let participants: Vec<_> = (0..2)
        .map(|i| {
            grpcoll()
                .args([
                    "participate",
                    "--connect",
                    &addr,
                    "--participants",
                    "2",
                    "--index",
                    &i.to_string(),
                ])
                .args(["--scheme", "grp", "--k", "2", "--test"])
                .args(run)
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    for p in participants {
        let p = p.wait_with_output().unwrap();
        assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
        let report: serde_json::Value = serde_json::from_slice(&p.stdout).unwrap();
        assert!(report.is_object());
    }
    let out = server.wait_with_output().unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["k"], 2);
    // smoke preset: a tenth of 2 x 5000 samples
    assert_eq!(summary["assembled_samples"], 1000);
}
