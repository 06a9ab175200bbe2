use std::fs;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn drc(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_drc"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("DRC_THREADS", n),
        None => cmd.env_remove("DRC_THREADS"),
    };
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{"dataset": {"n_members": 8, "n_nonmembers": 8}, "tasks": [{"kind": "noise"}, {"kind": "blur"}]}"#;

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, n) in [(&a, "1"), (&b, "8")] {
        let out = drc(
            &["audit", "--config", &cfg, "--out", dir.to_str().unwrap()],
            Some(n),
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["report.json", "scores.csv", "roc.csv", "roc_blur.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }

    let json = drc(
        &["report", "--in", a.to_str().unwrap(), "--format", "json"],
        None,
    );
    assert_eq!(json.stdout, fs::read(a.join("report.json")).unwrap());
    let csv = drc(
        &["report", "--in", a.to_str().unwrap(), "--format", "csv"],
        None,
    );
    assert_eq!(csv.stdout, fs::read(a.join("scores.csv")).unwrap());
}

#[test]
fn served_denoiser_matches_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let exchange = tmp.path().join("exchange");
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"dataset": {"n_members": 6, "n_nonmembers": 6}}"#,
    );
    let remote_cfg = write_config(
        tmp.path(),
        "r.json",
        &format!(
            r#"{{"dataset": {{"n_members": 6, "n_nonmembers": 6}}, "denoiser": "file:{}"}}"#,
            exchange.display()
        ),
    );
    fs::create_dir_all(&exchange).unwrap();
    let mut server = Command::new(env!("CARGO_BIN_EXE_drc"))
        .args([
            "serve",
            "--config",
            &cfg,
            "--dir",
            exchange.to_str().unwrap(),
            "--idle-secs",
            "3",
        ])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let local = tmp.path().join("local");
    let remote = tmp.path().join("remote");
    let out = drc(
        &[
            "audit",
            "--config",
            &remote_cfg,
            "--out",
            remote.to_str().unwrap(),
        ],
        Some("4"),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        code(&drc(
            &["audit", "--config", &cfg, "--out", local.to_str().unwrap()],
            None
        )),
        0
    );
    assert_eq!(
        fs::read(local.join("scores.csv")).unwrap(),
        fs::read(remote.join("scores.csv")).unwrap()
    );
    assert!(server.wait().unwrap().success());
}

#[test]
fn synth_data_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"dataset": {"n_members": 3, "n_nonmembers": 2}}"#,
    );
    let out = tmp.path().join("data");
    assert_eq!(
        code(&drc(
            &[
                "synth-data",
                "--config",
                &cfg,
                "--out",
                out.to_str().unwrap()
            ],
            None
        )),
        0
    );
    assert_eq!(fs::read_dir(&out).unwrap().count(), 10);
    assert!(out.join("m0002.drcgrid").is_file() && out.join("n0001.pgm").is_file());

    let cfg = write_config(tmp.path(), "s.json", SMALL);
    let sw = drc(
        &[
            "sweep", "--config", &cfg, "--axis", "agree_n", "--values", "1,2",
        ],
        None,
    );
    assert_eq!(code(&sw), 0, "{}", String::from_utf8_lossy(&sw.stderr));
    let text = String::from_utf8(sw.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("axis,value,acc,precision,recall,auc\nagree_n,1,"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(
        tmp.path(),
        "u.json",
        r#"{"dataset": {"n_members": 4}, "bogus": 1}"#,
    );
    assert_eq!(code(&drc(&["audit", "--config", &unknown], None)), 2);
    let empty = write_config(tmp.path(), "e.json", r#"{"dataset": {"n_members": 0}}"#);
    assert_eq!(code(&drc(&["audit", "--config", &empty], None)), 2);
    assert_eq!(
        code(&drc(&["audit", "--config", "/nonexistent/c.json"], None)),
        2
    );
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    assert_eq!(code(&drc(&["audit", "--config", &cfg], Some("0"))), 2);
    let bad_axis = drc(
        &[
            "sweep", "--config", &cfg, "--axis", "steps", "--values", "1",
        ],
        None,
    );
    assert_eq!(code(&bad_axis), 2);

    let dead = tmp.path().join("dead");
    fs::create_dir_all(&dead).unwrap();
    let stalled = write_config(
        tmp.path(),
        "f.json",
        &format!(
            r#"{{"dataset": {{"n_members": 2, "n_nonmembers": 2}}, "denoiser": "file:{}", "denoiser_timeout_secs": 0.05}}"#,
            dead.display()
        ),
    );
    let out = drc(&["audit", "--config", &stalled], None);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("m0000"));
    assert_eq!(
        code(&drc(&["report", "--in", dead.to_str().unwrap()], None)),
        3
    );
}

#[test]
fn preset_and_config_conflict() {
    let out = drc(&["audit", "--preset", "hard", "--config", "x.json"], None);
    assert_eq!(code(&out), 2);
}
