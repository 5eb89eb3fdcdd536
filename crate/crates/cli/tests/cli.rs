use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixtraffic"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn short_config(dir: &Path, env: &str, horizon: usize) -> String {
    let out = run(&["config", "--env", env]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let text = text.replacen("horizon = ", &format!("horizon = {horizon}\n#"), 1);
    let path = dir.join(format!("{env}.toml"));
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run-baseline",
        "--config",
        "/no/such/file.toml",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.toml"));
}

#[test]
fn unknown_environment_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run-baseline",
        "--env",
        "roundabout",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("roundabout"));
}

#[test]
fn invalid_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "env = \"ring\"\n").unwrap();
    let out = run(&[
        "run-baseline",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_writes_the_tables_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "figure_eight", 40);
    let outputs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = run(&[
                "run-baseline",
                "--config",
                &cfg,
                "--seeds",
                "0..3",
                "--out",
                out_dir.to_str().unwrap(),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            out_dir
        })
        .collect();
    for file in ["metrics.csv", "summary.csv", "aggregate.csv", "time_space.csv"] {
        let a = std::fs::read(outputs[0].join(file)).unwrap();
        let b = std::fs::read(outputs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let summary = std::fs::read_to_string(outputs[0].join("summary.csv")).unwrap();
    assert!(summary.starts_with("env,seed,control_steps,mean_velocity,outflow,exits,queue,total_reward,collision\n"));
    assert_eq!(summary.lines().count(), 4);
    let metrics = std::fs::read_to_string(outputs[0].join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3 * 40);
}

#[test]
fn policy_rollouts_render_to_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "merge", 400);
    let out_dir = dir.path().join("run");
    let out = run(&[
        "run-policy",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--policy",
        "idm",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rollout = out_dir.join("rollout_3.json");
    assert!(rollout.exists());
    let frames = dir.path().join("frames");
    let out = run(&[
        "render",
        "--rollout",
        rollout.to_str().unwrap(),
        "--steps",
        "398..400",
        "--out",
        frames.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&frames)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 5);
    assert_eq!(names[0], "step00398_slot00.pgm");
    for n in &names {
        let bytes = std::fs::read(frames.join(n)).unwrap();
        assert!(bytes.starts_with(b"P5\n84 84\n255\n"));
        assert_eq!(bytes.len(), 13 + 84 * 84);
    }

    let replayed = dir.path().join("replayed");
    let out = run(&[
        "run-policy",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--policy",
        "replay",
        "--actions",
        rollout.to_str().unwrap(),
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(rollout).unwrap(),
        std::fs::read(replayed.join("rollout_3.json")).unwrap()
    );
}

#[test]
fn serve_answers_over_stdio() {
    use std::io::{Read, Write};
    let mut child = bin()
        .arg("serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    let mut send = |body: &[u8]| {
        stdin.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
        stdin.write_all(body).unwrap();
        stdin.flush().unwrap();
        let mut len = [0u8; 4];
        stdout.read_exact(&mut len).unwrap();
        let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
        stdout.read_exact(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    assert!(send(b"garbage").contains("error"));
    assert_eq!(send(br#"{"cmd":"close"}"#), r#"{"done":true}"#);
    assert!(child.wait().unwrap().success());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["config", "--env", "ring", "--sweep"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let text = text
        .replace("horizon = 3000", "horizon = 100")
        .replace("warmup = 3000", "warmup = 100");
    let path = dir.path().join("sweep.toml");
    std::fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--seeds",
        "0,1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "point,mean,std,runs");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("210,") && lines[1].ends_with(",2"));
}
