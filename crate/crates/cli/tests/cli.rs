use std::fs;
use std::process::Command;

fn dpkpz() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpkpz"))
}

#[test]
fn colehopf_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ch");
    let status = dpkpz()
        .args(["colehopf", "--beta", "0.5", "--g", "linear:0.2,0,0", "--t", "1", "--x", "0,0,0", "--eps", "0.2,0.1"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(out.join("colehopf.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "eps,t,t_eps,x1,x2,x3,discrete_value,continuum_value,gap");
    assert_eq!(lines.count(), 2);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn rerun_reproduces_walk_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ok = dpkpz()
        .args(["walk", "--quantity", "intersections", "--horizon", "200", "--replicates", "500", "--seed", "4"])
        .arg("--out")
        .arg(&a)
        .output()
        .unwrap();
    assert!(ok.status.success());
    let ok = dpkpz().arg("rerun").arg(&a).arg("--out").arg(&b).output().unwrap();
    assert!(ok.status.success());
    assert_eq!(fs::read(a.join("walk.csv")).unwrap(), fs::read(b.join("walk.csv")).unwrap());
}

#[test]
fn theorem_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"
d = 3
beta = 0.3
g = { kind = "constant", value = 1.5 }
t = 0.5
x = [0.0, 0.0, 0.0]
eps = [0.3, 0.2]
replicates = 3
output = "run"
[eta]
value = { eta = 0.0, se = 0.0 }
"#,
    )
    .unwrap();
    let res = dpkpz().arg("theorem").arg("--config").arg(&cfg).output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(summary["command"], "theorem");
    let conv = fs::read_to_string(dir.path().join("run/convergence.csv")).unwrap();
    assert!(conv.starts_with("eps,t_eps,r,mean,se,h,bias,variance,mse,mse_se\n"));
    assert!(conv.lines().nth(1).unwrap().contains(",1.5,"));
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "d = 2\n").unwrap();
    let res = dpkpz().arg("theorem").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["category"], "config");

    let res = dpkpz()
        .args(["polymer", "--beta", "0.5", "--t", "2", "--g", "wavy"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["category"], "invalid-input");
}
