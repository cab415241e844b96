use std::path::Path;
use std::process::Command;

fn gibbscode(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gibbscode")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const LIMITS: &str = r#"{"code":{"type":"file","path":"g.txt"},"channel":"bsc","eps":[0.45],"samples":50,"seed":1,"d_tail":[20,40]}"#;

fn graph(dir: &Path) {
    std::fs::write(dir.join("g.txt"), "ldgm 3 4\n0 0\n1 1\n0 2\n1 2\n1 3\n2 3\n").unwrap();
}

#[test]
fn limits_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    graph(dir.path());
    let cfg = write_config(dir.path(), LIMITS);
    let out = dir.path().join("out");
    let o = gibbscode(&["limits", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("limits.csv")).unwrap();
    assert!(csv.starts_with("eps,d_prime,d,g_d_prime,g_d,abs_diff,seed\n"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("limits.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "limits");
    assert_eq!(json["passed"], true);
    assert_eq!(json["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    graph(dir.path());
    let cfg = write_config(dir.path(), LIMITS);
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        assert!(gibbscode(&["limits", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
        std::fs::read(out.join("limits.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn subcommand_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    graph(dir.path());
    let cfg = write_config(dir.path(), &LIMITS.replacen('{', r#"{"experiment":"limits","#, 1));
    let o = gibbscode(&["bounds", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subcommand"));
}

#[test]
fn missing_seed_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    graph(dir.path());
    let cfg = write_config(dir.path(), &LIMITS.replace(r#","seed":1"#, ""));
    let o = gibbscode(&["limits", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
