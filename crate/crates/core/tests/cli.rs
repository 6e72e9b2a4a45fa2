use std::path::PathBuf;
use std::process::{Command, Output};

fn memxbar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memxbar"))
        .args(args)
        .output()
        .expect("run memxbar")
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn levels_runs_without_a_config() {
    let out = memxbar(&["levels", "--out", "-", "--quiet"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("# tool = memxbar "));
    assert!(text.contains("\nm,L,L_C,effective_count\n"));
    assert!(text.contains("\n8,8,6435,"));
    assert!(text.contains("\n8,12,75582,"));
    assert!(stderr(&out).is_empty());
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = memxbar(&["rce"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("--config"));
    assert!(err.contains("Usage: memxbar rce"));
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(memxbar(&["rce", "--bogus"]).status.code(), Some(2));
    assert_eq!(memxbar(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(memxbar(&["rce", "--seed", "abc"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = dir.path().join("bad.toml");
    std::fs::write(&bad_key, "[grid]\nm = [1]\nL = [2]\nlevelz = 3\n").unwrap();
    let out = memxbar(&["rce", "--config", bad_key.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("levelz"));

    let bad_value = dir.path().join("neg.toml");
    std::fs::write(&bad_value, "[nonideal]\nread_noise_frac = -0.1\n").unwrap();
    let out = memxbar(&["rce", "--config", bad_value.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("read_noise_frac"));

    let wrong = configs().join("mapdump.toml");
    let out = memxbar(&["rce", "--config", wrong.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nn.toml");
    std::fs::write(&cfg, "[nn]\nnetwork = \"missing.mxw\"\ndataset = \"missing.csv\"\n").unwrap();
    let out = memxbar(&["nn", "--config", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("rce.toml");
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = memxbar(&[
            "rce",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "3",
            "--seed",
            seed,
            "--out",
            path.to_str().unwrap(),
            "--quiet",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(path).unwrap()
    };
    let (a, b, c) = (run("a.csv", "4"), run("b.csv", "4"), run("c.csv", "5"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("# seed = 4\n"));
    assert!(text.contains("\nrow,m,L,L_C,trial,column,rce_percent\n"));
}

#[test]
fn mapdump_prints_the_lookup_table() {
    let cfg = configs().join("mapdump.toml");
    let out = memxbar(&["mapdump", "--config", cfg.to_str().unwrap(), "--out", "-", "--quiet"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "g_1,g_2,g_3,g_n,w_realized");
    assert_eq!(body.len(), 21);
    assert_eq!(body[3], "15,15,10,40,-0.993266");
}
