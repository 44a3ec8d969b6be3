use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liquidhike"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .env_remove("LIQUIDHIKE_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn error_json(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn print_defaults_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["config", "--print-defaults"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = liquidhike::config::RunConfig::parse(&text).unwrap();
    assert_eq!(cfg, liquidhike::config::RunConfig::default());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&cli(p, &["no-such-command"])), 2);
    assert_eq!(code(&cli(p, &["eval-single", "--inference-hz"])), 2);

    let o = cli(p, &["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&o), 3);
    assert_eq!(error_json(&o)["error"], "config");

    let bad = p.join("bad.toml");
    std::fs::write(&bad, "[train]\nepochz = 1\n").unwrap();
    assert_eq!(code(&cli(p, &["config", "--config", bad.to_str().unwrap()])), 3);

    let o = cli(p, &["eval-single", "--checkpoint", "/nonexistent/model.ckpt"]);
    assert_eq!(code(&o), 4);
    assert_eq!(error_json(&o)["exit_code"], 4);
    assert_eq!(code(&cli(p, &["train", "--data", "/nonexistent/data"])), 4);

    std::fs::create_dir_all(p.join("empty")).unwrap();
    let o = cli(p, &["plot", "--results", p.join("empty").to_str().unwrap()]);
    assert_eq!(code(&o), 5);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "master_seed = 5\n").unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_liquidhike"));
        c.args(["config", "--config", cfg.to_str().unwrap()]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        match env {
            Some(e) => c.env("LIQUIDHIKE_SEED", e),
            None => c.env_remove("LIQUIDHIKE_SEED"),
        };
        let o = c.output().unwrap();
        liquidhike::config::RunConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap().master_seed
    };
    assert_eq!(run(None, None), 5);
    assert_eq!(run(Some("6"), None), 6);
    assert_eq!(run(Some("6"), Some("7")), 7);
}

#[test]
fn end_to_end_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = p.join("run.toml");
    std::fs::write(&cfg, "[train]\nepochs = 1\nframe_epochs = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let ok = |args: &[&str]| {
        let o = cli(p, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(&["gen-data", "--config", c, "--n-traj", "2"]);
    assert!(p.join("data/manifest.json").is_file());
    ok(&["train", "--config", c]);
    assert!(p.join("model.ckpt").is_file());
    assert_eq!(std::fs::read_to_string(p.join("train_log.jsonl")).unwrap().lines().count(), 2);
    ok(&["eval-single", "--config", c, "--attempts", "2", "--traces", "1"]);
    ok(&["render-preview", "--config", c, "--count", "1"]);
    let o = ok(&["plot", "--config", c]);
    let listed = String::from_utf8(o.stdout).unwrap();
    assert!(listed.contains("success.csv"), "{listed}");
}
