use std::path::Path;
use std::process::{Command, Output};

fn critmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critmem")).args(args).output().unwrap()
}

fn write_config(dir: &Path, critic_script: &str) -> String {
    let path = dir.join("run.toml");
    let text = format!(
        r#"
output_dir = "out"
fractions = [0.5, 1.0]
[[datasets]]
source = "file"
path = "data/kb.jsonl"
[pa]
type = "scripted"
model = "follower"
script = {{ name = "critique_follower", fallback = "No" }}
[critic]
type = "scripted"
model = "critic"
script = {critic_script}
[probe]
conditions = ["XY", "X+Crit"]
"#
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn generate(dir: &Path) {
    let out = dir.join("data/kb.jsonl");
    let o = critmem(&[
        "generate",
        "--kind",
        "keyed_binary",
        "--size",
        "60",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("data/kb.header.json").exists());
}

#[test]
fn run_then_report_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let config = write_config(dir.path(), r#"{ name = "label_echo_critic" }"#);

    let o = critmem(&["run", "--config", &config]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    let tables = std::fs::read_to_string(out.join("tables.txt")).unwrap();
    assert!(tables.contains("EP_CRIT") && tables.contains("X+Crit"));

    std::fs::remove_file(out.join("report.json")).unwrap();
    let o = critmem(&["report", "--config", &config]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(out.join("report.json")).unwrap(), report);
    assert_eq!(std::fs::read_to_string(out.join("tables.txt")).unwrap(), tables);

    let saved = out.join("report.json");
    let o = critmem(&["report", "--input", saved.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), tables);
}

#[test]
fn stage_commands_write_prefixed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let config = write_config(dir.path(), r#"{ name = "label_echo_critic" }"#);
    assert!(critmem(&["train", "--config", &config]).status.success());
    assert!(critmem(&["eval", "--config", &config]).status.success());
    assert!(critmem(&["probe", "--config", &config]).status.success());
    let out = dir.path().join("out");
    for name in [
        "eval-report.json",
        "eval-tables.txt",
        "probe-report.json",
        "probe-tables.txt",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn dump_prompt_prints_a_transcript() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let config = write_config(dir.path(), r#"{ name = "label_echo_critic" }"#);
    let records = std::fs::read_to_string(dir.path().join("data/kb.jsonl")).unwrap();
    let ids: Vec<String> = records
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["id"]
                .as_str()
                .unwrap()
                .to_owned()
        })
        .collect();
    // Try ids until one lands in the test split.
    let o = ids
        .iter()
        .map(|id| {
            critmem(&[
                "dump-prompt",
                "--config",
                &config,
                "--strategy",
                "ep_crit",
                "--instance",
                id,
                "--k",
                "2",
            ])
        })
        .find(|o| o.status.success())
        .expect("some id is a test instance");
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# retrieved: "));
    assert!(text.contains("make sure to learn from your past mistakes!"));

    let o = critmem(&[
        "dump-prompt",
        "--config",
        &config,
        "--strategy",
        "zero_shot",
        "--instance",
        "missing",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failures_give_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let config = write_config(
        dir.path(),
        r#"{ name = "label_echo_critic" }
[retry]
max_attempts = 1
initial_backoff_ms = 1
timeout_secs = 2"#,
    );
    // Point the critic at a closed port: baselines finish, critique cells fail.
    let text = std::fs::read_to_string(&config).unwrap().replace(
        "type = \"scripted\"\nmodel = \"critic\"\nscript = { name = \"label_echo_critic\" }",
        "type = \"openai\"\nmodel = \"critic\"\nbase_url = \"http://127.0.0.1:9\"\napi_key_env = \"CRITMEM_TEST_KEY\"",
    );
    std::fs::write(&config, text).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_critmem"))
        .args(["eval", "--config", &config])
        .env("CRITMEM_TEST_KEY", "unused")
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(1), "{stderr}");
    assert!(stderr.contains("failed: "), "{stderr}");
    let report = std::fs::read_to_string(dir.path().join("out/eval-report.json")).unwrap();
    assert!(report.contains("zero_shot"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "output_dir = 3\n").unwrap();
    let o = critmem(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
}
