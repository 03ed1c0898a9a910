use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weavematch_core::{is_stable, Matching, PreferenceInstance};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_weavematch"));
    c.env_remove("WEAVEMATCH_OUT");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wm-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn generate(out: &Path, extra: &[&str]) -> Output {
    let o = run(bin().args(["generate", "--n", "5", "--count", "12", "--seed", "3", "--instances", "--out"]).arg(out).args(extra));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

#[test]
fn generate_then_solve_round_trips() {
    let dir = temp("solve");
    generate(&dir, &[]);
    assert!(dir.join("manifest.json").is_file());
    let inst_path = dir.join("instances").join("4.json");
    let inst = PreferenceInstance::load(&inst_path).unwrap();
    for algo in ["gs", "gs-best", "dacc", "powerbalance", "polymin", "oracle"] {
        let out = dir.join(format!("{algo}.json"));
        let o = run(bin().args(["solve", "--algo", algo, "--cost", "bal", "--instance"]).arg(&inst_path).arg("--out").arg(&out));
        assert_eq!(code(&o), 0, "{algo}: {}", stderr(&o));
        let m = Matching::load(&out).unwrap();
        assert!(is_stable(&inst, &m), "{algo}");
        assert!(stderr(&o).contains("stable=true"));
    }
    let o = run(bin().args(["solve", "--algo", "gs", "--instance"]).arg(&inst_path));
    assert_eq!(code(&o), 0);
    let m = Matching::from_json(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    assert!(m.is_perfect());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bench_writes_reports() {
    let dir = temp("bench");
    generate(&dir, &[]);
    let out = dir.join("report");
    let o = run(bin().args(["bench", "--manifest"]).arg(dir.join("manifest.json")).arg("--out").arg(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("oracle") && table.contains("baseline"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 6);
    let rows = std::fs::read_to_string(out.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 6 * 12);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = temp("env");
    let target = dir.join("from-env");
    let o = run(bin().env("WEAVEMATCH_OUT", &target).args(["generate", "--n", "3", "--count", "2"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(target.join("manifest.json").is_file());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = temp("config");
    let cfg = dir.join("cfg.json");
    let out = dir.join("out");
    std::fs::write(&cfg, serde_json::json!({ "command": "generate", "n": 4, "count": 3, "out": out }).to_string()).unwrap();

    let o = run(bin().arg("--config").arg(&cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(v["spec"]["n"], 4);
    assert_eq!(v["spec"]["count"], 3);

    let o = run(bin().args(["generate", "--config"]).arg(&cfg).args(["--n", "6"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(v["spec"]["n"], 6);

    let o = run(bin().arg("--config").arg(&cfg).args(["--count", "5"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(v["spec"]["count"], 5);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn invalid_invocations_exit_with_2() {
    let dir = temp("bad");
    let cases: Vec<Vec<String>> = vec![
        vec!["generate".into()],
        vec!["generate".into(), "--n".into(), "4".into(), "--dist".into(), "XY".into()],
        vec!["generate".into(), "--n".into(), "4".into(), "--dist".into(), "Lib".into()],
        vec!["bench".into(), "--manifest".into(), "m.json".into(), "--methods".into(), "simplex".into()],
        vec!["--config".into(), dir.join("missing.json").display().to_string()],
        vec!["train".into(), "--lr".into(), "-1".into(), "--iters".into(), "1".into()],
        vec!["train".into(), "--arch".into(), "0,8".into(), "--iters".into(), "1".into()],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let o = run(bin().args(&args).env("WEAVEMATCH_OUT", dir.join("out")));
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
    let bad_cfg = dir.join("bad.json");
    std::fs::write(&bad_cfg, "[1, 2]").unwrap();
    let o = run(bin().args(["generate", "--config"]).arg(&bad_cfg));
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn io_failures_exit_with_1() {
    let o = run(bin().args(["bench", "--manifest", "/nonexistent/manifest.json"]));
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = run(bin().args(["solve", "--algo", "gs", "--instance", "/nonexistent/i.json"]));
    assert_eq!(code(&o), 1);
}

#[test]
fn train_and_eval_end_to_end() {
    let dir = temp("train");
    let run_dir = dir.join("run");
    let o = run(bin()
        .args(["train", "--n", "4", "--arch", "2,8", "--loss", "fsm", "--iters", "6", "--val-every", "3"])
        .args(["--val-count", "10", "--seed", "2", "--out"])
        .arg(&run_dir));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["best.ck", "train_log.csv", "train_config.json"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "iteration,lm,ls,lf_or_lb,stable_rate,mean_seq,mean_bal");
    assert_eq!(log.lines().count(), 1 + 3);

    generate(&dir, &[]);
    let report = dir.join("report");
    let o = run(bin()
        .args(["eval", "--checkpoint"])
        .arg(run_dir.join("best.ck"))
        .arg("--manifest")
        .arg(dir.join("manifest.json"))
        .args(["--binarize", "hungarian", "--baselines", "gs,oracle", "--out"])
        .arg(&report));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(report.join("summary.csv")).unwrap();
    let net = summary.lines().find(|l| l.starts_with("weavenet,")).unwrap();
    // hungarian always yields a matching, so the valid rate is full.
    assert_eq!(net.split(',').nth(2), Some("100.0000"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn divergence_exits_with_3() {
    let dir = temp("diverge");
    let o = run(bin()
        .args(["train", "--n", "3", "--arch", "2,4", "--iters", "20", "--lr", "1e30", "--val-count", "4", "--out"])
        .arg(dir.join("run")));
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    std::fs::remove_dir_all(dir).unwrap();
}
