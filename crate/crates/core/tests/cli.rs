mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::write_world;
use textnav::runner::EvalReport;

fn textnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textnav"))
        .args(args)
        .current_dir(dir)
        .env_remove("LM_BASE_URL")
        .env_remove("LM_API_KEY")
        .output()
        .unwrap()
}

fn scene_args(w: &common::WorldFiles) -> Vec<String> {
    let mut v = vec!["--scenes".to_string()];
    v.extend(w.scenes.iter().map(|p| p.display().to_string()));
    v.push("--episodes".into());
    v.push(w.episodes.display().to_string());
    v
}

fn run_ok(dir: &Path, args: &[String]) -> Output {
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = textnav(dir, &args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn oracle_eval_reports_full_success() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_world(dir.path(), 1);
    let mut args = vec!["eval".to_string()];
    args.extend(scene_args(&w));
    args.extend(["--agent", "oracle", "--out", "r.json", "--csv", "r.csv"].map(String::from));
    run_ok(dir.path(), &args);
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report.aggregate.sr, 100.0);
    assert_eq!(report.aggregate.spl, 100.0);
    assert_eq!(report.agent, "oracle");
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.per_episode.len() + 1);
}

#[test]
fn config_file_is_echoed_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_world(dir.path(), 2);
    let config = "seed = 5\n\n[eval]\nagent = \"random\"\nmax_steps = 3\n";
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    let mut args = vec!["eval".to_string(), "--config".into(), "run.toml".into(), "--max-steps".into(), "6".into()];
    args.extend(scene_args(&w));
    let out = run_ok(dir.path(), &args);
    let report: EvalReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.config, config);
    assert!(report.settings.contains("max_steps = 6"), "{}", report.settings);
    assert!(report.settings.contains("seed = 5"));
    assert_eq!(report.agent, "random");
    assert!(report.per_episode.iter().all(|r| r.decisions.len() <= 6));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_world(dir.path(), 3);
    assert_eq!(textnav(dir.path(), &["eval", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(textnav(dir.path(), &["eval", "--agent", "oracle"]).status.code(), Some(1));
    assert_eq!(textnav(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(textnav(dir.path(), &["mix", "--real", "missing.jsonl"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.jsonl"), "{not json\n").unwrap();
    assert_eq!(textnav(dir.path(), &["transfer", "--input", "bad.jsonl"]).status.code(), Some(2));

    let mut args = vec!["eval".to_string()];
    args.extend(scene_args(&w));
    args.extend(["--agent", "lm", "--gateway", "http"].map(String::from));
    let out = textnav(dir.path(), &args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LM_BASE_URL"));

    let help = textnav(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn help_lists_every_flag() {
    use clap::CommandFactory;
    let dir = tempfile::tempdir().unwrap();
    for sub in textnav::cli::Cli::command().get_subcommands() {
        let out = textnav(dir.path(), &[sub.get_name(), "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for arg in sub.get_arguments().filter(|a| a.get_long().is_some()) {
            let flag = format!("--{}", arg.get_long().unwrap());
            assert!(text.contains(&flag), "`{} --help` lacks {flag}", sub.get_name());
        }
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_world(dir.path(), 4);
    let mut outs = Vec::new();
    for jobs in ["1", "4"] {
        let mut args = vec!["--jobs".to_string(), jobs.into(), "build-dataset".into(), "--rho".into(), "0.3".into(), "--repeats".into(), "3".into()];
        args.extend(scene_args(&w));
        outs.push(run_ok(dir.path(), &args).stdout);
        let mut args = vec!["--jobs".to_string(), jobs.into(), "synth".into(), "--target".into(), "8".into()];
        args.extend(scene_args(&w));
        outs.push(run_ok(dir.path(), &args).stdout);
    }
    assert_eq!(outs[0], outs[2]);
    assert_eq!(outs[1], outs[3]);
}

#[test]
fn replay_writes_a_transcript_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    std::fs::write(dir.path().join("o.json"), r#"{"vp1/2": "a hallway with a pizza oven"}"#).unwrap();
    let args: Vec<String> = [
        "replay",
        "--scenes",
        &format!("{fixtures}/kitchen_scene.json"),
        "--episodes",
        &format!("{fixtures}/kitchen_episode.jsonl"),
        "--script",
        &format!("{fixtures}/kitchen_replay.jsonl"),
        "--overrides",
        "o.json",
        "--transcript",
        "t.txt",
        "--out",
        "r.json",
    ]
    .map(String::from)
    .to_vec();
    run_ok(dir.path(), &args);
    let transcript = std::fs::read_to_string(dir.path().join("t.txt")).unwrap();
    assert!(transcript.contains("a hallway with a pizza oven"));
    assert!(!transcript.contains("a living room filled with furniture and a fire place\n\nTo"));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report.aggregate.sr, 100.0);

    std::fs::write(dir.path().join("bad.json"), r#"{"nowhere/0": "x"}"#).unwrap();
    let mut bad = args.clone();
    bad[8] = "bad.json".into();
    assert_eq!(textnav(dir.path(), &bad.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(2));
}
