use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use pickopt::learn::AutoregressiveChain;

fn pickopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickopt"))
        .current_dir(dir)
        .env_remove("PICKOPT_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pickopt(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small config so the whole pipeline runs in seconds.
fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    std::fs::write(&p, r#"{"seed": 11, "noise": {"n_perturb": 6}, "inducts": 40}"#).unwrap();
    p
}

#[test]
fn gen_scenes_counts_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen-scenes", "--seed", "3", "--count", "5", "--out", "a.jsonl"]);
    ok(d.path(), &["gen-scenes", "--seed", "3", "--count", "5", "--out", "b.jsonl"]);
    let a = std::fs::read_to_string(d.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 6);
    assert!(a.lines().next().unwrap().contains("\"format_version\":1"));
    assert_eq!(a, std::fs::read_to_string(d.path().join("b.jsonl")).unwrap());

    let out = pickopt(d.path(), &["gen-scenes", "--seed", "3", "--count", "0", "--out", "e.jsonl"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(std::fs::read_to_string(d.path().join("e.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let run = |seed_env: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_pickopt"))
            .current_dir(d.path())
            .env("PICKOPT_SEED", seed_env)
            .args(["gen-scenes", "--count", "2", "--out", out])
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read_to_string(d.path().join(out)).unwrap()
    };
    let env_run = run("77", "env.jsonl");
    ok(d.path(), &["gen-scenes", "--seed", "77", "--count", "2", "--out", "flag.jsonl"]);
    assert_eq!(env_run, std::fs::read_to_string(d.path().join("flag.jsonl")).unwrap());
    assert_ne!(env_run, run("78", "other.jsonl"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.json"), r#"{"split_fraction": "x"}"#).unwrap();
    let o = pickopt(d.path(), &["--config", "bad.json", "gen-scenes", "--count", "1", "--out", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("s.jsonl").exists());

    std::fs::write(d.path().join("invalid.json"), r#"{"scene": {"count_min": 5, "count_max": 2}}"#).unwrap();
    let o = pickopt(d.path(), &["--config", "invalid.json", "gen-scenes", "--count", "1", "--out", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(
        d.path().join("future.jsonl"),
        "{\"format_version\":2,\"kind\":\"scenes\",\"seed\":0,\"count\":0}\n",
    )
    .unwrap();
    let o = pickopt(d.path(), &["collect-picks", "--scenes", "future.jsonl", "--out", "p.jsonl"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("format version"));

    std::fs::write(d.path().join("model.json"), r#"{"format_version": 9}"#).unwrap();
    let o = pickopt(d.path(), &["abtest", "--model", "model.json", "--inducts", "1", "--json", "r.json", "--text", "r.txt"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!d.path().join("r.json").exists() && !d.path().join("r.txt").exists());

    ok(d.path(), &["gen-scenes", "--count", "0", "--out", "empty.jsonl"]);
    ok(d.path(), &["collect-picks", "--scenes", "empty.jsonl", "--out", "nopicks.jsonl"]);
    let o = pickopt(
        d.path(),
        &["gen-dataset", "--scenes", "empty.jsonl", "--picks", "nopicks.jsonl", "--out", "ds.jsonl"],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(!d.path().join("ds.jsonl").exists());
}

#[test]
fn zero_delta_chain_gives_identical_arms_and_smoke_run_is_fast() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("zero.json"), AutoregressiveChain::constant([0.0; 3]).to_json().unwrap()).unwrap();
    let t = Instant::now();
    ok(
        d.path(),
        &["--seed", "5", "abtest", "--model", "zero.json", "--inducts", "10", "--json", "r.json", "--text", "r.txt"],
    );
    assert!(t.elapsed().as_secs_f64() < 5.0, "smoke run took {:?}", t.elapsed());
    let report = pickopt_cli::read_report(&d.path().join("r.json")).unwrap();
    assert_eq!(report.control, report.treatment);
    let text = std::fs::read_to_string(d.path().join("r.txt")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.contains(" C ") || l.contains(" T ")).collect();
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].replacen(" C ", " T ", 1), pair[1]);
    }
}

#[test]
fn full_pipeline_with_both_model_kinds() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let cfg = cfg.to_str().unwrap();
    ok(d.path(), &["--config", cfg, "gen-scenes", "--count", "30", "--out", "scenes.jsonl"]);
    let inputs_before = std::fs::read(d.path().join("scenes.jsonl")).unwrap();
    ok(d.path(), &["--config", cfg, "collect-picks", "--scenes", "scenes.jsonl", "--out", "picks.jsonl"]);
    assert_eq!(std::fs::read_to_string(d.path().join("picks.jsonl")).unwrap().lines().count(), 31);
    ok(
        d.path(),
        &["--config", cfg, "gen-dataset", "--scenes", "scenes.jsonl", "--picks", "picks.jsonl", "--out", "ds.jsonl"],
    );
    for kind in ["gbdt", "mlp"] {
        let model = format!("{kind}.json");
        let table = ok(d.path(), &["--config", cfg, "train", "--dataset", "ds.jsonl", "--kind", kind, "--out", &model]);
        for label in ["p_x (meters)", "p_y (meters)", "r_z (radians)"] {
            assert!(table.contains(label), "{table}");
        }
        assert!(table.contains(&format!("RMSE ({})", kind.to_uppercase())));
    }
    ok(
        d.path(),
        &[
            "--config", cfg, "optimize", "--model", "gbdt.json", "--scenes", "scenes.jsonl", "--picks", "picks.jsonl", "--out",
            "traces.jsonl",
        ],
    );
    for line in std::fs::read_to_string(d.path().join("traces.jsonl")).unwrap().lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["best_psp"].as_f64().unwrap() >= v["initial_psp"].as_f64().unwrap());
    }
    ok(d.path(), &["--config", cfg, "dump-trace", "--model", "gbdt.json", "--index", "2", "--frame", "--out", "trace.json"]);
    let dump: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(dump["format_version"], 1);
    let frame = &dump["frame"];
    let cells = frame["nx"].as_u64().unwrap() * frame["ny"].as_u64().unwrap();
    assert_eq!(frame["heightgrid"].as_array().unwrap().len() as u64, cells);
    ok(
        d.path(),
        &["--config", cfg, "--threads", "1", "abtest", "--model", "gbdt.json", "--json", "r.json", "--text", "r.txt"],
    );
    assert_eq!(inputs_before, std::fs::read(d.path().join("scenes.jsonl")).unwrap());
    let text = std::fs::read_to_string(d.path().join("r.txt")).unwrap();
    assert!(text.contains("Missed picks") && text.contains("Multi-pick"));
}

#[test]
fn picks_against_the_wrong_scenes_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let cfg = cfg.to_str().unwrap();
    ok(d.path(), &["--config", cfg, "gen-scenes", "--count", "4", "--out", "a.jsonl"]);
    ok(d.path(), &["--config", cfg, "--seed", "99", "gen-scenes", "--count", "4", "--out", "b.jsonl"]);
    ok(d.path(), &["--config", cfg, "collect-picks", "--scenes", "a.jsonl", "--out", "picks.jsonl"]);
    let o = pickopt(
        d.path(),
        &["--config", cfg, "gen-dataset", "--scenes", "b.jsonl", "--picks", "picks.jsonl", "--out", "ds.jsonl"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
