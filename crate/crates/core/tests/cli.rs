use std::fs;
use std::path::Path;

use hpctl::cli::run;
use hpctl::env::read_episode_log;

fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("hpctl").chain(args.iter().copied()).map(String::from).collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_log_and_kpis() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let code = run(argv(&["simulate", "--config", "building1", "--days", "2", "--out", path(&out)]));
    assert_eq!(code, 0);
    let rows = read_episode_log(out.join("episode.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 96);
    let kpis: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("kpis.json")).unwrap()).unwrap();
    assert!(kpis["energy_kwh"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_accepts_a_config_file_and_mpc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b2.json");
    fs::write(&cfg, hpctl::building::BUILDING2_JSON).unwrap();
    let out = dir.path().join("mpc");
    let code = run(argv(&[
        "simulate", "--config", path(&cfg), "--controller", "mpc", "--days", "1", "--noise", "0.5", "--out",
        path(&out),
    ]));
    assert_eq!(code, 0);
    assert!(out.join("episode.csv").is_file() && out.join("kpis.json").is_file());
}

#[test]
fn missing_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(run(argv(&["simulate", "--config", "/no/such/b.json", "--out", path(&out)])), 1);
    assert_eq!(run(argv(&["train", "--config", "/no/such/exp.json"])), 1);
    assert_eq!(
        run(argv(&["evaluate", "--checkpoint", "/no/such.bin", "--config", "building1", "--out", path(&out)])),
        1
    );
    assert_eq!(run(argv(&["simulate", "--out", path(&out)])), 1);
    assert_eq!(run(argv(&["bogus"])), 1);
    assert!(!out.exists());
}

#[test]
fn invalid_experiment_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"name": "bad", "buildings": ["building1"], "rl": [{"trainer": {"tau": 0.0}, "episodes": 1}]}"#)
        .unwrap();
    assert_eq!(run(argv(&["train", "--config", path(&cfg), "--out", path(&dir.path().join("o"))])), 1);
}

#[test]
fn train_evaluate_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    fs::write(
        &cfg,
        r#"{
  "name": "tiny",
  "buildings": ["building1"],
  "weather": {"synth": {"seed": 2, "days": 30}},
  "env": {"eval_len": 96},
  "controllers": [{"kind": "heating_curve"}],
  "rl": [{"name": "csac", "trainer": {"algorithm": {"kind": "csac_lb"}, "hidden": [16, 16],
          "batch_size": 32, "warmup_steps": 50, "eval_every": 1}, "episodes": 2}],
  "seeds": [3]
}"#,
    )
    .unwrap();
    let runs = dir.path().join("runs");
    assert_eq!(run(argv(&["train", "--config", path(&cfg), "--out", path(&runs)])), 0);
    let summary = fs::read_to_string(runs.join("summary.csv")).unwrap();
    assert!(summary.contains("heating_curve") && summary.contains("csac"));

    let ckpt = walk(&runs).into_iter().find(|p| p.ends_with("agent.bin")).expect("checkpoint written");
    let eval_out = dir.path().join("eval");
    let code = run(argv(&[
        "evaluate", "--checkpoint", path(&ckpt), "--config", "building1", "--days", "1", "--out", path(&eval_out),
    ]));
    assert_eq!(code, 0);
    assert_eq!(read_episode_log(eval_out.join("episode.csv")).unwrap().len(), 96);

    let report = dir.path().join("report");
    assert_eq!(run(argv(&["report", "--runs", path(&runs), "--out", path(&report)])), 0);
    let pareto = fs::read_to_string(report.join("pareto.csv")).unwrap();
    let header = pareto.lines().next().unwrap();
    assert!(header.contains("max_dev_k") && header.contains("energy_kwh"), "{header}");
    let curves = fs::read_to_string(report.join("curves.csv")).unwrap();
    assert!(curves.lines().count() > 1);

    let meta = walk(&runs).into_iter().filter(|p| p.ends_with("kpis.json")).count();
    assert_eq!(meta, 2);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn shipped_experiment_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.json", "full.json"] {
        let cfg = hpctl::experiment::ExperimentConfig::load(&dir.join(name)).unwrap();
        cfg.validate().unwrap();
    }
}
