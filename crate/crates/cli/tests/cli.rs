use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{"synth": {"agents": 14, "duration": 12.0, "road_length": 240.0},
 "model": {"d_model": 8, "heads": 2, "rank": 4, "norm_groups": 2},
 "train": {"epochs": 1, "batch_size": 16}}"#;

fn citf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = citf(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Pipeline {
    data: PathBuf,
    train: PathBuf,
    eval: PathBuf,
}

fn pipeline(root: &Path, config: &Path) -> Pipeline {
    let synth = root.join("synth");
    let train = root.join("train");
    let eval = root.join("eval");
    ok(&["synth", "--config", s(config), "--seed", "4", "--out", s(&synth)]);
    let data = synth.join("trajectories.csv");
    ok(&["train", "--config", s(config), "--seed", "4", "--data", s(&data), "--out", s(&train)]);
    let ckpt = train.join("checkpoint");
    ok(&["eval", "--config", s(config), "--checkpoint", s(&ckpt), "--data", s(&data), "--variant", "drop5", "--out", s(&eval)]);
    Pipeline { data, train, eval }
}

#[test]
fn pipeline_is_reproducible_and_echoes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.json");
    std::fs::write(&config, TINY).unwrap();
    let a = pipeline(&dir.path().join("a"), &config);
    let b = pipeline(&dir.path().join("b"), &config);

    for file in ["checkpoint/model.bin", "checkpoint/model.json", "history.csv"] {
        assert_eq!(std::fs::read(a.train.join(file)).unwrap(), std::fs::read(b.train.join(file)).unwrap(), "{file}");
    }
    for file in ["report.json", "baseline.json", "predictions.jsonl"] {
        assert_eq!(std::fs::read(a.eval.join(file)).unwrap(), std::fs::read(b.eval.join(file)).unwrap(), "{file}");
    }

    let echo: serde_json::Value = serde_json::from_slice(&std::fs::read(a.eval.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["command"], "eval");
    assert_eq!(echo["inputs"]["variant"], "drop5");
    assert_eq!(echo["config"]["model"]["d_model"], 8);
    let echo: serde_json::Value = serde_json::from_slice(&std::fs::read(a.train.join("config.json")).unwrap()).unwrap();
    assert_eq!((echo["config"]["seed"].as_u64(), echo["config"]["train"]["seed"].as_u64()), (Some(4), Some(4)));

    let history = std::fs::read_to_string(a.train.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,step,lr,loss,nll,rmse\n"));
    let report = std::fs::read_to_string(a.eval.join("report.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("constant_velocity ")), "{report}");

    let x = dir.path().join("x");
    ok(&["extract", "--data", s(&a.data), "--out", s(&x)]);
    let safety = std::fs::read_to_string(x.join("safety.csv")).unwrap();
    assert_eq!(safety.lines().next(), Some("agent_id,frame,ttc,tet,tit,spr,drv"));
    let records = std::fs::read_to_string(&a.data).unwrap().lines().count();
    assert_eq!(safety.lines().count(), records);
    let behavior = std::fs::read_to_string(x.join("behavior.csv")).unwrap();
    assert_eq!(behavior.lines().next().unwrap().split(',').count(), 20);
}

#[test]
fn robustness_sweep_covers_four_variants() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.json");
    std::fs::write(&config, TINY).unwrap();
    let p = pipeline(dir.path(), &config);
    let out = dir.path().join("r");
    ok(&["robustness", "--checkpoint", s(&p.train.join("checkpoint")), "--data", s(&p.data), "--out", s(&out)]);
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(out.join("robustness.json")).unwrap()).unwrap();
    let variants: Vec<&str> = reports.iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(variants, ["full", "drop3", "drop5", "drop8"]);

    // explicitly requested model settings must match the checkpoint
    let bad = citf(&[
        "eval", "--checkpoint", s(&p.train.join("checkpoint")), "--data", s(&p.data), "--d_model", "16", "--out", s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(2), "{}", String::from_utf8_lossy(&bad.stderr));
    assert!(!bad.stderr.is_empty());
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("nothing");
    let code = |args: &[&str]| citf(args).status.code();
    assert_eq!(code(&["train"]), Some(1));
    assert_eq!(code(&["bogus"]), Some(1));
    assert_eq!(code(&["synth", "--not_a_setting", "1", "--out", s(&out)]), Some(1));
    assert_eq!(code(&["eval", "--checkpoint", s(&missing), "--data", s(&missing), "--variant", "drop4"]), Some(1));
    assert_eq!(code(&["train", "--data", s(&missing), "--out", s(&out)]), Some(2));
    assert_eq!(code(&["eval", "--checkpoint", s(&missing), "--data", s(&missing), "--out", s(&out)]), Some(2));

    let garbage = dir.path().join("garbage.csv");
    std::fs::write(&garbage, "id,frame\n1,2,3\n").unwrap();
    assert_eq!(code(&["extract", "--data", s(&garbage), "--out", s(&out)]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn gradcheck_passes_and_records_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["gradcheck", "--out", s(dir.path())]);
    assert!(stdout.lines().count() >= 5, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    let cases: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(dir.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(cases.len(), stdout.lines().count());
}

#[test]
fn benchmark_reports_linear_growth() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["benchmark-attention", "--lengths", "[64,128]", "--width", "16", "--out", s(dir.path())]);
    let mut rows = csv::Reader::from_path(dir.path().join("benchmark.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    let macs = |i: usize, col: usize| rows[i][col].parse::<f64>().unwrap();
    assert_eq!(rows.len(), 2);
    assert!((macs(1, 2) / macs(0, 2) - 2.0).abs() < 0.05);
    assert!((macs(1, 3) / macs(0, 3) - 4.0).abs() < 0.2);
}
