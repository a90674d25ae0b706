//! The subcommands. Every output file is written atomically and the
//! effective configuration lands next to the outputs as `config.json`.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use citf_core::criteria::{window_criteria, CHANNEL_NAMES};
use citf_core::io::{parse_trajectory_csv, read_windows_jsonl, write_trajectory_csv};
use citf_core::safety::assemble_safety_indices;
use citf_core::synth::generate_synthetic;
use citf_core::window::{build_scene_windows, resample, WindowConfig};
use citf_core::{AgentState, SceneWindow, TrajectoryTable, Vec2};
use citf_model::eval::{baseline_report, evaluate, report_table, robustness, write_predictions_jsonl, Variant};
use citf_model::gradsuite::gradient_suite;
use citf_model::leanformer::benchmark_attention;
use citf_model::train::fit;
use citf_model::{Model, ModelConfig};
use citf_nn::checkpoint::{write_atomic, MANIFEST_FILE};
use serde::Serialize;

use crate::config::CliConfig;
use crate::error::CliError;

pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Console output that tolerates a closed pipe (e.g. `| head`).
pub fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Output directory plus the record of what produced it.
pub struct Run<'a> {
    pub out: &'a Path,
    pub command: &'static str,
    pub inputs: BTreeMap<&'static str, String>,
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    inputs: &'a BTreeMap<&'static str, String>,
    config: &'a CliConfig,
}

impl Run<'_> {
    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::create_dir_all(self.out)
            .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        write_atomic(&path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }

    fn echo(&self, cfg: &CliConfig) -> Result<(), CliError> {
        let echo = Echo { command: self.command, inputs: &self.inputs, config: cfg };
        self.write("config.json", &serde_json::to_vec_pretty(&echo)?)
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{what} {} does not exist", path.display())))
    }
}

fn require_checkpoint(dir: &Path) -> Result<(), CliError> {
    require_file(&dir.join(MANIFEST_FILE), "checkpoint manifest")
}

fn load_table(path: &Path, cfg: &CliConfig) -> Result<TrajectoryTable, CliError> {
    parse_trajectory_csv(path, cfg.data.unit, cfg.data.dt)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Windows from a trajectory CSV (resampled to the model rate) or from a
/// JSON-lines window cache (`.jsonl`).
pub fn load_windows(path: &Path, cfg: &CliConfig, model: &ModelConfig) -> Result<Vec<SceneWindow>, CliError> {
    let windows = if path.extension().is_some_and(|e| e == "jsonl") {
        let file = std::fs::File::open(path)?;
        read_windows_jsonl(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
    } else {
        let table = resample(&load_table(path, cfg)?, model.dt)?;
        let wcfg = WindowConfig { t_h: model.t_h, t_f: model.t_f, radius: cfg.data.radius, n_max: model.n_max };
        build_scene_windows(&table, &wcfg)
    };
    if windows.is_empty() {
        return Err(CliError::Data(format!(
            "{} yields no windows with {} history and {} future frames",
            path.display(),
            model.t_h,
            model.t_f
        )));
    }
    Ok(windows)
}

pub fn synth(run: &Run, cfg: &CliConfig) -> Result<(), CliError> {
    let table = generate_synthetic(&cfg.synth, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut bytes = Vec::new();
    write_trajectory_csv(&mut bytes, &table)?;
    run.write("trajectories.csv", &bytes)?;
    run.echo(cfg)?;
    emit(&format!("wrote {} records to {}\n", table.len(), run.out.join("trajectories.csv").display()));
    Ok(())
}

/// The whole recording as one window: every agent, every frame, presence in
/// the mask. The first agent is nominally the target; nothing is translated.
pub fn recording_window(table: &TrajectoryTable) -> SceneWindow {
    let tracks = table.tracks();
    let frames = table.by_frame();
    let (first, last) = (*frames.keys().next().expect("table is non-empty"), *frames.keys().last().expect("table is non-empty"));
    let agent_ids: Vec<i64> = tracks.keys().copied().collect();
    let mut history = Vec::with_capacity(agent_ids.len());
    let mut mask = Vec::with_capacity(agent_ids.len());
    for (&id, track) in &tracks {
        let start = track[0].frame;
        let (mut states, mut present) = (Vec::new(), Vec::new());
        for f in first..=last {
            match track.get((f - start) as usize).filter(|s| f >= start && s.frame == f) {
                Some(s) => {
                    states.push(*s);
                    present.push(true);
                }
                None => {
                    states.push(AgentState::absent(id, f));
                    present.push(false);
                }
            }
        }
        history.push(states);
        mask.push(present);
    }
    SceneWindow {
        target_id: agent_ids[0],
        reference_frame: last,
        dt: table.dt(),
        agent_ids,
        history,
        mask,
        future: Vec::new(),
        origin: Vec2::ZERO,
    }
}

pub fn extract(run: &Run, cfg: &CliConfig, data: &Path) -> Result<(), CliError> {
    require_file(data, "data file")?;
    let table = load_table(data, cfg)?;
    let window = recording_window(&table);
    let safety = assemble_safety_indices(&window, &cfg.model.features.safety);
    let criteria = window_criteria(&window, &cfg.model.features.graph)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["agent_id", "frame", "ttc", "tet", "tit", "spr", "drv"])?;
    let mut b = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["agent_id".to_string(), "frame".to_string()];
    for group in ["bmi", "bti", "bci"] {
        header.extend(CHANNEL_NAMES.iter().map(|c| format!("{group}_{c}")));
    }
    b.write_record(&header)?;
    let mut rows = 0;
    for (a, &id) in window.agent_ids.iter().enumerate() {
        for (k, state) in window.history[a].iter().enumerate() {
            if !window.mask[a][k] {
                continue;
            }
            let frame = state.frame.to_string();
            let s = [safety.ttc[a][k], safety.tet[a][k], safety.tit[a][k], safety.spr[a][k], safety.drv[a][k]];
            let mut rec = vec![id.to_string(), frame.clone()];
            rec.extend(s.iter().map(f64::to_string));
            w.write_record(&rec)?;
            let mut rec = vec![id.to_string(), frame];
            rec.extend(criteria[a][k].flatten().iter().map(f64::to_string));
            b.write_record(&rec)?;
            rows += 1;
        }
    }
    let into_bytes = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| CliError::Data(e.to_string()));
    run.write("safety.csv", &into_bytes(w)?)?;
    run.write("behavior.csv", &into_bytes(b)?)?;
    run.echo(cfg)?;
    emit(&format!("wrote safety indices and behavior criteria for {rows} agent-frames to {}\n", run.out.display()));
    Ok(())
}

pub fn train(run: &Run, cfg: &CliConfig, data: &Path) -> Result<(), CliError> {
    require_file(data, "data file")?;
    let windows = load_windows(data, cfg, &cfg.model)?;
    let (model, report) = fit(&windows, &cfg.model, &cfg.train)?;
    let dir = run.out.join(CHECKPOINT_DIR);
    model.save(&dir, serde_json::to_value(cfg)?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    run.write("history.csv", &csv)?;
    run.echo(cfg)?;
    let first = report.epoch_loss.first().copied().unwrap_or(f64::NAN);
    let last = report.epoch_loss.last().copied().unwrap_or(f64::NAN);
    emit(&format!("trained on {} windows for {} epochs: loss {first:.4} -> {last:.4}; checkpoint in {}\n",
        report.windows,
        report.epoch_loss.len(),
        dir.display()
    ));
    Ok(())
}

fn load_model(checkpoint: &Path, expected: Option<&ModelConfig>) -> Result<Model, CliError> {
    require_checkpoint(checkpoint)?;
    let (model, _) = Model::load(checkpoint, expected)?;
    Ok(model)
}

/// With `expected` (model settings given explicitly), the checkpoint must
/// have been built with them.
pub fn eval(
    run: &Run,
    cfg: &CliConfig,
    checkpoint: &Path,
    data: &Path,
    variant: Variant,
    expected: Option<&ModelConfig>,
) -> Result<(), CliError> {
    require_file(data, "data file")?;
    let model = load_model(checkpoint, expected)?;
    let windows = load_windows(data, cfg, &model.config)?;
    let tag = model_tag(&model);
    let evaluation = evaluate(&model, &tag, &windows, variant, cfg.eval.selection)?;
    let baseline = baseline_report(&windows, variant, model.config.t_f)?;
    let table = report_table(&[baseline.clone(), evaluation.report.clone()]);
    let mut preds = Vec::new();
    write_predictions_jsonl(&mut preds, &evaluation.predictions)?;
    run.write("report.json", &serde_json::to_vec_pretty(&evaluation.report)?)?;
    run.write("baseline.json", &serde_json::to_vec_pretty(&baseline)?)?;
    run.write("report.txt", table.as_bytes())?;
    run.write("predictions.jsonl", &preds)?;
    run.echo(&with_model(cfg, &model))?;
    emit(&table);
    Ok(())
}

pub fn robustness_sweep(run: &Run, cfg: &CliConfig, checkpoint: &Path, data: &Path, expected: Option<&ModelConfig>) -> Result<(), CliError> {
    require_file(data, "data file")?;
    let model = load_model(checkpoint, expected)?;
    let windows = load_windows(data, cfg, &model.config)?;
    let reports = robustness(&model, &model_tag(&model), &windows, cfg.eval.selection)?;
    let table = report_table(&reports);
    run.write("robustness.json", &serde_json::to_vec_pretty(&reports)?)?;
    run.write("robustness.txt", table.as_bytes())?;
    run.echo(&with_model(cfg, &model))?;
    emit(&table);
    Ok(())
}

pub fn gradcheck(run: &Run, cfg: &CliConfig) -> Result<(), CliError> {
    let cases = gradient_suite(cfg.gradcheck.seed, cfg.gradcheck.max_entries)?;
    for c in &cases {
        emit(&format!("{:<5} {:<22} {:.3e} over {:>5} entries  worst {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_rel_error,
            c.checked,
            c.worst
        ));
    }
    run.write("gradcheck.json", &serde_json::to_vec_pretty(&cases)?)?;
    run.echo(cfg)?;
    let failed: Vec<&str> = cases.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn benchmark(run: &Run, cfg: &CliConfig) -> Result<(), CliError> {
    let b = &cfg.benchmark;
    let rows = benchmark_attention(&b.lengths, b.rank, b.width, cfg.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "k", "macs_linear", "macs_full", "seconds_linear", "seconds_full"])?;
    for r in &rows {
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.macs_linear.to_string(),
            r.macs_full.to_string(),
            format!("{:.6e}", r.seconds_linear),
            format!("{:.6e}", r.seconds_full),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    run.write("benchmark.csv", &bytes)?;
    run.echo(cfg)?;
    emit(&String::from_utf8_lossy(&bytes));
    Ok(())
}

/// Ablation letter when the toggles match one of the named models.
fn model_tag(model: &Model) -> String {
    citf_model::Ablation::MODELS
        .into_iter()
        .find(|&l| citf_model::Ablation::model(l) == Some(model.ablation))
        .map_or_else(|| "custom".to_string(), |l| l.to_string())
}

fn with_model(cfg: &CliConfig, model: &Model) -> CliConfig {
    CliConfig { model: model.config.clone(), ..cfg.clone() }
}
