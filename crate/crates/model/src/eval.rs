//! Evaluation: per-horizon RMSE, the constant-velocity yardstick, the
//! missing-frame robustness sweep and prediction dumps.

use std::fmt::Write as _;
use std::io::Write;

use citf_core::protocol::{drop_frames, interpolate_missing, DropVariant};
use citf_core::{SceneWindow, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{GaussianStep, MixturePrediction};
use crate::error::{ModelError, Result};
use crate::model::Model;

/// Report horizons in seconds.
pub const HORIZONS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

/// Extrapolates the target's velocity at the reference frame.
pub fn constant_velocity_baseline(window: &SceneWindow, steps: usize) -> Vec<Vec2> {
    let current = window.current_target();
    (1..=steps).map(|t| current.position + current.velocity * (window.dt * t as f64)).collect()
}

/// Output step (1-based) reached after `horizon` seconds.
pub fn horizon_step(horizon: f64, dt: f64, steps: usize) -> Result<usize> {
    let k = (horizon / dt).round();
    if !(k >= 1.0) || (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) || k as usize > steps {
        return Err(ModelError::Invalid(format!(
            "horizon {horizon} s is not a multiple of dt = {dt} within {steps} steps"
        )));
    }
    Ok(k as usize)
}

/// `sqrt(mean_i ‖pred_i(T) - gt_i(T)‖²)` at the single step reached after
/// `horizon` seconds.
pub fn rmse_metric(preds: &[Vec<[f64; 2]>], gts: &[Vec<[f64; 2]>], horizon: f64, dt: f64) -> Result<f64> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(ModelError::Invalid(format!("{} predictions for {} ground truths", preds.len(), gts.len())));
    }
    let mut total = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let step = horizon_step(horizon, dt, p.len().min(g.len()))?;
        let (a, b) = (p[step - 1], g[step - 1]);
        total += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    }
    Ok((total / preds.len() as f64).sqrt())
}

/// Input corruption applied before inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    Drop(DropVariant),
    /// Clean inputs, model trained on this percentage of the training set.
    Limited(u32),
}

impl Variant {
    pub const SWEEP: [Variant; 4] = [
        Variant::Full,
        Variant::Drop(DropVariant::Drop3),
        Variant::Drop(DropVariant::Drop5),
        Variant::Drop(DropVariant::Drop8),
    ];

    pub fn name(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::Drop(d) => d.name().into(),
            Variant::Limited(p) => format!("{p}%"),
        }
    }

    /// Drops the variant's frames and refills them by interpolation.
    pub fn apply(&self, window: &SceneWindow) -> Result<SceneWindow> {
        match self {
            Variant::Drop(d) => Ok(interpolate_missing(&drop_frames(window, *d)?)?),
            _ => Ok(window.clone()),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            _ if s.ends_with('%') => s[..s.len() - 1]
                .parse()
                .ok()
                .filter(|p| (1..=100).contains(p))
                .map(Variant::Limited)
                .ok_or_else(|| ModelError::Invalid(format!("bad percentage variant {s:?}"))),
            _ => Ok(Variant::Drop(s.parse()?)),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    /// Means of the highest-weight mode.
    #[default]
    MostProbable,
    /// Per sample, the mode closest to the ground truth at the horizon.
    BestOfModes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model tag, e.g. `F` or `constant_velocity`.
    pub model: String,
    pub variant: String,
    pub horizons_s: Vec<f64>,
    pub steps: Vec<usize>,
    pub rmse: Vec<f64>,
    pub count: usize,
    pub selection: ModeSelection,
}

impl EvalReport {
    pub fn at(&self, horizon: f64) -> Option<f64> {
        self.horizons_s.iter().position(|&h| h == horizon).map(|i| self.rmse[i])
    }

    fn from_trajectories(
        model: &str,
        variant: &Variant,
        selection: ModeSelection,
        preds: &[Vec<[f64; 2]>],
        gts: &[Vec<[f64; 2]>],
        dt: f64,
    ) -> Result<Self> {
        let steps = preds.first().map_or(0, Vec::len);
        Ok(Self {
            model: model.into(),
            variant: variant.name(),
            horizons_s: HORIZONS.to_vec(),
            steps: HORIZONS.iter().map(|&h| horizon_step(h, dt, steps)).collect::<Result<_>>()?,
            rmse: HORIZONS.iter().map(|&h| rmse_metric(preds, gts, h, dt)).collect::<Result<_>>()?,
            count: preds.len(),
            selection,
        })
    }
}

/// Aligned text table: one row per report, horizons as columns.
pub fn report_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<20} {:<8}", "model", "variant");
    for h in HORIZONS {
        let _ = write!(out, " {:>8}", format!("{h}s"));
    }
    let _ = writeln!(out, " {:>7}", "count");
    for r in reports {
        let _ = write!(out, "{:<20} {:<8}", r.model, r.variant);
        for v in &r.rmse {
            let _ = write!(out, " {v:>8.4}");
        }
        let _ = writeln!(out, " {:>7}", r.count);
    }
    out
}

/// One line of the prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub target_id: i64,
    pub reference_frame: i64,
    pub variant: String,
    pub weights: Vec<f64>,
    /// Lateral (left, keep, right) × longitudinal (accelerate, constant,
    /// brake) table, for nine-mode models.
    pub maneuvers: Option<[[f64; 3]; 3]>,
    /// `modes[mode][t]`.
    pub modes: Vec<Vec<GaussianStep>>,
}

pub fn write_predictions_jsonl<W: Write>(mut writer: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn select(pred: &MixturePrediction, gt: &[[f64; 2]], selection: ModeSelection, step: usize) -> Vec<[f64; 2]> {
    match selection {
        ModeSelection::MostProbable => pred.means(pred.most_probable()),
        ModeSelection::BestOfModes => {
            let dist = |m: usize| {
                let p = pred.steps[m][step - 1].mu;
                (p[0] - gt[step - 1][0]).powi(2) + (p[1] - gt[step - 1][1]).powi(2)
            };
            let best = (0..pred.steps.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).expect("at least one mode");
            pred.means(best)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<PredictionRecord>,
}

/// Runs the model on every window after applying `variant`. Best-of-modes
/// picks the closest mode at the longest report horizon.
pub fn evaluate(model: &Model, tag: &str, windows: &[SceneWindow], variant: Variant, selection: ModeSelection) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(ModelError::Invalid("no windows to evaluate".into()));
    }
    let outputs: Vec<(MixturePrediction, Vec<[f64; 2]>, i64, i64)> = windows
        .par_iter()
        .map(|w| {
            let w = variant.apply(w)?;
            let sample = model.sample(&w)?;
            let pred = model.predict(&sample)?;
            Ok((pred, sample.future, sample.target_id, sample.reference_frame))
        })
        .collect::<Result<_>>()?;
    let last = horizon_step(HORIZONS[HORIZONS.len() - 1], model.config.dt, model.config.t_f)?;
    let mut preds = Vec::with_capacity(outputs.len());
    let mut gts = Vec::with_capacity(outputs.len());
    let mut predictions = Vec::with_capacity(outputs.len());
    for (pred, gt, target_id, reference_frame) in outputs {
        preds.push(select(&pred, &gt, selection, last));
        gts.push(gt);
        predictions.push(PredictionRecord {
            target_id,
            reference_frame,
            variant: variant.name(),
            maneuvers: pred.maneuver_table(),
            weights: pred.weights,
            modes: pred.steps,
        });
    }
    let report = EvalReport::from_trajectories(tag, &variant, selection, &preds, &gts, model.config.dt)?;
    Ok(Evaluation { report, predictions })
}

/// Constant-velocity yardstick on the same windows and corruption.
pub fn baseline_report(windows: &[SceneWindow], variant: Variant, steps: usize) -> Result<EvalReport> {
    let first = windows.first().ok_or_else(|| ModelError::Invalid("no windows to evaluate".into()))?;
    let mut preds = Vec::with_capacity(windows.len());
    let mut gts = Vec::with_capacity(windows.len());
    for w in windows {
        let w = variant.apply(w)?;
        preds.push(constant_velocity_baseline(&w, steps).iter().map(|p| [p.x, p.y]).collect());
        gts.push(w.future.iter().take(steps).map(|s| [s.position.x, s.position.y]).collect());
    }
    EvalReport::from_trajectories("constant_velocity", &variant, ModeSelection::MostProbable, &preds, &gts, first.dt)
}

/// Full, drop-3, drop-5 and drop-8 evaluations in one table.
pub fn robustness(model: &Model, tag: &str, windows: &[SceneWindow], selection: ModeSelection) -> Result<Vec<EvalReport>> {
    Variant::SWEEP.iter().map(|&v| Ok(evaluate(model, tag, windows, v, selection)?.report)).collect()
}
