//! Mini-batch training with Adam and cosine warm restarts.
//!
//! Windows of a batch are processed in parallel, each on its own tape with a
//! private gradient buffer; buffers are reduced in window order so results
//! do not depend on the number of worker threads.

use std::io::Write;

use citf_core::protocol::subsample_training;
use citf_core::SceneWindow;
use citf_nn::optim::{Adam, CosineRestarts};
use citf_nn::{Gradients, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{ModelError, Result};
use crate::features::{FeatureStats, RawFeatures, Sample};
use crate::loss::{combined_loss, LossWeights};
use crate::model::Model;

/// Loss values of one window or the mean over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub nll: f64,
    /// Mean squared displacement of the ground-truth maneuver's mode.
    pub displacement: f64,
}

/// One optimizer step of the loss history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub nll: f64,
    /// Root of the batch-mean squared displacement.
    pub rmse: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<HistoryRow>,
    /// Mean total loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub windows: usize,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,step,lr,loss,nll,rmse")?;
        for r in &self.history {
            writeln!(w, "{},{},{:e},{},{},{}", r.epoch, r.step, r.lr, r.loss, r.nll, r.rmse)?;
        }
        Ok(())
    }

    /// Epoch losses smoothed by a trailing mean over `span` epochs.
    pub fn smoothed_epoch_loss(&self, span: usize) -> Vec<f64> {
        let span = span.max(1);
        (0..self.epoch_loss.len())
            .map(|e| {
                let lo = (e + 1).saturating_sub(span);
                let w = &self.epoch_loss[lo..=e];
                w.iter().sum::<f64>() / w.len() as f64
            })
            .collect()
    }
}

pub fn loss_weights(cfg: &TrainConfig) -> LossWeights {
    LossWeights { nll: cfg.w_nll, rmse: cfg.w_rmse, maneuver: cfg.w_maneuver }
}

/// Loss and parameter gradients of one window.
pub fn window_gradients(model: &Model, sample: &Sample, weights: &LossWeights) -> Result<(LossValues, Gradients)> {
    let mut tape = Tape::new(&model.store);
    let out = model.forward(&mut tape, sample)?;
    let uncertainty = model.uncertainty.map(|[a, b]| (tape.param(a), tape.param(b)));
    let terms = combined_loss(&mut tape, &out.decoder, &sample.future, sample.label, weights, uncertainty)?;
    let values = LossValues {
        total: tape.value(terms.total).item(),
        nll: tape.value(terms.nll).item(),
        displacement: tape.value(terms.displacement).item(),
    };
    if !values.total.is_finite() {
        return Ok((values, Gradients::new(model.store.len())));
    }
    tape.backward(terms.total)?;
    Ok((values, tape.param_gradients()))
}

/// Raw features of every window, in order.
pub fn raw_features_all(model: &Model, windows: &[SceneWindow]) -> Result<Vec<RawFeatures>> {
    windows.par_iter().map(|w| model.raw_features(w)).collect()
}

/// Fits the feature statistics on `windows` and returns their samples.
pub fn fit_features(model: &mut Model, windows: &[SceneWindow]) -> Result<Vec<Sample>> {
    let raws = raw_features_all(model, windows)?;
    let stats = FeatureStats::fit(&raws)?;
    let samples = windows
        .par_iter()
        .zip(raws)
        .map(|(w, raw)| Sample::new(w, raw, &stats, &model.config))
        .collect::<Result<Vec<_>>>()?;
    model.stats = Some(stats);
    Ok(samples)
}

fn describe(sample: &Sample) -> String {
    format!("target {} at frame {}", sample.target_id, sample.reference_frame)
}

/// Trains `model` in place on prepared samples.
pub fn train(model: &mut Model, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(ModelError::Invalid("training set is empty".into()));
    }
    let weights = loss_weights(cfg);
    let batches_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let schedule = CosineRestarts { lr_max: cfg.lr_max, lr_min: cfg.lr_min, period: cfg.restart_period * batches_per_epoch };
    let mut adam = Adam::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_0DE5);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport { windows: samples.len(), ..TrainReport::default() };
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(LossValues, Gradients)> = {
                let model = &*model;
                batch.par_iter().map(|&i| window_gradients(model, &samples[i], &weights)).collect::<Result<_>>()?
            };
            let mut grads = Gradients::new(model.store.len());
            let mut mean = LossValues::default();
            for (&i, (values, g)) in batch.iter().zip(&results) {
                if !values.total.is_finite() {
                    return Err(ModelError::NonFinite {
                        what: "loss",
                        epoch,
                        batch: b + 1,
                        detail: describe(&samples[i]),
                    });
                }
                grads.merge(g);
                mean.total += values.total;
                mean.nll += values.nll;
                mean.displacement += values.displacement;
            }
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            if !grads.is_finite() {
                let names: Vec<String> = batch.iter().map(|&i| describe(&samples[i])).collect();
                return Err(ModelError::NonFinite { what: "gradient", epoch, batch: b + 1, detail: names.join(", ") });
            }
            if let Some(max) = cfg.clip_norm {
                grads.clip_global_norm(max);
            }
            let lr = schedule.lr(step);
            adam.step(&mut model.store, &grads, lr);
            step += 1;
            report.history.push(HistoryRow {
                epoch,
                step,
                lr,
                loss: mean.total / n,
                nll: mean.nll / n,
                rmse: (mean.displacement / n).sqrt(),
            });
            epoch_total += mean.total;
        }
        report.epoch_loss.push(epoch_total / samples.len() as f64);
    }
    Ok(report)
}

/// Builds a model, fits feature statistics on `windows` (after the
/// configured training fraction) and trains it.
pub fn fit(windows: &[SceneWindow], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    let mut model = Model::new(model_cfg, cfg.ablation, cfg.uncertainty_weighting, cfg.seed)?;
    let subset;
    let windows = if cfg.train_fraction < 1.0 {
        subset = subsample_training(windows, cfg.train_fraction, cfg.seed);
        &subset[..]
    } else {
        windows
    };
    let samples = fit_features(&mut model, windows)?;
    let report = train(&mut model, &samples, cfg)?;
    Ok((model, report))
}
