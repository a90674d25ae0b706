//! The full predictor: encoders, interaction block and decoder over one
//! parameter store, plus checkpoint round-trips.

use std::path::Path;

use citf_core::SceneWindow;
use citf_nn::checkpoint::{load_checkpoint, restore_into, save_checkpoint};
use citf_nn::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, ModelConfig};
use crate::decoder::{Decoder, DecoderOutput, MixturePrediction};
use crate::encoders::{BehaviorEncoder, PriorityEncoder, SafetyEncoder};
use crate::error::{ModelError, Result};
use crate::features::{raw_features, FeatureStats, RawFeatures, Sample};
use crate::leanformer::Leanformer;

/// Everything besides parameter values needed to rebuild a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub ablation: Ablation,
    pub uncertainty_weighting: bool,
    pub init_seed: u64,
    pub stats: Option<FeatureStats>,
    /// Free-form extras (e.g. the training configuration).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub ablation: Ablation,
    pub store: ParamStore,
    pub stats: Option<FeatureStats>,
    pub init_seed: u64,
    pub safety: SafetyEncoder,
    pub behavior: BehaviorEncoder,
    pub priority: PriorityEncoder,
    pub leanformer: Leanformer,
    pub decoder: Decoder,
    /// Learned log-variances of the NLL and displacement terms.
    pub uncertainty: Option<[ParamId; 2]>,
}

/// Streams and outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    pub safety: Var,
    pub behavior: Var,
    pub priority: Var,
    pub interaction: Var,
    pub context: Var,
    pub decoder: DecoderOutput,
}

impl Model {
    /// Builds every component in a fixed order so that toggles do not shift
    /// the initialization of the shared parts.
    pub fn new(config: &ModelConfig, ablation: Ablation, uncertainty_weighting: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let safety = SafetyEncoder::new(&mut store, d, config.heads, config.gcn_layers, &mut rng)?;
        let behavior = BehaviorEncoder::new(&mut store, d, config.heads, &mut rng)?;
        let priority = PriorityEncoder::new(&mut store, d, config.heads, &mut rng)?;
        let leanformer = Leanformer::new(
            &mut store,
            d,
            config.heads,
            config.rank,
            config.max_sequence(),
            config.projection_seed,
            &mut rng,
        )?;
        let uncertainty = uncertainty_weighting
            .then(|| [store.constant("loss.log_var_nll", &[1], 0.0), store.constant("loss.log_var_rmse", &[1], 0.0)]);
        let decoder = Decoder::new(&mut store, 2 * d, d, config.norm_groups, ablation.modes(), config.t_f, config.dt, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            ablation,
            store,
            stats: None,
            init_seed: seed,
            safety,
            behavior,
            priority,
            leanformer,
            decoder,
            uncertainty,
        })
    }

    pub fn modes(&self) -> usize {
        self.ablation.modes()
    }

    pub fn raw_features(&self, window: &SceneWindow) -> Result<RawFeatures> {
        raw_features(window, &self.config, self.ablation.use_relative_priority)
    }

    /// Standardized sample; requires fitted statistics.
    pub fn sample(&self, window: &SceneWindow) -> Result<Sample> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| ModelError::Invalid("feature statistics missing; fit them on the training split first".into()))?;
        Sample::new(window, self.raw_features(window)?, stats, &self.config)
    }

    pub fn forward(&self, tape: &mut Tape, sample: &Sample) -> Result<ModelOutput> {
        let h = tape.constant(sample.safety.clone());
        let j = tape.constant(sample.behavior.clone());
        let pool = tape.constant(sample.pooling.clone());
        self.forward_inputs(tape, sample, [h, j, pool])
    }

    /// Forward pass with the standardized safety, behavior and pooling
    /// inputs supplied as tape nodes; the rest comes from `sample`.
    pub fn forward_inputs(&self, tape: &mut Tape, sample: &Sample, inputs: [Var; 3]) -> Result<ModelOutput> {
        let [h, j, pool] = inputs;
        let grid = &sample.grid;
        let d = self.config.d_model;
        let zeros = || Tensor::zeros(&[grid.rows(), d]);
        let safety = if self.ablation.use_psam {
            self.safety.forward(tape, h, &sample.adjacency, grid)?
        } else {
            tape.constant(zeros())
        };
        let behavior = if self.ablation.use_dbp {
            self.behavior.forward(tape, j, safety, grid)?
        } else {
            tape.constant(zeros())
        };
        let priority = self.priority.forward(tape, pool, grid)?;

        let interaction = if self.ablation.use_interaction {
            self.leanformer.forward(tape, [safety, behavior, priority], grid)?
        } else {
            let s = tape.add(safety, behavior)?;
            tape.add(s, priority)?
        };

        let present = grid.present_rows();
        if present.is_empty() || !grid.mask[grid.row(0, grid.frames - 1)] {
            return Err(ModelError::Invalid("target must be present at the reference frame".into()));
        }
        let current = tape.slice_rows(interaction, grid.row(0, grid.frames - 1), 1)?;
        let total = tape.sum_rows(interaction);
        let mean = tape.scale(total, 1.0 / present.len() as f64);
        let context = tape.concat_cols(&[current, mean])?;
        let decoder = self.decoder.forward(tape, context, &sample.baseline)?;
        Ok(ModelOutput { safety, behavior, priority, interaction, context, decoder })
    }

    pub fn predict(&self, sample: &Sample) -> Result<MixturePrediction> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, sample)?;
        Ok(out.decoder.to_prediction(&tape))
    }

    pub fn meta(&self, extra: serde_json::Value) -> ModelMeta {
        ModelMeta {
            config: self.config.clone(),
            ablation: self.ablation,
            uncertainty_weighting: self.uncertainty.is_some(),
            init_seed: self.init_seed,
            stats: self.stats.clone(),
            extra,
        }
    }

    pub fn save(&self, dir: &Path, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::to_value(self.meta(extra))?;
        save_checkpoint(dir, &self.store, &meta)?;
        Ok(())
    }

    /// Rebuilds the model described by a checkpoint and restores its values.
    /// With `expected`, the stored configuration must match it.
    pub fn load(dir: &Path, expected: Option<&ModelConfig>) -> Result<(Self, ModelMeta)> {
        let (store, meta) = load_checkpoint(dir)?;
        let meta: ModelMeta = serde_json::from_value(meta)
            .map_err(|e| ModelError::Checkpoint(format!("unreadable model metadata: {e}")))?;
        if let Some(cfg) = expected {
            if cfg != &meta.config {
                return Err(ModelError::Checkpoint(format!(
                    "checkpoint model (d_model {}, heads {}, rank {}, n_max {}) differs from the requested one (d_model {}, heads {}, rank {}, n_max {})",
                    meta.config.d_model, meta.config.heads, meta.config.rank, meta.config.n_max,
                    cfg.d_model, cfg.heads, cfg.rank, cfg.n_max
                )));
            }
        }
        let mut model = Self::new(&meta.config, meta.ablation, meta.uncertainty_weighting, meta.init_seed)?;
        restore_into(&mut model.store, &store).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        model.stats = meta.stats.clone();
        Ok((model, meta))
    }
}
