use citf_core::criteria::GraphParams;
use citf_core::labels::LabelConfig;
use citf_core::safety::SafetyParams;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Hand-engineered feature settings shared by training and inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub safety: SafetyParams,
    pub graph: GraphParams,
    pub labels: LabelConfig,
}

/// Component toggles. All `true` is the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Behavior stream from the graph criteria.
    pub use_dbp: bool,
    /// Safety stream from the safety indices.
    pub use_psam: bool,
    /// Priority pooling relative to the target (else absolute states).
    pub use_relative_priority: bool,
    /// Low-rank interaction attention (else the streams are summed).
    pub use_interaction: bool,
    /// Nine maneuver modes (else a single mode).
    pub use_multimodal: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FULL
    }
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        use_dbp: true,
        use_psam: true,
        use_relative_priority: true,
        use_interaction: true,
        use_multimodal: true,
    };

    pub const MODELS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

    /// Ablation model by letter: A drops the behavior stream, B the safety
    /// stream, C pools absolute states, D bypasses the interaction block, E
    /// has a single mode, F is the full model.
    pub fn model(letter: char) -> Option<Ablation> {
        let full = Self::FULL;
        Some(match letter.to_ascii_uppercase() {
            'A' => Ablation { use_dbp: false, ..full },
            'B' => Ablation { use_psam: false, ..full },
            'C' => Ablation { use_relative_priority: false, ..full },
            'D' => Ablation { use_interaction: false, ..full },
            'E' => Ablation { use_multimodal: false, ..full },
            'F' => full,
            _ => return None,
        })
    }

    pub fn modes(&self) -> usize {
        if self.use_multimodal {
            9
        } else {
            1
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Rank of the fixed key/value projections in the interaction block.
    pub rank: usize,
    pub gcn_layers: usize,
    pub norm_groups: usize,
    pub t_h: usize,
    pub t_f: usize,
    pub n_max: usize,
    pub dt: f64,
    /// Seed of the fixed low-rank projections.
    pub projection_seed: u64,
    pub features: FeatureConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            rank: 8,
            gcn_layers: 3,
            norm_groups: 4,
            t_h: 15,
            t_f: 25,
            n_max: 12,
            dt: 0.2,
            projection_seed: 7,
            features: FeatureConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Rows of the flattened agents × frames grid.
    pub fn max_sequence(&self) -> usize {
        (self.n_max + 1) * (self.t_h + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.d_model < 2 || self.d_model % 2 != 0 {
            return fail(format!("d_model must be even and at least 2, got {}", self.d_model));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if self.norm_groups == 0 || self.d_model % self.norm_groups != 0 {
            return fail(format!("d_model {} is not divisible by {} norm groups", self.d_model, self.norm_groups));
        }
        if self.rank == 0 || self.rank > self.max_sequence() {
            return fail(format!("rank {} outside 1..={}", self.rank, self.max_sequence()));
        }
        if self.t_h == 0 || self.t_f == 0 || self.gcn_layers == 0 {
            return fail("t_h, t_f and gcn_layers must be positive".into());
        }
        if !(self.dt > 0.0) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Warm-restart period in epochs.
    pub restart_period: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub w_rmse: f64,
    pub w_nll: f64,
    /// Weight of the auxiliary maneuver cross-entropy.
    pub w_maneuver: f64,
    /// Learned homoscedastic weighting of the NLL and displacement terms.
    pub uncertainty_weighting: bool,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Fraction of the training windows used (limited-data protocol).
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 20,
            lr_max: 1e-3,
            lr_min: 1e-5,
            restart_period: 5,
            seed: 0,
            ablation: Ablation::FULL,
            w_rmse: 1.0,
            w_nll: 1.0,
            w_maneuver: 1.0,
            uncertainty_weighting: false,
            clip_norm: Some(10.0),
            train_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr_min >= 0.0 && self.lr_min < self.lr_max) && !(self.lr_max == 0.0 && self.lr_min == 0.0) {
            return Err(ModelError::Config(format!("need 0 <= lr_min < lr_max, got {} and {}", self.lr_min, self.lr_max)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(ModelError::Config(format!("train_fraction must lie in (0, 1], got {}", self.train_fraction)));
        }
        if self.restart_period == 0 {
            return Err(ModelError::Config("restart_period must be at least 1 epoch".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_letters() {
        assert_eq!(Ablation::model('f'), Some(Ablation::FULL));
        assert!(!Ablation::model('A').unwrap().use_dbp);
        assert_eq!(Ablation::model('E').unwrap().modes(), 1);
        assert_eq!(Ablation::model('G'), None);
    }

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
        let bad = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let json: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(json.batch_size, 64);
    }
}
