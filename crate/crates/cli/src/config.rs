//! Effective configuration: built-in defaults, deep-merged with an optional
//! JSON file, then with `--key value` overrides.

use std::path::PathBuf;

use citf_core::io::LengthUnit;
use citf_core::synth::SynthConfig;
use citf_model::eval::ModeSelection;
use citf_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Unit of positions in input CSVs.
    pub unit: LengthUnit,
    /// Native sampling interval of input CSVs, seconds.
    pub dt: f64,
    /// Neighbor search radius when cutting windows, meters.
    pub radius: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { unit: LengthUnit::Meters, dt: 0.1, radius: 30.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub selection: ModeSelection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Entries checked per tensor; `null` checks all of them.
    pub max_entries: Option<usize>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 3, max_entries: Some(12) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub lengths: Vec<usize>,
    pub rank: usize,
    pub width: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { lengths: vec![32, 64, 128, 256, 512, 1024], rank: 8, width: 64 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Seeds synthesis, initialization and shuffling.
    pub seed: u64,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    /// Its `seed` field is replaced by the top-level seed.
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub gradcheck: GradcheckConfig,
    pub benchmark: BenchmarkConfig,
}

/// Overlays `patch` onto `base`, recursing into objects.
pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn leaf_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if child.is_object() {
                leaf_paths(child, &path, out);
            } else {
                out.push(path);
            }
        }
    }
}

/// Resolves `key` to a full dotted path. A bare name must match exactly one
/// setting; dotted keys are taken as given.
pub fn resolve_key(config: &Value, key: &str) -> Result<String, CliError> {
    let mut paths = Vec::new();
    leaf_paths(config, "", &mut paths);
    if key.contains('.') {
        let prefix = format!("{key}.");
        if paths.iter().any(|p| p == key || p.starts_with(&prefix)) {
            return Ok(key.to_string());
        }
        return Err(CliError::Usage(format!("unknown setting {key:?}")));
    }
    let hits: Vec<&String> = paths.iter().filter(|p| p.rsplit('.').next() == Some(key)).collect();
    match hits.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(CliError::Usage(format!("unknown setting {key:?}"))),
        many => Err(CliError::Usage(format!(
            "setting {key:?} is ambiguous; use one of {}",
            many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Sets the value at a dotted path. The text is read as JSON when it parses,
/// otherwise as a string.
pub fn set_path(config: &mut Value, path: &str, text: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()));
    let mut node = config;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("setting {path:?} does not name a section")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.get_mut(*part).ok_or_else(|| CliError::Usage(format!("unknown setting {path:?}")))?;
    }
    unreachable!("split yields at least one part")
}

/// Builds the effective configuration.
pub fn effective_config(
    file: Option<&PathBuf>,
    seed: Option<u64>,
    overrides: &[(String, String)],
) -> Result<CliConfig, CliError> {
    let mut value = serde_json::to_value(CliConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::Usage(format!("config {} must hold a JSON object", path.display())));
        }
        deep_merge(&mut value, patch);
    }
    for (key, text) in overrides {
        let path = resolve_key(&value, key)?;
        set_path(&mut value, &path, text)?;
    }
    let mut cfg: CliConfig =
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(cfg.data.dt > 0.0) || !(cfg.data.radius > 0.0) {
        return Err(CliError::Usage("data.dt and data.radius must be positive".into()));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn flat_and_dotted_overrides() {
        let cfg = effective_config(None, Some(5), &pairs(&[("epochs", "3"), ("model.d_model", "16"), ("selection", "best_of_modes")]))
            .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.model.d_model, 16);
        assert_eq!(cfg.eval.selection, ModeSelection::BestOfModes);
        assert_eq!((cfg.seed, cfg.train.seed), (5, 5));
    }

    #[test]
    fn bad_overrides_are_usage_errors() {
        for bad in [("no_such_key", "1"), ("radius", "3"), ("epochs", "\"many\""), ("d_model", "0")] {
            let err = effective_config(None, None, &pairs(&[bad])).unwrap_err();
            assert!(matches!(err, CliError::Usage(_)), "{bad:?}: {err}");
        }
    }

    #[test]
    fn file_merges_onto_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"batch_size": 8}, "model": {"features": {"safety": {"ttc_star": 2.5}}}}"#).unwrap();
        let cfg = effective_config(Some(&path), None, &[]).unwrap();
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.epochs, TrainConfig::default().epochs);
        assert_eq!(cfg.model.features.safety.ttc_star, 2.5);
        assert_eq!(cfg.model.features.safety.tau, 0.1);
    }
}
