//! Missing-frame and limited-data experimental protocols.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::types::{AgentState, SceneWindow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropVariant {
    Drop3,
    Drop5,
    Drop8,
}

impl DropVariant {
    pub const ALL: [DropVariant; 3] = [DropVariant::Drop3, DropVariant::Drop5, DropVariant::Drop8];

    /// Dropped offsets before the reference frame, nearest first. All runs are
    /// centred on `t-10`.
    pub fn offsets(self) -> std::ops::RangeInclusive<usize> {
        match self {
            DropVariant::Drop3 => 9..=11,
            DropVariant::Drop5 => 8..=12,
            DropVariant::Drop8 => 6..=13,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DropVariant::Drop3 => "drop3",
            DropVariant::Drop5 => "drop5",
            DropVariant::Drop8 => "drop8",
        }
    }
}

impl std::str::FromStr for DropVariant {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop3" => Ok(DropVariant::Drop3),
            "drop5" => Ok(DropVariant::Drop5),
            "drop8" => Ok(DropVariant::Drop8),
            other => Err(DataError::Invalid(format!("unknown drop variant {other:?}"))),
        }
    }
}

/// Marks the variant's history offsets missing for every agent and zeroes
/// the corresponding states.
pub fn drop_frames(window: &SceneWindow, variant: DropVariant) -> Result<SceneWindow> {
    let len = window.history_len();
    let deepest = *variant.offsets().end();
    // at least one observed frame must precede the dropped run
    if len < deepest + 2 {
        return Err(DataError::HistoryTooShort {
            have: len,
            needed: deepest,
            variant: variant.name().to_owned(),
        });
    }
    let t = len - 1;
    let mut out = window.clone();
    for offset in variant.offsets() {
        let k = t - offset;
        for a in 0..out.num_agents() {
            out.mask[a][k] = false;
            out.history[a][k] = AgentState::absent(out.agent_ids[a], out.history[a][k].frame);
        }
    }
    Ok(out)
}

/// Fills interior missing runs by per-component linear interpolation between
/// the nearest present frames.
///
/// A missing run of the target that touches either end of the history is an
/// error. Neighbor runs touching an end (the neighbor was never observed
/// there) are left missing.
pub fn interpolate_missing(window: &SceneWindow) -> Result<SceneWindow> {
    let mut out = window.clone();
    let len = out.history_len();
    for a in 0..out.num_agents() {
        let mut k = 0;
        while k < len {
            if out.mask[a][k] {
                k += 1;
                continue;
            }
            let start = k;
            while k < len && !out.mask[a][k] {
                k += 1;
            }
            let end = k; // exclusive
            if start == 0 || end == len {
                if a == 0 {
                    return Err(DataError::UnboundedGap { agent: out.agent_ids[a] });
                }
                continue;
            }
            let left = out.history[a][start - 1];
            let right = out.history[a][end];
            let span = (end - start + 1) as f64;
            for j in start..end {
                let w = (j - start + 1) as f64 / span;
                let s = &mut out.history[a][j];
                s.position = left.position.lerp(right.position, w);
                s.velocity = left.velocity.lerp(right.velocity, w);
                s.acceleration = left.acceleration.lerp(right.acceleration, w);
                s.lane_id = if w < 0.5 { left.lane_id } else { right.lane_id };
                out.mask[a][j] = true;
            }
        }
    }
    Ok(out)
}

/// Deterministic uniform sample without replacement of `round(fraction * n)`
/// items, returned in their original order.
pub fn subsample_training<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Vec<T> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1], got {fraction}");
    let n = items.len();
    let m = ((fraction * n as f64).round() as usize).min(n);
    if m == n {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}
