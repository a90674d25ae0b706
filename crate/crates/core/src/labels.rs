use serde::{Deserialize, Serialize};

use crate::types::{Lateral, Longitudinal, ManeuverLabel, SceneWindow};

/// Lane and axis conventions used when labeling maneuvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Lane ids decrease towards the left (NGSIM numbering).
    pub left_is_lower_lane_id: bool,
    /// Lateral coordinate decreases towards the left.
    pub left_is_negative_y: bool,
    /// Net lateral displacement used when lane ids are unknown, meters.
    pub lateral_threshold: f64,
    /// Relative speed band for the longitudinal label.
    pub speed_band: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { left_is_lower_lane_id: true, left_is_negative_y: true, lateral_threshold: 1.5, speed_band: 0.05 }
    }
}

pub fn derive_maneuver_labels(window: &SceneWindow, cfg: &LabelConfig) -> ManeuverLabel {
    let current = window.current_target();
    let last = window.future.last().expect("window has future frames");

    let lateral = if current.lane_id >= 0 && last.lane_id >= 0 {
        match last.lane_id.cmp(&current.lane_id) {
            std::cmp::Ordering::Equal => Lateral::Keep,
            std::cmp::Ordering::Less if cfg.left_is_lower_lane_id => Lateral::Left,
            std::cmp::Ordering::Greater if !cfg.left_is_lower_lane_id => Lateral::Left,
            _ => Lateral::Right,
        }
    } else {
        let dy = last.position.y - current.position.y;
        let leftward = if cfg.left_is_negative_y { -dy } else { dy };
        if leftward > cfg.lateral_threshold {
            Lateral::Left
        } else if leftward < -cfg.lateral_threshold {
            Lateral::Right
        } else {
            Lateral::Keep
        }
    };

    let speed = current.velocity.norm();
    let mean_future = window.future.iter().map(|s| s.velocity.norm()).sum::<f64>() / window.future.len() as f64;
    let longitudinal = if mean_future > speed * (1.0 + cfg.speed_band) {
        Longitudinal::Accelerate
    } else if mean_future < speed * (1.0 - cfg.speed_band) {
        Longitudinal::Brake
    } else {
        Longitudinal::Constant
    };

    ManeuverLabel { lateral, longitudinal }
}
