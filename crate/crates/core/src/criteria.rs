//! Behavior-aware criteria: magnitude, tendency (first derivative) and
//! curvature (second derivative) of the centrality channels.

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::graph::{frame_centralities, Dgg, KatzParams, DEFAULT_K_MAX};
use crate::types::SceneWindow;

/// Channel order: degree, closeness, eigenvector, betweenness, power, Katz.
pub type Centralities = [f64; 6];

pub const CHANNEL_NAMES: [&str; 6] = ["jd", "jc", "je", "jb", "jp", "jk"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub radius: f64,
    pub k_max: usize,
    pub katz: KatzParams,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { radius: 30.0, k_max: DEFAULT_K_MAX, katz: KatzParams::default() }
    }
}

/// Per-frame magnitude, tendency and curvature of one agent's centralities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriteriaFrame {
    pub bmi: Centralities,
    pub bti: Centralities,
    pub bci: Centralities,
}

impl CriteriaFrame {
    pub const CHANNELS: usize = 18;

    pub fn flatten(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        out[..6].copy_from_slice(&self.bmi);
        out[6..12].copy_from_slice(&self.bti);
        out[12..].copy_from_slice(&self.bci);
        out
    }
}

/// Backward differences with zero padding at the start of the series.
pub fn behavior_criteria(series: &[Centralities], dt: f64) -> Result<Vec<CriteriaFrame>> {
    if series.is_empty() {
        return Err(DataError::Invalid("centrality series is empty".into()));
    }
    let mut out = vec![CriteriaFrame::default(); series.len()];
    for (t, frame) in out.iter_mut().enumerate() {
        for c in 0..6 {
            frame.bmi[c] = series[t][c].abs();
        }
    }
    for t in 1..series.len() {
        for c in 0..6 {
            out[t].bti[c] = (series[t][c] - series[t - 1][c]).abs() / dt;
        }
    }
    for t in 2..series.len() {
        for c in 0..6 {
            out[t].bci[c] = (out[t].bti[c] - out[t - 1].bti[c]).abs() / dt;
        }
    }
    Ok(out)
}

/// Centralities for every agent and history frame of a window. The graph of
/// each frame spans the agents present at that frame; absent slots keep the
/// running degree and zero elsewhere.
pub fn window_centralities(window: &SceneWindow, params: &GraphParams) -> Result<Vec<Vec<Centralities>>> {
    let (n, len) = (window.num_agents(), window.history_len());
    let mut out = vec![vec![[0.0; 6]; len]; n];
    let mut degree = vec![0.0; n];
    for k in 0..len {
        let present = window.present_at(k);
        let positions: Vec<_> = present.iter().map(|(_, s)| s.position).collect();
        let g = Dgg::from_positions(&positions, params.radius)?;
        let frame = frame_centralities(&g, params.k_max, &params.katz)?;
        for (local, &(a, _)) in present.iter().enumerate() {
            degree[a] += g.degree(local) as f64;
            out[a][k][1..].copy_from_slice(&frame[local]);
        }
        for a in 0..n {
            out[a][k][0] = degree[a];
        }
    }
    Ok(out)
}

/// Behavior criteria for every agent and history frame of a window.
pub fn window_criteria(window: &SceneWindow, params: &GraphParams) -> Result<Vec<Vec<CriteriaFrame>>> {
    window_centralities(window, params)?
        .iter()
        .map(|series| behavior_criteria(series, window.dt))
        .collect()
}
