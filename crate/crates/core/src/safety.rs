//! Quantitative safety assessment: time-to-collision based exposure indices
//! (TTC, TET, TIT) and log-domain risk tendency indices (SPR, DRV).

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::types::{AgentState, SceneWindow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// TTC threshold below which a frame counts as exposed, seconds.
    pub ttc_star: f64,
    /// Time increment per exposed frame, seconds.
    pub tau: f64,
    /// Interaction radius, meters.
    pub radius: f64,
    /// Floor applied before taking logs of the risk indices.
    pub log_floor: f64,
    /// Finite stand-in for an infinite TTC in feature matrices.
    pub ttc_sentinel: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { ttc_star: 3.0, tau: 0.1, radius: 30.0, log_floor: 1e-8, ttc_sentinel: 1e4 }
    }
}

/// Distance and its rate of change between two agents.
pub fn pair_distance_rate(i: &AgentState, j: &AgentState) -> Result<(f64, f64)> {
    let dp = i.position - j.position;
    let d = dp.norm();
    if d == 0.0 {
        return Err(DataError::DegeneratePair);
    }
    Ok((d, dp.dot(i.velocity - j.velocity) / d))
}

/// `-d / d_dot` on a closing course, `+inf` otherwise.
pub fn ttc_pair(i: &AgentState, j: &AgentState) -> Result<f64> {
    let (d, d_dot) = pair_distance_rate(i, j)?;
    Ok(if d_dot < 0.0 { -d / d_dot } else { f64::INFINITY })
}

/// Minimum pairwise TTC over `neighbors`; coincident pairs are skipped.
pub fn ttc_agent(agent: &AgentState, neighbors: &[AgentState]) -> f64 {
    neighbors
        .iter()
        .filter_map(|n| ttc_pair(agent, n).ok())
        .fold(f64::INFINITY, f64::min)
}

fn exposed(ttc: f64, ttc_star: f64) -> bool {
    (0.0..=ttc_star).contains(&ttc)
}

/// Time exposed time-to-collision.
pub fn tet(ttc_series: &[f64], ttc_star: f64, tau: f64) -> f64 {
    assert!(tau > 0.0, "tau must be positive");
    ttc_series.iter().filter(|&&t| exposed(t, ttc_star)).count() as f64 * tau
}

/// Time integrated time-to-collision, gated like [`tet`].
pub fn tit(ttc_series: &[f64], ttc_star: f64, tau: f64) -> f64 {
    assert!(tau > 0.0, "tau must be positive");
    ttc_series
        .iter()
        .filter(|&&t| exposed(t, ttc_star))
        .map(|&t| (ttc_star - t) * tau)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskPair {
    pub q: f64,
    pub q_dot: f64,
    pub spr: f64,
    pub drv: f64,
}

/// Time-to-closest-approach based risk between two agents, in log domain.
pub fn risk_pair(i: &AgentState, j: &AgentState, log_floor: f64) -> RiskPair {
    let dp = i.position - j.position;
    let dv = i.velocity - j.velocity;
    let da = i.acceleration - j.acceleration;
    let q = if dv.norm_sq() > 0.0 { (-dv.dot(dp) / dv.norm_sq()).max(0.0) } else { 0.0 };
    let q_dot = if da.norm_sq() > 0.0 { -da.dot(dp) / da.norm_sq() } else { 0.0 };
    let risk = |x: f64| if x > 0.0 { (-x).exp() } else { 0.0 };
    RiskPair {
        q,
        q_dot,
        spr: risk(q).max(log_floor).ln(),
        drv: risk(q_dot).max(log_floor).ln(),
    }
}

/// Per-agent, per-history-frame safety indices of one window.
///
/// TTC may be `+inf`; [`SafetyIndexSet::features`] substitutes the sentinel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyIndexSet {
    pub ttc: Vec<Vec<f64>>,
    pub tet: Vec<Vec<f64>>,
    pub tit: Vec<Vec<f64>>,
    pub spr: Vec<Vec<f64>>,
    pub drv: Vec<Vec<f64>>,
}

impl SafetyIndexSet {
    pub const CHANNELS: usize = 5;

    pub fn num_agents(&self) -> usize {
        self.ttc.len()
    }

    pub fn num_frames(&self) -> usize {
        self.ttc.first().map_or(0, Vec::len)
    }

    /// `[ttc, tet, tit, spr, drv]` for one slot, infinite TTC replaced by
    /// `sentinel`.
    pub fn features(&self, agent: usize, frame: usize, sentinel: f64) -> [f64; 5] {
        let ttc = self.ttc[agent][frame];
        [
            if ttc.is_finite() { ttc } else { sentinel },
            self.tet[agent][frame],
            self.tit[agent][frame],
            self.spr[agent][frame],
            self.drv[agent][frame],
        ]
    }
}

/// Instantaneous indices of one agent against a set of candidates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSafety {
    pub ttc: f64,
    pub spr: f64,
    pub drv: f64,
}

/// TTC against all candidates within the radius, SPR/DRV against the nearest.
pub fn frame_safety(agent: &AgentState, others: &[AgentState], params: &SafetyParams) -> FrameSafety {
    let neighbors: Vec<(f64, &AgentState)> = others
        .iter()
        .map(|o| ((o.position - agent.position).norm(), o))
        .filter(|&(d, _)| d > 0.0 && d <= params.radius)
        .collect();
    let floor = params.log_floor.ln();
    if neighbors.is_empty() {
        return FrameSafety { ttc: f64::INFINITY, spr: floor, drv: floor };
    }
    let ttc = neighbors
        .iter()
        .filter_map(|(_, n)| ttc_pair(agent, n).ok())
        .fold(f64::INFINITY, f64::min);
    let nearest = neighbors
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.agent_id.cmp(&b.1.agent_id)))
        .map(|&(_, n)| n)
        .expect("non-empty");
    let r = risk_pair(agent, nearest, params.log_floor);
    FrameSafety { ttc, spr: r.spr, drv: r.drv }
}

/// Safety indices for every agent and history frame of a window.
///
/// Neighbors are the other window agents present at the same frame within
/// the radius. TET and TIT accumulate over the history up to each frame.
/// Absent slots get neutral values and carry the running sums forward.
pub fn assemble_safety_indices(window: &SceneWindow, params: &SafetyParams) -> SafetyIndexSet {
    let (n, len) = (window.num_agents(), window.history_len());
    let floor = params.log_floor.ln();
    let mut set = SafetyIndexSet {
        ttc: vec![vec![f64::INFINITY; len]; n],
        tet: vec![vec![0.0; len]; n],
        tit: vec![vec![0.0; len]; n],
        spr: vec![vec![floor; len]; n],
        drv: vec![vec![floor; len]; n],
    };
    for k in 0..len {
        let present = window.present_at(k);
        for &(a, state) in &present {
            let others: Vec<AgentState> = present.iter().filter(|(b, _)| *b != a).map(|&(_, s)| s).collect();
            let fs = frame_safety(&state, &others, params);
            set.ttc[a][k] = fs.ttc;
            set.spr[a][k] = fs.spr;
            set.drv[a][k] = fs.drv;
        }
    }
    for a in 0..n {
        let (mut tet_acc, mut tit_acc) = (0.0, 0.0);
        for k in 0..len {
            let ttc = set.ttc[a][k];
            if exposed(ttc, params.ttc_star) {
                tet_acc += params.tau;
                tit_acc += (params.ttc_star - ttc) * params.tau;
            }
            set.tet[a][k] = tet_acc;
            set.tit[a][k] = tit_acc;
        }
    }
    set
}
