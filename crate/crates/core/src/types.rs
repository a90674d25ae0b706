use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// Planar vector in meters (or m/s, m/s²). `x` is longitudinal, `y` lateral.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Vec2, w: f64) -> Vec2 {
        self + (other - self) * w
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// One agent's kinematic sample at one timestep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: i64,
    pub frame: i64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    /// `-1` when unknown.
    pub lane_id: i64,
}

impl AgentState {
    /// Zero-filled placeholder for a frame where the agent is absent.
    pub fn absent(agent_id: i64, frame: i64) -> Self {
        Self {
            agent_id,
            frame,
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            acceleration: Vec2::ZERO,
            lane_id: -1,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.acceleration.is_finite()
    }
}

/// Ordered collection of agent states sampled every `dt` seconds.
///
/// Records are kept sorted by `(agent_id, frame)`; every agent's frames form
/// one contiguous run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTable {
    records: Vec<AgentState>,
    dt: f64,
}

impl TrajectoryTable {
    pub fn new(mut records: Vec<AgentState>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DataError::Invalid(format!("dt must be positive, got {dt}")));
        }
        records.sort_by_key(|r| (r.agent_id, r.frame));
        for r in &records {
            if r.frame < 0 {
                return Err(DataError::Invalid(format!(
                    "agent {} has negative frame {}",
                    r.agent_id, r.frame
                )));
            }
            if !r.is_finite() {
                return Err(DataError::Invalid(format!(
                    "agent {} frame {} has non-finite kinematics",
                    r.agent_id, r.frame
                )));
            }
        }
        for pair in records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.agent_id != b.agent_id {
                continue;
            }
            if a.frame == b.frame {
                return Err(DataError::Duplicate { agent: a.agent_id, frame: a.frame });
            }
            if b.frame != a.frame + 1 {
                return Err(DataError::NonContiguous { agent: a.agent_id, frame: a.frame });
            }
        }
        Ok(Self { records, dt })
    }

    pub fn records(&self) -> &[AgentState] {
        &self.records
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-agent contiguous tracks, keyed by agent id.
    pub fn tracks(&self) -> BTreeMap<i64, &[AgentState]> {
        let mut out = BTreeMap::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].agent_id != self.records[start].agent_id {
                out.insert(self.records[start].agent_id, &self.records[start..i]);
                start = i;
            }
        }
        out
    }

    /// All states present at each frame, keyed by frame.
    pub fn by_frame(&self) -> BTreeMap<i64, Vec<AgentState>> {
        let mut out: BTreeMap<i64, Vec<AgentState>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.frame).or_default().push(*r);
        }
        out
    }
}

/// One prediction instance: a target, its neighbors over the history window
/// and the target's future ground truth.
///
/// Agent index 0 is the target; indices `1..` are neighbors ordered
/// nearest-first at the reference frame. Positions are translated so the
/// target sits at the origin at the reference frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneWindow {
    pub target_id: i64,
    pub reference_frame: i64,
    pub dt: f64,
    pub agent_ids: Vec<i64>,
    /// `history[agent][k]` for frames `reference_frame - t_h + k`.
    pub history: Vec<Vec<AgentState>>,
    pub mask: Vec<Vec<bool>>,
    /// Target states over frames `reference_frame + 1 ..= reference_frame + t_f`.
    pub future: Vec<AgentState>,
    /// Translation that was subtracted from all positions.
    pub origin: Vec2,
}

impl SceneWindow {
    pub fn neighbor_ids(&self) -> &[i64] {
        &self.agent_ids[1..]
    }

    pub fn num_agents(&self) -> usize {
        self.agent_ids.len()
    }

    /// Number of history frames, `t_h + 1`.
    pub fn history_len(&self) -> usize {
        self.history.first().map_or(0, Vec::len)
    }

    pub fn target_history(&self) -> &[AgentState] {
        &self.history[0]
    }

    pub fn current_target(&self) -> &AgentState {
        self.history[0].last().expect("window has at least one history frame")
    }

    /// States of every agent present at history index `k`, with their agent
    /// indices.
    pub fn present_at(&self, k: usize) -> Vec<(usize, AgentState)> {
        (0..self.num_agents())
            .filter(|&a| self.mask[a][k])
            .map(|a| (a, self.history[a][k]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lateral {
    Left,
    Keep,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Longitudinal {
    Accelerate,
    Constant,
    Brake,
}

impl Lateral {
    pub const ALL: [Lateral; 3] = [Lateral::Left, Lateral::Keep, Lateral::Right];

    pub fn index(self) -> usize {
        match self {
            Lateral::Left => 0,
            Lateral::Keep => 1,
            Lateral::Right => 2,
        }
    }
}

impl Longitudinal {
    pub const ALL: [Longitudinal; 3] =
        [Longitudinal::Accelerate, Longitudinal::Constant, Longitudinal::Brake];

    pub fn index(self) -> usize {
        match self {
            Longitudinal::Accelerate => 0,
            Longitudinal::Constant => 1,
            Longitudinal::Brake => 2,
        }
    }
}

/// Lateral × longitudinal maneuver pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManeuverLabel {
    pub lateral: Lateral,
    pub longitudinal: Longitudinal,
}

impl ManeuverLabel {
    pub const COUNT: usize = 9;

    /// Mode index `lateral * 3 + longitudinal`.
    pub fn mode_index(self) -> usize {
        self.lateral.index() * 3 + self.longitudinal.index()
    }

    pub fn from_mode_index(mode: usize) -> Self {
        assert!(mode < Self::COUNT, "mode index {mode} out of range");
        Self { lateral: Lateral::ALL[mode / 3], longitudinal: Longitudinal::ALL[mode % 3] }
    }

    pub fn all() -> impl Iterator<Item = ManeuverLabel> {
        (0..Self::COUNT).map(Self::from_mode_index)
    }
}
