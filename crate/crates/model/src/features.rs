//! Raw per-slot features of a window, training-split standardization, and
//! the prepared sample the network consumes.

use citf_core::criteria::window_criteria;
use citf_core::graph::Dgg;
use citf_core::labels::derive_maneuver_labels;
use citf_core::safety::assemble_safety_indices;
use citf_core::{AgentState, ManeuverLabel, SceneWindow, Vec2};
use citf_nn::layers::gcn_normalize;
use citf_nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::eval::constant_velocity_baseline;
use crate::grid::Grid;

pub const SAFETY_CHANNELS: usize = 5;
pub const BEHAVIOR_CHANNELS: usize = 18;
pub const POOLING_CHANNELS: usize = 12;
pub const STD_FLOOR: f64 = 1e-6;

/// Sequential pooling vectors, indexed `[agent][frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingVectors {
    /// Change of position, velocity and acceleration since the previous frame.
    pub self_dynamics: Vec<Vec<[f64; 6]>>,
    /// Position, velocity and acceleration minus the target's.
    pub pairwise: Vec<Vec<[f64; 6]>>,
}

fn kinematics(s: &AgentState) -> [f64; 6] {
    [s.position.x, s.position.y, s.velocity.x, s.velocity.y, s.acceleration.x, s.acceleration.y]
}

fn diff(a: [f64; 6], b: [f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| a[i] - b[i])
}

/// Pooling vectors of every agent. With `relative = false` the pairwise part
/// holds absolute states instead of differences to the target. Slots without
/// a present predecessor (or without a present target) are zero.
pub fn priority_pooling(window: &SceneWindow, relative: bool) -> PoolingVectors {
    let (n, len) = (window.num_agents(), window.history_len());
    let mut self_dynamics = vec![vec![[0.0; 6]; len]; n];
    let mut pairwise = vec![vec![[0.0; 6]; len]; n];
    for a in 0..n {
        for k in 0..len {
            if !window.mask[a][k] {
                continue;
            }
            let here = kinematics(&window.history[a][k]);
            if k > 0 && window.mask[a][k - 1] {
                self_dynamics[a][k] = diff(here, kinematics(&window.history[a][k - 1]));
            }
            if !relative {
                pairwise[a][k] = here;
            } else if a != 0 && window.mask[0][k] {
                pairwise[a][k] = diff(here, kinematics(&window.history[0][k]));
            }
        }
    }
    PoolingVectors { self_dynamics, pairwise }
}

/// Unstandardized inputs of one window in the agent-major grid layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFeatures {
    pub grid: Grid,
    pub safety: Vec<[f64; SAFETY_CHANNELS]>,
    pub behavior: Vec<[f64; BEHAVIOR_CHANNELS]>,
    pub pooling: Vec<[f64; POOLING_CHANNELS]>,
    /// Per-frame GCN propagation matrix over the window's agent slots.
    pub adjacency: Vec<Tensor>,
}

fn check_window(window: &SceneWindow, cfg: &ModelConfig) -> Result<()> {
    let agents = window.num_agents();
    if window.history_len() != cfg.t_h + 1 || window.future.len() != cfg.t_f {
        return Err(ModelError::Invalid(format!(
            "window has {} history and {} future frames, model expects {} and {}",
            window.history_len(),
            window.future.len(),
            cfg.t_h + 1,
            cfg.t_f
        )));
    }
    if agents == 0 || agents > cfg.n_max + 1 {
        return Err(ModelError::Invalid(format!("window has {agents} agents, model allows {}", cfg.n_max + 1)));
    }
    if (window.dt - cfg.dt).abs() > 1e-9 {
        return Err(ModelError::Invalid(format!("window dt {} differs from model dt {}", window.dt, cfg.dt)));
    }
    Ok(())
}

pub fn raw_features(window: &SceneWindow, cfg: &ModelConfig, relative_priority: bool) -> Result<RawFeatures> {
    check_window(window, cfg)?;
    let (n, len) = (window.num_agents(), window.history_len());
    let grid = Grid::new(n, len, (0..n).flat_map(|a| window.mask[a].iter().copied()).collect())?;

    let fc = &cfg.features;
    let indices = assemble_safety_indices(window, &fc.safety);
    let criteria = window_criteria(window, &fc.graph)?;
    let pool = priority_pooling(window, relative_priority);

    let mut safety = Vec::with_capacity(grid.rows());
    let mut behavior = Vec::with_capacity(grid.rows());
    let mut pooling = Vec::with_capacity(grid.rows());
    for a in 0..n {
        for k in 0..len {
            safety.push(indices.features(a, k, fc.safety.ttc_sentinel));
            behavior.push(criteria[a][k].flatten());
            let mut p = [0.0; POOLING_CHANNELS];
            p[..6].copy_from_slice(&pool.self_dynamics[a][k]);
            p[6..].copy_from_slice(&pool.pairwise[a][k]);
            pooling.push(p);
        }
    }

    let mut adjacency = Vec::with_capacity(len);
    for k in 0..len {
        let present = window.present_at(k);
        let positions: Vec<Vec2> = present.iter().map(|(_, s)| s.position).collect();
        let g = Dgg::from_positions(&positions, fc.graph.radius)?;
        let local = g.normalized();
        let mut full = Tensor::zeros(&[n, n]);
        for (i, &(a, _)) in present.iter().enumerate() {
            for (j, &(b, _)) in present.iter().enumerate() {
                full.set(a, b, local[i * present.len() + j]);
            }
        }
        adjacency.push(gcn_normalize(&full, 1.0)?);
    }
    Ok(RawFeatures { grid, safety, behavior, pooling, adjacency })
}

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Population statistics over `rows`. Errors when there are none.
    pub fn fit<'a, I>(rows: I, channels: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut count = 0usize;
        let mut sum = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        for row in rows {
            count += 1;
            for c in 0..channels {
                sum[c] += row[c];
                sq[c] += row[c] * row[c];
            }
        }
        if count == 0 {
            return Err(ModelError::Invalid("cannot fit feature statistics on zero rows".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, c: usize, x: f64) -> f64 {
        (x - self.mean[c]) / self.std[c].max(STD_FLOOR)
    }

    /// Standardized `rows × channels` tensor with absent rows zeroed.
    pub fn standardize<const C: usize>(&self, rows: &[[f64; C]], mask: &[bool]) -> Tensor {
        let mut data = Vec::with_capacity(rows.len() * C);
        for (row, &present) in rows.iter().zip(mask) {
            for (c, &x) in row.iter().enumerate() {
                data.push(if present { self.apply(c, x) } else { 0.0 });
            }
        }
        Tensor::matrix(rows.len(), C, data)
    }
}

/// Statistics of the three input groups, fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub safety: ChannelStats,
    pub behavior: ChannelStats,
    pub pooling: ChannelStats,
}

impl FeatureStats {
    /// Fits on the present slots of `raws`.
    pub fn fit(raws: &[RawFeatures]) -> Result<Self> {
        fn present<'a, const C: usize>(raws: &'a [RawFeatures], pick: fn(&RawFeatures) -> &[[f64; C]]) -> impl Iterator<Item = &'a [f64]> {
            raws.iter().flat_map(move |r| {
                pick(r).iter().zip(&r.grid.mask).filter(|(_, &m)| m).map(|(row, _)| row.as_slice())
            })
        }
        Ok(Self {
            safety: ChannelStats::fit(present(raws, |r| &r.safety), SAFETY_CHANNELS)?,
            behavior: ChannelStats::fit(present(raws, |r| &r.behavior), BEHAVIOR_CHANNELS)?,
            pooling: ChannelStats::fit(present(raws, |r| &r.pooling), POOLING_CHANNELS)?,
        })
    }
}

/// Network-ready window: standardized inputs plus targets in the window
/// frame (target at the origin at the reference frame).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub grid: Grid,
    pub safety: Tensor,
    pub behavior: Tensor,
    pub pooling: Tensor,
    pub adjacency: Vec<Tensor>,
    /// Ground-truth future positions, one per output step.
    pub future: Vec<[f64; 2]>,
    /// Constant-velocity extrapolation the predicted means are offsets from.
    pub baseline: Vec<[f64; 2]>,
    pub label: ManeuverLabel,
    pub target_id: i64,
    pub reference_frame: i64,
}

impl Sample {
    pub fn new(window: &SceneWindow, raw: RawFeatures, stats: &FeatureStats, cfg: &ModelConfig) -> Result<Self> {
        let mask = &raw.grid.mask;
        let safety = stats.safety.standardize(&raw.safety, mask);
        let behavior = stats.behavior.standardize(&raw.behavior, mask);
        let pooling = stats.pooling.standardize(&raw.pooling, mask);
        Ok(Self {
            safety,
            behavior,
            pooling,
            adjacency: raw.adjacency,
            future: window.future.iter().map(|s| [s.position.x, s.position.y]).collect(),
            baseline: constant_velocity_baseline(window, cfg.t_f).iter().map(|p| [p.x, p.y]).collect(),
            label: derive_maneuver_labels(window, &cfg.features.labels),
            target_id: window.target_id,
            reference_frame: window.reference_frame,
            grid: raw.grid,
        })
    }
}
