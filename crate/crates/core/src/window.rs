use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::types::{AgentState, SceneWindow, TrajectoryTable, Vec2};

/// Windowing parameters. Frame counts are at the model rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub t_h: usize,
    pub t_f: usize,
    /// Neighbor search radius in meters.
    pub radius: f64,
    pub n_max: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { t_h: 15, t_f: 25, radius: 30.0, n_max: 12 }
    }
}

/// Keeps every k-th frame (`k = target_dt / dt`) and renumbers frames.
pub fn resample(table: &TrajectoryTable, target_dt: f64) -> Result<TrajectoryTable> {
    let ratio = target_dt / table.dt();
    let k = ratio.round();
    if !(k >= 1.0) || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(DataError::NotMultiple { dt: table.dt(), target: target_dt });
    }
    let k = k as i64;
    let records = table
        .records()
        .iter()
        .filter(|r| r.frame % k == 0)
        .map(|r| AgentState { frame: r.frame / k, ..*r })
        .collect();
    TrajectoryTable::new(records, target_dt)
}

struct TrackIndex<'a> {
    tracks: BTreeMap<i64, &'a [AgentState]>,
}

impl<'a> TrackIndex<'a> {
    fn get(&self, agent: i64, frame: i64) -> Option<&'a AgentState> {
        let track = self.tracks.get(&agent)?;
        let first = track.first()?.frame;
        let idx = frame - first;
        if idx < 0 {
            return None;
        }
        track.get(idx as usize)
    }
}

/// One window per (target, reference frame) where the target covers the full
/// history and future span.
pub fn build_scene_windows(table: &TrajectoryTable, cfg: &WindowConfig) -> Vec<SceneWindow> {
    assert!(cfg.t_h >= 1 && cfg.t_f >= 1, "t_h and t_f must be at least 1");
    let index = TrackIndex { tracks: table.tracks() };
    let frames = table.by_frame();
    let (t_h, t_f) = (cfg.t_h as i64, cfg.t_f as i64);
    let mut out = Vec::new();

    for (&target, track) in &index.tracks {
        let first = track[0].frame;
        let last = track[track.len() - 1].frame;
        // count = len - t_h - t_f
        for t in (first + t_h)..(last - t_f + 1) {
            let current = *index.get(target, t).expect("target present at reference frame");
            let mut neighbors: Vec<(f64, i64)> = frames[&t]
                .iter()
                .filter(|s| s.agent_id != target)
                .map(|s| ((s.position - current.position).norm(), s.agent_id))
                .filter(|&(d, _)| d <= cfg.radius)
                .collect();
            neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neighbors.truncate(cfg.n_max);

            let origin = current.position;
            let mut agent_ids = vec![target];
            agent_ids.extend(neighbors.iter().map(|&(_, id)| id));

            let mut history = Vec::with_capacity(agent_ids.len());
            let mut mask = Vec::with_capacity(agent_ids.len());
            for &id in &agent_ids {
                let mut states = Vec::with_capacity(cfg.t_h + 1);
                let mut present = Vec::with_capacity(cfg.t_h + 1);
                for f in (t - t_h)..=t {
                    match index.get(id, f) {
                        Some(s) => {
                            states.push(translate(s, origin));
                            present.push(true);
                        }
                        None => {
                            states.push(AgentState::absent(id, f));
                            present.push(false);
                        }
                    }
                }
                history.push(states);
                mask.push(present);
            }
            let future = ((t + 1)..=(t + t_f))
                .map(|f| translate(index.get(target, f).expect("target future present"), origin))
                .collect();

            out.push(SceneWindow {
                target_id: target,
                reference_frame: t,
                dt: table.dt(),
                agent_ids,
                history,
                mask,
                future,
                origin,
            });
        }
    }
    out
}

fn translate(s: &AgentState, origin: Vec2) -> AgentState {
    AgentState { position: s.position - origin, ..*s }
}
