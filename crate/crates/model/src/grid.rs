//! Row layout of the agents × frames grid and helpers that run per-frame or
//! per-agent computations on it.
//!
//! Rows are agent-major: agent `a` at history index `k` is row
//! `a * frames + k`, so each agent's sequence is a contiguous block.

use citf_nn::layers::{LstmCell, MASK_PENALTY};
use citf_nn::{Tape, Tensor, Var};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub agents: usize,
    pub frames: usize,
    /// Presence per row.
    pub mask: Vec<bool>,
}

impl Grid {
    pub fn new(agents: usize, frames: usize, mask: Vec<bool>) -> Result<Self> {
        if agents == 0 || frames == 0 || mask.len() != agents * frames {
            return Err(ModelError::Invalid(format!(
                "grid of {agents} agents x {frames} frames with {} mask entries",
                mask.len()
            )));
        }
        Ok(Self { agents, frames, mask })
    }

    pub fn full(agents: usize, frames: usize) -> Self {
        Self { agents, frames, mask: vec![true; agents * frames] }
    }

    pub fn rows(&self) -> usize {
        self.agents * self.frames
    }

    pub fn row(&self, agent: usize, frame: usize) -> usize {
        agent * self.frames + frame
    }

    pub fn agent_blocks(&self) -> Vec<(usize, usize)> {
        (0..self.agents).map(|a| (a * self.frames, self.frames)).collect()
    }

    /// Additive attention offsets that hide absent keys.
    pub fn key_offsets(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| if m { 0.0 } else { MASK_PENALTY }).collect()
    }

    pub fn mask_column(&self) -> Tensor {
        Tensor::matrix(self.rows(), 1, self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
    }

    pub fn frame_rows(&self, frame: usize) -> Vec<usize> {
        (0..self.agents).map(|a| self.row(a, frame)).collect()
    }

    /// Gather indices turning a frame-major stack (row `k * agents + a`)
    /// into the agent-major layout.
    pub fn from_frame_major(&self) -> Vec<usize> {
        (0..self.rows()).map(|r| (r % self.frames) * self.agents + r / self.frames).collect()
    }

    pub fn present_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&r| self.mask[r]).collect()
    }

    /// Zeroes the rows of absent slots.
    pub fn apply_mask(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.mask.iter().all(|&m| m) {
            return Ok(x);
        }
        let m = tape.constant(self.mask_column());
        Ok(tape.mul_col(x, m)?)
    }

    /// Runs `f` on the `agents × c` slice of every frame and reassembles the
    /// results in the agent-major layout.
    pub fn per_frame<F>(&self, tape: &mut Tape, x: Var, mut f: F) -> Result<Var>
    where
        F: FnMut(&mut Tape, usize, Var) -> Result<Var>,
    {
        let mut outs = Vec::with_capacity(self.frames);
        for k in 0..self.frames {
            let rows = tape.gather_rows(x, &self.frame_rows(k))?;
            outs.push(f(tape, k, rows)?);
        }
        let stacked = tape.concat_rows(&outs)?;
        Ok(tape.gather_rows(stacked, &self.from_frame_major())?)
    }

    /// Forward-in-time recurrent pass over each agent's frames with shared
    /// weights and a zero initial state. Returns the hidden state at every
    /// row; the state at frame `k` depends only on frames `0..=k`.
    pub fn recurrent(&self, tape: &mut Tape, cell: &LstmCell, x: Var) -> Result<Var> {
        let zx = cell.project_input(tape, x)?;
        let mut h = tape.constant(Tensor::zeros(&[self.agents, cell.hidden]));
        let mut c = h;
        let mut outs = Vec::with_capacity(self.frames);
        for k in 0..self.frames {
            let z = tape.gather_rows(zx, &self.frame_rows(k))?;
            (h, c) = cell.step_projected(tape, z, h, c)?;
            outs.push(h);
        }
        let stacked = tape.concat_rows(&outs)?;
        Ok(tape.gather_rows(stacked, &self.from_frame_major())?)
    }
}
