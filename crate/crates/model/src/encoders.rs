//! The three feature streams: safety (graph convolutions over the per-frame
//! proximity graph, then cross-layer attention), behavior (recurrent pass
//! over graph criteria and the safety stream) and priority (recurrent pass
//! over pooling vectors).
//!
//! Every stream is `rows × d_model` in the agent-major [`Grid`] layout, with
//! absent slots exactly zero. Attention runs over the frames of each agent.

use citf_nn::layers::{GcnLayer, Glu, LayerNorm, LstmCell, Mlp, MultiHeadAttention};
use citf_nn::{ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{ModelError, Result};
use crate::features::{BEHAVIOR_CHANNELS, POOLING_CHANNELS, SAFETY_CHANNELS};
use crate::grid::Grid;

/// Multi-head attention over each agent's frames followed by GLU, MLP and
/// layer norm.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub attention: MultiHeadAttention,
    pub glu: Glu,
    pub mlp: Mlp,
    pub norm: LayerNorm,
}

impl AttentionBlock {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, d: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attention"), in_dim, d, heads, rng)?,
            glu: Glu::new(store, &format!("{name}.glu"), d, d, rng),
            mlp: Mlp::new(store, &format!("{name}.mlp"), &[d, d, d], rng),
            norm: LayerNorm::new(store, &format!("{name}.norm"), d),
        })
    }

    pub fn forward(&self, tape: &mut Tape, q: Var, k: Var, v: Var, grid: &Grid) -> Result<Var> {
        let offsets = grid.key_offsets();
        let a = self.attention.forward_blocks(tape, q, k, v, &grid.agent_blocks(), Some(&offsets))?;
        let g = self.glu.forward(tape, a)?;
        let m = self.mlp.forward(tape, g)?;
        let n = self.norm.forward(tape, m)?;
        grid.apply_mask(tape, n)
    }
}

fn check_input(tape: &Tape, x: Var, grid: &Grid, channels: usize, what: &str) -> Result<()> {
    let shape = tape.shape(x);
    if shape != [grid.rows(), channels] {
        return Err(ModelError::Invalid(format!(
            "{what} input has shape {shape:?}, expected [{}, {channels}]",
            grid.rows()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SafetyEncoder {
    pub embed: Mlp,
    pub gcn: Vec<GcnLayer>,
    pub query: Mlp,
    pub key: Mlp,
    pub value: Mlp,
    pub block: AttentionBlock,
}

impl SafetyEncoder {
    pub fn new(store: &mut ParamStore, d: usize, heads: usize, layers: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            embed: Mlp::new(store, "safety.embed", &[SAFETY_CHANNELS, d, d], rng),
            gcn: (0..layers).map(|l| GcnLayer::new(store, &format!("safety.gcn{l}"), d, d, rng)).collect(),
            query: Mlp::new(store, "safety.query", &[d, d], rng),
            key: Mlp::new(store, "safety.key", &[d, d], rng),
            value: Mlp::new(store, "safety.value", &[d, d], rng),
            block: AttentionBlock::new(store, "safety.block", d, d, heads, rng)?,
        })
    }

    /// Embedding followed by the graph convolutions; returns every layer
    /// output starting with the embedding.
    pub fn graph_layers(&self, tape: &mut Tape, h: Var, adjacency: &[Tensor], grid: &Grid) -> Result<Vec<Var>> {
        check_input(tape, h, grid, SAFETY_CHANNELS, "safety")?;
        if adjacency.len() != grid.frames {
            return Err(ModelError::Invalid(format!(
                "{} adjacency frames for {} history frames",
                adjacency.len(),
                grid.frames
            )));
        }
        let mut zs = vec![self.embed.forward(tape, h)?];
        for layer in &self.gcn {
            let zw = layer.weight.forward(tape, *zs.last().expect("embedding"))?;
            let mixed = grid.per_frame(tape, zw, |t, k, rows| {
                let a = t.constant(adjacency[k].clone());
                Ok(t.matmul(a, rows)?)
            })?;
            zs.push(tape.relu(mixed));
        }
        Ok(zs)
    }

    pub fn forward(&self, tape: &mut Tape, h: Var, adjacency: &[Tensor], grid: &Grid) -> Result<Var> {
        let zs = self.graph_layers(tape, h, adjacency, grid)?;
        let top = zs.len() - 1;
        let q = self.query.forward(tape, zs[top])?;
        let k = self.key.forward(tape, zs[top.saturating_sub(1)])?;
        let v = self.value.forward(tape, zs[top.saturating_sub(2)])?;
        self.block.forward(tape, q, k, v, grid)
    }
}

#[derive(Clone, Debug)]
pub struct BehaviorEncoder {
    pub criteria: Mlp,
    pub safety: Mlp,
    pub recurrent: LstmCell,
    pub block: AttentionBlock,
}

impl BehaviorEncoder {
    pub fn new(store: &mut ParamStore, d: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            criteria: Mlp::new(store, "behavior.criteria", &[BEHAVIOR_CHANNELS, d, d], rng),
            safety: Mlp::new(store, "behavior.safety", &[d, d, d], rng),
            recurrent: LstmCell::new(store, "behavior.lstm", 2 * d, d, rng),
            block: AttentionBlock::new(store, "behavior.block", d, d, heads, rng)?,
        })
    }

    pub fn recurrent_states(&self, tape: &mut Tape, j: Var, o_safety: Var, grid: &Grid) -> Result<Var> {
        check_input(tape, j, grid, BEHAVIOR_CHANNELS, "behavior")?;
        let a = self.criteria.forward(tape, j)?;
        let b = self.safety.forward(tape, o_safety)?;
        let x = tape.concat_cols(&[a, b])?;
        grid.recurrent(tape, &self.recurrent, x)
    }

    pub fn forward(&self, tape: &mut Tape, j: Var, o_safety: Var, grid: &Grid) -> Result<Var> {
        let h = self.recurrent_states(tape, j, o_safety, grid)?;
        self.block.forward(tape, h, h, h, grid)
    }
}

#[derive(Clone, Debug)]
pub struct PriorityEncoder {
    pub recurrent: LstmCell,
    pub block: AttentionBlock,
}

impl PriorityEncoder {
    pub fn new(store: &mut ParamStore, d: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            recurrent: LstmCell::new(store, "priority.lstm", POOLING_CHANNELS, d, rng),
            block: AttentionBlock::new(store, "priority.block", d, d, heads, rng)?,
        })
    }

    pub fn recurrent_states(&self, tape: &mut Tape, pool: Var, grid: &Grid) -> Result<Var> {
        check_input(tape, pool, grid, POOLING_CHANNELS, "pooling")?;
        grid.recurrent(tape, &self.recurrent, pool)
    }

    pub fn forward(&self, tape: &mut Tape, pool: Var, grid: &Grid) -> Result<Var> {
        let h = self.recurrent_states(tape, pool, grid)?;
        self.block.forward(tape, h, h, h, grid)
    }
}
