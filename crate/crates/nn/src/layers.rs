//! Layer building blocks. Parameters live in a [`ParamStore`]; layers hold
//! ids and run against the store bound to a [`Tape`].

use rand::Rng;

use crate::error::{NnError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;
/// Score added to masked attention positions.
pub const MASK_PENALTY: f64 = -1e9;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let weight = store.glorot(format!("{name}.weight"), in_dim, out_dim, rng);
        let bias = bias.then(|| store.constant(format!("{name}.bias"), &[1, out_dim], 0.0));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Linear layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1], true, rng))
            .collect();
        Self { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Gated linear unit `(x W1 + b1) * sigmoid(x W2 + b2)`.
#[derive(Clone, Debug)]
pub struct Glu {
    pub value: Linear,
    pub gate: Linear,
}

impl Glu {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            value: Linear::new(store, &format!("{name}.value"), in_dim, out_dim, true, rng),
            gate: Linear::new(store, &format!("{name}.gate"), in_dim, out_dim, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let v = self.value.forward(tape, x)?;
        let g = self.gate.forward(tape, x)?;
        let g = tape.sigmoid(g);
        tape.mul(v, g)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.constant(format!("{name}.gain"), &[1, dim], 1.0),
            bias: store.constant(format!("{name}.bias"), &[1, dim], 0.0),
            eps: NORM_EPS,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let z = tape.standardize_rows(x, self.eps);
        affine(tape, z, self.gain, self.bias)
    }
}

fn affine(tape: &mut Tape, z: Var, gain: ParamId, bias: ParamId) -> Result<Var> {
    let g = tape.param(gain);
    let b = tape.param(bias);
    let z = tape.mul_row(z, g)?;
    tape.add_row(z, b)
}

#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub groups: usize,
    pub channels: usize,
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(NnError::Invalid(format!("{channels} channels are not divisible into {groups} groups")));
        }
        Ok(Self {
            groups,
            channels,
            gain: store.constant(format!("{name}.gain"), &[1, channels], 1.0),
            bias: store.constant(format!("{name}.bias"), &[1, channels], 0.0),
            eps: NORM_EPS,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let rows = tape.value(x).rows();
        if tape.value(x).cols() != self.channels {
            return Err(crate::error::mismatch("group_norm", &shape, &[rows, self.channels]));
        }
        let grouped = tape.reshape(x, &[rows * self.groups, self.channels / self.groups])?;
        let z = tape.standardize_rows(grouped, self.eps);
        let z = tape.reshape(z, &[rows, self.channels])?;
        affine(tape, z, self.gain, self.bias)
    }
}

/// LSTM cell with gate order input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: Linear,
    pub recurrent: Linear,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let input = Linear::new(store, &format!("{name}.input"), in_dim, 4 * hidden, true, rng);
        let recurrent = Linear::new(store, &format!("{name}.recurrent"), hidden, 4 * hidden, false, rng);
        let bias = store.value_mut(input.bias.expect("input bias"));
        for j in hidden..2 * hidden {
            bias.data_mut()[j] = 1.0;
        }
        Self { input, recurrent, hidden }
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let zx = self.project_input(tape, x)?;
        self.step_projected(tape, zx, h, c)
    }

    /// Input contribution to the gates, `x W + b`. Computing it once for many
    /// rows and feeding slices to [`LstmCell::step_projected`] avoids
    /// repeated small products.
    pub fn project_input(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.input.forward(tape, x)
    }

    pub fn step_projected(&self, tape: &mut Tape, zx: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let zh = self.recurrent.forward(tape, h)?;
        let z = tape.add(zx, zh)?;
        let n = self.hidden;
        let i = tape.slice_cols(z, 0, n)?;
        let f = tape.slice_cols(z, n, n)?;
        let g = tape.slice_cols(z, 2 * n, n)?;
        let o = tape.slice_cols(z, 3 * n, n)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Runs over `inputs` from a zero state; returns every hidden state.
    pub fn unroll(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Vec<Var>> {
        let Some(&first) = inputs.first() else { return Ok(Vec::new()) };
        let rows = tape.value(first).rows();
        let mut h = tape.constant(Tensor::zeros(&[rows, self.hidden]));
        let mut c = tape.constant(Tensor::zeros(&[rows, self.hidden]));
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = self.step(tape, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// GRU cell with gate order reset, update, candidate.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: Linear,
    pub recurrent: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.input"), in_dim, 3 * hidden, true, rng),
            recurrent: Linear::new(store, &format!("{name}.recurrent"), hidden, 3 * hidden, true, rng),
            hidden,
        }
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let gx = self.input.forward(tape, x)?;
        let gh = self.recurrent.forward(tape, h)?;
        let rz_x = tape.slice_cols(gx, 0, 2 * n)?;
        let rz_h = tape.slice_cols(gh, 0, 2 * n)?;
        let rz = tape.add(rz_x, rz_h)?;
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, n)?;
        let z = tape.slice_cols(rz, n, n)?;
        let nx = tape.slice_cols(gx, 2 * n, n)?;
        let nh = tape.slice_cols(gh, 2 * n, n)?;
        let nh = tape.mul(r, nh)?;
        let cand = tape.add(nx, nh)?;
        let cand = tape.tanh(cand);
        // h' = (1 - z) * n + z * h = n + z * (h - n)
        let diff = tape.sub(h, cand)?;
        let mix = tape.mul(z, diff)?;
        tape.add(cand, mix)
    }

    pub fn unroll(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Vec<Var>> {
        let Some(&first) = inputs.first() else { return Ok(Vec::new()) };
        let rows = tape.value(first).rows();
        let mut h = tape.constant(Tensor::zeros(&[rows, self.hidden]));
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = self.step(tape, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Multi-head scaled dot-product attention with heads combined by summation.
///
/// Queries and keys are projected to `d_model / heads` per head; values keep
/// the full model width so the summed output has width `d_model`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: Vec<[Linear; 3]>,
    pub head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        d_model: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(NnError::Invalid(format!("model width {d_model} is not divisible by {heads} heads")));
        }
        let head_dim = d_model / heads;
        let heads = (0..heads)
            .map(|h| {
                [
                    Linear::new(store, &format!("{name}.{h}.query"), in_dim, head_dim, false, rng),
                    Linear::new(store, &format!("{name}.{h}.key"), in_dim, head_dim, false, rng),
                    Linear::new(store, &format!("{name}.{h}.value"), in_dim, d_model, false, rng),
                ]
            })
            .collect();
        Ok(Self { heads, head_dim })
    }

    /// Attention restricted to contiguous row blocks: rows of block `b`
    /// attend only to keys of the same block. `key_offsets` adds a per-key
    /// score offset (0 or [`MASK_PENALTY`]) for every row of the input.
    pub fn forward_blocks(
        &self,
        tape: &mut Tape,
        q_in: Var,
        k_in: Var,
        v_in: Var,
        blocks: &[(usize, usize)],
        key_offsets: Option<&[f64]>,
    ) -> Result<Var> {
        let rows = tape.value(q_in).rows();
        let mut expected = 0;
        for &(start, len) in blocks {
            if start != expected || len == 0 {
                return Err(NnError::Invalid(format!("attention blocks must tile the rows, got {blocks:?}")));
            }
            expected += len;
        }
        if expected != rows || key_offsets.is_some_and(|o| o.len() != rows) {
            return Err(NnError::Invalid(format!("attention blocks cover {expected} of {rows} rows")));
        }
        let offsets: Option<Vec<Var>> = key_offsets.map(|o| {
            blocks
                .iter()
                .map(|&(s, l)| tape.constant(Tensor::matrix(1, l, o[s..s + l].to_vec())))
                .collect()
        });
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut total: Option<Var> = None;
        for [wq, wk, wv] in &self.heads {
            let q = wq.forward(tape, q_in)?;
            let k = wk.forward(tape, k_in)?;
            let v = wv.forward(tape, v_in)?;
            let mut outs = Vec::with_capacity(blocks.len());
            for (b, &(start, len)) in blocks.iter().enumerate() {
                let qb = tape.slice_rows(q, start, len)?;
                let kb = tape.slice_rows(k, start, len)?;
                let vb = tape.slice_rows(v, start, len)?;
                let kt = tape.transpose(kb);
                let s = tape.matmul(qb, kt)?;
                let mut s = tape.scale(s, scale);
                if let Some(o) = &offsets {
                    s = tape.add_row(s, o[b])?;
                }
                let a = tape.softmax_rows(s);
                outs.push(tape.matmul(a, vb)?);
            }
            let head = tape.concat_rows(&outs)?;
            total = Some(match total {
                Some(t) => tape.add(t, head)?,
                None => head,
            });
        }
        Ok(total.expect("at least one head"))
    }

    /// `mask` is an additive `n_q × n_k` score offset (0 or [`MASK_PENALTY`]).
    pub fn forward(&self, tape: &mut Tape, q_in: Var, k_in: Var, v_in: Var, mask: Option<&Tensor>) -> Result<Var> {
        let mask = mask.map(|m| tape.constant(m.clone()));
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut total: Option<Var> = None;
        for [wq, wk, wv] in &self.heads {
            let q = wq.forward(tape, q_in)?;
            let k = wk.forward(tape, k_in)?;
            let v = wv.forward(tape, v_in)?;
            let kt = tape.transpose(k);
            let s = tape.matmul(q, kt)?;
            let mut s = tape.scale(s, scale);
            if let Some(m) = mask {
                s = tape.add(s, m)?;
            }
            let a = tape.softmax_rows(s);
            let head = tape.matmul(a, v)?;
            total = Some(match total {
                Some(t) => tape.add(t, head)?,
                None => head,
            });
        }
        Ok(total.expect("at least one head"))
    }
}

/// `D^-1/2 (A + lambda I) D^-1/2` with `D` the row sums of `A + lambda I`.
pub fn gcn_normalize(adjacency: &Tensor, self_weight: f64) -> Result<Tensor> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(NnError::Invalid(format!("adjacency of shape {:?} is not square", adjacency.shape())));
    }
    let mut a = adjacency.clone();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + self_weight);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(NnError::Invalid(format!("node {i} has zero degree")));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j) / (deg[i] * deg[j]).sqrt();
            a.set(i, j, v);
        }
    }
    Ok(a)
}

/// `ReLU(Â Z W)` for a pre-normalized adjacency `Â`.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: Linear,
}

impl GcnLayer {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self { weight: Linear::new(store, name, in_dim, out_dim, false, rng) }
    }

    pub fn forward(&self, tape: &mut Tape, z: Var, normalized_adjacency: Var) -> Result<Var> {
        let zw = self.weight.forward(tape, z)?;
        let mixed = tape.matmul(normalized_adjacency, zw)?;
        Ok(tape.relu(mixed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn glu_with_zero_gate_halves() {
        let mut store = ParamStore::new();
        let glu = Glu::new(&mut store, "glu", 2, 2, &mut rng());
        store.value_mut(glu.gate.weight).data_mut().fill(0.0);
        let x = Tensor::matrix(1, 2, vec![0.3, -1.2]);
        let mut t = Tape::new(&store);
        let xv = t.constant(x.clone());
        let lin = glu.value.forward(&mut t, xv).unwrap();
        let out = glu.forward(&mut t, xv).unwrap();
        for (a, b) in t.value(out).data().iter().zip(t.value(lin).data()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let mut store = ParamStore::new();
        let ln = LayerNorm::new(&mut store, "ln", 2);
        let mut t = Tape::new(&store);
        let x = t.constant(Tensor::matrix(2, 2, vec![1.0, 3.0, 5.0, 5.0]));
        let y = ln.forward(&mut t, x).unwrap();
        let v = t.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-5 && (v[1] - 1.0).abs() < 1e-5);
        assert_eq!(&v[2..], &[0.0, 0.0]);
    }

    #[test]
    fn group_norm_rejects_indivisible() {
        let mut store = ParamStore::new();
        assert!(GroupNorm::new(&mut store, "gn", 6, 4).is_err());
        let gn = GroupNorm::new(&mut store, "gn2", 4, 2).unwrap();
        let mut t = Tape::new(&store);
        let x = t.constant(Tensor::matrix(1, 4, vec![1.0, 3.0, 7.0, 7.0]));
        let y = gn.forward(&mut t, x).unwrap();
        let v = t.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-5 && (v[1] - 1.0).abs() < 1e-5);
        assert_eq!(&v[2..], &[0.0, 0.0]);
    }

    #[test]
    fn lstm_zero_weights_zero_state() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 3, 4, &mut rng());
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let mut t = Tape::new(&store);
        let x = t.constant(Tensor::full(&[1, 3], 0.7));
        let h = t.constant(Tensor::zeros(&[1, 4]));
        let c = t.constant(Tensor::zeros(&[1, 4]));
        let (h2, _) = cell.step(&mut t, x, h, c).unwrap();
        assert!(t.value(h2).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_cell() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 2, 3, &mut rng());
        let bias = store.value_mut(cell.input.bias.unwrap());
        for j in 3..6 {
            bias.data_mut()[j] = 50.0;
        }
        let mut t = Tape::new(&store);
        let x = t.constant(Tensor::matrix(1, 2, vec![0.2, -0.4]));
        let h = t.constant(Tensor::zeros(&[1, 3]));
        let c0 = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]);
        let c = t.constant(c0.clone());
        let (_, c2) = cell.step(&mut t, x, h, c).unwrap();
        // c' = c + i * g with the forget gate at 1
        let zv = cell.input.forward(&mut t, x).unwrap();
        let z = t.value(zv).clone();
        for j in 0..3 {
            let i = 1.0 / (1.0 + (-z.get(0, j)).exp());
            let g = z.get(0, 6 + j).tanh();
            assert!((t.value(c2).get(0, j) - (c0.get(0, j) + i * g)).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_single_key_returns_value_projection() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 3, 4, 2, &mut rng()).unwrap();
        let mut t = Tape::new(&store);
        let q = t.constant(Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 2.0, 0.5]));
        let kv = t.constant(Tensor::matrix(1, 3, vec![0.4, -0.3, 0.9]));
        let out = mha.forward(&mut t, q, kv, kv, None).unwrap();
        let mut expect = vec![0.0; 4];
        for [_, _, wv] in &mha.heads {
            let v = wv.forward(&mut t, kv).unwrap();
            for (e, x) in expect.iter_mut().zip(t.value(v).data()) {
                *e += x;
            }
        }
        for r in 0..2 {
            for c in 0..4 {
                assert_eq!(t.value(out).get(r, c), expect[c]);
            }
        }
    }

    #[test]
    fn attention_identical_keys_average_values() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 2, 2, 1, &mut rng()).unwrap();
        let mut t = Tape::new(&store);
        let q = t.constant(Tensor::matrix(1, 2, vec![0.5, 1.0]));
        let k = t.constant(Tensor::matrix(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]));
        let v = t.constant(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0]));
        let out = mha.forward(&mut t, q, k, v, None).unwrap();
        let vp = mha.heads[0][2].forward(&mut t, v).unwrap();
        let mean = t.value(vp).transpose();
        for c in 0..2 {
            let m = mean.row(c).iter().sum::<f64>() / 3.0;
            assert!((t.value(out).get(0, c) - m).abs() < 1e-12);
        }
        assert!(MultiHeadAttention::new(&mut store, "bad", 2, 5, 2, &mut rng()).is_err());
    }

    #[test]
    fn block_attention_matches_per_block_calls() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 2, 4, 2, &mut rng()).unwrap();
        let mut t = Tape::new(&store);
        let x = Tensor::matrix(5, 2, vec![0.1, 0.2, -0.3, 0.5, 0.9, -1.0, 0.0, 0.4, 0.7, 0.7]);
        let offsets = [0.0, MASK_PENALTY, 0.0, 0.0, 0.0];
        let xv = t.constant(x.clone());
        let joint = mha.forward_blocks(&mut t, xv, xv, xv, &[(0, 2), (2, 3)], Some(&offsets)).unwrap();
        let top = t.constant(Tensor::matrix(2, 2, x.data()[..4].to_vec()));
        let mask = Tensor::matrix(2, 2, vec![0.0, MASK_PENALTY, 0.0, MASK_PENALTY]);
        let a = mha.forward(&mut t, top, top, top, Some(&mask)).unwrap();
        let bottom = t.constant(Tensor::matrix(3, 2, x.data()[4..].to_vec()));
        let b = mha.forward(&mut t, bottom, bottom, bottom, None).unwrap();
        let joint = t.value(joint).data().to_vec();
        let split: Vec<f64> = t.value(a).data().iter().chain(t.value(b).data()).copied().collect();
        for (x, y) in joint.iter().zip(&split) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(mha.forward_blocks(&mut t, xv, xv, xv, &[(0, 2), (3, 2)], None).is_err());
    }

    #[test]
    fn gcn_normalization_cases() {
        let single = gcn_normalize(&Tensor::zeros(&[1, 1]), 1.0).unwrap();
        assert_eq!(single.data(), &[1.0]);
        let isolated = gcn_normalize(&Tensor::zeros(&[2, 2]), 1.0).unwrap();
        assert_eq!(isolated, Tensor::identity(2));
        assert!(gcn_normalize(&Tensor::zeros(&[2, 2]), 0.0).is_err());
        let pair = gcn_normalize(&Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]), 1.0).unwrap();
        assert!(pair.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }
}
