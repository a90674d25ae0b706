//! Interaction block: fuses the three streams over the flattened
//! agents × frames sequence and applies low-rank linear attention, where keys
//! and values are compressed to `rank` rows by fixed random projections.

use std::time::Instant;

use citf_nn::layers::{GruCell, Linear, Mlp};
use citf_nn::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::grid::Grid;

/// Standard `softmax(Q Kᵀ / sqrt(d_k)) V`, the quadratic reference.
pub fn full_attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let d_k = tape.shape(q)[1];
    let kt = tape.transpose(k);
    let s = tape.matmul(q, kt)?;
    let s = tape.scale(s, 1.0 / (d_k as f64).sqrt());
    let p = tape.softmax_rows(s);
    Ok(tape.matmul(p, v)?)
}

/// Context matrix `softmax(Q (Uᵀ K)ᵀ / sqrt(d_k))` of shape `n × rank`.
pub fn linear_attention_context(tape: &mut Tape, q: Var, k: Var, u: Var) -> Result<Var> {
    let n = tape.shape(q)[0];
    let (un, rank) = (tape.shape(u)[0], tape.shape(u)[1]);
    if un != n || tape.shape(k)[0] != n {
        return Err(ModelError::Invalid(format!(
            "sequence lengths differ: queries {n}, keys {}, projection {un}",
            tape.shape(k)[0]
        )));
    }
    if rank > n {
        return Err(ModelError::Invalid(format!("rank {rank} exceeds sequence length {n}")));
    }
    let d_k = tape.shape(q)[1];
    let ut = tape.transpose(u);
    let kp = tape.matmul(ut, k)?;
    let kpt = tape.transpose(kp);
    let s = tape.matmul(q, kpt)?;
    let s = tape.scale(s, 1.0 / (d_k as f64).sqrt());
    Ok(tape.softmax_rows(s))
}

/// One low-rank head: `context · (Fᵀ V)`, linear in the sequence length.
/// `u` and `f` are `n × rank`.
pub fn linear_attention_head(tape: &mut Tape, q: Var, k: Var, v: Var, u: Var, f: Var) -> Result<Var> {
    let p = linear_attention_context(tape, q, k, u)?;
    if tape.shape(f) != tape.shape(u) || tape.shape(v)[0] != tape.shape(u)[0] {
        return Err(ModelError::Invalid(format!(
            "value projection {:?} and values {:?} do not match key projection {:?}",
            tape.shape(f),
            tape.shape(v),
            tape.shape(u)
        )));
    }
    let ft = tape.transpose(f);
    let vp = tape.matmul(ft, v)?;
    Ok(tape.matmul(p, vp)?)
}

/// `rows × rank` matrix with i.i.d. entries of variance `1 / rank`.
pub fn random_projection(rows: usize, rank: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (3.0 / rank as f64).sqrt();
    Tensor::matrix(rows, rank, (0..rows * rank).map(|_| rng.gen_range(-limit..=limit)).collect())
}

#[derive(Clone, Debug)]
pub struct LeanformerHead {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub u: ParamId,
    pub f: ParamId,
}

#[derive(Clone, Debug)]
pub struct Leanformer {
    /// Per-stream embeddings: safety, behavior, priority.
    pub fuse: [Mlp; 3],
    pub token_q: GruCell,
    pub token_k: GruCell,
    pub query: Mlp,
    pub key: Mlp,
    pub value: Mlp,
    pub heads: Vec<LeanformerHead>,
    pub skip_q: Mlp,
    pub skip_v: Mlp,
    pub d: usize,
    pub rank: usize,
}

impl Leanformer {
    /// `max_sequence` is the longest flattened grid; the fixed projections
    /// are drawn from `projection_seed` independently of `rng`.
    pub fn new(
        store: &mut ParamStore,
        d: usize,
        heads: usize,
        rank: usize,
        max_sequence: usize,
        projection_seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || d % heads != 0 || d % 2 != 0 {
            return Err(ModelError::Config(format!("width {d} incompatible with {heads} heads")));
        }
        if rank == 0 || rank > max_sequence {
            return Err(ModelError::Config(format!("rank {rank} outside 1..={max_sequence}")));
        }
        let wide = 3 * d;
        let d_k = d / heads;
        let mut proj_rng = ChaCha8Rng::seed_from_u64(projection_seed);
        let init = format!("uniform_variance_1/k(seed={projection_seed})");
        let fuse = ["safety", "behavior", "priority"].map(|s| Mlp::new(store, &format!("lean.fuse.{s}"), &[d, d, d], rng));
        let token_q = GruCell::new(store, "lean.token_q", 2 * d, wide, rng);
        let token_k = GruCell::new(store, "lean.token_k", 2 * d, wide, rng);
        let query = Mlp::new(store, "lean.query", &[wide, d, d], rng);
        let key = Mlp::new(store, "lean.key", &[wide, d, d], rng);
        let value = Mlp::new(store, "lean.value", &[wide, d, d], rng);
        let heads = (0..heads)
            .map(|i| LeanformerHead {
                query: Linear::new(store, &format!("lean.head{i}.query"), d, d_k, false, rng),
                key: Linear::new(store, &format!("lean.head{i}.key"), d, d_k, false, rng),
                value: Linear::new(store, &format!("lean.head{i}.value"), d, d, false, rng),
                u: store.fixed(format!("lean.head{i}.u"), random_projection(max_sequence, rank, &mut proj_rng), init.clone()),
                f: store.fixed(format!("lean.head{i}.f"), random_projection(max_sequence, rank, &mut proj_rng), init.clone()),
            })
            .collect();
        Ok(Self {
            fuse,
            token_q,
            token_k,
            query,
            key,
            value,
            heads,
            skip_q: Mlp::new(store, "lean.skip_q", &[d, d / 2], rng),
            skip_v: Mlp::new(store, "lean.skip_v", &[d, d / 2], rng),
            d,
            rank,
        })
    }

    /// Per-stream embeddings and their concatenation `O` (`rows × 3d`).
    pub fn fuse_streams(&self, tape: &mut Tape, streams: [Var; 3]) -> Result<(Var, [Var; 3])> {
        let s0 = tape.shape(streams[0]).to_vec();
        if streams.iter().any(|&s| tape.shape(s) != s0.as_slice()) || s0[1] != self.d {
            return Err(ModelError::Invalid("streams must share shape rows × d_model".into()));
        }
        let e = [
            self.fuse[0].forward(tape, streams[0])?,
            self.fuse[1].forward(tape, streams[1])?,
            self.fuse[2].forward(tape, streams[2])?,
        ];
        Ok((tape.concat_cols(&e)?, e))
    }

    /// Query and key tokens: final states of recurrent passes over the
    /// target's frames of (safety ‖ behavior) and (safety ‖ priority).
    pub fn aux_tokens(&self, tape: &mut Tape, embedded: [Var; 3], grid: &Grid) -> Result<(Var, Var)> {
        let rows: Vec<usize> = (0..grid.frames).map(|k| grid.row(0, k)).collect();
        let s = tape.gather_rows(embedded[0], &rows)?;
        let b = tape.gather_rows(embedded[1], &rows)?;
        let p = tape.gather_rows(embedded[2], &rows)?;
        let run = |tape: &mut Tape, cell: &GruCell, other: Var| -> Result<Var> {
            let x = tape.concat_cols(&[s, other])?;
            let mut h = tape.constant(Tensor::zeros(&[1, cell.hidden]));
            for k in 0..grid.frames {
                let xk = tape.slice_rows(x, k, 1)?;
                h = cell.step(tape, xk, h)?;
            }
            Ok(h)
        };
        let lq = run(tape, &self.token_q, b)?;
        let lk = run(tape, &self.token_k, p)?;
        Ok((lq, lk))
    }

    /// Composite interaction features `rows × d`; absent rows are zero and
    /// absent keys and values contribute nothing.
    pub fn forward(&self, tape: &mut Tape, streams: [Var; 3], grid: &Grid) -> Result<Var> {
        let (o, embedded) = self.fuse_streams(tape, streams)?;
        let (lq, lk) = self.aux_tokens(tape, embedded, grid)?;
        self.attend(tape, o, lq, lk, grid)
    }

    /// Attention part given `O` and the tokens.
    pub fn attend(&self, tape: &mut Tape, o: Var, lq: Var, lk: Var, grid: &Grid) -> Result<Var> {
        let n = grid.rows();
        let oq = tape.add_row(o, lq)?;
        let ok = tape.add_row(o, lk)?;
        let q = self.query.forward(tape, oq)?;
        let k = self.key.forward(tape, ok)?;
        let k = grid.apply_mask(tape, k)?;
        let v = self.value.forward(tape, o)?;
        let v = grid.apply_mask(tape, v)?;
        let mut total: Option<Var> = None;
        for head in &self.heads {
            let u = tape.param(head.u);
            if tape.shape(u)[0] < n {
                return Err(ModelError::Invalid(format!(
                    "sequence of {n} rows exceeds the projection length {}",
                    tape.shape(u)[0]
                )));
            }
            let u = tape.slice_rows(u, 0, n)?;
            let f = tape.param(head.f);
            let f = tape.slice_rows(f, 0, n)?;
            let hq = head.query.forward(tape, q)?;
            let hk = head.key.forward(tape, k)?;
            let hv = head.value.forward(tape, v)?;
            let out = linear_attention_head(tape, hq, hk, hv, u, f)?;
            total = Some(match total {
                Some(t) => tape.add(t, out)?,
                None => out,
            });
        }
        let sq = self.skip_q.forward(tape, q)?;
        let sv = self.skip_v.forward(tape, v)?;
        let skip = tape.concat_cols(&[sq, sv])?;
        let out = tape.add(total.expect("at least one head"), skip)?;
        grid.apply_mask(tape, out)
    }
}

/// One row of the attention scaling benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub k: usize,
    pub macs_linear: u64,
    pub macs_full: u64,
    pub seconds_linear: f64,
    pub seconds_full: f64,
}

/// Multiply-accumulate counts and wall time of one low-rank head against
/// full attention on random `n × d` inputs.
pub fn benchmark_attention(ns: &[usize], k: usize, d: usize, seed: u64) -> Result<Vec<BenchmarkRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut random = |r, c| Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (q, key, v) = (random(n, d), random(n, d), random(n, d));
        let (u, f) = (random(n, k), random(n, k));

        let mut tape = Tape::detached();
        let vars = [q.clone(), key.clone(), v.clone(), u, f].map(|t| tape.constant(t));
        let start = Instant::now();
        linear_attention_head(&mut tape, vars[0], vars[1], vars[2], vars[3], vars[4])?;
        let seconds_linear = start.elapsed().as_secs_f64();
        let macs_linear = tape.macs();

        let mut tape = Tape::detached();
        let vars = [q, key, v].map(|t| tape.constant(t));
        let start = Instant::now();
        full_attention(&mut tape, vars[0], vars[1], vars[2])?;
        let seconds_full = start.elapsed().as_secs_f64();
        rows.push(BenchmarkRow { n, k, macs_linear, macs_full: tape.macs(), seconds_linear, seconds_full });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn identity_projection_matches_full_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let mut t = Tape::detached();
        let [q, k, v] = [0, 1, 2].map(|_| t.constant(random(&mut rng, n, 4)));
        let eye = t.constant(Tensor::identity(n));
        let lin = linear_attention_head(&mut t, q, k, v, eye, eye).unwrap();
        let full = full_attention(&mut t, q, k, v).unwrap();
        assert!(t.value(lin).max_abs_diff(t.value(full)) <= 1e-12);
    }

    #[test]
    fn single_row_returns_value() {
        let mut t = Tape::detached();
        let q = t.constant(Tensor::matrix(1, 2, vec![5.0, -3.0]));
        let v = t.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]));
        let one = t.constant(Tensor::matrix(1, 1, vec![1.0]));
        let out = linear_attention_head(&mut t, q, q, v, one, one).unwrap();
        assert_eq!(t.value(out).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn rank_above_length_is_rejected() {
        let mut t = Tape::detached();
        let x = t.constant(Tensor::zeros(&[2, 2]));
        let u = t.constant(Tensor::zeros(&[2, 3]));
        assert!(linear_attention_head(&mut t, x, x, x, u, u).is_err());
    }

    #[test]
    fn mac_counts_scale_linearly() {
        let rows = benchmark_attention(&[64, 128], 8, 16, 0).unwrap();
        let lin = rows[1].macs_linear as f64 / rows[0].macs_linear as f64;
        let full = rows[1].macs_full as f64 / rows[0].macs_full as f64;
        assert!((lin - 2.0).abs() < 1e-12, "{lin}");
        assert!((full - 4.0).abs() < 1e-12, "{full}");
    }

    #[test]
    fn zero_inputs_and_weights_give_zero() {
        let mut store = ParamStore::new();
        let lean = Leanformer::new(&mut store, 4, 2, 2, 8, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if store.get(id).trainable {
                store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let grid = Grid::full(2, 4);
        let mut t = Tape::new(&store);
        let z = t.constant(Tensor::zeros(&[8, 4]));
        let out = lean.forward(&mut t, [z, z, z], &grid).unwrap();
        assert!(t.value(out).data().iter().all(|&v| v == 0.0));
    }
}
