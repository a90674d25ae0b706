use std::rc::Rc;

use citf_nn::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use citf_nn::layers::{gcn_normalize, GcnLayer, Glu, GroupNorm, GruCell, LayerNorm, LstmCell, Mlp, MultiHeadAttention};
use citf_nn::{ParamStore, Result, Tape, Tensor, UnaryOp, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LIMIT: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Random projection of the output to a scalar, so every output entry gets a
/// distinct upstream gradient.
fn project(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = t.shape(y).to_vec();
    let r = Tensor::new(shape.clone(), (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let r = t.constant(r);
    let p = t.mul(y, r)?;
    Ok(t.sum(p))
}

fn check(name: &str, report: GradCheckReport) {
    println!("{name}: max relative error {:.3e} over {} entries ({} {:?})", report.max_rel_error, report.checked, report.worst, report.worst_pair);
    assert!(report.max_rel_error <= LIMIT, "{name}: {report:?}");
}

#[test]
fn core_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [random(&mut rng, 3, 4), random(&mut rng, 4, 2), random(&mut rng, 1, 4)];
    let report = grad_check(&ParamStore::new(), &inputs, &GradCheckConfig::default(), |t, v| {
        let a = t.matmul(v[0], v[1])?;
        let b = t.add_row(v[0], v[2])?;
        let b = t.mul_row(b, v[2])?;
        let s = t.sigmoid(b);
        let th = t.tanh(v[0]);
        let e = t.exp(th);
        let sq = t.mul(s, e)?;
        let l = t.add_scalar(sq, 1.5);
        let l = t.log(l);
        let sm = t.softmax_rows(l);
        let ls = t.log_softmax_rows(b);
        let lse = t.logsumexp_rows(b);
        let lse = t.mul_col(b, lse)?;
        let tr = t.transpose(a);
        let tr = t.matmul(tr, sm)?;
        let cat = t.concat_cols(&[sm, ls, lse])?;
        let cat = t.slice_cols(cat, 2, 7)?;
        let rows = t.concat_rows(&[cat, cat])?;
        let rows = t.slice_rows(rows, 1, 4)?;
        let g = t.gather_rows(rows, &[0, 3, 3, 1])?;
        let r = t.reshape(g, &[2, 14])?;
        let st = t.standardize_rows(r, 1e-5);
        let sr = t.sum_rows(st);
        let sc = t.sum_cols(tr);
        let m1 = project(t, sr, 2)?;
        let m2 = project(t, sc, 3)?;
        let m3 = t.mean(a);
        let sub = t.sub(m1, m2)?;
        let tot = t.add(sub, m3)?;
        Ok(t.scale(tot, 0.7))
    })
    .unwrap();
    check("core ops", report);
}

#[test]
fn relu_away_from_kink() {
    let x = Tensor::matrix(1, 4, vec![-1.0, -0.3, 0.4, 2.0]);
    let report = grad_check(&ParamStore::new(), &[x], &GradCheckConfig::default(), |t, v| {
        let r = t.relu(v[0]);
        project(t, r, 4)
    })
    .unwrap();
    check("relu", report);
}

#[test]
fn layers_at_width_eight() {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&mut rng, 5, d);
    let cfg = GradCheckConfig::default();

    let mut store = ParamStore::new();
    let glu = Glu::new(&mut store, "glu", d, d, &mut rng);
    check("glu", grad_check(&store, &[x.clone()], &cfg, |t, v| {
        let y = glu.forward(t, v[0])?;
        project(t, y, 5)
    }).unwrap());

    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", &[d, d, d], &mut rng);
    check("mlp", grad_check(&store, &[x.clone()], &cfg, |t, v| {
        let y = mlp.forward(t, v[0])?;
        project(t, y, 6)
    }).unwrap());

    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", d);
    perturb(&mut store, &mut rng);
    check("layer norm", grad_check(&store, &[x.clone()], &cfg, |t, v| {
        let y = ln.forward(t, v[0])?;
        project(t, y, 7)
    }).unwrap());

    let mut store = ParamStore::new();
    let gn = GroupNorm::new(&mut store, "gn", d, 2).unwrap();
    perturb(&mut store, &mut rng);
    check("group norm", grad_check(&store, &[x.clone()], &cfg, |t, v| {
        let y = gn.forward(t, v[0])?;
        project(t, y, 8)
    }).unwrap());

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", d, d, 2, &mut rng).unwrap();
    let mut mask = Tensor::zeros(&[5, 5]);
    mask.set(0, 4, -1e9);
    mask.set(3, 1, -1e9);
    check("attention", grad_check(&store, &[x.clone()], &cfg, |t, v| {
        let y = mha.forward(t, v[0], v[0], v[0], Some(&mask))?;
        project(t, y, 9)
    }).unwrap());

    let mut store = ParamStore::new();
    let gcn = GcnLayer::new(&mut store, "gcn", d, d, &mut rng);
    let mut adj = Tensor::zeros(&[5, 5]);
    for (i, j) in [(0, 1), (1, 2), (2, 3), (0, 4)] {
        adj.set(i, j, 0.4);
        adj.set(j, i, 0.4);
    }
    let norm = gcn_normalize(&adj, 1.0).unwrap();
    check("gcn", grad_check(&store, &[x.clone()], &cfg, |t, v| {
        let a = t.constant(norm.clone());
        let y = gcn.forward(t, v[0], a)?;
        project(t, y, 10)
    }).unwrap());
}

#[test]
fn recurrent_cells_through_three_steps() {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 2, d)).collect();
    let cfg = GradCheckConfig::default();

    let mut store = ParamStore::new();
    let lstm = LstmCell::new(&mut store, "lstm", d, d, &mut rng);
    check("lstm", grad_check(&store, &xs, &cfg, |t, v| {
        let hs = lstm.unroll(t, v)?;
        project(t, *hs.last().unwrap(), 13)
    }).unwrap());

    let mut store = ParamStore::new();
    let gru = GruCell::new(&mut store, "gru", d, d, &mut rng);
    perturb(&mut store, &mut rng);
    check("gru", grad_check(&store, &xs, &cfg, |t, v| {
        let hs = gru.unroll(t, v)?;
        let all = t.concat_cols(&hs)?;
        project(t, all, 14)
    }).unwrap());
}

/// Moves zero-initialized biases and unit gains off their defaults so the
/// check exercises them in general position.
fn perturb(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
}

struct WrongSquare;

impl UnaryOp for WrongSquare {
    fn name(&self) -> &'static str {
        "wrong_square"
    }
    fn forward(&self, x: &Tensor) -> Tensor {
        x.map(|v| v * v)
    }
    fn backward(&self, x: &Tensor, _y: &Tensor, grad: &Tensor) -> Tensor {
        // should be 2x
        let mut out = x.clone();
        for (o, g) in out.data_mut().iter_mut().zip(grad.data()) {
            *o *= 3.0 * g;
        }
        out
    }
}

#[test]
fn wrong_backward_rule_is_caught() {
    let x = Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]);
    let op: Rc<dyn UnaryOp> = Rc::new(WrongSquare);
    let report = grad_check(&ParamStore::new(), &[x], &GradCheckConfig::default(), |t, v| {
        let y = t.custom(v[0], op.clone());
        Ok(t.sum(y))
    })
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
}
