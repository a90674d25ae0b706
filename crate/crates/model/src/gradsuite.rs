//! Central-difference gradient checks for every layer and model component
//! at width 8, shared by the test suite and the `gradcheck` command.

use citf_core::synth::{generate_synthetic, SynthConfig};
use citf_core::window::{build_scene_windows, resample, WindowConfig};
use citf_nn::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use citf_nn::layers::{gcn_normalize, GcnLayer, Glu, GroupNorm, GruCell, LayerNorm, LstmCell, MultiHeadAttention};
use citf_nn::{ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Ablation, ModelConfig};
use crate::error::{ModelError, Result};
use crate::features::{FeatureStats, Sample};
use crate::leanformer::linear_attention_head;
use crate::loss::{combined_loss, LossWeights};
use crate::model::Model;
use crate::train::raw_features_all;

pub const TOLERANCE: f64 = 1e-4;
pub const WIDTH: usize = 8;
const MODEL_PERTURBATION: f64 = 0.1;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteCase {
    pub name: String,
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
    pub passed: bool,
}

impl SuiteCase {
    fn new(name: &str, r: GradCheckReport) -> Self {
        Self {
            name: name.into(),
            passed: r.max_rel_error <= TOLERANCE,
            max_rel_error: r.max_rel_error,
            worst: format!("{} analytic {:e} numeric {:e}", r.worst, r.worst_pair.0, r.worst_pair.1),
            checked: r.checked,
        }
    }
}

/// Small model plus one prepared window with at least two agents.
pub fn tiny_fixture(ablation: Ablation, seed: u64) -> Result<(Model, Sample)> {
    let cfg = ModelConfig {
        d_model: WIDTH,
        heads: 2,
        rank: 4,
        norm_groups: 2,
        t_h: 3,
        t_f: 4,
        n_max: 2,
        ..ModelConfig::default()
    };
    let synth = SynthConfig { agents: 12, road_length: 150.0, duration: 6.0, ..SynthConfig::default() };
    let table = resample(&generate_synthetic(&synth, seed)?, cfg.dt)?;
    let wcfg = WindowConfig { t_h: cfg.t_h, t_f: cfg.t_f, radius: 30.0, n_max: cfg.n_max };
    let windows = build_scene_windows(&table, &wcfg);
    let target = windows
        .iter()
        .position(|w| w.num_agents() == cfg.n_max + 1)
        .ok_or_else(|| ModelError::Invalid("fixture scene has no crowded window".into()))?;
    let mut model = Model::new(&cfg, ablation, false, seed)?;
    let raws = raw_features_all(&model, &windows)?;
    model.stats = Some(FeatureStats::fit(&raws)?);
    let sample = model.sample(&windows[target])?;
    Ok((model, sample))
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Random weighted sum, so every output entry gets a distinct upstream
/// gradient.
pub fn project(t: &mut Tape, y: Var, seed: u64) -> citf_nn::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = t.shape(y).to_vec();
    let r = Tensor::new(shape.clone(), (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let r = t.constant(r);
    let p = t.mul(y, r)?;
    Ok(t.sum(p))
}

/// Moves all parameters off their initial values (unit gains, zero biases).
fn perturb(store: &mut ParamStore, rng: &mut ChaCha8Rng, amplitude: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if store.get(id).trainable {
            for v in store.value_mut(id).data_mut() {
                *v += rng.gen_range(-amplitude..amplitude);
            }
        }
    }
}

fn layer_cases(cfg: &GradCheckConfig, seed: u64, out: &mut Vec<SuiteCase>) -> Result<()> {
    let d = WIDTH;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&mut rng, 5, d);
    let xs: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 2, d)).collect();

    let mut store = ParamStore::new();
    let glu = Glu::new(&mut store, "glu", d, d, &mut rng);
    perturb(&mut store, &mut rng, 0.3);
    out.push(SuiteCase::new("glu", grad_check(&store, &[x.clone()], cfg, |t, v| {
        let y = glu.forward(t, v[0])?;
        project(t, y, 1)
    })?));

    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", d);
    perturb(&mut store, &mut rng, 0.3);
    out.push(SuiteCase::new("layer_norm", grad_check(&store, &[x.clone()], cfg, |t, v| {
        let y = ln.forward(t, v[0])?;
        project(t, y, 2)
    })?));

    let mut store = ParamStore::new();
    let gn = GroupNorm::new(&mut store, "gn", d, 2)?;
    perturb(&mut store, &mut rng, 0.3);
    out.push(SuiteCase::new("group_norm", grad_check(&store, &[x.clone()], cfg, |t, v| {
        let y = gn.forward(t, v[0])?;
        project(t, y, 3)
    })?));

    let mut store = ParamStore::new();
    let lstm = LstmCell::new(&mut store, "lstm", d, d, &mut rng);
    perturb(&mut store, &mut rng, 0.3);
    out.push(SuiteCase::new("lstm", grad_check(&store, &xs, cfg, |t, v| {
        let hs = lstm.unroll(t, v)?;
        let all = t.concat_cols(&hs)?;
        project(t, all, 4)
    })?));

    let mut store = ParamStore::new();
    let gru = GruCell::new(&mut store, "gru", d, d, &mut rng);
    perturb(&mut store, &mut rng, 0.3);
    out.push(SuiteCase::new("gru", grad_check(&store, &xs, cfg, |t, v| {
        let hs = gru.unroll(t, v)?;
        let all = t.concat_cols(&hs)?;
        project(t, all, 5)
    })?));

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", d, d, 2, &mut rng)?;
    let offsets = [0.0, -1e9, 0.0, 0.0, 0.0];
    out.push(SuiteCase::new("multi_head_attention", grad_check(&store, &[x.clone()], cfg, |t, v| {
        let y = mha.forward_blocks(t, v[0], v[0], v[0], &[(0, 2), (2, 3)], Some(&offsets))?;
        project(t, y, 6)
    })?));

    let mut store = ParamStore::new();
    let gcn = GcnLayer::new(&mut store, "gcn", d, d, &mut rng);
    let mut adj = Tensor::zeros(&[5, 5]);
    for (i, j, w) in [(0, 1, 0.4), (1, 2, 0.9), (2, 3, 0.2), (0, 4, 0.7)] {
        adj.set(i, j, w);
        adj.set(j, i, w);
    }
    let norm = gcn_normalize(&adj, 1.0)?;
    out.push(SuiteCase::new("gcn", grad_check(&store, &[x], cfg, |t, v| {
        let a = t.constant(norm.clone());
        let y = gcn.forward(t, v[0], a)?;
        project(t, y, 7)
    })?));
    Ok(())
}

fn model_cases(cfg: &GradCheckConfig, seed: u64, out: &mut Vec<SuiteCase>) -> Result<()> {
    let (mut model, sample) = tiny_fixture(Ablation::FULL, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5);
    perturb(&mut model.store, &mut rng, MODEL_PERTURBATION);
    let grid = &sample.grid;
    let d = model.config.d_model;
    let stream = random(&mut rng, grid.rows(), d);
    let streams: Vec<Tensor> = (0..3).map(|_| random(&mut rng, grid.rows(), d)).collect();
    let m = &model;

    out.push(SuiteCase::new("safety_encoder", grad_check(&m.store, &[sample.safety.clone()], cfg, |t, v| {
        let y = m.safety.forward(t, v[0], &sample.adjacency, grid).map_err(to_nn)?;
        project(t, y, 11)
    })?));

    out.push(SuiteCase::new("behavior_encoder", grad_check(&m.store, &[sample.behavior.clone(), stream], cfg, |t, v| {
        let y = m.behavior.forward(t, v[0], v[1], grid).map_err(to_nn)?;
        project(t, y, 12)
    })?));

    out.push(SuiteCase::new("priority_encoder", grad_check(&m.store, &[sample.pooling.clone()], cfg, |t, v| {
        let y = m.priority.forward(t, v[0], grid).map_err(to_nn)?;
        project(t, y, 13)
    })?));

    let n = grid.rows();
    let head_inputs = [random(&mut rng, n, 4), random(&mut rng, n, 4), random(&mut rng, n, d), random(&mut rng, n, 4), random(&mut rng, n, 4)];
    out.push(SuiteCase::new("leanformer_head", grad_check(&ParamStore::new(), &head_inputs, cfg, |t, v| {
        let y = linear_attention_head(t, v[0], v[1], v[2], v[3], v[4]).map_err(to_nn)?;
        project(t, y, 14)
    })?));

    out.push(SuiteCase::new("leanformer", grad_check(&m.store, &streams, cfg, |t, v| {
        let y = m.leanformer.forward(t, [v[0], v[1], v[2]], grid).map_err(to_nn)?;
        project(t, y, 15)
    })?));

    let context = random(&mut rng, 1, 2 * d);
    let head = m.decoder.maneuver.as_ref().expect("full model has maneuver heads");
    out.push(SuiteCase::new("maneuver_head", grad_check(&m.store, &[context.clone()], cfg, |t, v| {
        let (lat, lon) = head.forward(t, v[0]).map_err(to_nn)?;
        let w = crate::decoder::joint_log_weights(t, lat, lon).map_err(to_nn)?;
        project(t, w, 16)
    })?));

    out.push(SuiteCase::new("trajectory_head", grad_check(&m.store, &[context.clone()], cfg, |t, v| {
        let y = m.decoder.trajectory.forward(t, v[0]).map_err(to_nn)?;
        project(t, y, 17)
    })?));

    let weights = LossWeights::default();
    out.push(SuiteCase::new("combined_loss", grad_check(&m.store, &[context], cfg, |t, v| {
        let dec = m.decoder.forward(t, v[0], &sample.baseline).map_err(to_nn)?;
        let terms = combined_loss(t, &dec, &sample.future, sample.label, &weights, None).map_err(to_nn)?;
        Ok(terms.total)
    })?));

    let inputs = [sample.safety.clone(), sample.behavior.clone(), sample.pooling.clone()];
    out.push(SuiteCase::new("end_to_end", grad_check(&m.store, &inputs, cfg, |t, v| {
        let o = m.forward_inputs(t, &sample, [v[0], v[1], v[2]]).map_err(to_nn)?;
        let terms = combined_loss(t, &o.decoder, &sample.future, sample.label, &weights, None).map_err(to_nn)?;
        Ok(terms.total)
    })?));
    Ok(())
}

fn to_nn(e: ModelError) -> citf_nn::NnError {
    match e {
        ModelError::Nn(e) => e,
        other => citf_nn::NnError::Invalid(other.to_string()),
    }
}

/// Runs every case. `max_entries` caps the checked entries per tensor.
pub fn gradient_suite(seed: u64, max_entries: Option<usize>) -> Result<Vec<SuiteCase>> {
    gradient_suite_with(&GradCheckConfig { max_entries_per_tensor: max_entries, seed, ..suite_checker() })
}

/// Central differences at step 1e-5. Entries whose derivative is below
/// 1e-5 of the loss scale are judged on absolute error, since the
/// difference cannot resolve them (attention over nearly constant frames
/// produces such entries).
pub fn suite_checker() -> GradCheckConfig {
    GradCheckConfig { epsilon: 1e-5, floor: 1e-5, ..GradCheckConfig::default() }
}

pub fn gradient_suite_with(cfg: &GradCheckConfig) -> Result<Vec<SuiteCase>> {
    let (cfg, seed) = (cfg.clone(), cfg.seed);
    let mut out = Vec::new();
    layer_cases(&cfg, seed, &mut out)?;
    model_cases(&cfg, seed, &mut out)?;
    Ok(out)
}
