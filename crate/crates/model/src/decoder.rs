//! Multimodal decoder: independent lateral and longitudinal maneuver heads
//! whose product weights nine modes, and a trajectory head emitting a
//! bivariate Gaussian per output step and mode.

use std::f64::consts::PI;

use citf_nn::layers::{GroupNorm, Linear, LstmCell, Mlp};
use citf_nn::{ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

pub const OUTPUTS_PER_STEP: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStep {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

/// Mode weights and per-mode Gaussian sequences. With nine modes, mode
/// `lateral * 3 + longitudinal` follows the maneuver table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePrediction {
    pub weights: Vec<f64>,
    /// `steps[mode][t]`.
    pub steps: Vec<Vec<GaussianStep>>,
}

impl MixturePrediction {
    /// Lateral × longitudinal probability table, for nine-mode predictions.
    pub fn maneuver_table(&self) -> Option<[[f64; 3]; 3]> {
        (self.weights.len() == 9).then(|| std::array::from_fn(|l| std::array::from_fn(|o| self.weights[l * 3 + o])))
    }

    pub fn most_probable(&self) -> usize {
        let mut best = 0;
        for (m, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = m;
            }
        }
        best
    }

    pub fn means(&self, mode: usize) -> Vec<[f64; 2]> {
        self.steps[mode].iter().map(|s| s.mu).collect()
    }
}

pub fn bivariate_log_density(point: [f64; 2], g: &GaussianStep) -> f64 {
    let zx = (point[0] - g.mu[0]) / g.sigma[0];
    let zy = (point[1] - g.mu[1]) / g.sigma[1];
    let one_m = 1.0 - g.rho * g.rho;
    let quad = (zx * zx + zy * zy - 2.0 * g.rho * zx * zy) / (2.0 * one_m);
    -(2.0 * PI).ln() - g.sigma[0].ln() - g.sigma[1].ln() - 0.5 * one_m.ln() - quad
}

/// `log Σ_m w_m N(point | mode m at step)`, evaluated with log-sum-exp.
pub fn mixture_log_density(point: [f64; 2], pred: &MixturePrediction, step: usize) -> Result<f64> {
    if pred.steps.iter().any(|s| step >= s.len()) {
        return Err(ModelError::Invalid(format!("step {step} outside the predicted horizon")));
    }
    let terms: Vec<f64> = pred
        .weights
        .iter()
        .zip(&pred.steps)
        .map(|(&w, s)| w.ln() + bivariate_log_density(point, &s[step]))
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
}

#[derive(Clone, Debug)]
pub struct ManeuverHead {
    pub lateral: Linear,
    pub longitudinal: Linear,
}

/// Joint log weights `1 × 9` from the two 3-way log-softmaxes.
pub fn joint_log_weights(tape: &mut Tape, lateral: Var, longitudinal: Var) -> Result<Var> {
    let mut lat = Tensor::zeros(&[3, 9]);
    let mut lon = Tensor::zeros(&[3, 9]);
    for m in 0..9 {
        lat.set(m / 3, m, 1.0);
        lon.set(m % 3, m, 1.0);
    }
    let (lat, lon) = (tape.constant(lat), tape.constant(lon));
    let a = tape.matmul(lateral, lat)?;
    let b = tape.matmul(longitudinal, lon)?;
    Ok(tape.add(a, b)?)
}

impl ManeuverHead {
    pub fn new(store: &mut ParamStore, context: usize, rng: &mut impl Rng) -> Self {
        Self {
            lateral: Linear::new(store, "decoder.lateral", context, 3, true, rng),
            longitudinal: Linear::new(store, "decoder.longitudinal", context, 3, true, rng),
        }
    }

    /// Lateral and longitudinal log-probabilities, each `1 × 3`.
    pub fn forward(&self, tape: &mut Tape, context: Var) -> Result<(Var, Var)> {
        let a = self.lateral.forward(tape, context)?;
        let b = self.longitudinal.forward(tape, context)?;
        Ok((tape.log_softmax_rows(a), tape.log_softmax_rows(b)))
    }
}

/// Recurrent pass, group norm, MLP and ReLU.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub recurrent: LstmCell,
    pub norm: GroupNorm,
    pub mlp: Mlp,
}

impl DecoderBlock {
    fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, groups: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            recurrent: LstmCell::new(store, &format!("{name}.lstm"), in_dim, hidden, rng),
            norm: GroupNorm::new(store, &format!("{name}.norm"), hidden, groups)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), &[hidden, hidden], rng),
        })
    }

    /// `inputs[t]` is the `modes × in` input of step `t`; returns the
    /// step-major stack of outputs (`steps·modes × hidden`).
    fn forward(&self, tape: &mut Tape, inputs: &[Var], modes: usize) -> Result<Var> {
        let hidden = self.recurrent.hidden;
        let mut h = tape.constant(Tensor::zeros(&[modes, hidden]));
        let mut c = h;
        let mut outs = Vec::with_capacity(inputs.len());
        let mut cached: Option<(Var, Var)> = None;
        for &x in inputs {
            // constant inputs are projected once
            let zx = match cached {
                Some((src, z)) if src == x => z,
                _ => {
                    let z = self.recurrent.project_input(tape, x)?;
                    cached = Some((x, z));
                    z
                }
            };
            (h, c) = self.recurrent.step_projected(tape, zx, h, c)?;
            outs.push(h);
        }
        let stacked = tape.concat_rows(&outs)?;
        let n = self.norm.forward(tape, stacked)?;
        let m = self.mlp.forward(tape, n)?;
        Ok(tape.relu(m))
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryHead {
    pub first: DecoderBlock,
    pub second: DecoderBlock,
    pub output: Linear,
    pub modes: usize,
    pub steps: usize,
}

impl TrajectoryHead {
    pub fn new(
        store: &mut ParamStore,
        context: usize,
        hidden: usize,
        groups: usize,
        modes: usize,
        steps: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            first: DecoderBlock::new(store, "decoder.block1", context + modes, hidden, groups, rng)?,
            second: DecoderBlock::new(store, "decoder.block2", hidden, hidden, groups, rng)?,
            output: Linear::new(store, "decoder.output", hidden, OUTPUTS_PER_STEP, true, rng),
            modes,
            steps,
        })
    }

    /// Raw outputs `steps·modes × 5`, row `t * modes + m`: mean offset
    /// (2), log sigma (2), pre-tanh correlation (1).
    pub fn forward(&self, tape: &mut Tape, context: Var) -> Result<Var> {
        let m = self.modes;
        let ones = tape.constant(Tensor::full(&[m, 1], 1.0));
        let rep = tape.matmul(ones, context)?;
        let onehot = tape.constant(Tensor::identity(m));
        let x = tape.concat_cols(&[rep, onehot])?;
        let first = self.first.forward(tape, &vec![x; self.steps], m)?;
        let inputs = (0..self.steps).map(|t| tape.slice_rows(first, t * m, m)).collect::<std::result::Result<Vec<_>, _>>()?;
        let second = self.second.forward(tape, &inputs, m)?;
        Ok(self.output.forward(tape, second)?)
    }
}

/// Decoder outputs on the tape. Rows of `mu`, `log_sigma`, `rho` are
/// `t * modes + m`.
#[derive(Clone, Copy, Debug)]
pub struct DecoderOutput {
    pub log_weights: Var,
    /// Lateral and longitudinal log-probabilities (multimodal only).
    pub maneuver: Option<(Var, Var)>,
    pub mu: Var,
    pub log_sigma: Var,
    pub rho: Var,
    pub modes: usize,
    pub steps: usize,
}

impl DecoderOutput {
    pub fn to_prediction(&self, tape: &Tape) -> MixturePrediction {
        let (mu, ls, rho) = (tape.value(self.mu), tape.value(self.log_sigma), tape.value(self.rho));
        let weights = tape.value(self.log_weights).data().iter().map(|l| l.exp()).collect();
        let steps = (0..self.modes)
            .map(|m| {
                (0..self.steps)
                    .map(|t| {
                        let r = t * self.modes + m;
                        GaussianStep {
                            mu: [mu.get(r, 0), mu.get(r, 1)],
                            sigma: [ls.get(r, 0).exp(), ls.get(r, 1).exp()],
                            rho: rho.get(r, 0),
                        }
                    })
                    .collect()
            })
            .collect();
        MixturePrediction { weights, steps }
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub maneuver: Option<ManeuverHead>,
    pub trajectory: TrajectoryHead,
    pub dt: f64,
}

impl Decoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        context: usize,
        hidden: usize,
        groups: usize,
        modes: usize,
        steps: usize,
        dt: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if modes != 1 && modes != 9 {
            return Err(ModelError::Config(format!("decoder supports 1 or 9 modes, got {modes}")));
        }
        let maneuver = (modes == 9).then(|| ManeuverHead::new(store, context, rng));
        Ok(Self { maneuver, trajectory: TrajectoryHead::new(store, context, hidden, groups, modes, steps, rng)?, dt })
    }

    /// Means are offsets from `baseline` (one position per step), scaled by
    /// elapsed time so that a unit raw output is a 1 m/s velocity correction.
    pub fn forward(&self, tape: &mut Tape, context: Var, baseline: &[[f64; 2]]) -> Result<DecoderOutput> {
        let (m, steps) = (self.trajectory.modes, self.trajectory.steps);
        if baseline.len() != steps {
            return Err(ModelError::Invalid(format!("baseline has {} steps, decoder {steps}", baseline.len())));
        }
        let (log_weights, maneuver) = match &self.maneuver {
            Some(head) => {
                let (lat, lon) = head.forward(tape, context)?;
                (joint_log_weights(tape, lat, lon)?, Some((lat, lon)))
            }
            None => (tape.constant(Tensor::zeros(&[1, 1])), None),
        };
        let raw = self.trajectory.forward(tape, context)?;
        let offset = tape.slice_cols(raw, 0, 2)?;
        let log_sigma = tape.slice_cols(raw, 2, 2)?;
        let rho_raw = tape.slice_cols(raw, 4, 1)?;
        let rho = tape.tanh(rho_raw);
        let rows = steps * m;
        let time = Tensor::matrix(rows, 1, (0..rows).map(|r| (r / m + 1) as f64 * self.dt).collect());
        let base = Tensor::matrix(rows, 2, (0..rows).flat_map(|r| baseline[r / m]).collect());
        let time = tape.constant(time);
        let base = tape.constant(base);
        let scaled = tape.mul_col(offset, time)?;
        let mu = tape.add(base, scaled)?;
        Ok(DecoderOutput { log_weights, maneuver, mu, log_sigma, rho, modes: m, steps })
    }
}
