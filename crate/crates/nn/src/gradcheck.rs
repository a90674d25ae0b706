//! Central-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
    /// Smallest denominator of the relative error, in units of
    /// `max(1, |f|)`. Roundoff in a difference of `f` grows with `|f|`, so
    /// derivatives below this scale are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, max_entries_per_tensor: None, seed: 0, floor: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Location of the worst entry, e.g. `input 0 [3]` or `param gru.input.weight [7]`.
    pub worst: String,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_pair: (f64, f64),
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_with_floor(analytic, numeric, 1e-8)
}

pub fn relative_error_with_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of `f` at offset 0 along one coordinate.
fn numeric_derivative(cfg: &GradCheckConfig, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let h = cfg.epsilon;
    Ok((f(h)? - f(-h)?) / (2.0 * h))
}

fn entries(n: usize, cfg: &GradCheckConfig, salt: u64) -> Vec<usize> {
    match cfg.max_entries_per_tensor {
        Some(m) if m < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut idx = sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

/// Compares the tape gradients of `f` with central differences, for every
/// input tensor and every trainable parameter of `store`. `f` receives one
/// leaf per input and must return a single-element node.
pub fn grad_check<F>(store: &ParamStore, inputs: &[Tensor], cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(cfg.epsilon > 0.0) {
        return Err(NnError::Invalid(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new(store);
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let floor = cfg.floor * tape.value(out).item().abs().max(1.0);
    tape.backward(out)?;
    let input_grads: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let param_grads = tape.param_gradients();
    drop(tape);

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), worst_pair: (0.0, 0.0), checked: 0 };
    let mut record = |analytic: f64, numeric: f64, label: String| {
        let err = relative_error_with_floor(analytic, numeric, floor);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = label;
            report.worst_pair = (analytic, numeric);
        }
    };

    let mut perturbed = inputs.to_vec();
    for (i, grad) in input_grads.iter().enumerate() {
        for e in entries(grad.numel(), cfg, i as u64) {
            let orig = perturbed[i].data()[e];
            let numeric = numeric_derivative(cfg, |h| {
                perturbed[i].data_mut()[e] = orig + h;
                eval(store, &perturbed)
            })?;
            perturbed[i].data_mut()[e] = orig;
            record(grad.data()[e], numeric, format!("input {i} [{e}]"));
        }
    }

    let mut work = store.clone();
    for (id, param) in store.iter() {
        if !param.trainable {
            continue;
        }
        let zeros = Tensor::zeros(param.value.shape());
        let grad = param_grads.get(id).unwrap_or(&zeros);
        for e in entries(grad.numel(), cfg, 1_000 + id.index() as u64) {
            let orig = param.value.data()[e];
            let numeric = numeric_derivative(cfg, |h| {
                work.value_mut(id).data_mut()[e] = orig + h;
                eval(&work, inputs)
            })?;
            work.value_mut(id).data_mut()[e] = orig;
            record(grad.data()[e], numeric, format!("param {} [{e}]", param.name));
        }
    }
    Ok(report)
}
