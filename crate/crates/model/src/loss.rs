//! Training objective: mixture negative log-likelihood, displacement error
//! of the ground-truth maneuver's mode, and maneuver cross-entropy.

use std::f64::consts::PI;

use citf_core::ManeuverLabel;
use citf_nn::{Tape, Tensor, Var};

use crate::decoder::DecoderOutput;
use crate::error::{ModelError, Result};

/// Loss weights. Zero weights drop the corresponding term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub nll: f64,
    pub rmse: f64,
    pub maneuver: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { nll: 1.0, rmse: 1.0, maneuver: 1.0 }
    }
}

/// Individual terms and their weighted total, all scalar nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub nll: Var,
    pub displacement: Var,
    pub maneuver: Option<Var>,
}

fn check_future(out: &DecoderOutput, future: &[[f64; 2]]) -> Result<()> {
    if future.len() != out.steps {
        return Err(ModelError::Invalid(format!("ground truth has {} steps, prediction {}", future.len(), out.steps)));
    }
    Ok(())
}

/// Per-row bivariate normal log density (`steps·modes × 1`).
pub fn component_log_density(tape: &mut Tape, out: &DecoderOutput, future: &[[f64; 2]]) -> Result<Var> {
    check_future(out, future)?;
    let m = out.modes;
    let rows = out.steps * m;
    let gt = tape.constant(Tensor::matrix(rows, 2, (0..rows).flat_map(|r| future[r / m]).collect()));
    let diff = tape.sub(out.mu, gt)?;
    let neg_ls = tape.neg(out.log_sigma);
    let inv_sigma = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_sigma)?;
    let zx = tape.slice_cols(z, 0, 1)?;
    let zy = tape.slice_cols(z, 1, 1)?;
    let zz = tape.mul(z, z)?;
    let sq = tape.sum_cols(zz);
    let cross = tape.mul(zx, zy)?;
    let cross = tape.mul(cross, out.rho)?;
    let cross = tape.scale(cross, 2.0);
    let quad = tape.sub(sq, cross)?;
    let rho_sq = tape.mul(out.rho, out.rho)?;
    let neg = tape.neg(rho_sq);
    let one_m = tape.add_scalar(neg, 1.0);
    let log_one_m = tape.log(one_m);
    let inv = tape.neg(log_one_m);
    let inv = tape.exp(inv);
    let quad = tape.mul(quad, inv)?;
    let quad = tape.scale(quad, 0.5);
    let log_sigma = tape.sum_cols(out.log_sigma);
    let half = tape.scale(log_one_m, 0.5);
    let norm = tape.add(log_sigma, half)?;
    let norm = tape.add(norm, quad)?;
    let neg = tape.neg(norm);
    Ok(tape.add_scalar(neg, -(2.0 * PI).ln()))
}

/// `-(1/steps) Σ_t log Σ_m w_m N(gt_t | mode m at t)`.
pub fn nll_loss(tape: &mut Tape, out: &DecoderOutput, future: &[[f64; 2]]) -> Result<Var> {
    let comp = component_log_density(tape, out, future)?;
    let table = tape.reshape(comp, &[out.steps, out.modes])?;
    let weighted = tape.add_row(table, out.log_weights)?;
    let per_step = tape.logsumexp_rows(weighted);
    let mean = tape.mean(per_step);
    Ok(tape.neg(mean))
}

/// Mean over steps of the squared displacement of one mode's means.
pub fn displacement_loss(tape: &mut Tape, out: &DecoderOutput, future: &[[f64; 2]], mode: usize) -> Result<Var> {
    check_future(out, future)?;
    if mode >= out.modes {
        return Err(ModelError::Invalid(format!("mode {mode} of {}", out.modes)));
    }
    let rows: Vec<usize> = (0..out.steps).map(|t| t * out.modes + mode).collect();
    let mu = tape.gather_rows(out.mu, &rows)?;
    let gt = tape.constant(Tensor::matrix(out.steps, 2, future.iter().flatten().copied().collect()));
    let d = tape.sub(mu, gt)?;
    let sq = tape.mul(d, d)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / out.steps as f64))
}

/// Cross-entropy of the lateral and longitudinal heads against the label.
pub fn maneuver_loss(tape: &mut Tape, lateral: Var, longitudinal: Var, label: ManeuverLabel) -> Result<Var> {
    let pick = |tape: &mut Tape, logp: Var, index: usize| -> Result<Var> {
        let mut onehot = Tensor::zeros(&[1, 3]);
        onehot.set(0, index, 1.0);
        let onehot = tape.constant(onehot);
        let p = tape.mul(logp, onehot)?;
        Ok(tape.sum(p))
    };
    let a = pick(tape, lateral, label.lateral.index())?;
    let b = pick(tape, longitudinal, label.longitudinal.index())?;
    let s = tape.add(a, b)?;
    Ok(tape.neg(s))
}

/// Weighted objective. With `uncertainty = Some((s_nll, s_rmse))`, the NLL
/// and displacement terms are weighted by `exp(-s)` and regularized by `s`
/// on top of the fixed weights.
pub fn combined_loss(
    tape: &mut Tape,
    out: &DecoderOutput,
    future: &[[f64; 2]],
    label: ManeuverLabel,
    weights: &LossWeights,
    uncertainty: Option<(Var, Var)>,
) -> Result<LossTerms> {
    let nll = nll_loss(tape, out, future)?;
    let mode = if out.modes == 1 { 0 } else { label.mode_index() };
    let displacement = displacement_loss(tape, out, future, mode)?;
    let weigh = |tape: &mut Tape, term: Var, w: f64, s: Option<Var>| -> Result<Var> {
        let term = match s {
            Some(s) => {
                let ns = tape.neg(s);
                let precision = tape.exp(ns);
                let t = tape.mul(term, precision)?;
                tape.add(t, s)?
            }
            None => term,
        };
        Ok(tape.scale(term, w))
    };
    let a = weigh(tape, nll, weights.nll, uncertainty.map(|u| u.0))?;
    let b = weigh(tape, displacement, weights.rmse, uncertainty.map(|u| u.1))?;
    let mut total = tape.add(a, b)?;
    let maneuver = match out.maneuver {
        Some((lat, lon)) => {
            let ce = maneuver_loss(tape, lat, lon, label)?;
            let w = tape.scale(ce, weights.maneuver);
            total = tape.add(total, w)?;
            Some(ce)
        }
        None => None,
    };
    Ok(LossTerms { total, nll, displacement, maneuver })
}

#[cfg(test)]
mod tests {
    use super::*;
    use citf_core::{Lateral, Longitudinal};

    /// Single-mode output on the tape with the given means and log sigmas.
    fn output(t: &mut Tape, mu: Vec<[f64; 2]>, log_sigma: f64, rho: f64) -> DecoderOutput {
        let steps = mu.len();
        let log_weights = t.constant(Tensor::zeros(&[1, 1]));
        let mu = t.constant(Tensor::matrix(steps, 2, mu.into_iter().flatten().collect()));
        let log_sigma = t.constant(Tensor::full(&[steps, 2], log_sigma));
        let rho = t.constant(Tensor::full(&[steps, 1], rho));
        DecoderOutput { log_weights, maneuver: None, mu, log_sigma, rho, modes: 1, steps }
    }

    #[test]
    fn nll_at_mean_is_log_two_pi() {
        let mut t = Tape::detached();
        let out = output(&mut t, vec![[1.0, 2.0], [3.0, 4.0]], 0.0, 0.0);
        let nll = nll_loss(&mut t, &out, &[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!((t.value(nll).item() - (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn tape_density_matches_closed_form() {
        let mut t = Tape::detached();
        let out = output(&mut t, vec![[0.5, -1.0]], 0.3, -0.4);
        let lp = component_log_density(&mut t, &out, &[[1.5, 0.2]]).unwrap();
        let g = crate::decoder::GaussianStep { mu: [0.5, -1.0], sigma: [0.3f64.exp(); 2], rho: -0.4 };
        let expect = crate::decoder::bivariate_log_density([1.5, 0.2], &g);
        assert!((t.value(lp).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn perfect_confident_prediction() {
        let mut t = Tape::detached();
        let mut out = output(&mut t, vec![[0.0, 0.0]; 3], 0.0, 0.0);
        let confident = t.constant(Tensor::matrix(1, 3, vec![0.0, -1e3, -1e3]));
        out.maneuver = Some((confident, confident));
        let label = ManeuverLabel { lateral: Lateral::Left, longitudinal: Longitudinal::Accelerate };
        let terms = combined_loss(&mut t, &out, &[[0.0, 0.0]; 3], label, &LossWeights::default(), None).unwrap();
        assert!((t.value(terms.total).item() - (2.0 * PI).ln()).abs() < 1e-9);
        let zero = LossWeights { nll: 0.0, rmse: 0.0, maneuver: 0.0 };
        let terms = combined_loss(&mut t, &out, &[[3.0, 1.0]; 3], label, &zero, None).unwrap();
        assert_eq!(t.value(terms.total).item(), 0.0);
    }

    #[test]
    fn displacement_is_mean_squared_distance() {
        let mut t = Tape::detached();
        let out = output(&mut t, vec![[1.0, 1.0], [0.0, 2.0]], 0.0, 0.0);
        let d = displacement_loss(&mut t, &out, &[[0.0, 0.0], [0.0, 0.0]], 0).unwrap();
        assert!((t.value(d).item() - 3.0).abs() < 1e-15);
    }
}
