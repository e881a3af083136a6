//! Central finite-difference oracle for checking backward rules.
//!
//! Numeric derivatives here are computed from forward values only, so they
//! stay independent of the analytic rules they validate.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;

/// `|analytic - numeric| / max(1, |numeric|)`
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Largest relative error between backward and central differences over
/// every element of every input. `f` must return a scalar.
pub fn check_inputs<F>(params: &ParamStore, inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out);
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .wrt(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new(params);
        let vars: Vec<Var> = xs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut worst: f64 = 0.0;
    let mut xs = inputs.to_vec();
    for k in 0..xs.len() {
        for e in 0..xs[k].len() {
            let orig = xs[k].data()[e];
            xs[k].data_mut()[e] = orig + STEP;
            let plus = eval(&xs)?;
            xs[k].data_mut()[e] = orig - STEP;
            let minus = eval(&xs)?;
            xs[k].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[k].data()[e], numeric));
        }
    }
    Ok(worst)
}

/// Same as [`check_inputs`] but perturbs stored parameters.
pub fn check_params<F>(params: &mut ParamStore, ids: &[ParamId], f: F) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let analytic: Vec<Tensor> = {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        let grads = tape.backward(out).into_params();
        ids.iter()
            .map(|&id| {
                grads.get(id).cloned().unwrap_or_else(|| {
                    let t = params.get(id);
                    Tensor::zeros(t.rows(), t.cols())
                })
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    for (k, &id) in ids.iter().enumerate() {
        for e in 0..params.get(id).len() {
            let orig = params.get(id).data()[e];
            params.get_mut(id).data_mut()[e] = orig + STEP;
            let plus = {
                let mut tape = Tape::new(params);
                let out = f(&mut tape)?;
                tape.value(out).item()
            };
            params.get_mut(id).data_mut()[e] = orig - STEP;
            let minus = {
                let mut tape = Tape::new(params);
                let out = f(&mut tape)?;
                tape.value(out).item()
            };
            params.get_mut(id).data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[k].data()[e], numeric));
        }
    }
    Ok(worst)
}
