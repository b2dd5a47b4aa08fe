//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates the forward pass, so it stays
//! independent of the backward rules it is used to verify.

use rand::seq::index::sample;

use crate::error::Result;
use crate::rng::stream;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst disagreement found by [`check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries whose true gradient is (near) zero from turning
/// rounding noise into a huge ratio.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Compares tape gradients of the scalar produced by `f` against central
/// differences with step `eps`, over every element of every input.
pub fn check<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let entries: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    check_entries(inputs, eps, &entries, f)
}

/// As [`check`], over at most `per_input` elements of each input chosen by a
/// stream seeded with `seed`. Inputs with fewer elements are checked in full.
pub fn check_sampled<F>(inputs: &[Tensor], eps: f64, per_input: usize, seed: u64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut rng = stream(seed, &[0x6c]);
    let mut entries = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        let mut chosen = sample(&mut rng, t.len(), per_input.min(t.len())).into_vec();
        chosen.sort_unstable();
        entries.extend(chosen.into_iter().map(|j| (i, j)));
    }
    check_entries(inputs, eps, &entries, f)
}

/// Central differences at the given `(input, element)` positions only.
pub fn check_entries<F>(inputs: &[Tensor], eps: f64, entries: &[(usize, usize)], f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = f(&tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|v| grads.wrt(*v)).collect()
    };

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = out.value().item()?;
        Ok(v)
    };

    let mut worst = GradCheck {
        max_rel_err: 0.0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for &(i, j) in entries {
        let orig = inputs[i].data()[j];
        work[i].data_mut()[j] = orig + eps;
        let plus = eval(&work)?;
        work[i].data_mut()[j] = orig - eps;
        let minus = eval(&work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i].data()[j];
        let err = rel_err(a, numeric, REL_ERR_FLOOR);
        if err > worst.max_rel_err || err.is_nan() {
            worst = GradCheck {
                max_rel_err: err,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(worst)
}
